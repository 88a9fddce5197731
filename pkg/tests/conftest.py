from typing import Iterable, Optional, Sequence, Union

import pytest

from fwcomp.fwbxml import parse
from fwcomp.model import (
    Firewall,
    FwObject,
    Interface,
    IPv4,
    Library,
    MatchElement,
    NatPolicy,
    NATRule,
    ObjectDatabase,
    PhysAddress,
    Policy,
    PolicyRule,
)
from fwcomp.model.intervals import parse_ip, parse_mac
from fwcomp.semantics import Packet

OFFICE_FWB = """<?xml version="1.0" encoding="UTF-8"?>
<FWObjectDatabase version="1">
  <Library id="lib0" name="User">
    <Network id="id47505CE816470" name="officeLAN" address="10.86.81.0" netmask="255.255.255.0"/>
    <UDPService id="id47505D0216470" name="MyServie" dst_range_end="92" dst_range_start="90" src_range_end="70" src_range_start="30"/>
    <Firewall host_OS="linux24" id="id47505D0516470" name="MyFirewall" platform="iptables">
      <Interface dyn="False" id="id47505D0B16470" name="if0" unnum="False">
        <IPv4 address="192.168.1.1" id="id47505D0C16470" name="MyFirewall:if0:ip" netmask="255.255.255.0"/>
        <physAddress address="00:17:f2:ea:ee:35" id="id47505D3816470" name="MyFirewall:if0:mac"/>
      </Interface>
      <Interface dyn="True" id="id47505D0D16470" name="if1" unnum="False"/>
      <Interface dyn="False" id="id47505D0F16470" name="l0" unnum="False" unprotected="False">
        <IPv4 address="127.0.0.1" id="id47505D1016470" name="MyFirewall:l0:ip" netmask="255.255.0.0"/>
      </Interface>
      <Policy id="id47505D0816470">
        <PolicyRule action="Deny" comment="" direction="Both" disabled="False" id="id47505ECE16470" position="0">
          <Src neg="False">
            <ObjectRef ref="sysid0"/>
          </Src>
          <Dst neg="False">
            <ObjectRef ref="id47505CE816470"/>
          </Dst>
          <Srv neg="False">
            <ServiceRef ref="id47505D0216470"/>
          </Srv>
          <Itf neg="False">
            <ObjectRef ref="sysid0"/>
          </Itf>
          <When neg="False">
            <IntervalRef ref="sysid2"/>
          </When>
        </PolicyRule>
      </Policy>
    </Firewall>
  </Library>
</FWObjectDatabase>
"""

UDP_LITERAL = "proto=udp src=10.0.0.5 dst=10.86.81.7 sport=50 dport=91 iface=if0 dir=in"

Refs = Union[str, Sequence[str], MatchElement, None]


def element(refs: Refs, default: str) -> MatchElement:
    """`"a"`, `["a", "b"]` or `"!a"` (negated) to a MatchElement."""
    if isinstance(refs, MatchElement):
        return refs
    if refs is None:
        return MatchElement((default,))
    if isinstance(refs, str):
        refs = [refs]
    negated = any(ref.startswith("!") for ref in refs)
    return MatchElement(tuple(ref.lstrip("!") for ref in refs), negated)


def policy_rule(position: int, action: str = "Accept", src: Refs = None, dst: Refs = None, srv: Refs = None,
                itf: Refs = None, when: Refs = None, direction: str = "Both", disabled: bool = False) -> PolicyRule:
    return PolicyRule(
        id=f"rule{position}", position=position, action=action, direction=direction, disabled=disabled,
        src=element(src, "sysid0"), dst=element(dst, "sysid0"), srv=element(srv, "sysid1"),
        itf=element(itf, "sysid0"), when=element(when, "sysid2"),
    )


def nat_rule(position: int, osrc: Refs = None, odst: Refs = None, osrv: Refs = None,
             tsrc: Optional[str] = None, tdst: Optional[str] = None, tsrv: Optional[str] = None) -> NATRule:
    return NATRule(
        id=f"nat{position}", position=position,
        osrc=element(osrc, "sysid0"), odst=element(odst, "sysid0"), osrv=element(osrv, "sysid1"),
        tsrc=tsrc, tdst=tdst, tsrv=tsrv,
    )


def default_interfaces():
    return (
        Interface(id="if0-id", name="if0",
                  addresses=(IPv4(id="if0-ip", address=parse_ip("192.168.1.1"), netmask=parse_ip("255.255.255.0")),),
                  phys=PhysAddress(id="if0-mac", address=parse_mac("00:17:f2:ea:ee:35"))),
        Interface(id="if1-id", name="if1", dynamic=True),
        Interface(id="l0-id", name="l0",
                  addresses=(IPv4(id="l0-ip", address=parse_ip("127.0.0.1"), netmask=parse_ip("255.255.0.0")),)),
    )


def build_firewall(rules: Iterable[PolicyRule] = (), objects: Iterable[FwObject] = (),
                   nat_rules: Iterable[NATRule] = (), platform: str = "iptables",
                   interfaces=None) -> tuple[ObjectDatabase, Firewall]:
    """Database holding `objects` and one firewall named fw."""
    nat_rules = tuple(nat_rules)
    firewall = Firewall(
        id="fw-id", name="fw", platform=platform,
        interfaces=default_interfaces() if interfaces is None else tuple(interfaces),
        policy=Policy(id="fw-policy", rules=tuple(rules)),
        nat=NatPolicy(id="fw-nat", rules=nat_rules) if nat_rules else None,
    )
    db = ObjectDatabase([Library(id="lib0", name="User", objects=(*objects, firewall))])
    return db, db.find_firewall("fw")


def packet(literal: str) -> Packet:
    return Packet.parse(literal)


@pytest.fixture
def office_text() -> str:
    return OFFICE_FWB


@pytest.fixture
def office_db() -> ObjectDatabase:
    return parse(OFFICE_FWB)


@pytest.fixture
def office_firewall(office_db) -> Firewall:
    return office_db.find_firewall("MyFirewall")


@pytest.fixture
def office_file(tmp_path):
    path = tmp_path / "office.fwb"
    path.write_text(OFFICE_FWB, encoding="utf-8")
    return path
