from dataclasses import dataclass
from typing import FrozenSet

from fwcomp.model.database import ObjectDatabase
from fwcomp.model.intervals import NO_MAC, AddressSet, MacSet, TimeSet
from fwcomp.model.objects import PolicyRule
from fwcomp.model.services import ServiceSet
from fwcomp.model.types import Direction
from fwcomp.errors import NonProductRegion
from fwcomp.semantics.packet import Packet

BOTH_DIRECTIONS = frozenset({Direction.INBOUND, Direction.OUTBOUND})


@dataclass(frozen=True)
class InterfaceSet:
    """Finite set of interface names, or the complement of one."""
    names: FrozenSet[str] = frozenset()
    complement: bool = False

    @classmethod
    def any(cls) -> "InterfaceSet":
        return cls(frozenset(), True)

    def __contains__(self, name: str) -> bool:
        return (name in self.names) != self.complement

    def is_empty(self) -> bool:
        return not self.complement and not self.names

    def issubset(self, other: "InterfaceSet") -> bool:
        if not self.complement:
            if not other.complement:
                return self.names <= other.names
            return not (self.names & other.names)
        # a cofinite set never fits inside a finite one
        return other.complement and other.names <= self.names


@dataclass(frozen=True)
class RuleRegion:
    """Exact match set of a rule as a product over its fields."""
    src: AddressSet
    src_mac: MacSet
    dst: AddressSet
    srv: ServiceSet
    itf: InterfaceSet
    directions: FrozenSet[Direction]
    when: TimeSet

    def is_empty(self) -> bool:
        return (self.src.is_empty() or self.src_mac.is_empty() or self.dst.is_empty() or self.srv.is_empty()
                or self.itf.is_empty() or not self.directions or self.when.is_empty())

    def __contains__(self, packet: Packet) -> bool:
        mac = NO_MAC if packet.src_mac is None else packet.src_mac
        return (packet.src_ip in self.src and mac in self.src_mac and packet.dst_ip in self.dst
                and self.srv.contains(packet.protocol, packet.service_point())
                and packet.interface in self.itf and packet.direction in self.directions
                and packet.time_point in self.when)


def _rule_region(rule: PolicyRule, db: ObjectDatabase) -> RuleRegion:
    addresses, macs = db.layer_sets(rule.src)
    if not addresses.is_empty() and not macs.is_empty():
        raise NonProductRegion(f"rule {rule.position}: source mixes IP and physical addresses")
    if macs.is_empty():
        src, src_mac = (addresses.complement() if rule.src.negated else addresses), MacSet.full()
    else:
        src, src_mac = AddressSet.full(), (macs.complement() if rule.src.negated else macs)

    names = db.interface_names(rule.itf)
    if names is None:
        itf = InterfaceSet() if rule.itf.negated else InterfaceSet.any()
    else:
        itf = InterfaceSet(names, complement=rule.itf.negated)

    directions = BOTH_DIRECTIONS if rule.direction is Direction.BOTH else frozenset({rule.direction})
    return RuleRegion(
        src=src,
        src_mac=src_mac,
        dst=db.element_address_set(rule.dst),
        srv=db.element_service_set(rule.srv),
        itf=itf,
        directions=directions,
        when=db.element_time_set(rule.when),
    )


def rule_region(rule: PolicyRule, db: ObjectDatabase) -> RuleRegion:
    """Region whose membership equals match_rule; raises OpaqueSet or NonProductRegion."""
    return db.derived(("region", rule), lambda: _rule_region(rule, db))


def region_subset(a: RuleRegion, b: RuleRegion) -> bool:
    """Every packet in a is in b; exact for product regions."""
    if a.is_empty():
        return True
    return (a.src.issubset(b.src) and a.src_mac.issubset(b.src_mac) and a.dst.issubset(b.dst)
            and a.srv.issubset(b.srv) and a.itf.issubset(b.itf) and a.directions <= b.directions
            and a.when.issubset(b.when))
