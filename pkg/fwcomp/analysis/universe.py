import itertools
import logging
from dataclasses import dataclass
from math import prod
from typing import Iterator, Optional, Sequence, Tuple, Union

from fwcomp.config import config
from fwcomp.errors import PacketSyntaxError, UniverseTooLarge
from fwcomp.model.database import ObjectDatabase
from fwcomp.model.intervals import parse_cidr, parse_ip
from fwcomp.model.objects import Policy, PolicyRule
from fwcomp.model.types import PROTO_ICMP, PROTO_TCP, PROTO_UDP, Direction, TcpFlag, Weekday, protocol_number
from fwcomp.semantics.evaluator import evaluate_policy
from fwcomp.semantics.packet import Packet, Timestamp

logger = logging.getLogger(__name__)

# (protocol, src_port, dst_port, icmp_type, icmp_code, tcp_flags)
ServiceSample = Tuple[int, int, int, int, int, int]

DEFAULT_PORTS = (0, 22, 53, 80, 91, 443, 1024, 65535)
DEFAULT_ICMP = ((8, 0), (0, 0), (3, 1))


def service_samples(protocols: Sequence[int], ports: Sequence[int] = DEFAULT_PORTS,
                    icmp: Sequence[Tuple[int, int]] = DEFAULT_ICMP,
                    flags: Sequence[int] = (0,)) -> Tuple[ServiceSample, ...]:
    samples = []
    for protocol in protocols:
        if protocol in (PROTO_TCP, PROTO_UDP):
            for sport, dport in itertools.product(ports, ports):
                for tcp_flags in (flags if protocol == PROTO_TCP else (0,)):
                    samples.append((protocol, sport, dport, 0, 0, tcp_flags))
        elif protocol == PROTO_ICMP:
            samples.extend((protocol, 0, 0, t, c, 0) for t, c in icmp)
        else:
            samples.append((protocol, 0, 0, 0, 0, 0))
    return tuple(samples)


@dataclass(frozen=True)
class Universe:
    """Finite packet set: the product of every listed header value."""
    sources: Tuple[int, ...]
    destinations: Tuple[int, ...]
    services: Tuple[ServiceSample, ...]
    interfaces: Tuple[str, ...]
    directions: Tuple[Direction, ...] = (Direction.INBOUND, Direction.OUTBOUND)
    timestamps: Tuple[Optional[Timestamp], ...] = (None,)
    macs: Tuple[Optional[int], ...] = (None,)

    @property
    def size(self) -> int:
        return prod(len(axis) for axis in (self.sources, self.destinations, self.services, self.interfaces,
                                            self.directions, self.timestamps, self.macs))

    def check_bound(self, bound: Optional[int] = None):
        bound = config.universe_bound if bound is None else bound
        if self.size > bound:
            raise UniverseTooLarge(f"universe holds {self.size} packets, bound is {bound}")

    def packets(self) -> Iterator[Packet]:
        for src, dst, service, iface, direction, stamp, mac in itertools.product(
                self.sources, self.destinations, self.services, self.interfaces,
                self.directions, self.timestamps, self.macs):
            protocol, sport, dport, icmp_type, icmp_code, flags = service
            yield Packet(src_ip=src, dst_ip=dst, protocol=protocol, interface=iface, direction=direction,
                         src_port=sport, dst_port=dport, icmp_type=icmp_type, icmp_code=icmp_code,
                         tcp_flags=flags, src_mac=mac, timestamp=stamp)

    def __iter__(self) -> Iterator[Packet]:
        return self.packets()

    @classmethod
    def window(cls, sources: Union[str, Sequence[int]], destinations: Union[str, Sequence[int]],
               interfaces: Sequence[str] = ("if0", "if1"), ports: Sequence[int] = DEFAULT_PORTS,
               protocols: Sequence[int] = (PROTO_TCP, PROTO_UDP), **extra) -> "Universe":
        """Universe over address windows given as CIDR text or explicit address lists."""
        return cls(
            sources=_addresses(sources),
            destinations=_addresses(destinations),
            services=service_samples(protocols, ports),
            interfaces=tuple(interfaces),
            **extra,
        )

    @classmethod
    def parse(cls, text: str) -> "Universe":
        """`src=10.0.0.0/30 dst=10.86.81.0/29,1.2.3.4 proto=tcp,udp ports=50,91 iface=if0 dir=in,out [time=Mon@13:30]`."""
        values = {}
        for token in text.split():
            key, sep, value = token.partition("=")
            if not sep:
                raise PacketSyntaxError(f"expected key=value in universe, got {token!r}")
            values[key] = [v for v in value.split(",") if v]
        try:
            protocols = [protocol_number(p) for p in values.get("proto", ["tcp", "udp"])]
            ports = [int(p) for p in values["ports"]] if "ports" in values else DEFAULT_PORTS
            flags = [_flags(f) for f in values.get("flags", ["0"])]
            directions = [Direction.INBOUND if d.startswith("in") else Direction.OUTBOUND
                          for d in values.get("dir", ["in", "out"])]
            timestamps = [_timestamp(t) for t in values["time"]] if "time" in values else [None]
            return cls(
                sources=tuple(a for part in values.get("src", ["0.0.0.0"]) for a in _addresses(part)),
                destinations=tuple(a for part in values.get("dst", ["0.0.0.0"]) for a in _addresses(part)),
                services=service_samples(protocols, ports, flags=flags),
                interfaces=tuple(values.get("iface", ["if0"])),
                directions=tuple(directions),
                timestamps=tuple(timestamps),
            )
        except (KeyError, ValueError) as e:
            raise PacketSyntaxError(f"invalid universe {text!r}: {e}") from e


def _addresses(window: Union[str, Sequence[int]]) -> Tuple[int, ...]:
    if not isinstance(window, str):
        return tuple(window)
    if "-" in window:
        first, last = (parse_ip(part) for part in window.split("-", 1))
    else:
        block = parse_cidr(window)
        first, last = block.first, block.last
    if last - first >= 1 << 16:
        raise ValueError(f"address window {window} is too wide to enumerate")
    return tuple(range(first, last + 1))


def _flags(text: str) -> int:
    if text.isdigit():
        return int(text)
    value = 0
    for name in text.split("+"):
        value |= TcpFlag[name.upper()]
    return value


def _timestamp(text: str) -> Optional[Timestamp]:
    if text.lower() == "none":
        return None
    day, _, clock = text.partition("@")
    hours, _, minutes = clock.partition(":")
    return Timestamp(Weekday(day.capitalize()), int(hours or 0) * 60 + int(minutes or 0))


def _policy_rules(policy: Union[Policy, Sequence[PolicyRule]]) -> Sequence[PolicyRule]:
    return policy.rules if isinstance(policy, Policy) else policy


def equivalent(p1: Union[Policy, Sequence[PolicyRule]], p2: Union[Policy, Sequence[PolicyRule]],
               universe: Universe, db: ObjectDatabase) -> bool:
    """True iff both policies give the same action to every packet of the universe."""
    universe.check_bound()
    rules1, rules2 = _policy_rules(p1), _policy_rules(p2)
    for packet in universe:
        first = evaluate_policy(rules1, packet, db).action
        second = evaluate_policy(rules2, packet, db).action
        if first is not second:
            logger.info(f"Policies differ on {packet}: {first.value} vs {second.value}")
            return False
    return True
