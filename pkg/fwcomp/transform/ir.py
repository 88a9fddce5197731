"""Intermediate representation shared by the rule processors and the backends."""

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional, Tuple, Union

from fwcomp.errors import OpaqueSet
from fwcomp.model.intervals import AddressSet, Cidr, format_ip, format_mac, interval_to_cidrs
from fwcomp.model.objects import TimeInterval
from fwcomp.model.services import FLAG_VALUES, PORTS, ServiceSet
from fwcomp.model.types import ALL_TCP_FLAGS, PROTO_ICMP, PROTO_TCP, PROTO_UDP, PROTOCOL_NAMES, Action, Direction


class RuleKind(str, Enum):
    FILTER = "filter"
    SNAT = "snat"
    DNAT = "dnat"
    NONAT = "nonat"
    DEFAULT = "default"


class AtomKind(str, Enum):
    CIDR = "cidr"
    RANGE = "range"
    DYNAMIC = "dynamic"
    TABLE = "table"
    MAC = "mac"


@dataclass(frozen=True)
class AddressAtom:
    """One concrete address operand.

    CIDR and RANGE use first/last; DYNAMIC names the interface whose
    runtime address is meant; TABLE names a table holding either
    `members` (built by the compiler) or the deploy-time file `path`;
    MAC carries the 48-bit value in `first`.
    """
    kind: AtomKind
    first: int = 0
    last: int = 0
    name: str = ""
    path: str = ""
    members: Tuple[Cidr, ...] = ()

    @classmethod
    def cidr(cls, block: Cidr) -> "AddressAtom":
        return cls(AtomKind.CIDR, block.first, block.last)

    @classmethod
    def span(cls, first: int, last: int) -> "AddressAtom":
        """CIDR atom when the span is an aligned block, RANGE otherwise."""
        blocks = interval_to_cidrs(first, last)
        if len(blocks) == 1:
            return cls.cidr(blocks[0])
        return cls(AtomKind.RANGE, first, last)

    @classmethod
    def dynamic(cls, interface: str) -> "AddressAtom":
        return cls(AtomKind.DYNAMIC, name=interface)

    @classmethod
    def mac(cls, value: int) -> "AddressAtom":
        return cls(AtomKind.MAC, value, value)

    @property
    def prefixlen(self) -> int:
        return 32 - (self.last - self.first + 1).bit_length() + 1

    def as_cidr(self) -> Cidr:
        return Cidr(self.first, self.prefixlen)

    @property
    def is_ip(self) -> bool:
        return self.kind is not AtomKind.MAC

    def addresses(self) -> AddressSet:
        if self.kind in (AtomKind.CIDR, AtomKind.RANGE):
            return AddressSet([(self.first, self.last)])
        if self.kind is AtomKind.TABLE and not self.path:
            return AddressSet([(b.first, b.last) for b in self.members])
        raise OpaqueSet(f"{self} has no compile-time address set")

    def __str__(self) -> str:
        if self.kind is AtomKind.CIDR:
            return format_ip(self.first) if self.first == self.last else f"{format_ip(self.first)}/{self.prefixlen}"
        if self.kind is AtomKind.RANGE:
            return f"{format_ip(self.first)}-{format_ip(self.last)}"
        if self.kind is AtomKind.DYNAMIC:
            return f"({self.name})"
        if self.kind is AtomKind.TABLE:
            return f"<{self.name}>"
        return format_mac(self.first)


ANY_PORTS = PORTS


@dataclass(frozen=True)
class ServiceAtom:
    """One protocol with optional port ranges, TCP flag test or ICMP type/code."""
    protocol: int
    src_ports: Tuple[int, int] = ANY_PORTS
    dst_ports: Tuple[int, int] = ANY_PORTS
    flags_mask: int = 0
    flags_set: int = 0
    icmp_type: Optional[int] = None
    icmp_code: Optional[int] = None
    ip_options: bool = False

    @property
    def protocol_name(self) -> str:
        return PROTOCOL_NAMES.get(self.protocol, str(self.protocol))

    @property
    def has_ports(self) -> bool:
        return self.protocol in (PROTO_TCP, PROTO_UDP)

    def services(self) -> ServiceSet:
        if self.protocol == PROTO_TCP:
            return ServiceSet.tcp(self.src_ports, self.dst_ports, self.flags_mask, self.flags_set)
        if self.protocol == PROTO_UDP:
            return ServiceSet.udp(self.src_ports, self.dst_ports)
        if self.protocol == PROTO_ICMP:
            return ServiceSet.icmp(self.icmp_type, self.icmp_code)
        return ServiceSet.ip(self.protocol)

    def __str__(self) -> str:
        text = self.protocol_name
        if self.has_ports:
            text += f" {_ports(self.src_ports)}->{_ports(self.dst_ports)}"
        if self.flags_mask:
            text += f" flags {self.flags_set}/{self.flags_mask}"
        if self.protocol == PROTO_ICMP:
            text += f" type {'*' if self.icmp_type is None else self.icmp_type}"
            text += f" code {'*' if self.icmp_code is None else self.icmp_code}"
        return text


def _ports(ports: Tuple[int, int]) -> str:
    lo, hi = ports
    if ports == ANY_PORTS:
        return "*"
    return str(lo) if lo == hi else f"{lo}:{hi}"


def flag_blocks(lo: int, hi: int) -> list[Tuple[int, int]]:
    """(mask, set) pairs whose flag values cover lo..hi exactly, high bits fixed."""
    out = []
    while lo <= hi:
        size = lo & -lo if lo else ALL_TCP_FLAGS + 1
        while lo + size - 1 > hi:
            size //= 2
        out.append((ALL_TCP_FLAGS & ~(size - 1), lo))
        lo += size
    return out


def service_atoms(services: ServiceSet) -> list[ServiceAtom]:
    """Positive atoms whose union is the given set."""
    atoms = []
    for protocol in services.protocols():
        for box in services.boxes(protocol):
            if protocol == PROTO_TCP:
                sport, dport, (flo, fhi) = box
                if (flo, fhi) == FLAG_VALUES:
                    atoms.append(ServiceAtom(protocol, sport, dport))
                else:
                    atoms.extend(ServiceAtom(protocol, sport, dport, mask, value)
                                 for mask, value in flag_blocks(flo, fhi))
            elif protocol == PROTO_UDP:
                atoms.append(ServiceAtom(protocol, box[0], box[1]))
            elif protocol == PROTO_ICMP:
                (tlo, thi), (clo, chi) = box
                types = [None] if (tlo, thi) == (clo, chi) == (0, 255) else range(tlo, thi + 1)
                codes = [None] if (clo, chi) == (0, 255) else range(clo, chi + 1)
                atoms.extend(ServiceAtom(protocol, icmp_type=t, icmp_code=c) for t in types for c in codes)
            else:
                atoms.append(ServiceAtom(protocol))
    return atoms


Atom = Union[AddressAtom, ServiceAtom, str, TimeInterval]


@dataclass(frozen=True)
class Slot:
    """A rule field: union of atoms, optionally negated. No atoms means Any."""
    atoms: Tuple[Atom, ...] = ()
    negated: bool = False

    @property
    def is_any(self) -> bool:
        return not self.atoms and not self.negated

    @property
    def matches_nothing(self) -> bool:
        return not self.atoms and self.negated

    @property
    def atom(self) -> Optional[Atom]:
        """The single atom of a lowered slot, None for Any."""
        if len(self.atoms) > 1:
            raise ValueError(f"slot holds {len(self.atoms)} atoms")
        return self.atoms[0] if self.atoms else None

    def __str__(self) -> str:
        if not self.atoms:
            return "none" if self.negated else "any"
        body = ", ".join(str(a) for a in self.atoms)
        if len(self.atoms) > 1:
            body = "{" + body + "}"
        return f"!{body}" if self.negated else body


ANY = Slot()


@dataclass(frozen=True)
class FlatRule:
    """A rule on its way to a single-valued, target-ready form.

    `origin` is the position of the PolicyRule/NATRule it came from.
    NAT kinds carry their translation in tsrc/tdst (addresses) and tport,
    the new destination port of packets of protocol tport_protocol.
    """
    origin: int
    kind: RuleKind
    action: Optional[Action] = None
    direction: Optional[Direction] = None
    itf: Slot = ANY
    src: Slot = ANY
    dst: Slot = ANY
    srv: Slot = ANY
    when: Slot = ANY
    tsrc: Optional[int] = None
    tdst: Optional[int] = None
    tport: Optional[int] = None
    tport_protocol: Optional[int] = None
    tags: Tuple[str, ...] = field(default=())

    @property
    def interface(self) -> Optional[str]:
        return self.itf.atom

    def with_slot(self, name: str, slot: Slot) -> "FlatRule":
        return replace(self, **{name: slot})

    def slots(self):
        return (("itf", self.itf), ("src", self.src), ("dst", self.dst), ("srv", self.srv), ("when", self.when))

    def __str__(self) -> str:
        head = self.action.value if self.action else self.kind.value
        parts = [f"#{self.origin}", head]
        if self.direction:
            parts.append(self.direction.value)
        parts += [f"{name}={slot}" for name, slot in self.slots() if not slot.is_any]
        for name, value in (("tsrc", self.tsrc), ("tdst", self.tdst)):
            if value is not None:
                parts.append(f"{name}={format_ip(value)}")
        if self.tport is not None:
            parts.append(f"tport={self.tport}")
        return " ".join(parts)


class MatchStrategy(str, Enum):
    FIRST = "first"
    LAST_WITH_QUICK = "last_with_quick"


class DefaultPolicy(str, Enum):
    PASS = "pass"
    DROP = "drop"
    CONFIGURABLE = "configurable"


class NatOrder(str, Enum):
    NAT_FIRST = "nat_first"
    SPLIT_DNAT_SNAT = "split_dnat_snat"


@dataclass(frozen=True)
class Capabilities:
    """What a target can express natively; fixed per target."""
    match_strategy: MatchStrategy
    default_policy: DefaultPolicy
    nat_order: NatOrder
    supports_single_negation: bool
    supports_group_negation: bool
    supports_address_ranges: bool
    supports_dynamic_iface_address: bool
    supports_time: bool
    supports_mac: bool
    supports_address_lists: bool = False
    supports_range_negation: bool = False
    supports_deploy_tables: bool = False
    supports_nat_exclusion: bool = True
