from dataclasses import dataclass, field, replace
from datetime import datetime
from typing import ClassVar, Optional, Tuple

from fwcomp.errors import SchemaError
from .intervals import MAX_ADDRESS, NO_MAC, format_ip, prefix_of_mask
from .types import (
    ALL_TCP_FLAGS,
    ANY_ADDRESS_ID,
    ANY_INTERVAL_ID,
    ANY_SERVICE_ID,
    PROTO_ICMP,
    PROTO_TCP,
    PROTO_UDP,
    Action,
    Category,
    Direction,
    LoadTime,
    Platform,
    Weekday,
)

PortRange = Tuple[int, int]
FULL_PORTS: PortRange = (0, 65535)


@dataclass(frozen=True, kw_only=True)
class FwObject:
    """Base of every identified object in an ObjectDatabase."""
    element: ClassVar[str] = ""
    category: ClassVar[Optional[Category]] = None

    id: str
    name: str = ""
    comment: str = ""

    def __post_init__(self):
        if not self.id or not isinstance(self.id, str) or any(c.isspace() for c in self.id):
            raise SchemaError(f"{self.element or type(self).__name__}: id must be a nonempty token, got {self.id!r}")

    def label(self) -> str:
        return f"{self.element} {self.name or self.id}"


def _check_address(value: int, what: str):
    if not 0 <= value <= MAX_ADDRESS:
        raise SchemaError(f"{what} out of range: {value}")


def _check_netmask(netmask: int, owner: str):
    _check_address(netmask, f"{owner} netmask")
    try:
        prefix_of_mask(netmask)
    except ValueError as e:
        raise SchemaError(f"{owner}: {e}") from e


# reserved wildcard objects
@dataclass(frozen=True, kw_only=True)
class AnyNetwork(FwObject):
    element = "AnyNetwork"
    category = Category.ADDRESS
    id: str = ANY_ADDRESS_ID
    name: str = "Any"


@dataclass(frozen=True, kw_only=True)
class AnyIPService(FwObject):
    element = "AnyIPService"
    category = Category.SERVICE
    id: str = ANY_SERVICE_ID
    name: str = "Any"


@dataclass(frozen=True, kw_only=True)
class AnyInterval(FwObject):
    element = "AnyInterval"
    category = Category.INTERVAL
    id: str = ANY_INTERVAL_ID
    name: str = "Any"


# addresses
@dataclass(frozen=True, kw_only=True)
class IPv4(FwObject):
    """A single interface/host address; netmask describes the attached subnet."""
    element = "IPv4"
    category = Category.ADDRESS
    address: int
    netmask: int = MAX_ADDRESS

    def __post_init__(self):
        super().__post_init__()
        _check_address(self.address, f"IPv4 {self.id} address")
        _check_netmask(self.netmask, f"IPv4 {self.id}")


@dataclass(frozen=True, kw_only=True)
class Network(FwObject):
    element = "Network"
    category = Category.ADDRESS
    address: int
    netmask: int

    def __post_init__(self):
        super().__post_init__()
        _check_address(self.address, f"Network {self.id} address")
        _check_netmask(self.netmask, f"Network {self.id}")
        # canonicalize to the network base
        object.__setattr__(self, "address", self.address & self.netmask)

    @property
    def prefixlen(self) -> int:
        return prefix_of_mask(self.netmask)

    def __str__(self) -> str:
        return f"{format_ip(self.address)}/{self.prefixlen}"


@dataclass(frozen=True, kw_only=True)
class AddressRange(FwObject):
    element = "AddressRange"
    category = Category.ADDRESS
    first: int
    last: int

    def __post_init__(self):
        super().__post_init__()
        _check_address(self.first, f"AddressRange {self.id} start")
        _check_address(self.last, f"AddressRange {self.id} end")
        if self.first > self.last:
            raise SchemaError(f"AddressRange {self.id}: start {format_ip(self.first)} "
                              f"after end {format_ip(self.last)}")


@dataclass(frozen=True, kw_only=True)
class AddressTable(FwObject):
    element = "AddressTable"
    category = Category.ADDRESS
    path: str
    load_time: LoadTime = LoadTime.COMPILE


@dataclass(frozen=True, kw_only=True)
class PhysAddress(FwObject):
    element = "physAddress"
    category = Category.PHYS
    address: int

    def __post_init__(self):
        super().__post_init__()
        if not 0 <= self.address < NO_MAC:
            raise SchemaError(f"physAddress {self.id}: MAC out of range")


# services
@dataclass(frozen=True, kw_only=True)
class IPService(FwObject):
    element = "IPService"
    category = Category.SERVICE
    protocol: int
    lsrr: bool = False
    rr: bool = False

    def __post_init__(self):
        super().__post_init__()
        if not 0 <= self.protocol <= 255:
            raise SchemaError(f"IPService {self.id}: protocol {self.protocol} out of range")
        if self.protocol in (PROTO_ICMP, PROTO_TCP, PROTO_UDP):
            raise SchemaError(f"IPService {self.id}: protocol {self.protocol} needs its dedicated service type")

    @property
    def has_options(self) -> bool:
        return self.lsrr or self.rr


def _check_ports(ports: PortRange, what: str):
    lo, hi = ports
    if not 0 <= lo <= hi <= 65535:
        raise SchemaError(f"{what}: invalid port range {lo}-{hi}")


@dataclass(frozen=True, kw_only=True)
class UDPService(FwObject):
    element = "UDPService"
    category = Category.SERVICE
    protocol: ClassVar[int] = PROTO_UDP
    src_range: PortRange = FULL_PORTS
    dst_range: PortRange = FULL_PORTS

    def __post_init__(self):
        super().__post_init__()
        _check_ports(self.src_range, f"{self.element} {self.id} source")
        _check_ports(self.dst_range, f"{self.element} {self.id} destination")


@dataclass(frozen=True, kw_only=True)
class TCPService(UDPService):
    element = "TCPService"
    protocol: ClassVar[int] = PROTO_TCP
    flags_mask: int = 0
    flags_set: int = 0

    def __post_init__(self):
        super().__post_init__()
        if not 0 <= self.flags_mask <= ALL_TCP_FLAGS or self.flags_set & ~self.flags_mask:
            raise SchemaError(f"TCPService {self.id}: flags set must be a subset of the flags mask")


@dataclass(frozen=True, kw_only=True)
class ICMPService(FwObject):
    """ICMP type/code; None is the wildcard."""
    element = "ICMPService"
    category = Category.SERVICE
    icmp_type: Optional[int] = None
    icmp_code: Optional[int] = None

    def __post_init__(self):
        super().__post_init__()
        for value in (self.icmp_type, self.icmp_code):
            if value is not None and not 0 <= value <= 255:
                raise SchemaError(f"ICMPService {self.id}: type/code {value} out of range")


# time
@dataclass(frozen=True, kw_only=True)
class TimeInterval(FwObject):
    """Empty weekdays means every day; daily bounds are minutes of day."""
    element = "Interval"
    category = Category.INTERVAL
    start: Optional[datetime] = None
    end: Optional[datetime] = None
    weekdays: frozenset = frozenset()
    daily_start: Optional[int] = None
    daily_end: Optional[int] = None

    def __post_init__(self):
        super().__post_init__()
        object.__setattr__(self, "weekdays", frozenset(Weekday(d) for d in self.weekdays))
        for value in (self.daily_start, self.daily_end):
            if value is not None and not 0 <= value < 1440:
                raise SchemaError(f"Interval {self.id}: daily time {value} out of range")
        if self.start and self.end and self.start > self.end:
            raise SchemaError(f"Interval {self.id}: start after end")

    @property
    def is_absolute(self) -> bool:
        return self.start is not None or self.end is not None


# hosts
@dataclass(frozen=True, kw_only=True)
class Interface(FwObject):
    element = "Interface"
    category = Category.ADDRESS
    dynamic: bool = False
    unnumbered: bool = False
    unprotected: Optional[bool] = None
    addresses: Tuple[IPv4, ...] = ()
    phys: Optional[PhysAddress] = None

    def __post_init__(self):
        super().__post_init__()
        object.__setattr__(self, "addresses", tuple(self.addresses))
        if self.dynamic and self.addresses:
            raise SchemaError(f"Interface {self.name}: dynamic interface cannot carry static addresses")


@dataclass(frozen=True, kw_only=True)
class Host(FwObject):
    element = "Host"
    category = Category.ADDRESS
    interfaces: Tuple[Interface, ...] = ()

    def __post_init__(self):
        super().__post_init__()
        object.__setattr__(self, "interfaces", tuple(self.interfaces))

    def interface(self, name: str) -> Optional[Interface]:
        return next((i for i in self.interfaces if i.name == name), None)

    @property
    def interface_names(self) -> Tuple[str, ...]:
        return tuple(i.name for i in self.interfaces)


@dataclass(frozen=True, kw_only=True)
class Group(FwObject):
    """Typed group; its category is that of its members."""
    element = "Group"
    members: Tuple[str, ...] = ()

    def __post_init__(self):
        super().__post_init__()
        object.__setattr__(self, "members", tuple(self.members))


# rules
@dataclass(frozen=True)
class MatchElement:
    """Rule field: matches if any referenced object matches, inverted when negated."""
    refs: Tuple[str, ...]
    negated: bool = False

    def __post_init__(self):
        object.__setattr__(self, "refs", tuple(self.refs))
        if not self.refs:
            raise SchemaError("match element must reference at least one object")

    @classmethod
    def any_address(cls) -> "MatchElement":
        return cls((ANY_ADDRESS_ID,))

    @classmethod
    def any_service(cls) -> "MatchElement":
        return cls((ANY_SERVICE_ID,))

    @classmethod
    def any_interval(cls) -> "MatchElement":
        return cls((ANY_INTERVAL_ID,))

    @property
    def is_any(self) -> bool:
        return not self.negated and bool({ANY_ADDRESS_ID, ANY_SERVICE_ID, ANY_INTERVAL_ID} & set(self.refs))

    def negate(self) -> "MatchElement":
        return replace(self, negated=not self.negated)


@dataclass(frozen=True, kw_only=True)
class PolicyRule(FwObject):
    element = "PolicyRule"
    position: int
    action: Action
    direction: Direction = Direction.BOTH
    disabled: bool = False
    src: MatchElement = field(default_factory=MatchElement.any_address)
    dst: MatchElement = field(default_factory=MatchElement.any_address)
    srv: MatchElement = field(default_factory=MatchElement.any_service)
    itf: MatchElement = field(default_factory=MatchElement.any_address)
    when: MatchElement = field(default_factory=MatchElement.any_interval)

    def __post_init__(self):
        super().__post_init__()
        if self.position < 0:
            raise SchemaError(f"PolicyRule {self.id}: negative position {self.position}")
        object.__setattr__(self, "action", Action(self.action))
        object.__setattr__(self, "direction", Direction(self.direction))


@dataclass(frozen=True, kw_only=True)
class NATRule(FwObject):
    """Original fields select packets; a None translation keeps the field."""
    element = "NATRule"
    position: int
    disabled: bool = False
    osrc: MatchElement = field(default_factory=MatchElement.any_address)
    odst: MatchElement = field(default_factory=MatchElement.any_address)
    osrv: MatchElement = field(default_factory=MatchElement.any_service)
    tsrc: Optional[str] = None
    tdst: Optional[str] = None
    tsrv: Optional[str] = None
    when: MatchElement = field(default_factory=MatchElement.any_interval)

    def __post_init__(self):
        super().__post_init__()
        if self.position < 0:
            raise SchemaError(f"NATRule {self.id}: negative position {self.position}")

    @property
    def translates(self) -> bool:
        return any(t is not None for t in (self.tsrc, self.tdst, self.tsrv))


@dataclass(frozen=True, kw_only=True)
class Policy(FwObject):
    """Rules are kept in position order regardless of document order."""
    element = "Policy"
    rules: Tuple[PolicyRule, ...] = ()

    def __post_init__(self):
        super().__post_init__()
        object.__setattr__(self, "rules", tuple(sorted(self.rules, key=lambda r: r.position)))

    def enabled_rules(self) -> Tuple[PolicyRule, ...]:
        return tuple(r for r in self.rules if not r.disabled)


@dataclass(frozen=True, kw_only=True)
class NatPolicy(FwObject):
    element = "NAT"
    rules: Tuple[NATRule, ...] = ()

    def __post_init__(self):
        super().__post_init__()
        object.__setattr__(self, "rules", tuple(sorted(self.rules, key=lambda r: r.position)))

    def enabled_rules(self) -> Tuple[NATRule, ...]:
        return tuple(r for r in self.rules if not r.disabled)


@dataclass(frozen=True, kw_only=True)
class Firewall(Host):
    element = "Firewall"
    platform: str = Platform.IPTABLES.value
    host_os: str = ""
    policy: Optional[Policy] = None
    nat: Optional[NatPolicy] = None

    @property
    def target(self) -> Optional[Platform]:
        try:
            return Platform(self.platform)
        except ValueError:
            return None

    @property
    def rules(self) -> Tuple[PolicyRule, ...]:
        return self.policy.rules if self.policy else ()

    @property
    def nat_rules(self) -> Tuple[NATRule, ...]:
        return self.nat.rules if self.nat else ()


@dataclass(frozen=True, kw_only=True)
class Library(FwObject):
    element = "Library"
    objects: Tuple[FwObject, ...] = ()

    def __post_init__(self):
        super().__post_init__()
        object.__setattr__(self, "objects", tuple(self.objects))


ELEMENT_TYPES = {
    cls.element: cls
    for cls in (AnyNetwork, AnyIPService, AnyInterval, IPv4, Network, AddressRange, AddressTable,
                PhysAddress, IPService, TCPService, UDPService, ICMPService, TimeInterval,
                Interface, Host, Firewall, Group)
}
