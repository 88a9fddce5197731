import logging
import threading
from pathlib import Path
from typing import Callable, Dict, Iterable, Iterator, List, Optional, Tuple

from fwcomp.errors import CyclicGroup, DuplicateId, NonProductRegion, OpaqueSet, SchemaError, UnknownId, WrongObjectType
from .intervals import MINUTES_PER_DAY, AddressSet, MacSet, TimeSet, parse_ip
from .objects import (
    AddressRange,
    AddressTable,
    AnyInterval,
    AnyIPService,
    AnyNetwork,
    Firewall,
    FwObject,
    Group,
    Host,
    ICMPService,
    Interface,
    IPService,
    IPv4,
    Library,
    MatchElement,
    NatPolicy,
    Network,
    PhysAddress,
    Policy,
    TCPService,
    TimeInterval,
    UDPService,
)
from .services import ServiceSet
from .types import (
    ANY_ADDRESS_ID,
    ANY_INTERVAL_ID,
    ANY_SERVICE_ID,
    PROTO_UDP,
    STANDARD_LIBRARY_ID,
    Category,
    LoadTime,
    Weekday,
)

logger = logging.getLogger(__name__)

RESERVED_IDS = (ANY_ADDRESS_ID, ANY_SERVICE_ID, ANY_INTERVAL_ID)


def standard_library() -> Library:
    """Library every database carries: the Any objects and the RFC 1918 networks."""
    private = [
        ("net-10", "net-10.0.0.0", "10.0.0.0", "255.0.0.0"),
        ("net-172.16", "net-172.16.0.0", "172.16.0.0", "255.240.0.0"),
        ("net-192.168", "net-192.168.0.0", "192.168.0.0", "255.255.0.0"),
    ]
    objects: List[FwObject] = [AnyNetwork(), AnyIPService(), AnyInterval()]
    objects += [
        Network(id=oid, name=name, address=parse_ip(address), netmask=parse_ip(mask))
        for oid, name, address, mask in private
    ]
    return Library(id=STANDARD_LIBRARY_ID, name="Standard", objects=objects)


def _children(obj: FwObject) -> Iterator[FwObject]:
    if isinstance(obj, Library):
        yield from obj.objects
    if isinstance(obj, Host):
        yield from obj.interfaces
    if isinstance(obj, Interface):
        yield from obj.addresses
        if obj.phys is not None:
            yield obj.phys
    if isinstance(obj, Firewall):
        for container in (obj.policy, obj.nat):
            if container is not None:
                yield container
    if isinstance(obj, (Policy, NatPolicy)):
        yield from obj.rules


class ObjectDatabase:
    """Immutable id-indexed store of libraries and every object they embed.

    Derived match sets are cached per object id; caches only ever grow with
    values that are a pure function of the (immutable) objects. A database
    may be shared between threads: the first value stored for a key wins.
    """

    def __init__(self, libraries: Iterable[Library], source_path: Optional[Path] = None,
                 diagnostics: Iterable = ()):
        libraries = list(libraries)
        if not any(lib.id == STANDARD_LIBRARY_ID for lib in libraries):
            libraries.insert(0, standard_library())
        self.libraries: Tuple[Library, ...] = tuple(libraries)
        self.source_path = Path(source_path) if source_path else None
        # grammar-level findings recorded while loading
        self.load_diagnostics = tuple(diagnostics)
        self.index: Dict[str, FwObject] = {}
        self._parents: Dict[str, FwObject] = {}
        for library in self.libraries:
            self._register(library, None)
        missing = [oid for oid in RESERVED_IDS if oid not in self.index]
        if missing:
            raise SchemaError(f"standard library lacks reserved objects: {', '.join(missing)}")
        self._address_cache: Dict[str, AddressSet] = {}
        self._service_cache: Dict[str, ServiceSet] = {}
        self._table_cache: Dict[str, AddressSet] = {}
        self._derived: Dict[object, object] = {}
        self._lock = threading.Lock()

    def _memo(self, cache: dict, key, build: Callable[[], object]):
        # build runs outside the lock; it may fill other caches
        try:
            return cache[key]
        except KeyError:
            pass
        value = build()
        with self._lock:
            return cache.setdefault(key, value)

    def derived(self, key, build: Callable[[], object]):
        """Memoize a value computed from this database's immutable objects."""
        return self._memo(self._derived, key, build)

    def _register(self, obj: FwObject, parent: Optional[FwObject]):
        if obj.id in self.index:
            raise DuplicateId(obj.id)
        self.index[obj.id] = obj
        if parent is not None:
            self._parents[obj.id] = parent
        for child in _children(obj):
            self._register(child, obj)

    def __contains__(self, object_id: str) -> bool:
        return object_id in self.index

    def __eq__(self, other) -> bool:
        # structural: same libraries holding equal objects
        if not isinstance(other, ObjectDatabase):
            return NotImplemented
        return self.libraries == other.libraries

    __hash__ = None

    def resolve(self, object_id: str) -> FwObject:
        try:
            return self.index[object_id]
        except KeyError:
            raise UnknownId(object_id) from None

    def parent_of(self, obj: FwObject) -> Optional[FwObject]:
        return self._parents.get(obj.id)

    def objects(self) -> Iterator[FwObject]:
        return iter(self.index.values())

    def firewalls(self) -> List[Firewall]:
        return [obj for obj in self.index.values() if isinstance(obj, Firewall)]

    def find_firewall(self, name: str) -> Firewall:
        for fw in self.firewalls():
            if fw.name == name:
                return fw
        raise UnknownId(name)

    def user_libraries(self) -> Tuple[Library, ...]:
        return tuple(lib for lib in self.libraries if lib.id != STANDARD_LIBRARY_ID)

    # groups

    def category_of(self, obj: FwObject) -> Optional[Category]:
        """Category of an object; a group takes the category of its first leaf member."""
        if isinstance(obj, Group):
            for leaf in self.leaves(obj):
                return leaf.category
            return None
        return obj.category

    def leaves(self, obj: FwObject, _chain: Tuple[str, ...] = ()) -> Iterator[FwObject]:
        """Non-group objects reachable from obj through group membership."""
        if not isinstance(obj, Group):
            yield obj
            return
        if obj.id in _chain:
            raise CyclicGroup(list(_chain[_chain.index(obj.id):]) + [obj.id])
        for ref in obj.members:
            yield from self.leaves(self.resolve(ref), _chain + (obj.id,))

    def element_leaves(self, element: MatchElement) -> List[FwObject]:
        return [leaf for ref in element.refs for leaf in self.leaves(self.resolve(ref))]

    # address layer

    def address_set_of(self, obj: FwObject) -> AddressSet:
        return self._memo(self._address_cache, obj.id, lambda: self._address_set_of(obj))

    def _address_set_of(self, obj: FwObject) -> AddressSet:
        if isinstance(obj, AnyNetwork):
            return AddressSet.full()
        if isinstance(obj, IPv4):
            return AddressSet.single(obj.address)
        if isinstance(obj, Network):
            return AddressSet.from_network(obj.address, obj.netmask)
        if isinstance(obj, AddressRange):
            return AddressSet([(obj.first, obj.last)])
        if isinstance(obj, AddressTable):
            return self.table_addresses(obj)
        if isinstance(obj, Interface):
            if obj.dynamic:
                raise OpaqueSet(f"Interface {obj.name} has a dynamic address")
            if not obj.addresses:
                raise OpaqueSet(f"Interface {obj.name} has no static address")
            return AddressSet([(a.address, a.address) for a in obj.addresses])
        if isinstance(obj, Host):
            if any(i.dynamic for i in obj.interfaces):
                raise OpaqueSet(f"{obj.element} {obj.name} has a dynamic interface")
            result = AddressSet([(a.address, a.address) for i in obj.interfaces for a in i.addresses])
            if result.is_empty():
                raise OpaqueSet(f"{obj.element} {obj.name} has no static address")
            return result
        if isinstance(obj, Group):
            result = AddressSet.empty()
            for ref in obj.members:
                member = self.resolve(ref)
                self._check_no_cycle(member, (obj.id,))
                result = result | self.address_set_of(member)
            return result
        raise WrongObjectType(f"{obj.label()} is not an address object")

    def _check_no_cycle(self, member: FwObject, chain: Tuple[str, ...]):
        for _ in self.leaves(member, chain):
            pass

    def table_addresses(self, table: AddressTable) -> AddressSet:
        """Concrete set of a compile-time table, loaded once per database."""
        if table.load_time is LoadTime.DEPLOY:
            raise OpaqueSet(f"AddressTable {table.name} is loaded at deploy time")
        return self._memo(self._table_cache, table.id, lambda: self._load_table(table))

    def _load_table(self, table: AddressTable) -> AddressSet:
        from fwcomp.fwbxml.address_table import load_address_table, resolve_table_path
        addresses = load_address_table(resolve_table_path(table.path, self.source_path))
        logger.debug(f"Loaded address table {table.name}: {addresses}")
        return addresses

    def mac_set_of(self, obj: FwObject) -> MacSet:
        if isinstance(obj, AnyNetwork):
            return MacSet.full()
        if isinstance(obj, PhysAddress):
            return MacSet.single(obj.address)
        if isinstance(obj, Group):
            result = MacSet.empty()
            for leaf in self.leaves(obj):
                result = result | self.mac_set_of(leaf)
            return result
        raise WrongObjectType(f"{obj.label()} is not a physical address")

    def layer_sets(self, element: MatchElement) -> Tuple[AddressSet, MacSet]:
        """Positive (IP, MAC) sets of an address element; mixed elements match either layer."""
        ips, macs = AddressSet.empty(), MacSet.empty()
        for ref in element.refs:
            obj = self.resolve(ref)
            if self.category_of(obj) is Category.PHYS:
                macs = macs | self.mac_set_of(obj)
            else:
                ips = ips | self.address_set_of(obj)
        return ips, macs

    def element_address_set(self, element: MatchElement) -> AddressSet:
        """Exact IP-layer set of an element without physical addresses, negation applied."""
        ips, macs = self.layer_sets(element)
        if not macs.is_empty():
            raise NonProductRegion("element mixes IP and physical addresses")
        return ips.complement() if element.negated else ips

    def element_mac_set(self, element: MatchElement) -> Optional[MacSet]:
        """MAC set of a purely physical element, or None if it holds IP objects."""
        ips, macs = self.layer_sets(element)
        if macs.is_empty():
            return None
        if not ips.is_empty():
            raise NonProductRegion("element mixes IP and physical addresses")
        return macs.complement() if element.negated else macs

    def interface_names(self, element: MatchElement) -> Optional[frozenset]:
        """Interface names of an Itf element, None for Any. Negation is left to the caller."""
        names = set()
        for leaf in self.element_leaves(element):
            if isinstance(leaf, AnyNetwork):
                return None
            if not isinstance(leaf, Interface):
                raise WrongObjectType(f"{leaf.label()} is not an interface")
            names.add(leaf.name)
        return frozenset(names)

    # service layer

    def service_set_of(self, obj: FwObject) -> ServiceSet:
        return self._memo(self._service_cache, obj.id, lambda: self._service_set_of(obj))

    def _service_set_of(self, obj: FwObject) -> ServiceSet:
        if isinstance(obj, AnyIPService):
            return ServiceSet.universe()
        if isinstance(obj, IPService):
            return ServiceSet.ip(obj.protocol)
        if isinstance(obj, TCPService):
            return ServiceSet.tcp(obj.src_range, obj.dst_range, obj.flags_mask, obj.flags_set)
        if isinstance(obj, UDPService):
            return ServiceSet({PROTO_UDP: [(obj.src_range, obj.dst_range)]})
        if isinstance(obj, ICMPService):
            return ServiceSet.icmp(obj.icmp_type, obj.icmp_code)
        if isinstance(obj, Group):
            result = ServiceSet.empty()
            for leaf in self.leaves(obj):
                result = result.union(self.service_set_of(leaf))
            return result
        raise WrongObjectType(f"{obj.label()} is not a service object")

    def element_service_set(self, element: MatchElement) -> ServiceSet:
        result = ServiceSet.empty()
        for ref in element.refs:
            result = result.union(self.service_set_of(self.resolve(ref)))
        return result.complement() if element.negated else result

    # time layer

    def time_set_of(self, obj: FwObject) -> TimeSet:
        """Minute-of-week set of an interval; absolute date bounds have no such form."""
        if isinstance(obj, AnyInterval):
            return TimeSet.full()
        if isinstance(obj, TimeInterval):
            if obj.is_absolute:
                raise NonProductRegion(f"Interval {obj.name} has absolute date bounds")
            return TimeSet(weekly_minutes(obj))
        if isinstance(obj, Group):
            result = TimeSet.empty()
            for leaf in self.leaves(obj):
                result = result | self.time_set_of(leaf)
            return result
        raise WrongObjectType(f"{obj.label()} is not a time interval")

    def element_time_set(self, element: MatchElement) -> TimeSet:
        result = TimeSet.empty()
        for ref in element.refs:
            result = result | self.time_set_of(self.resolve(ref))
        return result.complement() if element.negated else result


def daily_windows(interval: TimeInterval) -> List[Tuple[int, int]]:
    """Minute-of-day windows; a start after the end wraps past midnight within the same day."""
    start = 0 if interval.daily_start is None else interval.daily_start
    end = MINUTES_PER_DAY - 1 if interval.daily_end is None else interval.daily_end
    if start <= end:
        return [(start, end)]
    return [(0, end), (start, MINUTES_PER_DAY - 1)]


def weekly_minutes(interval: TimeInterval) -> List[Tuple[int, int]]:
    days = interval.weekdays or frozenset(Weekday)
    out = []
    for day in sorted(days, key=lambda d: d.index):
        base = day.index * MINUTES_PER_DAY
        out.extend((base + lo, base + hi) for lo, hi in daily_windows(interval))
    return out


def resolve(db: ObjectDatabase, object_id: str) -> FwObject:
    return db.resolve(object_id)


def address_set_of(obj: FwObject, db: ObjectDatabase) -> AddressSet:
    return db.address_set_of(obj)


def service_set_of(obj: FwObject, db: ObjectDatabase) -> ServiceSet:
    return db.service_set_of(obj)


def time_set_of(obj: FwObject, db: ObjectDatabase) -> TimeSet:
    return db.time_set_of(obj)


def mac_set_of(obj: FwObject, db: ObjectDatabase) -> MacSet:
    return db.mac_set_of(obj)
