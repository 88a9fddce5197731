from .types import Action, Category, Direction, LoadTime, Platform, TcpFlag, Weekday
from .intervals import AddressSet, Cidr, IntervalSet, MacSet, TimeSet
from .services import ServiceSet
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
    NATRule,
    Network,
    PhysAddress,
    Policy,
    PolicyRule,
    TCPService,
    TimeInterval,
    UDPService,
)
from .database import (
    ObjectDatabase,
    address_set_of,
    mac_set_of,
    resolve,
    service_set_of,
    standard_library,
    time_set_of,
)

__all__ = [
    "Action", "Category", "Direction", "LoadTime", "Platform", "TcpFlag", "Weekday",
    "AddressSet", "Cidr", "IntervalSet", "MacSet", "TimeSet", "ServiceSet",
    "AddressRange", "AddressTable", "AnyInterval", "AnyIPService", "AnyNetwork", "Firewall",
    "FwObject", "Group", "Host", "ICMPService", "Interface", "IPService", "IPv4", "Library",
    "MatchElement", "NatPolicy", "NATRule", "Network", "PhysAddress", "Policy", "PolicyRule",
    "TCPService", "TimeInterval", "UDPService",
    "ObjectDatabase", "address_set_of", "mac_set_of", "resolve", "service_set_of",
    "standard_library", "time_set_of",
]
