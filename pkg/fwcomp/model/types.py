from enum import Enum, IntFlag


class Action(str, Enum):
    """Policy rule actions of the abstract firewall"""
    ACCEPT = "Accept"
    DENY = "Deny"
    REJECT = "Reject"
    ACCOUNTING = "Accounting"

    @property
    def terminal(self) -> bool:
        return self is not Action.ACCOUNTING


class Direction(str, Enum):
    INBOUND = "Inbound"
    OUTBOUND = "Outbound"
    BOTH = "Both"

    def covers(self, other: "Direction") -> bool:
        return self is Direction.BOTH or self is other


class Platform(str, Enum):
    """Supported compilation targets"""
    IPTABLES = "iptables"
    PF = "pf"
    IPFILTER = "ipfilter"


class LoadTime(str, Enum):
    COMPILE = "compile"
    DEPLOY = "deploy"


class Weekday(str, Enum):
    MON = "Mon"
    TUE = "Tue"
    WED = "Wed"
    THU = "Thu"
    FRI = "Fri"
    SAT = "Sat"
    SUN = "Sun"

    @property
    def index(self) -> int:
        return list(Weekday).index(self)

    @classmethod
    def from_index(cls, index: int) -> "Weekday":
        return list(cls)[index]


class Category(str, Enum):
    """Object kinds a typed group may hold; "same type" means same category"""
    ADDRESS = "address"
    PHYS = "phys"
    SERVICE = "service"
    INTERVAL = "interval"


class TcpFlag(IntFlag):
    FIN = 1
    SYN = 2
    RST = 4
    PSH = 8
    ACK = 16
    URG = 32


ALL_TCP_FLAGS = 63

# IP protocol numbers with dedicated service types
PROTO_ICMP = 1
PROTO_TCP = 6
PROTO_UDP = 17

PROTOCOL_NAMES = {PROTO_ICMP: "icmp", PROTO_TCP: "tcp", PROTO_UDP: "udp"}
PROTOCOL_NUMBERS = {name: number for number, name in PROTOCOL_NAMES.items()}


def protocol_number(token: str) -> int:
    """`tcp`, `udp`, `icmp` or a decimal protocol number."""
    number = PROTOCOL_NUMBERS.get(token.lower())
    if number is None:
        number = int(token)
    if not 0 <= number <= 255:
        raise ValueError(f"protocol out of range: {token}")
    return number

# reserved ids present in every database
ANY_ADDRESS_ID = "sysid0"
ANY_SERVICE_ID = "sysid1"
ANY_INTERVAL_ID = "sysid2"
STANDARD_LIBRARY_ID = "syslib000"
