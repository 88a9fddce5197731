import logging
from datetime import datetime
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Union

from lxml import etree

from fwcomp.errors import DanglingRef, SchemaError, XmlError
from fwcomp.model.database import ObjectDatabase
from fwcomp.model.intervals import parse_ip, parse_mac
from fwcomp.model.objects import (
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
from fwcomp.model.types import ANY_ADDRESS_ID, ANY_SERVICE_ID, Action, Direction, LoadTime, TcpFlag, Weekday
from .diagnostic import Diagnostic

logger = logging.getLogger(__name__)

ROOT = "FWObjectDatabase"
REF_TAGS = ("ObjectRef", "ServiceRef", "IntervalRef")
RULE_ELEMENTS = {"Src": "src", "Dst": "dst", "Srv": "srv", "Itf": "itf", "When": "when"}
NAT_ELEMENTS = {"OSrc": "osrc", "ODst": "odst", "OSrv": "osrv", "When": "when"}
NAT_TRANSLATIONS = {"TSrc": "tsrc", "TDst": "tdst", "TSrv": "tsrv"}
DATETIME_FORMAT = "%Y-%m-%dT%H:%M"
COMMON_ATTRIBUTES = ("id", "name", "comment")
TRUE, FALSE = "True", "False"


def format_bool(value: bool) -> str:
    return TRUE if value else FALSE


def parse_flags(text: str) -> tuple[int, int]:
    """`SET/MASK` with comma-separated flag names, e.g. `SYN/SYN,ACK` -> (mask, set)."""
    set_part, sep, mask_part = text.partition("/")
    if not sep:
        raise ValueError(f"flags must be written SET/MASK, got {text!r}")

    def bits(part: str) -> int:
        value = 0
        for name in filter(None, (p.strip() for p in part.split(","))):
            value |= TcpFlag[name.upper()]
        return value

    try:
        return bits(mask_part), bits(set_part)
    except KeyError as e:
        raise ValueError(f"unknown TCP flag {e.args[0]!r}") from None


def format_flags(mask: int, flags_set: int) -> str:
    def names(bits: int) -> str:
        return ",".join(f.name for f in TcpFlag if bits & f)
    return f"{names(flags_set)}/{names(mask)}"


def parse_daily(text: str) -> int:
    hours, sep, minutes = text.partition(":")
    if not sep or not hours.isdigit() or not minutes.isdigit() or int(hours) > 23 or int(minutes) > 59:
        raise ValueError(f"daily time must be HH:MM, got {text!r}")
    return int(hours) * 60 + int(minutes)


def format_daily(minutes: int) -> str:
    return f"{minutes // 60:02d}:{minutes % 60:02d}"


class FwbReader:
    """Builds an ObjectDatabase from a parsed .fwb element tree.

    Grammar problems that do not prevent building the objects (unknown
    attributes, non-boolean flags) are collected as diagnostics; anything
    else raises.
    """

    def __init__(self, source_path: Optional[Path] = None):
        self.source_path = source_path
        self.diagnostics: List[Diagnostic] = []
        self._objects: Dict[str, Callable[[etree._Element], FwObject]] = {
            "AnyNetwork": self._any(AnyNetwork),
            "AnyIPService": self._any(AnyIPService),
            "AnyInterval": self._any(AnyInterval),
            "IPv4": self._ipv4,
            "Network": self._network,
            "AddressRange": self._address_range,
            "AddressTable": self._address_table,
            "physAddress": self._phys,
            "IPService": self._ip_service,
            "TCPService": self._tcp_service,
            "UDPService": self._udp_service,
            "ICMPService": self._icmp_service,
            "Interval": self._interval,
            "Interface": self._interface,
            "Host": self._host,
            "Firewall": self._firewall,
            "Group": self._group,
        }

    # helpers

    @staticmethod
    def _where(node) -> str:
        return node.getroottree().getpath(node)

    @staticmethod
    def _children(node) -> List:
        return [child for child in node if isinstance(child.tag, str)]

    def _check_attributes(self, node, required: Iterable[str] = (), optional: Iterable[str] = (),
                          common: bool = True):
        allowed = set(required) | set(optional) | (set(COMMON_ATTRIBUTES) if common else set())
        for key in node.attrib:
            if key not in allowed:
                self.diagnostics.append(Diagnostic.warning(
                    "unknown-attribute", self._where(node),
                    f"unknown attribute {key!r} on {node.tag}", node.get("id")))
        for key in required:
            if node.get(key) is None:
                raise SchemaError(f"{self._where(node)}: missing required attribute {key!r}")

    def _bool(self, node, key: str, default: bool = False) -> bool:
        text = node.get(key)
        if text is None:
            return default
        if text.lower() == "true":
            return True
        if text.lower() != "false":
            self.diagnostics.append(Diagnostic.error(
                "bad-boolean", self._where(node), f"attribute {key}={text!r} is not True/False", node.get("id")))
        return False

    def _int(self, node, key: str, default: Optional[int] = None, lo: int = 0, hi: int = 65535) -> int:
        text = node.get(key)
        if text is None:
            if default is None:
                raise SchemaError(f"{self._where(node)}: missing required attribute {key!r}")
            return default
        try:
            value = int(text)
        except ValueError:
            raise SchemaError(f"{self._where(node)}: attribute {key}={text!r} is not an integer") from None
        if not lo <= value <= hi:
            raise SchemaError(f"{self._where(node)}: attribute {key}={value} outside {lo}..{hi}")
        return value

    def _convert(self, node, key: str, convert: Callable):
        text = node.get(key)
        if text is None:
            return None
        try:
            return convert(text)
        except ValueError as e:
            raise SchemaError(f"{self._where(node)}: attribute {key}: {e}") from None

    def _common(self, node) -> dict:
        return {"id": node.get("id"), "name": node.get("name", ""), "comment": node.get("comment", "")}

    def _build(self, node, cls, **fields) -> FwObject:
        try:
            return cls(**self._common(node), **fields)
        except (TypeError, ValueError) as e:
            raise SchemaError(f"{self._where(node)}: {e}") from e

    def _reject_children(self, node):
        children = self._children(node)
        if children:
            raise SchemaError(f"{self._where(children[0])}: unexpected element {children[0].tag!r}")

    # document

    def read(self, root) -> ObjectDatabase:
        if root.tag != ROOT:
            raise SchemaError(f"root element must be {ROOT}, got {root.tag!r}")
        self._check_attributes(root, optional=("version",), common=False)
        libraries = []
        for child in self._children(root):
            if child.tag != "Library":
                raise SchemaError(f"{self._where(child)}: unexpected element {child.tag!r}")
            libraries.append(self._library(child))
        if not libraries:
            raise SchemaError(f"{ROOT} must contain at least one Library")
        db = ObjectDatabase(libraries, source_path=self.source_path, diagnostics=self.diagnostics)
        check_references(db)
        return db

    def _library(self, node) -> Library:
        self._check_attributes(node, required=("id",))
        return self._build(node, Library, objects=[self._object(child) for child in self._children(node)])

    def _object(self, node) -> FwObject:
        reader = self._objects.get(node.tag)
        if reader is None:
            raise SchemaError(f"{self._where(node)}: unknown element {node.tag!r}")
        return reader(node)

    # objects

    def _any(self, cls):
        def read(node):
            self._check_attributes(node, required=("id",))
            self._reject_children(node)
            return self._build(node, cls)
        return read

    def _ipv4(self, node) -> IPv4:
        self._check_attributes(node, required=("id", "address"), optional=("netmask",))
        self._reject_children(node)
        netmask = self._convert(node, "netmask", parse_ip)
        return self._build(node, IPv4, address=self._convert(node, "address", parse_ip),
                           **({} if netmask is None else {"netmask": netmask}))

    def _network(self, node) -> Network:
        self._check_attributes(node, required=("id", "address", "netmask"))
        self._reject_children(node)
        return self._build(node, Network, address=self._convert(node, "address", parse_ip),
                           netmask=self._convert(node, "netmask", parse_ip))

    def _address_range(self, node) -> AddressRange:
        self._check_attributes(node, required=("id", "start", "end"))
        self._reject_children(node)
        return self._build(node, AddressRange, first=self._convert(node, "start", parse_ip),
                           last=self._convert(node, "end", parse_ip))

    def _address_table(self, node) -> AddressTable:
        self._check_attributes(node, required=("id", "path"), optional=("load",))
        self._reject_children(node)
        load = self._convert(node, "load", LoadTime) or LoadTime.COMPILE
        return self._build(node, AddressTable, path=node.get("path"), load_time=load)

    def _phys(self, node) -> PhysAddress:
        self._check_attributes(node, required=("id", "address"))
        self._reject_children(node)
        return self._build(node, PhysAddress, address=self._convert(node, "address", parse_mac))

    def _ip_service(self, node) -> IPService:
        self._check_attributes(node, required=("id", "protocol"), optional=("lsrr", "rr"))
        self._reject_children(node)
        return self._build(node, IPService, protocol=self._int(node, "protocol", hi=255),
                           lsrr=self._bool(node, "lsrr"), rr=self._bool(node, "rr"))

    def _port_range(self, node, prefix: str) -> tuple[int, int]:
        start = self._int(node, f"{prefix}_range_start", default=0)
        end = self._int(node, f"{prefix}_range_end", default=65535 if start == 0 else start)
        # 0-0 is the conventional "any port"
        if start == 0 and end == 0:
            return 0, 65535
        return start, end

    def _udp_service(self, node) -> UDPService:
        self._check_attributes(node, required=("id",), optional=(
            "src_range_start", "src_range_end", "dst_range_start", "dst_range_end"))
        self._reject_children(node)
        return self._build(node, UDPService, src_range=self._port_range(node, "src"),
                           dst_range=self._port_range(node, "dst"))

    def _tcp_service(self, node) -> TCPService:
        self._check_attributes(node, required=("id",), optional=(
            "src_range_start", "src_range_end", "dst_range_start", "dst_range_end", "flags"))
        self._reject_children(node)
        mask, flags_set = self._convert(node, "flags", parse_flags) or (0, 0)
        return self._build(node, TCPService, src_range=self._port_range(node, "src"),
                           dst_range=self._port_range(node, "dst"), flags_mask=mask, flags_set=flags_set)

    def _icmp_service(self, node) -> ICMPService:
        self._check_attributes(node, required=("id",), optional=("type", "code"))
        self._reject_children(node)
        icmp_type = self._int(node, "type", default=-1, lo=-1, hi=255)
        icmp_code = self._int(node, "code", default=-1, lo=-1, hi=255)
        return self._build(node, ICMPService, icmp_type=None if icmp_type < 0 else icmp_type,
                           icmp_code=None if icmp_code < 0 else icmp_code)

    def _interval(self, node) -> TimeInterval:
        self._check_attributes(node, required=("id",), optional=(
            "start", "end", "weekdays", "daily_start", "daily_end"))
        self._reject_children(node)
        weekdays = self._convert(node, "weekdays", lambda text: frozenset(
            Weekday(day.strip().capitalize()) for day in text.split(",") if day.strip()))
        return self._build(
            node, TimeInterval,
            start=self._convert(node, "start", lambda t: datetime.strptime(t, DATETIME_FORMAT)),
            end=self._convert(node, "end", lambda t: datetime.strptime(t, DATETIME_FORMAT)),
            weekdays=weekdays or frozenset(),
            daily_start=self._convert(node, "daily_start", parse_daily),
            daily_end=self._convert(node, "daily_end", parse_daily),
        )

    def _interface(self, node) -> Interface:
        self._check_attributes(node, required=("id", "name"), optional=("dyn", "unnum", "unprotected"))
        addresses, phys = [], None
        for child in self._children(node):
            if child.tag == "IPv4":
                addresses.append(self._ipv4(child))
            elif child.tag == "physAddress" and phys is None:
                phys = self._phys(child)
            else:
                raise SchemaError(f"{self._where(child)}: unexpected element {child.tag!r} in Interface")
        unprotected = self._bool(node, "unprotected") if node.get("unprotected") is not None else None
        return self._build(node, Interface, dynamic=self._bool(node, "dyn"), unnumbered=self._bool(node, "unnum"),
                           unprotected=unprotected, addresses=addresses, phys=phys)

    def _host_parts(self, node, allowed: Iterable[str]) -> dict:
        parts: dict = {"interfaces": []}
        for child in self._children(node):
            if child.tag == "Interface":
                parts["interfaces"].append(self._interface(child))
            elif child.tag == "Policy" and "Policy" in allowed and "policy" not in parts:
                parts["policy"] = self._policy(child)
            elif child.tag == "NAT" and "NAT" in allowed and "nat" not in parts:
                parts["nat"] = self._nat(child)
            else:
                raise SchemaError(f"{self._where(child)}: unexpected element {child.tag!r} in {node.tag}")
        return parts

    def _host(self, node) -> Host:
        self._check_attributes(node, required=("id",))
        return self._build(node, Host, **self._host_parts(node, ()))

    def _firewall(self, node) -> Firewall:
        self._check_attributes(node, required=("id", "platform"), optional=("host_OS",))
        parts = self._host_parts(node, ("Policy", "NAT"))
        return self._build(node, Firewall, platform=node.get("platform"), host_os=node.get("host_OS", ""), **parts)

    def _group(self, node) -> Group:
        self._check_attributes(node, required=("id",))
        return self._build(node, Group, members=self._refs(node))

    # rules

    def _refs(self, node) -> List[str]:
        refs = []
        for child in self._children(node):
            if child.tag not in REF_TAGS:
                raise SchemaError(f"{self._where(child)}: unexpected element {child.tag!r}")
            self._check_attributes(child, required=("ref",), common=False)
            self._reject_children(child)
            refs.append(child.get("ref"))
        return refs

    def _match_element(self, node) -> MatchElement:
        self._check_attributes(node, optional=("neg",), common=False)
        refs = self._refs(node)
        if not refs:
            raise SchemaError(f"{self._where(node)}: {node.tag} must reference at least one object")
        return MatchElement(tuple(refs), self._bool(node, "neg"))

    def _enum(self, node, key: str, enum, default=None):
        text = node.get(key)
        if text is None:
            if default is None:
                raise SchemaError(f"{self._where(node)}: missing required attribute {key!r}")
            return default
        try:
            return enum(text)
        except ValueError:
            choices = ", ".join(e.value for e in enum)
            raise SchemaError(f"{self._where(node)}: {key}={text!r} is not one of {choices}") from None

    def _policy(self, node) -> Policy:
        self._check_attributes(node, required=("id",))
        rules = []
        for child in self._children(node):
            if child.tag != "PolicyRule":
                raise SchemaError(f"{self._where(child)}: unexpected element {child.tag!r} in Policy")
            rules.append(self._policy_rule(child))
        return self._build(node, Policy, rules=rules)

    def _policy_rule(self, node) -> PolicyRule:
        self._check_attributes(node, required=("id", "position", "action"), optional=("direction", "disabled"))
        fields = self._rule_fields(node, RULE_ELEMENTS)
        return self._build(node, PolicyRule, position=self._int(node, "position", hi=2 ** 31),
                           action=self._enum(node, "action", Action),
                           direction=self._enum(node, "direction", Direction, Direction.BOTH),
                           disabled=self._bool(node, "disabled"), **fields)

    def _rule_fields(self, node, elements: Dict[str, str], translations: Dict[str, str] = None) -> dict:
        fields: dict = {}
        for child in self._children(node):
            if child.tag in elements:
                key = elements[child.tag]
                value = self._match_element(child)
            elif translations and child.tag in translations:
                key = translations[child.tag]
                value = self._translation(child)
            else:
                raise SchemaError(f"{self._where(child)}: unexpected element {child.tag!r} in {node.tag}")
            if key in fields:
                raise SchemaError(f"{self._where(child)}: duplicate {child.tag} element")
            fields[key] = value
        return fields

    def _translation(self, node) -> Optional[str]:
        self._check_attributes(node, common=False)
        refs = self._refs(node)
        if len(refs) > 1:
            self.diagnostics.append(Diagnostic.error(
                "nat-translation-not-single", self._where(node),
                f"{node.tag} holds {len(refs)} references; only the first is kept"))
        if not refs or refs[0] in (ANY_ADDRESS_ID, ANY_SERVICE_ID):
            return None
        return refs[0]

    def _nat(self, node) -> NatPolicy:
        self._check_attributes(node, required=("id",))
        rules = []
        for child in self._children(node):
            if child.tag != "NATRule":
                raise SchemaError(f"{self._where(child)}: unexpected element {child.tag!r} in NAT")
            self._check_attributes(child, required=("id", "position"), optional=("disabled",))
            fields = self._rule_fields(child, NAT_ELEMENTS, NAT_TRANSLATIONS)
            rules.append(self._build(child, NATRule, position=self._int(child, "position", hi=2 ** 31),
                                     disabled=self._bool(child, "disabled"), **fields))
        return self._build(node, NatPolicy, rules=rules)


def rule_references(rule) -> Iterable[tuple[str, str]]:
    """(field name, referenced id) pairs of a PolicyRule or NATRule."""
    if isinstance(rule, PolicyRule):
        elements = {"Src": rule.src, "Dst": rule.dst, "Srv": rule.srv, "Itf": rule.itf, "When": rule.when}
    else:
        elements = {"OSrc": rule.osrc, "ODst": rule.odst, "OSrv": rule.osrv, "When": rule.when}
        for tag, ref in (("TSrc", rule.tsrc), ("TDst", rule.tdst), ("TSrv", rule.tsrv)):
            if ref is not None:
                yield tag, ref
    for tag, element in elements.items():
        for ref in element.refs:
            yield tag, ref


def check_references(db: ObjectDatabase):
    """Raise DanglingRef for the first reference that does not resolve."""
    for obj in db.objects():
        if isinstance(obj, Group):
            refs = [("Group", ref) for ref in obj.members]
        elif isinstance(obj, (PolicyRule, NATRule)):
            refs = list(rule_references(obj))
        else:
            continue
        for tag, ref in refs:
            if ref not in db:
                raise DanglingRef(ref, f"{obj.element} {obj.id}/{tag}")


def parse(text: Union[str, bytes], source_path: Optional[Union[str, Path]] = None) -> ObjectDatabase:
    """Parse a .fwb document into an ObjectDatabase.

    Args:
        text: document text or UTF-8 bytes
        source_path: file the document came from; relative AddressTable paths resolve next to it
    """
    data = text.encode("utf-8") if isinstance(text, str) else text
    parser = etree.XMLParser(resolve_entities=False, no_network=True, remove_comments=True)
    try:
        root = etree.fromstring(data, parser=parser)
    except etree.XMLSyntaxError as e:
        raise XmlError(f"Malformed XML: {e}") from e
    reader = FwbReader(Path(source_path) if source_path else None)
    db = reader.read(root)
    logger.debug(f"Parsed {len(db.index)} objects from {source_path or '<text>'}")
    return db


def parse_file(path: Union[str, Path]) -> ObjectDatabase:
    path = Path(path)
    return parse(path.read_bytes(), source_path=path)
