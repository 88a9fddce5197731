from lxml import etree

from fwcomp.model.database import ObjectDatabase
from fwcomp.model.intervals import format_ip, format_mac
from fwcomp.model.objects import (
    AddressRange,
    AddressTable,
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
from fwcomp.model.types import ANY_ADDRESS_ID, ANY_SERVICE_ID, Category, Weekday
from .parser import DATETIME_FORMAT, ROOT, format_bool, format_daily, format_flags


def _element(parent, tag: str, attributes: dict):
    # lxml keeps insertion order; sorting gives canonical output
    node = etree.SubElement(parent, tag) if parent is not None else etree.Element(tag)
    for key in sorted(attributes):
        node.set(key, str(attributes[key]))
    return node


def _common(obj: FwObject) -> dict:
    attributes = {"id": obj.id, "name": obj.name}
    if obj.comment:
        attributes["comment"] = obj.comment
    return attributes


class FwbWriter:
    """Renders an ObjectDatabase as a .fwb element tree."""

    def __init__(self, db: ObjectDatabase):
        self.db = db

    def document(self):
        root = etree.Element(ROOT)
        for library in self.db.libraries:
            self._library(root, library)
        return root

    def _library(self, parent, library: Library):
        node = _element(parent, "Library", _common(library))
        for obj in library.objects:
            self._object(node, obj)

    def _ref_tag(self, ref: str) -> str:
        obj = self.db.resolve(ref)
        category = self.db.category_of(obj)
        if category is Category.SERVICE:
            return "ServiceRef"
        if category is Category.INTERVAL:
            return "IntervalRef"
        return "ObjectRef"

    def _refs(self, node, refs):
        for ref in refs:
            _element(node, self._ref_tag(ref), {"ref": ref})

    def _object(self, parent, obj: FwObject):
        attributes = _common(obj)
        if isinstance(obj, IPv4):
            attributes.update(address=format_ip(obj.address), netmask=format_ip(obj.netmask))
        elif isinstance(obj, Network):
            attributes.update(address=format_ip(obj.address), netmask=format_ip(obj.netmask))
        elif isinstance(obj, AddressRange):
            attributes.update(start=format_ip(obj.first), end=format_ip(obj.last))
        elif isinstance(obj, AddressTable):
            attributes.update(path=obj.path, load=obj.load_time.value)
        elif isinstance(obj, PhysAddress):
            attributes.update(address=format_mac(obj.address))
        elif isinstance(obj, IPService):
            attributes.update(protocol=obj.protocol, lsrr=format_bool(obj.lsrr), rr=format_bool(obj.rr))
        elif isinstance(obj, UDPService):
            attributes.update(src_range_start=obj.src_range[0], src_range_end=obj.src_range[1],
                              dst_range_start=obj.dst_range[0], dst_range_end=obj.dst_range[1])
            if isinstance(obj, TCPService) and obj.flags_mask:
                attributes["flags"] = format_flags(obj.flags_mask, obj.flags_set)
        elif isinstance(obj, ICMPService):
            attributes.update(type=-1 if obj.icmp_type is None else obj.icmp_type,
                              code=-1 if obj.icmp_code is None else obj.icmp_code)
        elif isinstance(obj, TimeInterval):
            attributes.update(self._interval(obj))
        elif isinstance(obj, Interface):
            attributes.update(dyn=format_bool(obj.dynamic), unnum=format_bool(obj.unnumbered))
            if obj.unprotected is not None:
                attributes["unprotected"] = format_bool(obj.unprotected)
        elif isinstance(obj, Firewall):
            attributes.update(platform=obj.platform)
            if obj.host_os:
                attributes["host_OS"] = obj.host_os
        node = _element(parent, obj.element, attributes)

        if isinstance(obj, Interface):
            for address in obj.addresses:
                self._object(node, address)
            if obj.phys is not None:
                self._object(node, obj.phys)
        elif isinstance(obj, Host):
            for interface in obj.interfaces:
                self._object(node, interface)
            if isinstance(obj, Firewall):
                if obj.policy is not None:
                    self._policy(node, obj.policy)
                if obj.nat is not None:
                    self._nat(node, obj.nat)
        elif isinstance(obj, Group):
            self._refs(node, obj.members)

    @staticmethod
    def _interval(obj: TimeInterval) -> dict:
        attributes = {}
        if obj.start is not None:
            attributes["start"] = obj.start.strftime(DATETIME_FORMAT)
        if obj.end is not None:
            attributes["end"] = obj.end.strftime(DATETIME_FORMAT)
        if obj.weekdays:
            attributes["weekdays"] = ",".join(d.value for d in Weekday if d in obj.weekdays)
        if obj.daily_start is not None:
            attributes["daily_start"] = format_daily(obj.daily_start)
        if obj.daily_end is not None:
            attributes["daily_end"] = format_daily(obj.daily_end)
        return attributes

    def _match_element(self, parent, tag: str, element: MatchElement):
        node = _element(parent, tag, {"neg": format_bool(element.negated)})
        self._refs(node, element.refs)

    def _policy(self, parent, policy: Policy):
        node = _element(parent, "Policy", {"id": policy.id, **({"name": policy.name} if policy.name else {})})
        for rule in policy.rules:
            self._policy_rule(node, rule)

    def _policy_rule(self, parent, rule: PolicyRule):
        node = _element(parent, "PolicyRule", {
            "id": rule.id, "position": rule.position, "action": rule.action.value,
            "direction": rule.direction.value, "disabled": format_bool(rule.disabled),
            "comment": rule.comment, **({"name": rule.name} if rule.name else {}),
        })
        for tag, element in (("Src", rule.src), ("Dst", rule.dst), ("Srv", rule.srv),
                             ("Itf", rule.itf), ("When", rule.when)):
            self._match_element(node, tag, element)

    def _nat(self, parent, nat: NatPolicy):
        node = _element(parent, "NAT", {"id": nat.id, **({"name": nat.name} if nat.name else {})})
        for rule in nat.rules:
            self._nat_rule(node, rule)

    def _nat_rule(self, parent, rule: NATRule):
        attributes = {"id": rule.id, "position": rule.position, "disabled": format_bool(rule.disabled)}
        if rule.name:
            attributes["name"] = rule.name
        if rule.comment:
            attributes["comment"] = rule.comment
        node = _element(parent, "NATRule", attributes)
        for tag, element in (("OSrc", rule.osrc), ("ODst", rule.odst), ("OSrv", rule.osrv)):
            self._match_element(node, tag, element)
        for tag, ref, any_id in (("TSrc", rule.tsrc, ANY_ADDRESS_ID), ("TDst", rule.tdst, ANY_ADDRESS_ID),
                                 ("TSrv", rule.tsrv, ANY_SERVICE_ID)):
            translation = _element(node, tag, {})
            self._refs(translation, [ref or any_id])
        self._match_element(node, "When", rule.when)


def to_tree(db: ObjectDatabase):
    return FwbWriter(db).document()


def serialize(db: ObjectDatabase) -> bytes:
    """Canonical .fwb bytes: sorted attributes, rules in position order, two-space indentation."""
    root = to_tree(db)
    etree.indent(root, space="  ")
    return etree.tostring(root, pretty_print=True, xml_declaration=True, encoding="UTF-8")
