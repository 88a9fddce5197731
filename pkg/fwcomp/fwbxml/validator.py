import logging
from typing import Iterable, List, Optional, Sequence

from fwcomp.errors import CyclicGroup, FwcompError, UnknownId
from fwcomp.model.database import ObjectDatabase
from fwcomp.model.objects import AnyNetwork, Firewall, Group, Interface, MatchElement, NATRule, PolicyRule
from fwcomp.model.types import Category
from .diagnostic import Diagnostic

logger = logging.getLogger(__name__)

ADDRESS_LAYERS = (Category.ADDRESS, Category.PHYS)


class SchemaValidator:
    """Semantic checks over a parsed database; grammar findings come from the loader."""

    def __init__(self, db: ObjectDatabase):
        self.db = db
        self.diagnostics: List[Diagnostic] = list(db.load_diagnostics)

    def _error(self, code: str, location: str, message: str, object_id: Optional[str] = None):
        self.diagnostics.append(Diagnostic.error(code, location, message, object_id))

    def run(self) -> List[Diagnostic]:
        for obj in list(self.db.objects()):
            if isinstance(obj, Group):
                self._check_group(obj)
            elif isinstance(obj, Firewall):
                self._check_firewall(obj)
        return self.diagnostics

    def _check_group(self, group: Group):
        location = f"Group[{group.name or group.id}]"
        for ref in group.members:
            if ref not in self.db:
                self._error("dangling-ref", location, f"member {ref} does not exist", group.id)
                return
        try:
            categories = {leaf.category for leaf in self.db.leaves(group)}
        except CyclicGroup as e:
            self._error("group-cycle", location, str(e), group.id)
            return
        if len(categories) > 1:
            kinds = ", ".join(sorted(c.value for c in categories if c))
            self._error("group-heterogeneous", location, f"group mixes object kinds: {kinds}", group.id)

    def _check_firewall(self, fw: Firewall):
        location = f"Firewall[{fw.name}]"
        if fw.target is None:
            self._error("unsupported-platform", location, f"platform {fw.platform!r} is not a supported target", fw.id)
        if not fw.interfaces:
            self._error("firewall-no-interface", location, "firewall has no interface", fw.id)
        self._check_positions(f"{location}/Policy", fw.rules)
        self._check_positions(f"{location}/NAT", fw.nat_rules)
        for rule in fw.rules:
            where = f"{location}/Policy/PolicyRule[{rule.position}]"
            self._check_element(f"{where}/Src", rule.src, ADDRESS_LAYERS, rule.id)
            self._check_element(f"{where}/Dst", rule.dst, (Category.ADDRESS,), rule.id)
            self._check_element(f"{where}/Srv", rule.srv, (Category.SERVICE,), rule.id)
            self._check_element(f"{where}/When", rule.when, (Category.INTERVAL,), rule.id)
            self._check_interfaces(f"{where}/Itf", rule.itf, rule.id)
        for rule in fw.nat_rules:
            self._check_nat_rule(f"{location}/NAT/NATRule[{rule.position}]", rule)

    def _check_positions(self, location: str, rules: Sequence):
        positions = [rule.position for rule in rules]
        seen = set()
        for rule in rules:
            if rule.position in seen:
                self._error("duplicate-position", location, f"two rules at position {rule.position}", rule.id)
            seen.add(rule.position)
        if seen and sorted(seen) != list(range(len(seen))):
            self._error("position-gap", location,
                        f"positions must run gapless from 0, got {sorted(positions)}")

    def _leaves(self, location: str, element: MatchElement, object_id: str):
        leaves = []
        for ref in element.refs:
            try:
                leaves.extend(self.db.leaves(self.db.resolve(ref)))
            except UnknownId:
                self._error("dangling-ref", location, f"reference to unknown id {ref}", object_id)
            except CyclicGroup:
                # reported on the group itself
                pass
        return leaves

    def _check_element(self, location: str, element: MatchElement, allowed: Iterable[Category], object_id: str):
        allowed = tuple(allowed)
        for leaf in self._leaves(location, element, object_id):
            if leaf.category in allowed:
                continue
            if leaf.category is Category.PHYS and location.endswith("/Dst"):
                self._error("phys-in-dst", location, f"{leaf.label()} cannot match a destination", object_id)
            else:
                self._error("wrong-element-type", location, f"{leaf.label()} is not allowed here", object_id)

    def _check_interfaces(self, location: str, element: MatchElement, object_id: str):
        for leaf in self._leaves(location, element, object_id):
            if not isinstance(leaf, (Interface, AnyNetwork)):
                self._error("itf-not-interface", location, f"{leaf.label()} is not an interface", object_id)

    def _check_nat_rule(self, where: str, rule: NATRule):
        self._check_element(f"{where}/OSrc", rule.osrc, (Category.ADDRESS,), rule.id)
        self._check_element(f"{where}/ODst", rule.odst, (Category.ADDRESS,), rule.id)
        self._check_element(f"{where}/OSrv", rule.osrv, (Category.SERVICE,), rule.id)
        self._check_element(f"{where}/When", rule.when, (Category.INTERVAL,), rule.id)
        for tag, ref in (("TSrc", rule.tsrc), ("TDst", rule.tdst)):
            if ref is None:
                continue
            location = f"{where}/{tag}"
            try:
                addresses = self.db.address_set_of(self.db.resolve(ref))
            except FwcompError as e:
                self._error("nat-translation-not-single", location, str(e), rule.id)
                continue
            if addresses.size() != 1:
                self._error("nat-translation-not-single", location,
                            f"translation {ref} denotes {addresses.size()} addresses, expected one", rule.id)
        if rule.tsrv is not None:
            self._check_element(f"{where}/TSrv", MatchElement((rule.tsrv,)), (Category.SERVICE,), rule.id)


def validate_schema(db: ObjectDatabase) -> List[Diagnostic]:
    """Load diagnostics plus semantic checks; empty iff the database may be compiled."""
    diagnostics = SchemaValidator(db).run()
    logger.debug(f"Validation produced {len(diagnostics)} diagnostics")
    return diagnostics
