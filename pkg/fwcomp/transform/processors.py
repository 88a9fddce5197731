import itertools
import logging
import re
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Sequence

from fwcomp.errors import InvariantViolation, OpaqueSet, UnsupportedFeature
from fwcomp.fwbxml.address_table import resolve_table_path
from fwcomp.fwbxml.diagnostic import Diagnostic
from fwcomp.model.database import ObjectDatabase
from fwcomp.model.intervals import AddressSet
from fwcomp.model.objects import (
    AddressRange,
    AddressTable,
    AnyInterval,
    AnyIPService,
    AnyNetwork,
    Firewall,
    FwObject,
    Host,
    ICMPService,
    Interface,
    IPService,
    IPv4,
    MatchElement,
    NATRule,
    Network,
    PhysAddress,
    PolicyRule,
    TCPService,
    UDPService,
)
from fwcomp.model.services import ServiceSet
from fwcomp.model.types import Action, Direction, LoadTime, Platform
from fwcomp.semantics.evaluator import single_address
from .cidr import set_to_cidrs
from .ir import ANY, AddressAtom, AtomKind, Capabilities, FlatRule, NatOrder, RuleKind, ServiceAtom, Slot, service_atoms

logger = logging.getLogger(__name__)

SLOT_NAMES = ("itf", "src", "dst", "srv", "when")


@dataclass
class CompileContext:
    """Everything a processor may consult while rewriting one firewall."""
    firewall: Firewall
    db: ObjectDatabase
    target: Platform
    caps: Capabilities
    max_negation_atoms: int = 4096
    diagnostics: List[Diagnostic] = field(default_factory=list)
    tables: Dict[tuple, str] = field(default_factory=dict)

    def warn(self, code: str, rule: FlatRule, message: str):
        logger.warning(f"{self.firewall.name}: rule {rule.origin}: {message}")
        self.diagnostics.append(Diagnostic.warning(code, f"Firewall[{self.firewall.name}]/rule {rule.origin}", message))

    def table_name(self, members: tuple) -> str:
        """Name of the compiler table holding `members`; equal member lists share one table."""
        if members not in self.tables:
            self.tables[members] = f"neg{len(self.tables)}"
        return self.tables[members]


class BaseRuleProcessor(ABC):
    """One small rewrite of the rule list; order of origins is preserved."""

    def __init__(self):
        self.name: str = getattr(self, "name", self.__class__.__name__)
        self.description: str = getattr(self, "description", "")
        if not self.description:
            raise ValueError(f"Rule processor {self.name} must have a description")

    def run(self, rules: Sequence, context: CompileContext) -> list:
        result = self._run(list(rules), context)
        logger.debug(f"{self.name}: {len(rules)} -> {len(result)} rules")
        return result

    @abstractmethod
    def _run(self, rules: list, context: CompileContext) -> list:
        raise NotImplementedError("Please implement the _run method")

    def __str__(self) -> str:
        return f"RuleProcessor({self.name}): {self.description}"


class PerRuleProcessor(BaseRuleProcessor):
    """Processor that rewrites each rule independently into zero or more rules."""

    def _run(self, rules, context):
        out = []
        for rule in rules:
            out.extend(self._rewrite(rule, context))
        return out

    @abstractmethod
    def _rewrite(self, rule: FlatRule, context: CompileContext) -> List[FlatRule]:
        raise NotImplementedError


# element -> slot conversion

def _unique(atoms: Iterable) -> tuple:
    return tuple(dict.fromkeys(atoms))


def table_identifier(table: AddressTable) -> str:
    return re.sub(r"\W", "_", table.name or table.id)


def address_atoms(obj: FwObject, db: ObjectDatabase) -> Optional[List[AddressAtom]]:
    """Atoms of one address-like leaf; None stands for Any."""
    if isinstance(obj, AnyNetwork):
        return None
    if isinstance(obj, IPv4):
        return [AddressAtom(AtomKind.CIDR, obj.address, obj.address)]
    if isinstance(obj, Network):
        block = db.address_set_of(obj).intervals[0]
        return [AddressAtom(AtomKind.CIDR, *block)]
    if isinstance(obj, AddressRange):
        return [AddressAtom.span(obj.first, obj.last)]
    if isinstance(obj, AddressTable):
        if obj.load_time is LoadTime.DEPLOY:
            path = str(resolve_table_path(obj.path, db.source_path))
            return [AddressAtom(AtomKind.TABLE, name=table_identifier(obj), path=path)]
        return [AddressAtom.span(lo, hi) for lo, hi in db.table_addresses(obj)]
    if isinstance(obj, PhysAddress):
        return [AddressAtom.mac(obj.address)]
    if isinstance(obj, Interface):
        if obj.dynamic:
            return [AddressAtom.dynamic(obj.name)]
        if not obj.addresses:
            raise OpaqueSet(f"Interface {obj.name} has no static address")
        return [AddressAtom(AtomKind.CIDR, a.address, a.address) for a in obj.addresses]
    if isinstance(obj, Host):
        atoms = []
        for interface in obj.interfaces:
            if interface.dynamic or interface.addresses:
                atoms.extend(address_atoms(interface, db))
        if not atoms:
            raise OpaqueSet(f"{obj.element} {obj.name} has no address")
        return atoms
    raise OpaqueSet(f"{obj.label()} is not an address object")


def service_atoms_of(obj: FwObject) -> Optional[List[ServiceAtom]]:
    if isinstance(obj, AnyIPService):
        return None
    if isinstance(obj, IPService):
        return [ServiceAtom(obj.protocol, ip_options=obj.has_options)]
    if isinstance(obj, TCPService):
        return [ServiceAtom(6, obj.src_range, obj.dst_range, obj.flags_mask, obj.flags_set)]
    if isinstance(obj, UDPService):
        return [ServiceAtom(17, obj.src_range, obj.dst_range)]
    if isinstance(obj, ICMPService):
        if obj.icmp_type is None and obj.icmp_code is not None:
            # a code without a type has no syntax on any target
            return service_atoms(ServiceSet.icmp(None, obj.icmp_code))
        return [ServiceAtom(1, icmp_type=obj.icmp_type, icmp_code=obj.icmp_code)]
    raise OpaqueSet(f"{obj.label()} is not a service")


def element_slot(element: MatchElement, kind: str, db: ObjectDatabase) -> Slot:
    """Flatten groups of one rule field into a slot of atoms."""
    atoms = []
    for leaf in db.element_leaves(element):
        if kind == "address":
            leaf_atoms = address_atoms(leaf, db)
        elif kind == "service":
            leaf_atoms = service_atoms_of(leaf)
        elif kind == "interface":
            leaf_atoms = None if isinstance(leaf, AnyNetwork) else [leaf.name]
        else:
            leaf_atoms = None if isinstance(leaf, AnyInterval) else [leaf]
        if leaf_atoms is None:
            return Slot((), element.negated)
        atoms.extend(leaf_atoms)
    if not atoms:
        # a positive element without atoms (empty table) matches nothing
        return Slot((), not element.negated)
    return Slot(_unique(atoms), element.negated)


def split_slots(rule: FlatRule, names: Iterable[str] = SLOT_NAMES) -> List[FlatRule]:
    """Cartesian split of every positive multi-atom slot, in slot order."""
    choices = []
    for name in SLOT_NAMES:
        slot = getattr(rule, name)
        if name in names and not slot.negated and len(slot.atoms) > 1:
            choices.append([(name, Slot((atom,))) for atom in slot.atoms])
    if not choices:
        return [rule]
    return [replace(rule, **dict(combo)) for combo in itertools.product(*choices)]


# processors

class ResolveTables(BaseRuleProcessor):
    name = "resolve-tables"
    description = "Load every compile-time address table the rules refer to"

    def _run(self, rules, context):
        db = context.db
        for rule in rules:
            elements = (rule.src, rule.dst) if isinstance(rule, PolicyRule) else (rule.osrc, rule.odst)
            for element in elements:
                for leaf in db.element_leaves(element):
                    if isinstance(leaf, AddressTable) and leaf.load_time is LoadTime.COMPILE:
                        db.table_addresses(leaf)
        return rules


class FlattenGroups(BaseRuleProcessor):
    name = "flatten-groups"
    description = "Turn enabled policy and NAT rules into flat rules with group members inlined"

    def _run(self, rules, context):
        out = []
        for rule in rules:
            if rule.disabled:
                continue
            flat = self._policy_rule(rule, context) if isinstance(rule, PolicyRule) else self._nat_rule(rule, context)
            if any(slot.matches_nothing for _, slot in flat.slots()):
                context.warn("rule-dropped", flat, "rule matches no packet and is dropped")
                continue
            out.append(flat)
        return out

    @staticmethod
    def _policy_rule(rule: PolicyRule, context) -> FlatRule:
        db = context.db
        return FlatRule(
            origin=rule.position,
            kind=RuleKind.FILTER,
            action=rule.action,
            direction=rule.direction,
            itf=element_slot(rule.itf, "interface", db),
            src=element_slot(rule.src, "address", db),
            dst=element_slot(rule.dst, "address", db),
            srv=element_slot(rule.srv, "service", db),
            when=element_slot(rule.when, "interval", db),
        )

    @staticmethod
    def _nat_rule(rule: NATRule, context) -> FlatRule:
        db = context.db
        tsrc = single_address(rule.tsrc, db) if rule.tsrc is not None else None
        tdst = single_address(rule.tdst, db) if rule.tdst is not None else None
        tport = tport_protocol = None
        if rule.tsrv is not None:
            service = db.resolve(rule.tsrv)
            if isinstance(service, UDPService):
                tport_protocol = service.protocol
                lo, hi = service.src_range
                if lo == hi and lo != 0:
                    raise UnsupportedFeature("nat-source-port", f"NAT rule {rule.position} translates the source port")
                lo, hi = service.dst_range
                if lo == hi and lo != 0:
                    tport = lo
        if tsrc is not None and tdst is not None:
            raise UnsupportedFeature("nat-double", f"NAT rule {rule.position} translates source and destination")
        if tport is not None and tdst is None:
            raise UnsupportedFeature("nat-port-only", f"NAT rule {rule.position} translates only the port")
        if tsrc is not None:
            kind = RuleKind.SNAT
        elif tdst is not None:
            kind = RuleKind.DNAT
        else:
            kind = RuleKind.NONAT
        return FlatRule(
            origin=rule.position,
            kind=kind,
            src=element_slot(rule.osrc, "address", db),
            dst=element_slot(rule.odst, "address", db),
            srv=element_slot(rule.osrv, "service", db),
            when=element_slot(rule.when, "interval", db),
            tsrc=tsrc,
            tdst=tdst,
            tport=tport,
            tport_protocol=tport_protocol if tport is not None else None,
        )


class SplitDirections(PerRuleProcessor):
    name = "split-directions"
    description = "Replace each Both-direction filter rule with an Inbound and an Outbound rule"

    def _rewrite(self, rule, context):
        if rule.kind is RuleKind.FILTER and rule.direction is Direction.BOTH:
            return [replace(rule, direction=Direction.INBOUND), replace(rule, direction=Direction.OUTBOUND)]
        return [rule]


class SplitMultiRefs(PerRuleProcessor):
    name = "split-multi-refs"
    description = "Split positive multi-object fields into one rule per combination of objects"

    def _rewrite(self, rule, context):
        if context.caps.supports_address_lists:
            return split_slots(rule, ("itf", "srv", "when"))
        return split_slots(rule)


class ExpandRanges(PerRuleProcessor):
    name = "expand-ranges"
    description = "Replace address ranges by CIDR blocks where the target has no range syntax"

    def _rewrite(self, rule, context):
        caps = context.caps
        changes = {}
        for name in ("src", "dst"):
            slot = getattr(rule, name)
            if not any(isinstance(a, AddressAtom) and a.kind is AtomKind.RANGE for a in slot.atoms):
                continue
            keep = caps.supports_address_ranges and (not slot.negated or caps.supports_range_negation)
            if keep:
                continue
            atoms = []
            for atom in slot.atoms:
                if atom.kind is AtomKind.RANGE:
                    atoms.extend(AddressAtom.cidr(block) for block in set_to_cidrs(atom.addresses()))
                else:
                    atoms.append(atom)
            changes[name] = Slot(_unique(atoms), slot.negated)
        if not changes:
            return [rule]
        return split_slots(replace(rule, **changes), tuple(changes))


def _complement_atoms(addresses: AddressSet, caps: Capabilities) -> List[AddressAtom]:
    if caps.supports_address_ranges:
        return [AddressAtom.span(lo, hi) for lo, hi in addresses]
    return [AddressAtom.cidr(block) for block in set_to_cidrs(addresses)]


def expand_negation(slot: Slot, caps: Capabilities, field_name: str = "src", interfaces: Sequence[str] = (),
                    max_atoms: int = 4096, table_name: str = "neg0") -> Optional[Slot]:
    """Lower a negated slot for a target.

    Returns the slot tagged for native negation when the target has the
    needed form, otherwise an equivalent positive slot; None when the
    negated field matches no packet at all.
    """
    if not slot.negated:
        return slot
    if not slot.atoms:
        return None
    if field_name == "itf":
        remaining = [name for name in interfaces if name not in slot.atoms]
        return Slot(tuple(remaining)) if remaining else None
    if field_name == "when":
        raise UnsupportedFeature("time-negation", "negated time intervals cannot be compiled")
    if field_name == "srv":
        if any(atom.ip_options for atom in slot.atoms):
            raise UnsupportedFeature("ip-options", "IP options cannot be matched on any target")
        union = ServiceSet.empty()
        for atom in slot.atoms:
            union = union.union(atom.services())
        atoms = service_atoms(union.complement())
        if len(atoms) > max_atoms:
            raise UnsupportedFeature("negation-too-large", f"negated service expands to {len(atoms)} services")
        return Slot(tuple(atoms)) if atoms else None

    macs = [a for a in slot.atoms if a.kind is AtomKind.MAC]
    if macs:
        if len(macs) != len(slot.atoms):
            raise UnsupportedFeature("mixed-negation", "negated element mixes IP and physical addresses")
        if len(macs) > 1:
            raise UnsupportedFeature("mac-negation", "only a single physical address can be negated")
        return slot
    opaque = [a for a in slot.atoms if a.kind in (AtomKind.DYNAMIC, AtomKind.TABLE)]
    if opaque:
        if len(slot.atoms) == 1 and caps.supports_single_negation:
            return slot
        raise OpaqueSet(f"negated {field_name} holds {opaque[0]}, whose addresses are not known at compile time")

    if len(slot.atoms) == 1:
        atom = slot.atoms[0]
        if caps.supports_single_negation and (atom.kind is AtomKind.CIDR or caps.supports_range_negation):
            return slot
    union = AddressSet.empty()
    for atom in slot.atoms:
        union = union | atom.addresses()
    complement = union.complement()
    if complement.is_empty():
        return None
    if caps.supports_group_negation:
        table = AddressAtom(AtomKind.TABLE, name=table_name, members=tuple(set_to_cidrs(union)))
        return Slot((table,), negated=True)
    atoms = _complement_atoms(complement, caps)
    if len(atoms) > max_atoms:
        raise UnsupportedFeature("negation-too-large", f"negated {field_name} expands to {len(atoms)} blocks")
    return Slot(tuple(atoms))


class ExpandNegation(PerRuleProcessor):
    name = "expand-negation"
    description = "Keep negation the target expresses natively, rewrite the rest as positive complements"

    def _rewrite(self, rule, context):
        changes = {}
        for name, slot in rule.slots():
            if not slot.negated:
                continue
            lowered = expand_negation(slot, context.caps, name, context.firewall.interface_names,
                                      context.max_negation_atoms)
            if lowered is None:
                context.warn("rule-dropped", rule, f"negated {name} matches no packet; rule dropped")
                return []
            table = lowered.atoms[0] if lowered.atoms else None
            if isinstance(table, AddressAtom) and table.members:
                lowered = Slot((replace(table, name=context.table_name(table.members)),), lowered.negated)
            changes[name] = lowered
        if not changes:
            return [rule]
        return split_slots(replace(rule, **changes), tuple(changes))


class NatOrderAdjust(BaseRuleProcessor):
    name = "nat-order"
    description = "Rewrite filter sources into the pre-SNAT address space for targets filtering before SNAT"

    def _run(self, rules, context):
        if context.caps.nat_order is not NatOrder.SPLIT_DNAT_SNAT:
            return rules
        filters = [r for r in rules if r.kind is RuleKind.FILTER]
        others = [r for r in rules if r.kind is not RuleKind.FILTER]
        adjusted = adjust_for_iptables_nat_order(filters, context.firewall.nat_rules, context.db,
                                                 context.caps)
        return adjusted + others


def _snat_sources(nat_rules: Sequence[NATRule], db: ObjectDatabase):
    """(original source set, translated address) per SNAT rule, checking the exactness preconditions."""
    enabled = [r for r in sorted(nat_rules, key=lambda r: r.position) if not r.disabled]
    snat = []
    for rule in enabled:
        if rule.tsrc is None or rule.tdst is not None:
            continue
        if not (rule.odst.is_any and rule.osrv.is_any and rule.when.is_any):
            raise UnsupportedFeature("nat-order", f"SNAT rule {rule.position} must restrict only the source")
        snat.append((rule, db.element_address_set(rule.osrc), single_address(rule.tsrc, db)))
    for index, (rule, original, _) in enumerate(snat):
        for other, other_original, _ in snat[:index]:
            if not original.isdisjoint(other_original):
                raise UnsupportedFeature("nat-order", f"SNAT rules {other.position} and {rule.position} overlap")
        for earlier in enabled:
            if earlier.position >= rule.position or earlier.tsrc is not None and earlier.tdst is None:
                continue
            if not db.element_address_set(earlier.osrc).isdisjoint(original):
                raise UnsupportedFeature("nat-order",
                                         f"NAT rule {earlier.position} precedes SNAT rule {rule.position} and overlaps it")
    return [(original, translated) for _, original, translated in snat]


def adjust_for_iptables_nat_order(filter_rules: Sequence[FlatRule], nat_rules: Sequence[NATRule],
                                  db: ObjectDatabase, caps: Optional[Capabilities] = None) -> List[FlatRule]:
    """Map each filter source S to the original sources that end up in S after SNAT."""
    snat = _snat_sources(nat_rules, db)
    if not snat:
        return list(filter_rules)
    originals = AddressSet.empty()
    for original, _ in snat:
        originals = originals | original
    ranges_ok = caps.supports_address_ranges if caps is not None else True

    out = []
    for rule in filter_rules:
        atom = rule.src.atom
        if rule.kind is not RuleKind.FILTER or (atom is not None and atom.kind not in (AtomKind.CIDR, AtomKind.RANGE)):
            out.append(rule)
            continue
        current = AddressSet.full() if atom is None else atom.addresses()
        if rule.src.negated:
            current = current.complement()
        rewritten = current - originals
        for original, translated in snat:
            if translated in current:
                rewritten = rewritten | original
        if rewritten == current:
            out.append(rule)
            continue
        if rewritten.is_empty():
            logger.warning(f"Filter rule {rule.origin} can no longer match after SNAT mapping; dropped")
            continue
        if rewritten.is_full():
            out.append(replace(rule, src=ANY))
            continue
        atoms = ([AddressAtom.span(lo, hi) for lo, hi in rewritten] if ranges_ok
                 else [AddressAtom.cidr(block) for block in set_to_cidrs(rewritten)])
        out.extend(split_slots(replace(rule, src=Slot(tuple(atoms))), ("src",)))
    return out


class FeatureCheck(BaseRuleProcessor):
    name = "feature-check"
    description = "Refuse constructs the target cannot express and verify the rules are fully lowered"

    def _run(self, rules, context):
        caps = context.caps
        for rule in rules:
            for name, slot in rule.slots():
                if len(slot.atoms) > 1:
                    raise InvariantViolation(f"rule {rule.origin}: {name} still holds {len(slot.atoms)} atoms")
                atom = slot.atom
                if atom is None:
                    if slot.negated:
                        raise InvariantViolation(f"rule {rule.origin}: negated empty {name}")
                    continue
                if name == "when" and not caps.supports_time:
                    raise UnsupportedFeature("time", f"{context.target.value} cannot match time intervals (rule {rule.origin})")
                if isinstance(atom, ServiceAtom) and atom.ip_options:
                    raise UnsupportedFeature("ip-options", f"IP options cannot be matched (rule {rule.origin})")
                if isinstance(atom, AddressAtom):
                    self._check_address(rule, name, atom, slot.negated, context)
            if rule.kind is RuleKind.FILTER and rule.direction not in (Direction.INBOUND, Direction.OUTBOUND):
                raise InvariantViolation(f"rule {rule.origin}: direction not split")
            if rule.kind is RuleKind.NONAT and not caps.supports_nat_exclusion:
                raise UnsupportedFeature("nat-exclusion", f"{context.target.value} has no NAT exclusion rule")
        return rules

    @staticmethod
    def _check_address(rule, name, atom: AddressAtom, negated: bool, context):
        caps, target = context.caps, context.target.value
        if atom.kind is AtomKind.MAC:
            if not caps.supports_mac:
                raise UnsupportedFeature("mac", f"{target} cannot match physical addresses (rule {rule.origin})")
            if rule.kind is not RuleKind.FILTER or name != "src":
                raise UnsupportedFeature("mac", f"physical address outside a filter source (rule {rule.origin})")
        elif atom.kind is AtomKind.DYNAMIC:
            if not caps.supports_dynamic_iface_address:
                raise UnsupportedFeature("dynamic-interface",
                                         f"{target} has no way to refer to the address of interface {atom.name}")
        elif atom.kind is AtomKind.TABLE:
            if atom.path and not caps.supports_deploy_tables:
                raise UnsupportedFeature("address-table", f"{target} cannot load address tables at deploy time")
            if not atom.path and not caps.supports_group_negation:
                raise InvariantViolation(f"rule {rule.origin}: compiler table on {target}")
        elif atom.kind is AtomKind.RANGE:
            if not caps.supports_address_ranges or (negated and not caps.supports_range_negation):
                raise InvariantViolation(f"rule {rule.origin}: address range left in {name}")
        if negated and not caps.supports_single_negation:
            raise InvariantViolation(f"rule {rule.origin}: negated {name} left for {target}")


class DefaultPolicyMarker(BaseRuleProcessor):
    name = "default-policy"
    description = "Append the marker for the abstract default drop"

    def _run(self, rules, context):
        return rules + [FlatRule(origin=-1, kind=RuleKind.DEFAULT, action=Action.DENY)]


PROCESSORS: List[BaseRuleProcessor] = [
    ResolveTables(),
    FlattenGroups(),
    SplitDirections(),
    SplitMultiRefs(),
    ExpandRanges(),
    ExpandNegation(),
    NatOrderAdjust(),
    FeatureCheck(),
    DefaultPolicyMarker(),
]
