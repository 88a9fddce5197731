import logging
from typing import List, Optional, Sequence, Tuple, Union

from rich.table import Table

from fwcomp.config import config
from fwcomp.model.database import ObjectDatabase
from fwcomp.model.objects import Firewall, PolicyRule
from fwcomp.model.types import Platform
from .capabilities import as_platform, capabilities
from .ir import Capabilities, FlatRule, RuleKind
from .processors import (
    PROCESSORS,
    CompileContext,
    ExpandNegation,
    ExpandRanges,
    FlattenGroups,
    SplitDirections,
    SplitMultiRefs,
)

logger = logging.getLogger(__name__)

NAT_KINDS = (RuleKind.SNAT, RuleKind.DNAT, RuleKind.NONAT)


def _context(firewall: Firewall, target: Platform, db: ObjectDatabase,
             caps: Optional[Capabilities] = None) -> CompileContext:
    return CompileContext(
        firewall=firewall,
        db=db,
        target=target,
        caps=caps or capabilities(target),
        max_negation_atoms=config.max_negation_atoms,
    )


def expand_rule_elements(rule: PolicyRule, caps: Capabilities, db: ObjectDatabase,
                         firewall: Optional[Firewall] = None) -> List[FlatRule]:
    """Lower one policy rule to single-valued flat rules, in order.

    Negated interfaces need the firewall to know the remaining
    interfaces; without one a negated Itf matches nothing.
    """
    if firewall is None:
        firewall = Firewall(id="_expand", name="_expand")
    target = next((p for p, c in _all_capabilities() if c == caps), Platform.IPTABLES)
    context = _context(firewall, target, db, caps)
    rules: list = [rule]
    for processor in (FlattenGroups(), SplitDirections(), SplitMultiRefs(), ExpandRanges(), ExpandNegation()):
        rules = processor.run(rules, context)
    return rules


def _all_capabilities():
    return [(platform, capabilities(platform)) for platform in Platform]


def run_pipeline(firewall: Firewall, target: Union[str, Platform, None], db: ObjectDatabase,
                 diagnostics: Optional[list] = None) -> Tuple[List[FlatRule], List[FlatRule]]:
    """Run every rule processor over one firewall.

    Returns (filter IR, NAT IR); the filter IR ends with the default
    marker. Warnings about dropped rules are appended to `diagnostics`.
    """
    platform = as_platform(target if target is not None else firewall.platform)
    context = _context(firewall, platform, db)
    logger.info(f"Compiling firewall {firewall.name} for {platform.value}")

    # NAT rules go through the same processors after the policy rules;
    # each processor keeps the two kinds apart by rule kind
    rules: Sequence = list(firewall.rules) + list(firewall.nat_rules)
    for processor in PROCESSORS:
        rules = processor.run(rules, context)

    if diagnostics is not None:
        diagnostics.extend(context.diagnostics)
    filter_ir = [r for r in rules if r.kind not in NAT_KINDS]
    nat_ir = [r for r in rules if r.kind in NAT_KINDS]
    logger.debug(f"{firewall.name}: {len(filter_ir)} filter and {len(nat_ir)} NAT IR rules")
    return filter_ir, nat_ir


def render_ir(rules: Sequence[FlatRule], title: str = "IR") -> Table:
    table = Table(title=title)
    for column in ("origin", "kind", "action", "dir", "itf", "src", "dst", "srv", "when", "translation"):
        table.add_column(column)
    for rule in rules:
        translation = " ".join(part for part in str(rule).split() if part.startswith(("tsrc=", "tdst=", "tport=")))
        table.add_row(
            str(rule.origin),
            rule.kind.value,
            rule.action.value if rule.action else "",
            rule.direction.value if rule.direction else "",
            str(rule.itf), str(rule.src), str(rule.dst), str(rule.srv),
            "any" if rule.when.is_any else ", ".join(w.name or w.id for w in rule.when.atoms),
            translation,
        )
    return table
