import logging
from dataclasses import replace
from typing import List, Optional

from fwcomp.errors import CyclicGroup, UnknownId
from fwcomp.model.database import ObjectDatabase
from fwcomp.model.objects import Firewall, MatchElement, Policy, PolicyRule
from fwcomp.model.types import Direction
from .region import region_subset
from .shadowing import analyzable_regions

logger = logging.getLogger(__name__)

ELEMENT_FIELDS = ("src", "dst", "srv", "itf", "when")


def remove_shadowed(rules: List[PolicyRule], db: ObjectDatabase) -> List[PolicyRule]:
    """Drop enabled terminal rules covered by an earlier enabled terminal rule."""
    enabled = [r for r in rules if not r.disabled]
    regions = analyzable_regions(enabled, db)
    positions = sorted(regions)
    dead = set()
    for j_index, j in enumerate(positions):
        if any(region_subset(regions[j], regions[i]) for i in positions[:j_index]):
            dead.add(j)
    if dead:
        logger.info(f"Removing shadowed rules at positions {sorted(dead)}")
    return [r for r in rules if r.disabled or r.position not in dead]


def _layer(element: MatchElement, db: ObjectDatabase) -> Optional[frozenset]:
    try:
        return frozenset(db.category_of(leaf) for leaf in db.element_leaves(element))
    except (CyclicGroup, UnknownId):
        return None


def _union(a: MatchElement, b: MatchElement) -> MatchElement:
    refs = list(a.refs)
    refs += [ref for ref in b.refs if ref not in refs]
    return MatchElement(tuple(refs))


def merge_pair(a: PolicyRule, b: PolicyRule, db: ObjectDatabase) -> Optional[PolicyRule]:
    """Single rule equivalent to a followed by b, or None when they cannot be combined."""
    if a.disabled or b.disabled or not a.action.terminal or a.action is not b.action:
        return None
    differing = [name for name in ELEMENT_FIELDS if getattr(a, name) != getattr(b, name)]
    if a.direction is not b.direction:
        # In + Out with everything else equal covers Both
        if differing or Direction.BOTH in (a.direction, b.direction):
            return None
        return replace(a, direction=Direction.BOTH)
    if len(differing) != 1:
        return None
    name = differing[0]
    ea, eb = getattr(a, name), getattr(b, name)
    if ea.negated or eb.negated:
        return None
    layers_a, layers_b = _layer(ea, db), _layer(eb, db)
    # never mix IP and physical addresses in one element
    if layers_a is None or layers_b is None or layers_a != layers_b or len(layers_a) != 1:
        return None
    return replace(a, **{name: _union(ea, eb)})


def merge_adjacent(rules: List[PolicyRule], db: ObjectDatabase) -> List[PolicyRule]:
    out: List[PolicyRule] = []
    for rule in rules:
        if out:
            merged = merge_pair(out[-1], rule, db)
            if merged is not None:
                logger.debug(f"Merged rules {out[-1].position} and {rule.position}")
                out[-1] = merged
                continue
        out.append(rule)
    return out


def optimize(policy: Policy, db: ObjectDatabase) -> Policy:
    """Verdict-equivalent policy with shadowed rules removed and adjacent rules merged.

    Positions of the result run gapless from 0.
    """
    rules = list(policy.rules)
    while True:
        reduced = merge_adjacent(remove_shadowed(rules, db), db)
        if reduced == rules:
            break
        rules = reduced
    renumbered = [replace(rule, position=index) for index, rule in enumerate(rules)]
    logger.info(f"Optimized policy {policy.id}: {len(policy.rules)} -> {len(renumbered)} rules")
    return replace(policy, rules=tuple(renumbered))


def optimize_firewall(firewall: Firewall, db: ObjectDatabase) -> ObjectDatabase:
    """New database in which the firewall carries its optimized policy; the input is left untouched."""
    if firewall.policy is None:
        return db
    updated = replace(firewall, policy=optimize(firewall.policy, db))
    libraries = [replace(lib, objects=tuple(updated if obj.id == firewall.id else obj for obj in lib.objects))
                 for lib in db.libraries]
    return ObjectDatabase(libraries, db.source_path, db.load_diagnostics)
