import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence, Union

from fwcomp.errors import NonProductRegion, OpaqueSet
from fwcomp.fwbxml.diagnostic import Diagnostic
from fwcomp.model.database import ObjectDatabase
from fwcomp.model.objects import Policy, PolicyRule
from .region import RuleRegion, region_subset, rule_region

logger = logging.getLogger(__name__)


class AnomalyKind(str, Enum):
    SHADOWING = "shadowing"


@dataclass(frozen=True)
class AnomalyReport:
    kind: AnomalyKind
    shadowing_position: int
    shadowed_position: int
    explanation: str

    def __str__(self) -> str:
        return f"warning: rule {self.shadowing_position} shadows rule {self.shadowed_position}: {self.explanation}"


def _rules(policy: Union[Policy, Sequence[PolicyRule]]) -> List[PolicyRule]:
    rules = policy.rules if isinstance(policy, Policy) else policy
    return sorted((r for r in rules if not r.disabled), key=lambda r: r.position)


def analyzable_regions(rules: Sequence[PolicyRule], db: ObjectDatabase,
                       diagnostics: Optional[List[Diagnostic]] = None) -> Dict[int, RuleRegion]:
    """Regions of the terminal rules, keyed by position; rules without an exact region are skipped."""
    regions = {}
    for rule in rules:
        if not rule.action.terminal:
            continue
        try:
            regions[rule.position] = rule_region(rule, db)
        except (OpaqueSet, NonProductRegion) as e:
            logger.warning(f"Rule {rule.position} excluded from analysis: {e}")
            if diagnostics is not None:
                diagnostics.append(Diagnostic.warning(
                    "analysis-skipped", f"PolicyRule[{rule.position}]", str(e), rule.id))
    return regions


def detect_shadowing(policy: Union[Policy, Sequence[PolicyRule]], db: ObjectDatabase,
                     diagnostics: Optional[List[Diagnostic]] = None) -> List[AnomalyReport]:
    """Every pair i < j of terminal rules where rule j can never match first."""
    rules = _rules(policy)
    regions = analyzable_regions(rules, db, diagnostics)
    by_position = {rule.position: rule for rule in rules}
    positions = sorted(regions)
    reports = []
    for j_index, j in enumerate(positions):
        for i in positions[:j_index]:
            if region_subset(regions[j], regions[i]):
                earlier, later = by_position[i], by_position[j]
                reports.append(AnomalyReport(
                    AnomalyKind.SHADOWING, i, j,
                    f"every packet matching rule {j} ({later.action.value}) "
                    f"is already decided by rule {i} ({earlier.action.value})"))
    logger.debug(f"Shadowing check over {len(rules)} rules found {len(reports)} anomalies")
    return reports
