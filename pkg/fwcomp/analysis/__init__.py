from .region import InterfaceSet, RuleRegion, region_subset, rule_region
from .shadowing import AnomalyKind, AnomalyReport, detect_shadowing
from .optimizer import optimize, optimize_firewall
from .universe import Universe, equivalent, service_samples

__all__ = [
    "InterfaceSet", "RuleRegion", "region_subset", "rule_region",
    "AnomalyKind", "AnomalyReport", "detect_shadowing",
    "optimize", "optimize_firewall", "Universe", "equivalent", "service_samples",
]
