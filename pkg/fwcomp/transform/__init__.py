from .ir import (
    ANY,
    AddressAtom,
    AtomKind,
    Capabilities,
    DefaultPolicy,
    FlatRule,
    MatchStrategy,
    NatOrder,
    RuleKind,
    ServiceAtom,
    Slot,
)
from .cidr import range_to_cidrs, set_to_cidrs
from .capabilities import CAPABILITIES, as_platform, capabilities
from .processors import PROCESSORS, BaseRuleProcessor, CompileContext, adjust_for_iptables_nat_order, expand_negation
from .pipeline import expand_rule_elements, render_ir, run_pipeline

__all__ = [
    "ANY", "AddressAtom", "AtomKind", "Capabilities", "DefaultPolicy", "FlatRule", "MatchStrategy",
    "NatOrder", "RuleKind", "ServiceAtom", "Slot",
    "range_to_cidrs", "set_to_cidrs", "CAPABILITIES", "as_platform", "capabilities",
    "PROCESSORS", "BaseRuleProcessor", "CompileContext", "adjust_for_iptables_nat_order", "expand_negation",
    "expand_rule_elements", "render_ir", "run_pipeline",
]
