from .packet import Packet, Timestamp, Verdict, VerdictAction
from .evaluator import apply_nat, evaluate, evaluate_policy, interval_matches, match_rule

__all__ = [
    "Packet", "Timestamp", "Verdict", "VerdictAction",
    "apply_nat", "evaluate", "evaluate_policy", "interval_matches", "match_rule",
]
