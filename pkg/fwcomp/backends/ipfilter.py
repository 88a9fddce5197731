import logging
from typing import List, Tuple

from fwcomp.model.intervals import AddressSet, format_ip, parse_ip
from fwcomp.model.types import Platform
from fwcomp.transform.ir import AtomKind, FlatRule, Slot
from .base import Match, Operand, Program, take
from .bsd import BsdBackend

logger = logging.getLogger(__name__)

# `0/32` stands for the address of the interface the rule is bound to
BOUND_INTERFACE = "0/32"


class IpfilterBackend(BsdBackend):
    """ipf.conf filter rules plus ipnat.conf `map`/`rdr` lines in one script.

    The default lines `block in all` / `block out all` are not quick, so
    any quick rule overrides them.
    """
    platform = Platform.IPFILTER
    reject_words = ("return-icmp",)
    count_word = "count"
    snat_word = "map"
    default_lines = ("block in all", "block out all")

    def _address(self, slot: Slot, rule: FlatRule) -> List[str]:
        atom = slot.atom
        if atom is None:
            return ["any"]
        if atom.kind is AtomKind.DYNAMIC:
            text = BOUND_INTERFACE if atom.name == rule.interface else f"{atom.name}/32"
        else:
            text = str(atom)
        return ["!" + text] if slot.negated else [text]

    def _snat_target(self, address: int) -> str:
        return f"{format_ip(address)}/32"

    def _port_words(self, ports: Tuple[int, int]) -> List[str]:
        lo, hi = ports
        if lo == hi:
            return ["port", "=", str(lo)]
        if lo == 0:
            return ["port", "<=", str(hi)]
        if hi == 65535:
            return ["port", ">=", str(lo)]
        return ["port", str(lo - 1), "><", str(hi + 1)]

    # interpreter

    def _parse_address(self, token: str, negated: bool, match: Match, program: Program) -> Operand:
        if token == BOUND_INTERFACE:
            if match.interface is None:
                raise ValueError("0/32 needs an interface the rule is bound to")
            return Operand(interface=match.interface, negated=negated)
        address, _, prefix = token.partition("/")
        try:
            parse_ip(address)
        except ValueError:
            if prefix != "32" or not address.isidentifier():
                raise
            return Operand(interface=address, negated=negated)
        return Operand(AddressSet.from_cidr(token), negated=negated)

    def _parse_port(self, tokens: List[str], i: int):
        first = take(tokens, i, "port")
        if first in ("=", "<=", ">=", "<", ">"):
            value = int(take(tokens, i + 1, "port"))
            ports = {"=": (value, value), "<=": (0, value), ">=": (value, 65535),
                     "<": (0, value - 1), ">": (value + 1, 65535)}[first]
            i += 2
        elif take(tokens, i + 1, "range operator") == "><":
            ports = (int(first) + 1, int(take(tokens, i + 2, "port")) - 1)
            i += 3
        else:
            raise ValueError(f"unsupported port test {first} {tokens[i + 1]}")
        if not 0 <= ports[0] <= ports[1] <= 65535:
            raise ValueError(f"empty or invalid port test at {first}")
        return ports, i
