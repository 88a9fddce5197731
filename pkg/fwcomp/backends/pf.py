import logging
import re
from pathlib import Path
from typing import List, Tuple

from fwcomp.fwbxml.address_table import load_address_table
from fwcomp.model.intervals import AddressSet, parse_cidr
from fwcomp.model.types import Platform
from fwcomp.transform.ir import AddressAtom, AtomKind, FlatRule, Slot
from .base import Match, Operand, Program, Script
from .bsd import BsdBackend

logger = logging.getLogger(__name__)

TABLE_NAME = re.compile(r"^<(\w+)>$")
DYNAMIC = re.compile(r"^\((\w+)\)$")


def table_line(atom: AddressAtom) -> str:
    if atom.path:
        return f'table <{atom.name}> persist file "{atom.path}"'
    members = ", ".join(str(AddressAtom.cidr(block)) for block in atom.members)
    return f"table <{atom.name}> {{ {members} }}"


class PfBackend(BsdBackend):
    """OpenBSD pf.conf rules; the trailing `block quick all` is the default drop."""
    platform = Platform.PF
    reject_words = ("return",)
    count_word = "match"
    snat_word = "nat"
    default_lines = ("block quick all",)

    def _emit_tables(self, script: Script, rules: List[FlatRule]):
        for rule in rules:
            for slot in (rule.src, rule.dst):
                atom = slot.atom
                if isinstance(atom, AddressAtom) and atom.kind is AtomKind.TABLE and atom.name not in script.tables:
                    script.tables[atom.name] = table_line(atom)
                    script.lines.append(script.tables[atom.name])

    def _address(self, slot: Slot, rule: FlatRule) -> List[str]:
        atom = slot.atom
        if atom is None:
            return ["any"]
        if atom.kind is AtomKind.DYNAMIC:
            text = f"({atom.name})"
        elif atom.kind is AtomKind.TABLE:
            text = f"<{atom.name}>"
        else:
            text = str(atom)
        return ["!", text] if slot.negated else [text]

    def _port_words(self, ports: Tuple[int, int]) -> List[str]:
        lo, hi = ports
        return ["port", str(lo) if lo == hi else f"{lo}:{hi}"]

    def _suffix(self, rule: FlatRule) -> List[str]:
        if rule.action.terminal:
            return []
        return ["label", f'"rule {rule.origin}"']

    # interpreter

    def _parse_table(self, tokens: List[str], program: Program):
        name = TABLE_NAME.match(tokens[1]).group(1)
        if tokens[2] == "{" and tokens[-1] == "}":
            entries = [t.strip(",") for t in tokens[3:-1]]
            addresses = AddressSet([(b.first, b.last) for b in map(parse_cidr, filter(None, entries))])
        elif tokens[2:4] == ["persist", "file"]:
            path = " ".join(tokens[4:])
            if len(path) < 2 or not (path.startswith('"') and path.endswith('"')):
                raise ValueError("table file must be quoted")
            addresses = load_address_table(Path(path[1:-1]))
        else:
            raise ValueError(f"unsupported table definition for {name}")
        program.tables[name] = addresses

    def _parse_suffix(self, tokens: List[str]):
        if not tokens:
            return
        label = " ".join(tokens[1:])
        if tokens[0] != "label" or len(label) < 2 or not (label.startswith('"') and label.endswith('"')):
            raise ValueError(f"unexpected {' '.join(tokens)}")

    def _parse_address(self, token: str, negated: bool, match: Match, program: Program) -> Operand:
        table = TABLE_NAME.match(token)
        if table:
            return Operand(program.tables[table.group(1)], negated=negated)
        dynamic = DYNAMIC.match(token)
        if dynamic:
            return Operand(interface=dynamic.group(1), negated=negated)
        return Operand(AddressSet.from_cidr(token), negated=negated)

    def _parse_port(self, tokens: List[str], i: int):
        lo, _, hi = tokens[i].partition(":")
        ports = (int(lo), int(hi) if hi else int(lo))
        if not 0 <= ports[0] <= ports[1] <= 65535:
            raise ValueError(f"bad port range {tokens[i]}")
        return ports, i + 1
