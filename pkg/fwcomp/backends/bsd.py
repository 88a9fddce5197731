"""Grammar shared by the pf and ipfilter backends.

Both evaluate translation rules before filtering and pick the last
matching filter rule unless a `quick` rule matches first; every emitted
rule is quick, so the script behaves first-match.
"""

import logging
from abc import abstractmethod
from typing import List, Mapping, Optional, Tuple

from fwcomp.model.intervals import format_ip, parse_cidr
from fwcomp.model.types import PROTO_ICMP, PROTO_TCP, Action, Direction, TcpFlag
from fwcomp.semantics.packet import Packet, Verdict, VerdictAction
from fwcomp.transform.ir import FlatRule, RuleKind, ServiceAtom, Slot
from .base import (
    BaseBackend,
    Match,
    Operand,
    Program,
    Script,
    ScriptLine,
    decide,
    first_translation,
    parse_protocol,
    protocol_token,
    restricted,
    take,
    translation_variants,
)

logger = logging.getLogger(__name__)

DIRECTION_WORDS = {Direction.INBOUND: "in", Direction.OUTBOUND: "out"}
WORD_DIRECTIONS = {word: direction for direction, word in DIRECTION_WORDS.items()}
FLAG_LETTERS = {TcpFlag.FIN: "F", TcpFlag.SYN: "S", TcpFlag.RST: "R", TcpFlag.PSH: "P", TcpFlag.ACK: "A", TcpFlag.URG: "U"}


def format_flag_letters(value: int) -> str:
    return "".join(letter for flag, letter in FLAG_LETTERS.items() if value & flag)


def parse_flag_letters(text: str) -> int:
    letters = {letter: flag for flag, letter in FLAG_LETTERS.items()}
    return sum(letters[c] for c in dict.fromkeys(text))


class BsdBackend(BaseBackend):
    """pf/ipfilter rule lines: `pass|block ... in|out quick [on IF] [proto P] from SRC to DST`."""
    reject_words: Tuple[str, ...] = ()
    count_word: str = ""
    snat_word: str = ""
    default_lines: Tuple[str, ...] = ()

    def _emit(self, script: Script, filter_ir: List[FlatRule], nat_ir: List[FlatRule]):
        self._emit_tables(script, filter_ir + nat_ir)
        origin = None
        for rule in nat_ir:
            if rule.origin != origin:
                script.lines.append(f"# nat {rule.origin}")
                origin = rule.origin
            script.lines.extend(self._nat_line(rule, service, port) for service, port in translation_variants(rule))
        origin = None
        for rule in filter_ir:
            if rule.origin != origin:
                script.lines.append(f"# rule {rule.origin}")
                origin = rule.origin
            script.lines.append(self._filter_line(rule))
        if script.lines:
            script.lines.append("# default")
        script.lines.extend(self.default_lines)

    def _emit_tables(self, script: Script, rules: List[FlatRule]):
        pass

    def _filter_line(self, rule: FlatRule) -> str:
        if rule.action.terminal:
            words = ["pass"] if rule.action is Action.ACCEPT else ["block"]
            if rule.action is Action.REJECT:
                words += self.reject_words
            words += [DIRECTION_WORDS[rule.direction], "quick"]
        else:
            words = [self.count_word, DIRECTION_WORDS[rule.direction]]
        if rule.interface:
            words += ["on", rule.interface]
        words += self._match_words(rule, rule.srv.atom)
        return " ".join(words + self._suffix(rule))

    def _suffix(self, rule: FlatRule) -> List[str]:
        return []

    def _nat_line(self, rule: FlatRule, service: Optional[ServiceAtom], port: Optional[int]) -> str:
        if rule.kind is RuleKind.NONAT:
            return " ".join(["no", self.snat_word, *self._match_words(rule, service)])
        if rule.kind is RuleKind.SNAT:
            words = [self.snat_word, *self._match_words(rule, service), "->", self._snat_target(rule.tsrc)]
        else:
            words = ["rdr", *self._match_words(rule, service), "->", format_ip(rule.tdst)]
            if port is not None:
                words += ["port", str(port)]
        return " ".join(words)

    def _snat_target(self, address: int) -> str:
        return format_ip(address)

    def _match_words(self, rule: FlatRule, service: Optional[ServiceAtom]) -> List[str]:
        words = []
        if service is not None:
            words += ["proto", protocol_token(service.protocol)]
        words += ["from", *self._address(rule.src, rule)]
        if service is not None and service.has_ports and restricted(service.src_ports):
            words += self._port_words(service.src_ports)
        words += ["to", *self._address(rule.dst, rule)]
        if service is not None and service.has_ports and restricted(service.dst_ports):
            words += self._port_words(service.dst_ports)
        if service is not None and service.protocol == PROTO_TCP and service.flags_mask:
            words += ["flags", f"{format_flag_letters(service.flags_set)}/{format_flag_letters(service.flags_mask)}"]
        if service is not None and service.protocol == PROTO_ICMP and service.icmp_type is not None:
            words += ["icmp-type", str(service.icmp_type)]
            if service.icmp_code is not None:
                words += ["code", str(service.icmp_code)]
        return words

    @abstractmethod
    def _address(self, slot: Slot, rule: FlatRule) -> List[str]:
        raise NotImplementedError

    @abstractmethod
    def _port_words(self, ports: Tuple[int, int]) -> List[str]:
        raise NotImplementedError

    # interpreter

    def _parse_line(self, tokens: List[str], number: int, origin: Optional[int], program: Program):
        head = tokens[0]
        if head == "table":
            self._parse_table(tokens, program)
        elif head in ("no", "rdr", self.snat_word):
            self._parse_nat(tokens, number, origin, program)
        else:
            self._parse_filter(tokens, number, origin, program)

    def _parse_table(self, tokens: List[str], program: Program):
        raise ValueError("tables are not part of this grammar")

    def _parse_filter(self, tokens: List[str], number: int, origin: Optional[int], program: Program):
        line = ScriptLine(number, Match(), quick=False, origin=origin)
        head, i = tokens[0], 1
        if head == "pass":
            line.action = VerdictAction.ACCEPT
        elif head == "block":
            line.action = VerdictAction.DENY
            if tuple(tokens[1:1 + len(self.reject_words)]) == self.reject_words and self.reject_words:
                line.action = VerdictAction.REJECT
                i += len(self.reject_words)
        elif head != self.count_word:
            raise ValueError(f"unknown rule keyword {head}")
        if i < len(tokens) and tokens[i] in WORD_DIRECTIONS:
            line.match.direction = WORD_DIRECTIONS[tokens[i]]
            i += 1
        if i < len(tokens) and tokens[i] == "quick":
            if line.action is None:
                raise ValueError("counting rules cannot be quick")
            line.quick = True
            i += 1
        if i < len(tokens) and tokens[i] == "on":
            line.match.interface = take(tokens, i + 1, "interface")
            i += 2
        i = self._parse_match(tokens, i, line.match, program)
        self._parse_suffix(tokens[i:])
        program.chain("filter").append(line)

    def _parse_suffix(self, tokens: List[str]):
        if tokens:
            raise ValueError(f"unexpected {' '.join(tokens)}")

    def _parse_nat(self, tokens: List[str], number: int, origin: Optional[int], program: Program):
        line = ScriptLine(number, Match(), origin=origin)
        if tokens[0] == "no":
            if take(tokens, 1, "translation keyword") not in ("rdr", self.snat_word):
                raise ValueError(f"unknown exclusion {tokens[1]}")
            line.translate, i = "nonat", 2
        else:
            line.translate, i = ("dnat" if tokens[0] == "rdr" else "snat"), 1
        i = self._parse_match(tokens, i, line.match, program, allow_all=False)
        if line.translate != "nonat":
            if take(tokens, i, "->") != "->":
                raise ValueError("translation target expected")
            line.address = parse_cidr(take(tokens, i + 1, "translated address")).first
            i += 2
            if i < len(tokens) and tokens[i] == "port" and line.translate == "dnat":
                line.port = int(take(tokens, i + 1, "port"))
                i += 2
        if i != len(tokens):
            raise ValueError(f"unexpected {' '.join(tokens[i:])}")
        program.chain("nat").append(line)

    def _parse_match(self, tokens: List[str], i: int, match: Match, program: Program, allow_all: bool = True) -> int:
        if i < len(tokens) and tokens[i] == "proto":
            match.protocol = parse_protocol(take(tokens, i + 1, "protocol"))
            i += 2
        if allow_all and i < len(tokens) and tokens[i] == "all":
            return i + 1
        if take(tokens, i, "from") != "from":
            raise ValueError("from expected")
        match.src, i = self._parse_operand(tokens, i + 1, match, program)
        if i < len(tokens) and tokens[i] == "port":
            match.sport, i = self._parse_port(tokens, i + 1)
        if take(tokens, i, "to") != "to":
            raise ValueError("to expected")
        match.dst, i = self._parse_operand(tokens, i + 1, match, program)
        if i < len(tokens) and tokens[i] == "port":
            match.dport, i = self._parse_port(tokens, i + 1)
        if i < len(tokens) and tokens[i] == "flags":
            value, _, mask = take(tokens, i + 1, "flags").partition("/")
            match.flags = (parse_flag_letters(mask), parse_flag_letters(value))
            i += 2
        if i < len(tokens) and tokens[i] == "icmp-type":
            match.icmp_type = int(take(tokens, i + 1, "icmp type"))
            i += 2
            if i < len(tokens) and tokens[i] == "code":
                match.icmp_code = int(take(tokens, i + 1, "icmp code"))
                i += 2
        return i

    def _parse_operand(self, tokens: List[str], i: int, match: Match, program: Program) -> Tuple[Operand, int]:
        token = take(tokens, i, "address")
        negated = False
        if token == "!":
            negated, i = True, i + 1
            token = take(tokens, i, "address")
        elif token.startswith("!"):
            negated, token = True, token[1:]
        if token == "any":
            if negated:
                raise ValueError("negated any")
            return Operand(), i + 1
        return self._parse_address(token, negated, match, program), i + 1

    @abstractmethod
    def _parse_address(self, token: str, negated: bool, match: Match, program: Program) -> Operand:
        raise NotImplementedError

    @abstractmethod
    def _parse_port(self, tokens: List[str], i: int) -> Tuple[Tuple[int, int], int]:
        raise NotImplementedError

    def _evaluate(self, program: Program, packet: Packet, bindings: Mapping[str, int]) -> Verdict:
        translated = first_translation(program.chains.get("nat", []), packet, bindings)
        return decide(program.chains.get("filter", []), translated, bindings, VerdictAction.ACCEPT)
