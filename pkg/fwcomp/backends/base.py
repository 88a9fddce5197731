"""Pieces shared by the target emitters and the script interpreters."""

import functools
import logging
import re
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

from fwcomp.errors import InvariantViolation, OpaqueSet, UnparseableScript
from fwcomp.model.database import ObjectDatabase
from fwcomp.model.intervals import AddressSet
from fwcomp.model.objects import TimeInterval
from fwcomp.model.types import PROTO_ICMP, PROTO_TCP, PROTO_UDP, PROTOCOL_NAMES, Action, Direction, Platform, protocol_number
from fwcomp.semantics.evaluator import interval_matches
from fwcomp.semantics.packet import Packet, Verdict, VerdictAction
from fwcomp.transform.capabilities import capabilities
from fwcomp.transform.ir import AtomKind, AddressAtom, Capabilities, FlatRule, RuleKind, ServiceAtom

logger = logging.getLogger(__name__)

ORIGIN_COMMENT = re.compile(r"^#\s*(rule|nat)\s+(\d+)$")
VERDICTS = {
    Action.ACCEPT: VerdictAction.ACCEPT,
    Action.DENY: VerdictAction.DENY,
    Action.REJECT: VerdictAction.REJECT,
}
# Implicit pass of a target without a matching line
IMPLICIT_RULE = -1

# parsed programs kept per backend
PROGRAM_CACHE_SIZE = 32

# interval_matches needs a database only for the weekly minute sets
_TIME_DB = ObjectDatabase(())


@dataclass
class Script:
    """Emitted configuration; `tables` maps a table name to its definition line."""
    target: Platform
    lines: List[str] = field(default_factory=list)
    tables: Dict[str, str] = field(default_factory=dict)

    @classmethod
    def from_text(cls, target: Union[str, Platform], text: str) -> "Script":
        return cls(Platform(target), text.splitlines())

    def text(self) -> str:
        return "".join(line + "\n" for line in self.lines)

    def write(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.write_text(self.text(), encoding="ascii")
        return path

    def __str__(self) -> str:
        return self.text()


@dataclass(frozen=True)
class Operand:
    """Address operand of a parsed line; `interface` names a dynamic address."""
    addresses: Optional[AddressSet] = None
    interface: Optional[str] = None
    negated: bool = False

    def matches(self, address: int, bindings: Mapping[str, int]) -> bool:
        if self.interface is not None:
            if self.interface not in bindings:
                raise OpaqueSet(f"address of interface {self.interface} is not bound")
            hit = address == bindings[self.interface]
        else:
            hit = self.addresses is None or address in self.addresses
        return hit != self.negated


ANYWHERE = Operand()


@dataclass
class Match:
    """Conjunction of the header tests one script line carries."""
    direction: Optional[Direction] = None
    interface: Optional[str] = None
    protocol: Optional[int] = None
    src: Operand = ANYWHERE
    dst: Operand = ANYWHERE
    sport: Optional[Tuple[int, int]] = None
    dport: Optional[Tuple[int, int]] = None
    flags: Optional[Tuple[int, int]] = None
    icmp_type: Optional[int] = None
    icmp_code: Optional[int] = None
    mac: Optional[Tuple[int, bool]] = None
    time: Optional[TimeInterval] = None
    dnat_state: bool = False

    def matches(self, packet: Packet, bindings: Mapping[str, int], dnatted: bool = False) -> bool:
        if self.dnat_state and not dnatted:
            return False
        if self.direction is not None and packet.direction is not self.direction:
            return False
        if self.interface not in (None, "+") and packet.interface != self.interface:
            return False
        if self.protocol is not None and packet.protocol != self.protocol:
            return False
        if not self.src.matches(packet.src_ip, bindings) or not self.dst.matches(packet.dst_ip, bindings):
            return False
        for ports, value in ((self.sport, packet.src_port), (self.dport, packet.dst_port)):
            if ports is not None and not (packet.has_ports and ports[0] <= value <= ports[1]):
                return False
        if self.flags is not None:
            mask, value = self.flags
            if packet.protocol != PROTO_TCP or packet.tcp_flags & mask != value:
                return False
        if self.icmp_type is not None or self.icmp_code is not None:
            if packet.protocol != PROTO_ICMP:
                return False
            if self.icmp_type is not None and packet.icmp_type != self.icmp_type:
                return False
            if self.icmp_code is not None and packet.icmp_code != self.icmp_code:
                return False
        if self.mac is not None:
            value, negated = self.mac
            if (packet.src_mac == value) == negated:
                return False
        if self.time is not None and not interval_matches(self.time, packet.timestamp, _TIME_DB):
            return False
        return True


@dataclass
class ScriptLine:
    """One parsed rule line. A None action is a counting line; `translate` marks NAT lines."""
    number: int
    match: Match
    action: Optional[VerdictAction] = None
    quick: bool = True
    origin: Optional[int] = None
    translate: Optional[str] = None
    address: Optional[int] = None
    port: Optional[int] = None


@dataclass
class Program:
    """Parsed script: rule lists keyed by chain or section, plus chain policies and tables."""
    chains: Dict[str, List[ScriptLine]] = field(default_factory=dict)
    policies: Dict[str, VerdictAction] = field(default_factory=dict)
    tables: Dict[str, AddressSet] = field(default_factory=dict)

    def chain(self, name: str) -> List[ScriptLine]:
        return self.chains.setdefault(name, [])


def protocol_token(protocol: int) -> str:
    return PROTOCOL_NAMES.get(protocol, str(protocol))


def parse_protocol(token: str) -> int:
    return protocol_number(token)


def restricted(ports: Tuple[int, int]) -> bool:
    return tuple(ports) != (0, 65535)


def translation_variants(rule: FlatRule) -> List[Tuple[Optional[ServiceAtom], Optional[int]]]:
    """(service, new port) lines a NAT rule needs; only packets of the translated service's protocol get the port."""
    atom = rule.srv.atom
    if rule.tport is None:
        return [(atom, None)]
    protocol = PROTO_UDP if rule.tport_protocol is None else rule.tport_protocol
    if atom is None:
        return [(ServiceAtom(protocol), rule.tport), (None, None)]
    return [(atom, rule.tport if atom.protocol == protocol else None)]


def check_lowered(rules: Sequence[FlatRule], caps: Capabilities, target: str):
    """Raise InvariantViolation for IR the emitters cannot render one line per rule."""
    for rule in rules:
        where = f"{target}: IR rule {rule.origin}"
        if rule.kind is RuleKind.FILTER and rule.direction not in (Direction.INBOUND, Direction.OUTBOUND):
            raise InvariantViolation(f"{where} has direction {rule.direction}")
        if rule.kind is RuleKind.FILTER and rule.action is None:
            raise InvariantViolation(f"{where} has no action")
        for name, slot in rule.slots():
            if len(slot.atoms) > 1:
                raise InvariantViolation(f"{where}: {name} holds {len(slot.atoms)} atoms")
            if slot.matches_nothing:
                raise InvariantViolation(f"{where}: {name} matches nothing")
            if slot.negated and (name in ("itf", "srv", "when") or not caps.supports_single_negation):
                raise InvariantViolation(f"{where}: negated {name} is not expressible")
            if name == "when" and slot.atoms and not caps.supports_time:
                raise InvariantViolation(f"{where}: time interval left")
            atom = slot.atom
            if not isinstance(atom, AddressAtom):
                continue
            if atom.kind is AtomKind.RANGE and (not caps.supports_address_ranges
                                                or slot.negated and not caps.supports_range_negation):
                raise InvariantViolation(f"{where}: address range left in {name}")
            if atom.kind is AtomKind.MAC and not caps.supports_mac:
                raise InvariantViolation(f"{where}: physical address left in {name}")
            if atom.kind is AtomKind.DYNAMIC and not caps.supports_dynamic_iface_address:
                raise InvariantViolation(f"{where}: dynamic address left in {name}")
            if atom.kind is AtomKind.TABLE and not (caps.supports_group_negation or caps.supports_deploy_tables):
                raise InvariantViolation(f"{where}: table left in {name}")


def decide(lines: Sequence[ScriptLine], packet: Packet, bindings: Mapping[str, int],
           fallthrough: VerdictAction) -> Verdict:
    """Last match wins unless a quick line matches first; counting lines never decide."""
    counters: List[int] = []
    last: Optional[ScriptLine] = None
    for line in lines:
        if not line.match.matches(packet, bindings):
            continue
        if line.action is None:
            if line.origin is not None:
                counters.append(line.origin)
            continue
        last = line
        if line.quick:
            break
    counted = tuple(dict.fromkeys(counters))
    if last is None:
        action = fallthrough
    elif last.origin is None:
        # a default line of the script
        action = VerdictAction.DEFAULT_DROP if not last.action.accepted else VerdictAction.ACCEPT
    else:
        return Verdict(last.action, packet, last.origin, counted)
    if action is VerdictAction.DEFAULT_DROP:
        return Verdict(action, packet, None, counted)
    return Verdict(action, packet, IMPLICIT_RULE, counted)


def translate(line: ScriptLine, packet: Packet) -> Packet:
    if line.translate == "snat":
        return packet.with_fields(src_ip=line.address)
    if line.translate == "dnat":
        changes = {"dst_ip": line.address}
        if line.port is not None and packet.has_ports:
            changes["dst_port"] = line.port
        return packet.with_fields(**changes)
    return packet


def first_translation(lines: Sequence[ScriptLine], packet: Packet, bindings: Mapping[str, int]) -> Packet:
    for line in lines:
        if line.match.matches(packet, bindings):
            return translate(line, packet)
    return packet


class BaseBackend(ABC):
    """Emitter and interpreter of one target's configuration language.

    Subclasses set `platform` and implement `_emit`, `_parse_line` and
    `_evaluate`. Lines are attributed to IR origins through `# rule N`
    and `# nat N` comments; any other comment ends the attribution.
    """
    platform: Platform

    def __init__(self):
        self.caps = capabilities(self.platform)
        self.name = self.platform.value
        self._parse_lines = functools.lru_cache(maxsize=PROGRAM_CACHE_SIZE)(self._parse_lines)

    def emit(self, filter_ir: Sequence[FlatRule], nat_ir: Sequence[FlatRule] = ()) -> Script:
        rules = [r for r in filter_ir if r.kind is not RuleKind.DEFAULT]
        check_lowered(rules + list(nat_ir), self.caps, self.name)
        script = Script(self.platform)
        self._emit(script, rules, list(nat_ir))
        logger.debug(f"{self.name}: emitted {len(script.lines)} lines")
        return script

    @abstractmethod
    def _emit(self, script: Script, filter_ir: List[FlatRule], nat_ir: List[FlatRule]):
        raise NotImplementedError

    def parse(self, script: Script) -> Program:
        return self._parse_lines(tuple(script.lines))

    def _parse_lines(self, lines: Tuple[str, ...]) -> Program:
        program = Program()
        origin = None
        for number, raw in enumerate(lines, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                found = ORIGIN_COMMENT.match(line)
                origin = int(found.group(2)) if found else None
                continue
            try:
                self._parse_line(line.split(), number, origin, program)
            except UnparseableScript:
                raise
            except (ValueError, IndexError, KeyError) as e:
                raise UnparseableScript(raw, number) from e
        return program

    @abstractmethod
    def _parse_line(self, tokens: List[str], number: int, origin: Optional[int], program: Program):
        raise NotImplementedError

    def interpret(self, script: Script, packet: Packet, bindings: Optional[Mapping[str, int]] = None) -> Verdict:
        """Verdict of the target's own processing model for the packet."""
        if script.target is not self.platform:
            raise ValueError(f"{self.name} cannot interpret a {script.target.value} script")
        return self._evaluate(self.parse(script), packet, bindings or {})

    @abstractmethod
    def _evaluate(self, program: Program, packet: Packet, bindings: Mapping[str, int]) -> Verdict:
        raise NotImplementedError

    def __str__(self) -> str:
        return f"Backend({self.name})"

    def __repr__(self) -> str:
        return self.__str__()


def take(tokens: List[str], index: int, what: str) -> str:
    if index >= len(tokens):
        raise ValueError(f"missing {what}")
    return tokens[index]
