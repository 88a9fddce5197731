"""iptables shell script emitter and interpreter.

Filtering happens in FORWARD after DNAT in PREROUTING and before SNAT in
POSTROUTING; the chain policies are DROP so the script enforces the
abstract default on its own.
"""

import itertools
import logging
from dataclasses import replace
from datetime import datetime
from typing import List, Mapping, Optional

from fwcomp.fwbxml.parser import format_daily, parse_daily
from fwcomp.model.intervals import AddressSet, format_ip, parse_ip, parse_mac
from fwcomp.model.objects import TimeInterval
from fwcomp.model.types import ALL_TCP_FLAGS, PROTO_ICMP, PROTO_TCP, Direction, Platform, TcpFlag, Weekday
from fwcomp.semantics.packet import Packet, Verdict, VerdictAction
from fwcomp.transform.ir import AddressAtom, AtomKind, FlatRule, RuleKind, ServiceAtom, Slot
from .base import (
    VERDICTS,
    BaseBackend,
    Match,
    Operand,
    Program,
    Script,
    ScriptLine,
    decide,
    parse_protocol,
    protocol_token,
    restricted,
    take,
    translate,
    translation_variants,
)

logger = logging.getLogger(__name__)

IPTABLES = "iptables"
DATE_FORMAT = "%Y-%m-%dT%H:%M:%S"
TARGETS = {
    VerdictAction.ACCEPT: "ACCEPT",
    VerdictAction.DENY: "DROP",
    VerdictAction.REJECT: "REJECT",
}
JUMPS = {value: key for key, value in TARGETS.items()}
PROLOGUE = [
    "#!/bin/sh",
    "iptables -F",
    "iptables -t nat -F",
    "iptables -P INPUT DROP",
    "iptables -P FORWARD DROP",
    "iptables -P OUTPUT DROP",
]
DNAT_GUARD = "iptables -t nat -A POSTROUTING -m conntrack --ctstate DNAT -j ACCEPT"


def format_tcp_flags(value: int) -> str:
    if value == ALL_TCP_FLAGS:
        return "ALL"
    return ",".join(flag.name for flag in TcpFlag if value & flag) or "NONE"


def parse_tcp_flags(text: str) -> int:
    if text == "ALL":
        return ALL_TCP_FLAGS
    if text == "NONE":
        return 0
    return sum(TcpFlag[name] for name in text.split(","))


def _ports(ports) -> str:
    lo, hi = ports
    return str(lo) if lo == hi else f"{lo}:{hi}"


def _parse_ports(text: str):
    lo, _, hi = text.partition(":")
    ports = (int(lo), int(hi) if hi else int(lo))
    if not 0 <= ports[0] <= ports[1] <= 65535:
        raise ValueError(f"bad port range {text}")
    return ports


class IptablesBackend(BaseBackend):
    platform = Platform.IPTABLES

    def _emit(self, script: Script, filter_ir: List[FlatRule], nat_ir: List[FlatRule]):
        script.lines.extend(PROLOGUE)
        if any(r.kind is RuleKind.DNAT for r in nat_ir):
            script.lines.append(DNAT_GUARD)
        last_dnat = max((i for i, r in enumerate(nat_ir) if r.kind is RuleKind.DNAT), default=-1)
        origin = None
        for index, rule in enumerate(nat_ir):
            if rule.origin != origin:
                script.lines.append(f"# nat {rule.origin}")
                origin = rule.origin
            script.lines.extend(self._nat_lines(rule, mirror=index < last_dnat))
        for origin, group in itertools.groupby(filter_ir, key=lambda r: r.origin):
            script.lines.append(f"# rule {origin}")
            script.lines.extend(self._filter_lines(list(group)))

    def _filter_lines(self, group: List[FlatRule]) -> List[str]:
        """Lines of one origin; an Any-interface Inbound rule and its Outbound twin share one line."""
        lines, merged = [], set()
        for index, rule in enumerate(group):
            if index in merged:
                continue
            both = False
            if rule.interface is None and rule.direction is Direction.INBOUND:
                twin = replace(rule, direction=Direction.OUTBOUND)
                for other in range(index + 1, len(group)):
                    if other not in merged and group[other] == twin:
                        merged.add(other)
                        both = True
                        break
            lines.append(self._filter_line(rule, both))
        return lines

    def _filter_line(self, rule: FlatRule, both: bool = False) -> str:
        words = [IPTABLES, "-A", "FORWARD"]
        if not both:
            words += ["-i" if rule.direction is Direction.INBOUND else "-o", rule.interface or "+"]
        words += self._match_words(rule, rule.srv.atom)
        if rule.action.terminal:
            words += ["-j", TARGETS[VERDICTS[rule.action]]]
        return " ".join(words)

    def _nat_lines(self, rule: FlatRule, mirror: bool) -> List[str]:
        lines = []
        for service, port in translation_variants(rule):
            match = self._match_words(rule, service)
            if rule.kind is RuleKind.DNAT:
                target = format_ip(rule.tdst) + (f":{port}" if port is not None else "")
                lines.append(" ".join([IPTABLES, "-t", "nat", "-A", "PREROUTING", *match,
                                       "-j", "DNAT", "--to-destination", target]))
                continue
            if mirror:
                lines.append(" ".join([IPTABLES, "-t", "nat", "-A", "PREROUTING", *match, "-j", "ACCEPT"]))
            jump = ["-j", "SNAT", "--to-source", format_ip(rule.tsrc)] if rule.kind is RuleKind.SNAT else ["-j", "ACCEPT"]
            lines.append(" ".join([IPTABLES, "-t", "nat", "-A", "POSTROUTING", *match, *jump]))
        return lines

    def _match_words(self, rule: FlatRule, service: Optional[ServiceAtom]) -> List[str]:
        words = []
        if service is not None:
            words += ["-p", protocol_token(service.protocol)]
        words += self._address_words(rule.src, "-s", "--src-range")
        words += self._address_words(rule.dst, "-d", "--dst-range")
        if service is not None:
            words += self._service_words(service)
        mac = rule.src.atom
        if isinstance(mac, AddressAtom) and mac.kind is AtomKind.MAC:
            words += ["-m", "mac"] + (["!"] if rule.src.negated else []) + ["--mac-source", str(mac)]
        if rule.when.atom is not None:
            words += self._time_words(rule.when.atom)
        return words

    @staticmethod
    def _address_words(slot: Slot, flag: str, range_flag: str) -> List[str]:
        atom = slot.atom
        if atom is None or atom.kind is AtomKind.MAC:
            return []
        negation = ["!"] if slot.negated else []
        if atom.kind is AtomKind.RANGE:
            return ["-m", "iprange", *negation, range_flag, f"{format_ip(atom.first)}-{format_ip(atom.last)}"]
        return [*negation, flag, str(atom)]

    @staticmethod
    def _service_words(service: ServiceAtom) -> List[str]:
        words = []
        if service.has_ports:
            if restricted(service.src_ports):
                words += ["--sport", _ports(service.src_ports)]
            if restricted(service.dst_ports):
                words += ["--dport", _ports(service.dst_ports)]
        if service.protocol == PROTO_TCP and service.flags_mask:
            words += ["--tcp-flags", format_tcp_flags(service.flags_mask), format_tcp_flags(service.flags_set)]
        if service.protocol == PROTO_ICMP and service.icmp_type is not None:
            code = f"/{service.icmp_code}" if service.icmp_code is not None else ""
            words += ["--icmp-type", f"{service.icmp_type}{code}"]
        return words

    @staticmethod
    def _time_words(interval: TimeInterval) -> List[str]:
        words = ["-m", "time"]
        if interval.start is not None:
            words += ["--datestart", interval.start.strftime(DATE_FORMAT)]
        if interval.end is not None:
            words += ["--datestop", interval.end.strftime(DATE_FORMAT)]
        if interval.weekdays:
            days = sorted(interval.weekdays, key=lambda d: d.index)
            words += ["--weekdays", ",".join(d.value for d in days)]
        if interval.daily_start is not None:
            words += ["--timestart", format_daily(interval.daily_start)]
        if interval.daily_end is not None:
            words += ["--timestop", format_daily(interval.daily_end)]
        return words

    # interpreter

    def _parse_line(self, tokens: List[str], number: int, origin: Optional[int], program: Program):
        if tokens[0] != IPTABLES:
            raise ValueError(f"not an iptables command: {tokens[0]}")
        i, table = 1, "filter"
        if tokens[i] == "-t":
            table = take(tokens, i + 1, "table")
            i += 2
        command = take(tokens, i, "command")
        if command == "-F" and len(tokens) == i + 1:
            return
        if command == "-P":
            chain, policy = take(tokens, i + 1, "chain"), take(tokens, i + 2, "policy")
            if len(tokens) != i + 3 or policy not in ("ACCEPT", "DROP"):
                raise ValueError("bad policy command")
            program.policies[f"{table}:{chain}"] = (VerdictAction.ACCEPT if policy == "ACCEPT"
                                                    else VerdictAction.DEFAULT_DROP)
            return
        if command != "-A":
            raise ValueError(f"unsupported command {command}")
        chain = take(tokens, i + 1, "chain")
        line = ScriptLine(number, Match(), origin=origin)
        self._parse_options(tokens, i + 2, line)
        program.chain(f"{table}:{chain}").append(line)

    def _parse_options(self, tokens: List[str], i: int, line: ScriptLine):
        match = line.match
        time = {}
        negated = False
        while i < len(tokens):
            option = tokens[i]
            if option == "!":
                negated = True
                i += 1
                continue
            value = take(tokens, i + 1, option) if option not in ("-j",) else None
            if option in ("-i", "-o"):
                match.direction = Direction.INBOUND if option == "-i" else Direction.OUTBOUND
                match.interface = value
            elif option == "-p":
                match.protocol = parse_protocol(value)
            elif option in ("-s", "-d"):
                operand = Operand(AddressSet.from_cidr(value), negated=negated)
                setattr(match, "src" if option == "-s" else "dst", operand)
                negated = False
            elif option in ("--src-range", "--dst-range"):
                first, _, last = value.partition("-")
                operand = Operand(AddressSet([(parse_ip(first), parse_ip(last))]), negated=negated)
                setattr(match, "src" if option == "--src-range" else "dst", operand)
                negated = False
            elif option == "--mac-source":
                match.mac = (parse_mac(value), negated)
                negated = False
            elif option == "-m":
                if value not in ("iprange", "mac", "time", "conntrack"):
                    raise ValueError(f"unsupported match module {value}")
            elif option == "--sport":
                match.sport = _parse_ports(value)
            elif option == "--dport":
                match.dport = _parse_ports(value)
            elif option == "--tcp-flags":
                match.flags = (parse_tcp_flags(value), parse_tcp_flags(take(tokens, i + 2, "flag set")))
                i += 1
            elif option == "--icmp-type":
                icmp_type, _, code = value.partition("/")
                match.icmp_type = int(icmp_type)
                match.icmp_code = int(code) if code else None
            elif option == "--ctstate":
                if value != "DNAT":
                    raise ValueError(f"unsupported conntrack state {value}")
                match.dnat_state = True
            elif option in ("--datestart", "--datestop", "--weekdays", "--timestart", "--timestop"):
                time[option] = value
            elif option == "-j":
                i = self._parse_jump(tokens, i + 1, line)
                continue
            else:
                raise ValueError(f"unsupported option {option}")
            if negated:
                raise ValueError(f"negation not supported before {option}")
            i += 2
        if time:
            match.time = self._parse_time(time)

    @staticmethod
    def _parse_jump(tokens: List[str], i: int, line: ScriptLine) -> int:
        target = take(tokens, i, "target")
        if target in JUMPS:
            line.action = JUMPS[target]
            return i + 1
        option, value = take(tokens, i + 1, "translation"), take(tokens, i + 2, "address")
        if target == "SNAT" and option == "--to-source":
            line.translate, line.address = "snat", parse_ip(value)
        elif target == "DNAT" and option == "--to-destination":
            address, _, port = value.partition(":")
            line.translate, line.address = "dnat", parse_ip(address)
            line.port = int(port) if port else None
        else:
            raise ValueError(f"unsupported jump {target} {option}")
        return i + 3

    @staticmethod
    def _parse_time(options: dict) -> TimeInterval:
        def moment(key):
            return datetime.strptime(options[key], DATE_FORMAT) if key in options else None

        weekdays = frozenset(Weekday(d) for d in options["--weekdays"].split(",")) if "--weekdays" in options else frozenset()
        return TimeInterval(
            id="iptables-time",
            start=moment("--datestart"),
            end=moment("--datestop"),
            weekdays=weekdays,
            daily_start=parse_daily(options["--timestart"]) if "--timestart" in options else None,
            daily_end=parse_daily(options["--timestop"]) if "--timestop" in options else None,
        )

    def _evaluate(self, program: Program, packet: Packet, bindings: Mapping[str, int]) -> Verdict:
        current, dnatted = packet, False
        for line in program.chains.get("nat:PREROUTING", []):
            if line.match.matches(packet, bindings):
                if line.translate == "dnat":
                    current, dnatted = translate(line, packet), True
                break
        fallthrough = program.policies.get("filter:FORWARD", VerdictAction.ACCEPT)
        verdict = decide(program.chains.get("filter:FORWARD", []), current, bindings, fallthrough)
        egress = current
        for line in program.chains.get("nat:POSTROUTING", []):
            if line.match.matches(current, bindings, dnatted):
                egress = translate(line, current)
                break
        return replace(verdict, egress_packet=egress)
