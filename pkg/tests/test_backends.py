import pytest

from conftest import UDP_LITERAL, build_firewall, nat_rule, packet, policy_rule
from fwcomp.backends import Script, emit, get_backend, interpret
from fwcomp.backends.base import PROGRAM_CACHE_SIZE
from fwcomp.backends.iptables import format_tcp_flags, parse_tcp_flags
from fwcomp.errors import InvariantViolation, OpaqueSet, UnknownTarget, UnparseableScript
from fwcomp.model import (
    AddressRange,
    IPv4,
    Network,
    PhysAddress,
    TCPService,
    TimeInterval,
    UDPService,
    Weekday,
)
from fwcomp.model.intervals import parse_ip, parse_mac
from fwcomp.model.types import Action, Direction, Platform
from fwcomp.semantics import VerdictAction, evaluate
from fwcomp.transform import FlatRule, RuleKind, run_pipeline

OBJECTS = (
    Network(id="lan", name="lan", address=parse_ip("10.86.81.0"), netmask=parse_ip("255.255.255.0")),
    Network(id="ten", name="ten", address=parse_ip("10.0.0.0"), netmask=parse_ip("255.0.0.0")),
    IPv4(id="h1", name="h1", address=parse_ip("1.2.3.4")),
    IPv4(id="h2", name="h2", address=parse_ip("10.20.30.40")),
    IPv4(id="web", name="web", address=parse_ip("172.16.0.10")),
    IPv4(id="pub", name="pub", address=parse_ip("203.0.113.1")),
    AddressRange(id="range", name="range", first=parse_ip("10.0.0.1"), last=parse_ip("10.0.0.6")),
    UDPService(id="udpsvc", name="MyServie", src_range=(30, 70), dst_range=(90, 92)),
    UDPService(id="dns", name="dns", dst_range=(53, 53)),
    TCPService(id="p8080", name="p8080", dst_range=(8080, 8080)),
    PhysAddress(id="mac1", name="mac1", address=parse_mac("00:17:f2:ea:ee:35")),
    TimeInterval(id="office", name="office", weekdays=frozenset({Weekday.MON}), daily_start=540, daily_end=1020),
)


def compile_rules(target, rules, nat_rules=()):
    db, fw = build_firewall(rules, OBJECTS, nat_rules, platform=target)
    return emit(target, *run_pipeline(fw, target, db))


def rule_lines(script: Script):
    return [line for line in script.lines if not line.startswith("#")]


# pf

def test_pf_empty_policy_is_a_single_block():
    script = compile_rules("pf", [])
    assert script.lines == ["block quick all"]
    assert script.text() == "block quick all\n"


def test_pf_negated_group_uses_a_table():
    script = compile_rules("pf", [policy_rule(0, "Accept", dst=["!h1", "h2"], direction="Inbound")])
    assert script.lines == [
        "table <neg0> { 1.2.3.4, 10.20.30.40 }",
        "# rule 0",
        "pass in quick from any to ! <neg0>",
        "# default",
        "block quick all",
    ]
    assert script.tables == {"neg0": "table <neg0> { 1.2.3.4, 10.20.30.40 }"}


def test_pf_negated_tables_are_shared():
    rules = [policy_rule(0, "Deny", src=["!h1", "h2"], direction="Inbound"),
             policy_rule(1, "Deny", dst=["!h1", "h2"], direction="Inbound")]
    script = compile_rules("pf", rules)
    assert sum(line.startswith("table") for line in script.lines) == 1


def test_pf_reject_and_accounting():
    rules = [policy_rule(0, "Accounting", direction="Inbound"),
             policy_rule(1, "Reject", srv="dns", itf="if0-id", direction="Inbound")]
    assert rule_lines(compile_rules("pf", rules)) == [
        'match in from any to any label "rule 0"',
        "block return in quick on if0 proto udp from any to any port 53",
        "block quick all",
    ]


def test_pf_interpretation():
    script = compile_rules("pf", [policy_rule(0, "Accept", dst=["!h1", "h2"], direction="Inbound")])
    passed = interpret("pf", script, packet("proto=tcp src=9.9.9.9 dst=8.8.8.8 dport=80 iface=if0 dir=in"))
    assert (passed.action, passed.matched_rule) == (VerdictAction.ACCEPT, 0)
    blocked = interpret("pf", script, packet("proto=tcp src=9.9.9.9 dst=1.2.3.4 dport=80 iface=if0 dir=in"))
    assert blocked.action is VerdictAction.DEFAULT_DROP


def test_pf_nat_lines():
    nat = [nat_rule(0, osrc="lan", tsrc="pub"), nat_rule(1, odst="pub", tdst="web")]
    script = compile_rules("pf", [], nat)
    assert rule_lines(script) == [
        "nat from 10.86.81.0/24 to any -> 203.0.113.1",
        "rdr from any to 203.0.113.1 -> 172.16.0.10",
        "block quick all",
    ]


# iptables

def test_iptables_filter_line():
    rule = policy_rule(0, "Accept", dst="lan", srv="udpsvc", itf="if0-id", direction="Inbound")
    script = compile_rules("iptables", [rule])
    assert script.lines[:6] == [
        "#!/bin/sh",
        "iptables -F",
        "iptables -t nat -F",
        "iptables -P INPUT DROP",
        "iptables -P FORWARD DROP",
        "iptables -P OUTPUT DROP",
    ]
    assert script.lines[6:] == [
        "# rule 0",
        "iptables -A FORWARD -i if0 -p udp -d 10.86.81.0/24 --sport 30:70 --dport 90:92 -j ACCEPT",
    ]


def test_iptables_any_interface_both_directions_omit_interface():
    script = compile_rules("iptables", [policy_rule(0, "Deny", dst="lan", srv="udpsvc")])
    assert rule_lines(script)[5:] == [
        "iptables -A FORWARD -p udp -d 10.86.81.0/24 --sport 30:70 --dport 90:92 -j DROP",
    ]


def test_iptables_any_interface_both_directions_with_split_objects():
    script = compile_rules("iptables", [policy_rule(0, "Deny", dst=["lan", "h1"])])
    assert rule_lines(script)[5:] == [
        "iptables -A FORWARD -d 10.86.81.0/24 -j DROP",
        "iptables -A FORWARD -d 1.2.3.4 -j DROP",
    ]


def test_iptables_single_direction_keeps_wildcard_interface():
    script = compile_rules("iptables", [policy_rule(0, "Deny", dst="lan", direction="Outbound")])
    assert rule_lines(script)[5:] == ["iptables -A FORWARD -o + -d 10.86.81.0/24 -j DROP"]
    inbound = packet("proto=udp src=10.0.0.5 dst=10.86.81.7 dport=91 iface=if0 dir=in")
    assert interpret("iptables", script, inbound).action is VerdictAction.DEFAULT_DROP
    outbound = packet("proto=udp src=10.0.0.5 dst=10.86.81.7 dport=91 iface=if0 dir=out")
    assert interpret("iptables", script, outbound).action is VerdictAction.DENY


def test_iptables_range_negation_mac_and_time():
    rules = [
        policy_rule(0, "Accept", src="range", direction="Inbound"),
        policy_rule(1, "Deny", dst="!ten", direction="Inbound"),
        policy_rule(2, "Accept", src="mac1", when="office", direction="Inbound"),
    ]
    assert rule_lines(compile_rules("iptables", rules))[-3:] == [
        "iptables -A FORWARD -i + -m iprange --src-range 10.0.0.1-10.0.0.6 -j ACCEPT",
        "iptables -A FORWARD -i + ! -d 10.0.0.0/8 -j DROP",
        "iptables -A FORWARD -i + -m mac --mac-source 00:17:f2:ea:ee:35 "
        "-m time --weekdays Mon --timestart 09:00 --timestop 17:00 -j ACCEPT",
    ]


def test_iptables_interpretation_of_office(office_db, office_firewall):
    script = emit("iptables", *run_pipeline(office_firewall, None, office_db))
    hit = interpret("iptables", script, packet(UDP_LITERAL))
    assert str(hit) == "Deny (rule 0)"
    miss = interpret("iptables", script, packet(UDP_LITERAL.replace("dport=91", "dport=95")))
    assert miss.action is VerdictAction.DEFAULT_DROP


def test_iptables_dnat_then_filter():
    rules = [policy_rule(0, "Accept", dst="web", direction="Inbound")]
    script = compile_rules("iptables", rules, [nat_rule(0, odst="pub", tdst="web")])
    assert "iptables -t nat -A PREROUTING -d 203.0.113.1 -j DNAT --to-destination 172.16.0.10" in script.lines
    verdict = interpret("iptables", script, packet("proto=tcp src=8.8.8.8 dst=203.0.113.1 dport=80 iface=if0 dir=in"))
    assert (verdict.action, verdict.matched_rule) == (VerdictAction.ACCEPT, 0)
    assert verdict.egress_packet.dst_ip == parse_ip("172.16.0.10")


def test_iptables_tcp_flag_words():
    assert format_tcp_flags(18) == "SYN,ACK"
    assert format_tcp_flags(63) == "ALL"
    assert parse_tcp_flags("SYN,ACK") == 18
    assert parse_tcp_flags("NONE") == 0


# ipfilter

def test_ipfilter_lines_and_defaults():
    rules = [policy_rule(0, "Accept", dst="lan", srv="udpsvc", itf="if0-id", direction="Inbound"),
             policy_rule(1, "Accounting", srv="dns", direction="Outbound")]
    assert compile_rules("ipfilter", rules).lines == [
        "# rule 0",
        "pass in quick on if0 proto udp from any port 29 >< 71 to 10.86.81.0/24 port 89 >< 93",
        "# rule 1",
        "count out proto udp from any to any port = 53",
        "# default",
        "block in all",
        "block out all",
    ]


def test_ipfilter_snat_line():
    script = compile_rules("ipfilter", [], [nat_rule(0, osrc="lan", tsrc="pub")])
    assert "map from 10.86.81.0/24 to any -> 203.0.113.1/32" in script.lines


def test_ipfilter_dynamic_address_needs_binding():
    script = compile_rules("ipfilter", [policy_rule(0, "Accept", dst="if1-id", itf="if1-id", direction="Inbound")])
    assert "pass in quick on if1 from any to 0/32" in script.lines
    sample = packet("proto=udp src=8.8.8.8 dst=198.51.100.7 iface=if1 dir=in")
    bound = interpret("ipfilter", script, sample, {"if1": parse_ip("198.51.100.7")})
    assert bound.matched_rule == 0
    with pytest.raises(OpaqueSet):
        interpret("ipfilter", script, sample)


def test_ipfilter_counting_does_not_decide():
    script = compile_rules("ipfilter", [policy_rule(0, "Accounting", direction="Inbound")])
    verdict = interpret("ipfilter", script, packet(UDP_LITERAL))
    assert verdict.action is VerdictAction.DEFAULT_DROP
    assert verdict.counters_hit == (0,)


# shared behaviour

def test_emit_refuses_unlowered_ir():
    unsplit = FlatRule(origin=0, kind=RuleKind.FILTER, action=Action.ACCEPT, direction=Direction.BOTH)
    with pytest.raises(InvariantViolation):
        emit("pf", [unsplit])


def test_unparseable_script_names_the_line():
    script = Script.from_text("pf", "# rule 0\npass in quick from any to\n")
    with pytest.raises(UnparseableScript) as excinfo:
        interpret("pf", script, packet(UDP_LITERAL))
    assert excinfo.value.line_number == 2


def test_interpreter_refuses_other_targets():
    with pytest.raises(ValueError):
        interpret("pf", Script(Platform.IPTABLES), packet(UDP_LITERAL))
    with pytest.raises(UnknownTarget):
        get_backend("cisco")


def test_script_write(tmp_path):
    script = compile_rules("pf", [])
    path = script.write(tmp_path / "fw.pf.fw")
    assert path.read_text(encoding="ascii") == "block quick all\n"
    assert str(script) == script.text()


def test_parsed_programs_are_cached_with_a_bound():
    backend = get_backend("pf")
    script = Script.from_text("pf", "block quick all\n")
    assert backend.parse(script) is backend.parse(script)
    for n in range(PROGRAM_CACHE_SIZE + 5):
        backend.parse(Script.from_text("pf", f"# build {n}\nblock quick all\n"))
    assert backend._parse_lines.cache_info().currsize == PROGRAM_CACHE_SIZE


@pytest.mark.parametrize("target", ["iptables", "pf", "ipfilter"])
def test_port_translation_follows_service_protocol(target):
    rules = [policy_rule(0, "Accept", dst="web", direction="Inbound")]
    db, fw = build_firewall(rules, OBJECTS, [nat_rule(0, odst="pub", tdst="web", tsrv="p8080")], platform=target)
    script = emit(target, *run_pipeline(fw, target, db))
    for literal, port in (("proto=tcp src=8.8.8.8 dst=203.0.113.1 dport=80 iface=if0 dir=in", 8080),
                          ("proto=udp src=8.8.8.8 dst=203.0.113.1 dport=53 iface=if0 dir=in", 53)):
        verdict = interpret(target, script, packet(literal))
        assert verdict.egress_packet == evaluate(fw, packet(literal), db).egress_packet
        assert (verdict.action, verdict.egress_packet.dst_port) == (VerdictAction.ACCEPT, port)
