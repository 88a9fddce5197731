import random
from dataclasses import replace
from datetime import datetime

import pytest

from conftest import build_firewall, nat_rule, packet, policy_rule
from fwcomp.errors import InvalidTranslation, PacketSyntaxError
from fwcomp.model import (
    AddressRange,
    Group,
    ICMPService,
    IPService,
    IPv4,
    Network,
    PhysAddress,
    TCPService,
    TimeInterval,
    UDPService,
    Weekday,
)
from fwcomp.model.intervals import parse_ip, parse_mac
from fwcomp.model.types import Direction, TcpFlag
from fwcomp.semantics import Packet, Timestamp, Verdict, VerdictAction, apply_nat, evaluate, interval_matches
from fwcomp.semantics.evaluator import single_address

WEEKDAYS = frozenset({Weekday.MON, Weekday.TUE, Weekday.WED, Weekday.THU, Weekday.FRI})

OBJECTS = (
    Network(id="lan", name="lan", address=parse_ip("10.86.81.0"), netmask=parse_ip("255.255.255.0")),
    Network(id="dmz", name="dmz", address=parse_ip("172.16.0.0"), netmask=parse_ip("255.255.255.0")),
    IPv4(id="web", name="web", address=parse_ip("172.16.0.10")),
    IPv4(id="pub", name="pub", address=parse_ip("203.0.113.1")),
    IPv4(id="pub2", name="pub2", address=parse_ip("203.0.113.2")),
    AddressRange(id="range", name="range", first=parse_ip("10.0.0.1"), last=parse_ip("10.0.0.6")),
    Group(id="servers", name="servers", members=("web", "dmz")),
    Group(id="nested", name="nested", members=("servers",)),
    PhysAddress(id="mac1", name="mac1", address=parse_mac("00:17:f2:ea:ee:35")),
    TCPService(id="ssh", name="ssh", dst_range=(22, 22)),
    TCPService(id="http", name="http", dst_range=(80, 80)),
    TCPService(id="syn", name="syn", flags_mask=int(TcpFlag.SYN | TcpFlag.ACK), flags_set=int(TcpFlag.SYN)),
    TCPService(id="p8080", name="p8080", dst_range=(8080, 8080)),
    UDPService(id="udpsvc", name="MyServie", src_range=(30, 70), dst_range=(90, 92)),
    UDPService(id="udpsvc-91", name="udp91", dst_range=(91, 91)),
    ICMPService(id="ping", name="ping", icmp_type=8),
    IPService(id="gre", name="gre", protocol=47),
    TimeInterval(id="office", name="office", weekdays=WEEKDAYS, daily_start=9 * 60, daily_end=17 * 60),
    TimeInterval(id="night", name="night", daily_start=22 * 60, daily_end=2 * 60),
    TimeInterval(id="jan", name="jan", start=datetime(2024, 1, 1), end=datetime(2024, 1, 31, 23, 59)),
)

UDP_HIT = "proto=udp src=10.0.0.5 dst=10.86.81.7 sport=50 dport=91 iface=if0 dir=in"


def verdict_of(rules, literal, nat_rules=()):
    db, fw = build_firewall(rules, OBJECTS, nat_rules)
    return evaluate(fw, packet(literal), db)


# the single-rule firewall loaded from XML

def test_office_denies_matching_udp(office_db, office_firewall):
    verdict = evaluate(office_firewall, packet(UDP_HIT), office_db)
    assert verdict.action is VerdictAction.DENY
    assert verdict.matched_rule == 0
    assert str(verdict) == "Deny (rule 0)"


def test_office_rule_covers_both_directions(office_db, office_firewall):
    outbound = packet(UDP_HIT).with_fields(direction=Direction.OUTBOUND, interface="if1")
    assert evaluate(office_firewall, outbound, office_db).action is VerdictAction.DENY


@pytest.mark.parametrize("literal", [
    "proto=udp src=10.0.0.5 dst=10.86.81.7 sport=71 dport=91 iface=if0 dir=in",
    "proto=udp src=10.0.0.5 dst=10.86.81.7 sport=50 dport=93 iface=if0 dir=in",
    "proto=tcp src=10.0.0.5 dst=10.86.81.7 sport=50 dport=91 iface=if0 dir=in",
    "proto=udp src=10.0.0.5 dst=10.86.82.7 sport=50 dport=91 iface=if0 dir=in",
])
def test_office_default_drop(office_db, office_firewall, literal):
    verdict = evaluate(office_firewall, packet(literal), office_db)
    assert verdict.action is VerdictAction.DEFAULT_DROP
    assert verdict.matched_rule is None
    assert str(verdict) == "DefaultDrop"


# rule order and actions

def test_first_terminal_match_wins():
    rules = [policy_rule(0, "Accept", dst="lan"), policy_rule(1, "Deny")]
    assert verdict_of(rules, UDP_HIT).matched_rule == 0
    other = verdict_of(rules, "proto=udp src=10.0.0.5 dst=8.8.8.8 iface=if0 dir=in")
    assert (other.action, other.matched_rule) == (VerdictAction.DENY, 1)


def test_disabled_rule_is_skipped():
    rules = [policy_rule(0, "Deny", disabled=True), policy_rule(1, "Accept")]
    assert verdict_of(rules, UDP_HIT).matched_rule == 1


def test_reject_action():
    assert verdict_of([policy_rule(0, "Reject")], UDP_HIT).action is VerdictAction.REJECT


def test_accounting_rules_count_and_continue():
    rules = [policy_rule(0, "Accounting"), policy_rule(1, "Accounting", dst="dmz"), policy_rule(2, "Accept")]
    verdict = verdict_of(rules, UDP_HIT)
    assert (verdict.action, verdict.matched_rule, verdict.counters_hit) == (VerdictAction.ACCEPT, 2, (0,))
    assert str(verdict) == "Accept (rule 2) counted by 0"


def test_accounting_alone_ends_in_default_drop():
    verdict = verdict_of([policy_rule(0, "Accounting")], UDP_HIT)
    assert verdict.action is VerdictAction.DEFAULT_DROP
    assert verdict.counters_hit == (0,)


def test_empty_policy_drops_everything():
    assert verdict_of([], UDP_HIT).action is VerdictAction.DEFAULT_DROP


TRAFFIC = (
    UDP_HIT,
    "proto=tcp src=10.86.81.7 dst=172.16.0.10 sport=1024 dport=80 iface=if0 dir=in",
    "proto=tcp src=10.86.81.7 dst=172.16.0.99 sport=1024 dport=22 iface=if1 dir=out",
    "proto=udp src=203.0.113.1 dst=10.0.0.3 sport=53 dport=53 iface=if1 dir=in",
    "proto=icmp src=10.0.0.5 dst=172.16.0.10 type=8 code=0 iface=if0 dir=in",
)


def random_rule(rng: random.Random, action: str):
    return policy_rule(0, action,
                       src=rng.choice([None, "lan", "range", "!lan", "servers"]),
                       dst=rng.choice([None, "dmz", "web", "!servers", "lan"]),
                       srv=rng.choice([None, "ssh", "http", "udpsvc", "ping", ["ssh", "http"]]),
                       direction=rng.choice(["Both", "Inbound", "Outbound"]))


def verdicts(rules):
    numbered = [replace(r, id=f"rule{i}", position=i) for i, r in enumerate(rules)]
    db, fw = build_firewall(numbered, OBJECTS)
    return [evaluate(fw, packet(literal), db) for literal in TRAFFIC]


def test_accounting_rules_never_change_the_verdict():
    rng = random.Random(11)
    for _ in range(40):
        terminal = [random_rule(rng, rng.choice(["Accept", "Deny", "Reject"])) for _ in range(rng.randint(1, 5))]
        mixed = list(terminal)
        for _ in range(rng.randint(1, 4)):
            mixed.insert(rng.randint(0, len(mixed)), random_rule(rng, "Accounting"))
        counting = {i for i, r in enumerate(mixed) if r.action == "Accounting"}
        for plain, counted in zip(verdicts(terminal), verdicts(mixed)):
            assert counted.action is plain.action
            assert set(counted.counters_hit) <= counting


# match fields

def test_negated_destination():
    rules = [policy_rule(0, "Accept", dst="!lan")]
    assert verdict_of(rules, UDP_HIT).action is VerdictAction.DEFAULT_DROP
    assert verdict_of(rules, "proto=udp src=10.0.0.5 dst=8.8.8.8 iface=if0 dir=in").action is VerdictAction.ACCEPT


def test_negated_any_matches_nothing():
    assert verdict_of([policy_rule(0, "Accept", src="!sysid0")], UDP_HIT).action is VerdictAction.DEFAULT_DROP


def test_interface_restriction():
    rules = [policy_rule(0, "Accept", itf="if0-id")]
    assert verdict_of(rules, UDP_HIT).action is VerdictAction.ACCEPT
    assert verdict_of(rules, UDP_HIT.replace("iface=if0", "iface=if1")).action is VerdictAction.DEFAULT_DROP


def test_negated_interface():
    rules = [policy_rule(0, "Accept", itf="!if0-id")]
    assert verdict_of(rules, UDP_HIT).action is VerdictAction.DEFAULT_DROP
    assert verdict_of(rules, UDP_HIT.replace("iface=if0", "iface=if1")).action is VerdictAction.ACCEPT


def test_direction_restriction():
    rules = [policy_rule(0, "Accept", direction="Inbound")]
    assert verdict_of(rules, UDP_HIT).action is VerdictAction.ACCEPT
    assert verdict_of(rules, UDP_HIT.replace("dir=in", "dir=out")).action is VerdictAction.DEFAULT_DROP


def test_multiple_service_refs_are_a_union():
    rules = [policy_rule(0, "Accept", srv=["ssh", "http"])]
    for port in (22, 80):
        literal = f"proto=tcp src=1.1.1.1 dst=2.2.2.2 sport=1024 dport={port} iface=if0 dir=in"
        assert verdict_of(rules, literal).action is VerdictAction.ACCEPT
    assert verdict_of(rules, "proto=tcp src=1.1.1.1 dst=2.2.2.2 dport=443 iface=if0 dir=in").matched_rule is None


def test_negated_service():
    rules = [policy_rule(0, "Accept", srv="!ssh")]
    assert verdict_of(rules, UDP_HIT).action is VerdictAction.ACCEPT
    ssh = "proto=tcp src=1.1.1.1 dst=2.2.2.2 sport=1024 dport=22 iface=if0 dir=in"
    assert verdict_of(rules, ssh).action is VerdictAction.DEFAULT_DROP


def test_tcp_flags():
    rules = [policy_rule(0, "Accept", srv="syn")]
    base = "proto=tcp src=1.1.1.1 dst=2.2.2.2 sport=1024 dport=80 iface=if0 dir=in"
    assert verdict_of(rules, base + " flags=SYN").action is VerdictAction.ACCEPT
    assert verdict_of(rules, base + " flags=SYN,ACK").action is VerdictAction.DEFAULT_DROP


def test_icmp_type():
    rules = [policy_rule(0, "Accept", srv="ping")]
    assert verdict_of(rules, "proto=icmp src=1.1.1.1 dst=2.2.2.2 type=8 code=0 iface=if0 dir=in").matched_rule == 0
    assert verdict_of(rules, "proto=icmp src=1.1.1.1 dst=2.2.2.2 type=0 code=0 iface=if0 dir=in").matched_rule is None


def test_ip_protocol_service():
    rules = [policy_rule(0, "Accept", srv="gre")]
    assert verdict_of(rules, "proto=47 src=1.1.1.1 dst=2.2.2.2 iface=if0 dir=in").matched_rule == 0
    assert verdict_of(rules, UDP_HIT).matched_rule is None


@pytest.mark.parametrize("source,expected", [("10.0.0.1", 0), ("10.0.0.6", 0), ("10.0.0.7", None), ("10.0.0.0", None)])
def test_address_range_bounds(source, expected):
    literal = f"proto=udp src={source} dst=2.2.2.2 iface=if0 dir=in"
    assert verdict_of([policy_rule(0, "Accept", src="range")], literal).matched_rule == expected


def test_nested_group_membership():
    rules = [policy_rule(0, "Accept", dst="nested")]
    assert verdict_of(rules, "proto=udp src=1.1.1.1 dst=172.16.0.99 iface=if0 dir=in").matched_rule == 0
    assert verdict_of(rules, "proto=udp src=1.1.1.1 dst=172.16.1.1 iface=if0 dir=in").matched_rule is None


def test_source_mac():
    rules = [policy_rule(0, "Accept", src="mac1")]
    base = "proto=udp src=1.1.1.1 dst=2.2.2.2 iface=if0 dir=in"
    assert verdict_of(rules, base + " mac=00:17:f2:ea:ee:35").matched_rule == 0
    assert verdict_of(rules, base + " mac=00:17:f2:ea:ee:36").matched_rule is None
    assert verdict_of(rules, base).matched_rule is None


# time

@pytest.mark.parametrize("when,expected", [
    ("day=Mon time=10:00", 0),
    ("day=Fri time=17:00", 0),
    ("day=Fri time=17:01", None),
    ("day=Sat time=10:00", None),
    ("", None),
])
def test_weekly_interval(when, expected):
    literal = f"proto=udp src=1.1.1.1 dst=2.2.2.2 iface=if0 dir=in {when}"
    assert verdict_of([policy_rule(0, "Accept", when="office")], literal).matched_rule == expected


@pytest.mark.parametrize("clock,expected", [("23:00", 0), ("01:30", 0), ("12:00", None)])
def test_daily_window_past_midnight(clock, expected):
    literal = f"proto=udp src=1.1.1.1 dst=2.2.2.2 iface=if0 dir=in day=Tue time={clock}"
    assert verdict_of([policy_rule(0, "Accept", when="night")], literal).matched_rule == expected


def test_absolute_interval_needs_a_date():
    rules = [policy_rule(0, "Accept", when="jan")]
    base = "proto=udp src=1.1.1.1 dst=2.2.2.2 iface=if0 dir=in"
    assert verdict_of(rules, base + " date=2024-01-15 time=10:00").matched_rule == 0
    assert verdict_of(rules, base + " date=2024-02-05 time=10:00").matched_rule is None
    assert verdict_of(rules, base + " day=Mon time=10:00").matched_rule is None


def test_any_interval_matches_untimed_packets():
    db, _ = build_firewall(objects=OBJECTS)
    assert interval_matches(db.resolve("sysid2"), None, db)
    assert not interval_matches(db.resolve("office"), None, db)


# NAT

def test_destination_translation_happens_before_filtering():
    rules = [policy_rule(0, "Accept", dst="web")]
    nat = [nat_rule(0, odst="pub", tdst="web")]
    verdict = verdict_of(rules, "proto=tcp src=8.8.8.8 dst=203.0.113.1 dport=80 iface=if0 dir=in", nat)
    assert verdict.action is VerdictAction.ACCEPT
    assert verdict.egress_packet.dst_ip == parse_ip("172.16.0.10")


def test_source_translation_rewrites_egress():
    nat = [nat_rule(0, osrc="lan", tsrc="pub")]
    verdict = verdict_of([policy_rule(0, "Accept", src="pub")], UDP_HIT.replace("10.0.0.5", "10.86.81.5"), nat)
    assert verdict.matched_rule == 0
    assert verdict.egress_packet.src_ip == parse_ip("203.0.113.1")


def test_only_first_matching_nat_rule_applies():
    db, fw = build_firewall([], OBJECTS, [nat_rule(0, osrc="lan", tsrc="pub"), nat_rule(1, tsrc="pub2")])
    translated = apply_nat(fw.nat_rules, packet("proto=udp src=10.86.81.5 dst=8.8.8.8 iface=if0 dir=out"), db)
    assert translated.src_ip == parse_ip("203.0.113.1")
    other = apply_nat(fw.nat_rules, packet("proto=udp src=10.1.1.1 dst=8.8.8.8 iface=if0 dir=out"), db)
    assert other.src_ip == parse_ip("203.0.113.2")


def test_port_translation_only_touches_port_protocols():
    db, fw = build_firewall([], OBJECTS, [nat_rule(0, odst="pub", tdst="web", tsrv="p8080")])
    tcp = apply_nat(fw.nat_rules, packet("proto=tcp src=8.8.8.8 dst=203.0.113.1 dport=80 iface=if0 dir=in"), db)
    assert (tcp.dst_ip, tcp.dst_port) == (parse_ip("172.16.0.10"), 8080)
    icmp = apply_nat(fw.nat_rules, packet("proto=icmp src=8.8.8.8 dst=203.0.113.1 type=8 iface=if0 dir=in"), db)
    assert icmp.dst_ip == parse_ip("172.16.0.10")
    assert icmp.dst_port == 0
    udp = apply_nat(fw.nat_rules, packet("proto=udp src=8.8.8.8 dst=203.0.113.1 dport=53 iface=if0 dir=in"), db)
    assert (udp.dst_ip, udp.dst_port) == (parse_ip("172.16.0.10"), 53)


def test_udp_port_translation_leaves_tcp_ports():
    db, fw = build_firewall([], OBJECTS, [nat_rule(0, odst="pub", tdst="web", tsrv="udpsvc-91")])
    udp = apply_nat(fw.nat_rules, packet("proto=udp src=8.8.8.8 dst=203.0.113.1 dport=53 iface=if0 dir=in"), db)
    assert udp.dst_port == 91
    tcp = apply_nat(fw.nat_rules, packet("proto=tcp src=8.8.8.8 dst=203.0.113.1 dport=80 iface=if0 dir=in"), db)
    assert (tcp.dst_ip, tcp.dst_port) == (parse_ip("172.16.0.10"), 80)


def test_untranslated_packet_keeps_header():
    original = packet(UDP_HIT)
    verdict = verdict_of([policy_rule(0, "Deny")], UDP_HIT, [nat_rule(0, osrc="dmz", tsrc="pub")])
    assert verdict.egress_packet == original


def test_translation_target_must_be_single():
    db, _ = build_firewall(objects=OBJECTS)
    assert single_address("web", db) == parse_ip("172.16.0.10")
    with pytest.raises(InvalidTranslation):
        single_address("lan", db)


# packet literals and verdict values

def test_packet_literal_fields():
    parsed = packet("proto=tcp src=1.2.3.4 dst=5.6.7.8 sport=1000 dport=22 flags=SYN,ACK iface=eth0 dir=out "
                    "mac=00:17:f2:ea:ee:35 day=wed time=08:15")
    assert parsed.protocol == 6
    assert parsed.tcp_flags == int(TcpFlag.SYN | TcpFlag.ACK)
    assert parsed.direction is Direction.OUTBOUND
    assert parsed.timestamp == Timestamp(Weekday.WED, 8 * 60 + 15)
    assert Packet.parse(str(parsed)) == parsed


@pytest.mark.parametrize("literal", [
    "proto=udp src=1.2.3.4 dst=5.6.7.8 iface=if0",
    "proto=udp src=1.2.3.4 dst=5.6.7.8 iface=if0 dir=in colour=red",
    "proto=udp src=1.2.3.400 dst=5.6.7.8 iface=if0 dir=in",
    "proto=udp src=1.2.3.4 dst=5.6.7.8 iface=if0 dir=in dport=70000",
    "proto=udp src=1.2.3.4 dst=5.6.7.8 iface=if0 dir=sideways",
    "proto=udp src=1.2.3.4 dst=5.6.7.8 iface=if0 dir=in date=2024-01-15 day=Tue",
    "proto=udp src=1.2.3.4 dst=5.6.7.8 iface=if0 dir=in time=10:00",
])
def test_packet_literal_errors(literal):
    with pytest.raises(PacketSyntaxError):
        Packet.parse(literal)


def test_default_drop_has_no_rule():
    with pytest.raises(ValueError):
        Verdict(VerdictAction.DEFAULT_DROP, packet(UDP_HIT), matched_rule=3)
    with pytest.raises(ValueError):
        Verdict(VerdictAction.ACCEPT, packet(UDP_HIT))
