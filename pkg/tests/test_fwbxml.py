import itertools
import re
from dataclasses import replace

import pytest

from fwcomp.errors import DanglingRef, SchemaError, TableIoError, TableParseError, XmlError
from fwcomp.fwbxml import has_errors, load_address_table, parse, parse_file, serialize, validate_schema
from fwcomp.model import AddressSet, Direction, ICMPService, Interface, MatchElement, Network, UDPService
from fwcomp.model.intervals import parse_ip, parse_mac
from fwcomp.semantics import Packet, VerdictAction, evaluate


def document(body: str) -> str:
    return f'<FWObjectDatabase><Library id="lib0" name="User">{body}</Library></FWObjectDatabase>'


def firewall(policy: str = "", nat: str = "", platform: str = "iptables") -> str:
    return (f'<Firewall id="fw" name="fw" platform="{platform}">'
            f'<Interface id="i0" name="if0"><IPv4 id="i0ip" address="192.168.1.1" netmask="255.255.255.0"/></Interface>'
            f'{policy}{nat}</Firewall>')


def rule(position: int, action: str = "Accept", src: str = "sysid0", dst: str = "sysid0", srv: str = "sysid1") -> str:
    return (f'<PolicyRule id="r{position}" position="{position}" action="{action}">'
            f'<Src><ObjectRef ref="{src}"/></Src><Dst><ObjectRef ref="{dst}"/></Dst>'
            f'<Srv><ServiceRef ref="{srv}"/></Srv></PolicyRule>')


def codes(diagnostics):
    return [d.code for d in diagnostics]


def test_office_firewall_is_loaded(office_db, office_firewall):
    assert office_firewall.platform == "iptables"
    assert office_firewall.host_os == "linux24"
    assert office_firewall.interface_names == ("if0", "if1", "l0")
    if0 = office_firewall.interface("if0")
    assert if0.addresses[0].address == parse_ip("192.168.1.1")
    assert if0.phys.address == parse_mac("00:17:f2:ea:ee:35")
    assert office_firewall.interface("if1").dynamic

    rule0, = office_firewall.rules
    assert rule0.id == "id47505ECE16470"
    assert rule0.position == 0
    assert rule0.direction is Direction.BOTH
    assert rule0.dst.refs == ("id47505CE816470",)
    assert rule0.src.is_any and rule0.itf.is_any and rule0.when.is_any


def test_office_objects_resolve(office_db):
    office = office_db.resolve("id47505CE816470")
    assert isinstance(office, Network)
    assert office_db.address_set_of(office) == AddressSet.from_cidr("10.86.81.0/24")
    service = office_db.resolve("id47505D0216470")
    assert isinstance(service, UDPService)
    assert service.src_range == (30, 70)
    assert service.dst_range == (90, 92)


def test_office_validates_cleanly(office_db):
    assert validate_schema(office_db) == []


def test_office_serialization_is_stable(office_db):
    text = serialize(office_db)
    reparsed = parse(text)
    assert reparsed == office_db
    assert serialize(reparsed) == text


def test_parse_file_records_source_path(office_file):
    db = parse_file(office_file)
    assert db.source_path == office_file
    assert db.find_firewall("MyFirewall").name == "MyFirewall"


def test_malformed_xml():
    with pytest.raises(XmlError):
        parse("<FWObjectDatabase><Library id='x'>")


def test_wrong_root_element():
    with pytest.raises(SchemaError):
        parse('<Objects><Library id="lib0"/></Objects>')


def test_missing_required_attribute():
    with pytest.raises(SchemaError, match="address"):
        parse(document('<Network id="n" netmask="255.0.0.0"/>'))


def test_unknown_element():
    with pytest.raises(SchemaError, match="Gadget"):
        parse(document('<Gadget id="g"/>'))


def test_dangling_reference():
    with pytest.raises(DanglingRef) as excinfo:
        parse(document(firewall(f'<Policy id="p">{rule(0, dst="nowhere")}</Policy>')))
    assert excinfo.value.ref == "nowhere"


def test_unknown_attribute_is_a_warning():
    db = parse(document('<Network id="n" address="10.0.0.0" netmask="255.0.0.0" colour="blue"/>'))
    diagnostics = validate_schema(db)
    assert codes(diagnostics) == ["unknown-attribute"]
    assert not has_errors(diagnostics)
    assert str(diagnostics[0]).startswith("warning: unknown-attribute: ")


def test_bad_boolean_is_an_error():
    db = parse(document('<Interface id="i" name="if9" dyn="maybe"/>'))
    diagnostics = validate_schema(db)
    assert codes(diagnostics) == ["bad-boolean"]
    assert has_errors(diagnostics)


def test_zero_port_range_means_any():
    db = parse(document('<UDPService id="u" src_range_start="0" src_range_end="0" dst_range_start="53" dst_range_end="53"/>'))
    service = db.resolve("u")
    assert service.src_range == (0, 65535)
    assert service.dst_range == (53, 53)


def test_icmp_wildcards():
    db = parse(document('<ICMPService id="ping" type="8" code="-1"/><ICMPService id="all"/>'))
    assert db.resolve("ping") == ICMPService(id="ping", icmp_type=8)
    assert db.resolve("all").icmp_type is None


def test_tcp_flags_attribute():
    db = parse(document('<TCPService id="t" dst_range_start="22" dst_range_end="22" flags="SYN/SYN,ACK"/>'))
    service = db.resolve("t")
    assert (service.flags_mask, service.flags_set) == (18, 2)


def test_heterogeneous_group_rejected():
    db = parse(document(
        '<Network id="n" address="10.0.0.0" netmask="255.0.0.0"/>'
        '<UDPService id="u"/>'
        '<Group id="g" name="mixed"><ObjectRef ref="n"/><ServiceRef ref="u"/></Group>'))
    assert "group-heterogeneous" in codes(validate_schema(db))


def test_group_cycle_reported():
    db = parse(document('<Group id="a"><ObjectRef ref="b"/></Group><Group id="b"><ObjectRef ref="a"/></Group>'))
    assert "group-cycle" in codes(validate_schema(db))


def test_position_gap_reported():
    db = parse(document(firewall(f'<Policy id="p">{rule(0)}{rule(2)}</Policy>')))
    assert "position-gap" in codes(validate_schema(db))


def test_service_in_address_field_rejected():
    db = parse(document('<UDPService id="u"/>' + firewall(f'<Policy id="p">{rule(0, src="u")}</Policy>')))
    assert "wrong-element-type" in codes(validate_schema(db))


def test_unsupported_platform_reported():
    db = parse(document(firewall(platform="cisco")))
    assert "unsupported-platform" in codes(validate_schema(db))


def test_nat_translation_must_be_single_address():
    nat = ('<NAT id="nat"><NATRule id="n0" position="0">'
           '<OSrc><ObjectRef ref="net-10"/></OSrc><ODst><ObjectRef ref="sysid0"/></ODst>'
           '<OSrv><ServiceRef ref="sysid1"/></OSrv>'
           '<TSrc><ObjectRef ref="lan"/></TSrc><TDst><ObjectRef ref="sysid0"/></TDst>'
           '<TSrv><ServiceRef ref="sysid1"/></TSrv></NATRule></NAT>')
    db = parse(document('<Network id="lan" address="10.1.0.0" netmask="255.255.0.0"/>' + firewall(nat=nat)))
    assert "nat-translation-not-single" in codes(validate_schema(db))
    nat_rule, = db.find_firewall("fw").nat_rules
    assert nat_rule.tsrc == "lan"
    assert nat_rule.tdst is None and nat_rule.tsrv is None


def test_policy_rules_sorted_by_position():
    db = parse(document(firewall(f'<Policy id="p">{rule(1, "Deny")}{rule(0)}</Policy>')))
    assert [r.position for r in db.find_firewall("fw").rules] == [0, 1]


HOSTS = ('<IPv4 id="hostA" name="A" address="10.0.0.1"/>'
         '<IPv4 id="hostB" name="B" address="10.0.0.2"/>')


def two_host_rule(neg: str) -> str:
    return (f'<PolicyRule id="r0" position="0" action="Accept"><Dst neg="{neg}">'
            f'<ObjectRef ref="hostA"/><ObjectRef ref="hostB"/></Dst></PolicyRule>')


def test_negation_flag_survives_parse_and_serialize():
    positive = parse(document(HOSTS + firewall(f'<Policy id="p">{two_host_rule("False")}</Policy>')))
    negative = parse(document(HOSTS + firewall(f'<Policy id="p">{two_host_rule("True")}</Policy>')))
    kept, = positive.find_firewall("fw").rules
    inverted, = negative.find_firewall("fw").rules
    assert kept.dst == MatchElement(("hostA", "hostB"))
    assert inverted.dst == MatchElement(("hostA", "hostB"), negated=True)
    assert replace(inverted, dst=kept.dst) == kept

    text = serialize(negative)
    assert b'neg="True"' in text
    assert parse(text) == negative

    for address, expected in (("10.0.0.1", VerdictAction.ACCEPT), ("10.0.0.3", VerdictAction.DEFAULT_DROP)):
        packet = Packet.parse(f"proto=tcp src=192.168.1.5 dst={address} sport=1000 dport=80 iface=if0 dir=in")
        assert evaluate(positive.find_firewall("fw"), packet, positive).action is expected
        flipped = VerdictAction.DEFAULT_DROP if expected is VerdictAction.ACCEPT else VerdictAction.ACCEPT
        assert evaluate(negative.find_firewall("fw"), packet, negative).action is flipped


RULE_CHILD = re.compile(r"\s*<(Src|Dst|Srv|Itf|When)\b.*?</\1>", re.S)


def test_rule_children_order_does_not_matter(office_text, office_db):
    children = [m.group(0) for m in RULE_CHILD.finditer(office_text)]
    assert len(children) == 5
    start = office_text.index(children[0])
    end = office_text.index(children[-1]) + len(children[-1])
    assert office_text[start:end] == "".join(children)
    for order in itertools.permutations(children):
        assert parse(office_text[:start] + "".join(order) + office_text[end:]) == office_db


def test_address_table_file(tmp_path):
    table = tmp_path / "blocked.txt"
    table.write_text("# blocked hosts\n10.0.0.1\n\n10.0.0.2/31  # pair\n192.168.0.0/16\n", encoding="utf-8")
    addresses = load_address_table(table)
    assert addresses == AddressSet([(parse_ip("10.0.0.1"), parse_ip("10.0.0.3"))]) | AddressSet.from_cidr("192.168.0.0/16")


def test_address_table_parse_error_names_line(tmp_path):
    table = tmp_path / "bad.txt"
    table.write_text("10.0.0.1\nnot-an-address\n", encoding="utf-8")
    with pytest.raises(TableParseError) as excinfo:
        load_address_table(table)
    assert excinfo.value.line == 2


def test_address_table_missing_file(tmp_path):
    with pytest.raises(TableIoError):
        load_address_table(tmp_path / "absent.txt")


def test_compile_time_table_resolves_next_to_document(tmp_path, monkeypatch):
    monkeypatch.delenv("FWCOMP_TABLE_DIR", raising=False)
    (tmp_path / "hosts.txt").write_text("10.9.9.9\n", encoding="utf-8")
    source = tmp_path / "policy.fwb"
    source.write_text(document('<AddressTable id="t" name="hosts" path="hosts.txt"/>'), encoding="utf-8")
    db = parse_file(source)
    assert db.address_set_of(db.resolve("t")) == AddressSet.single(parse_ip("10.9.9.9"))


def test_dynamic_interface_cannot_carry_addresses():
    with pytest.raises(SchemaError):
        parse(document('<Interface id="i" name="ppp0" dyn="True"><IPv4 id="a" address="1.2.3.4"/></Interface>'))
    assert Interface(id="i", name="ppp0", dynamic=True).addresses == ()
