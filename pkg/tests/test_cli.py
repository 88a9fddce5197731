import re

import pytest

from conftest import OFFICE_FWB, UDP_LITERAL
from fwcomp.backends import Script
from fwcomp.cli import EXIT_INVALID, EXIT_IO, EXIT_OK, EXIT_UNSUPPORTED, run
from fwcomp.fwbxml import parse_file

RULE_START = '<PolicyRule action="Deny"'
DST_REF = '<ObjectRef ref="id47505CE816470"/>'
DYNAMIC_IF1 = '<ObjectRef ref="id47505D0D16470"/>'


def write(tmp_path, text: str, name: str = "policy.fwb"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def with_duplicate_rule(text: str) -> str:
    """Office policy with its only rule repeated at position 1."""
    start = text.index(RULE_START)
    end = text.index("</PolicyRule>") + len("</PolicyRule>")
    rule = text[start:end]
    copy = rule.replace('id="id47505ECE16470" position="0"', 'id="second" position="1"')
    return text[:end] + copy + text[end:]


def test_validate_office(office_file, capsys):
    assert run(["validate", str(office_file)]) == EXIT_OK
    assert "error" not in capsys.readouterr().err


def test_validate_malformed_document(tmp_path, capsys):
    path = write(tmp_path, "<FWObjectDatabase><Library id='x'>")
    assert run(["validate", str(path)]) == EXIT_INVALID
    assert "xml-malformed" in capsys.readouterr().err


def test_validate_reports_schema_errors(tmp_path, capsys):
    path = write(tmp_path, OFFICE_FWB.replace('platform="iptables"', 'platform="cisco"'))
    assert run(["validate", str(path)]) == EXIT_INVALID
    assert "unsupported-platform" in capsys.readouterr().err


def test_missing_input_is_an_io_error(tmp_path):
    assert run(["validate", str(tmp_path / "absent.fwb")]) == EXIT_IO


def test_compile_writes_script_per_firewall(office_file, tmp_path, capsys):
    out = tmp_path / "out"
    assert run(["compile", str(office_file), "-o", str(out)]) == EXIT_OK
    script = out / "MyFirewall.iptables.fw"
    assert capsys.readouterr().out.strip() == str(script)
    text = script.read_text(encoding="ascii")
    assert text.startswith("#!/bin/sh\n")
    assert "iptables -A FORWARD -p udp -d 10.86.81.0/24 --sport 30:70 --dport 90:92 -j DROP\n" in text


def test_compile_target_override(office_file, tmp_path):
    assert run(["compile", str(office_file), "--target", "pf", "-o", str(tmp_path)]) == EXIT_OK
    text = (tmp_path / "MyFirewall.pf.fw").read_text(encoding="ascii")
    assert text.endswith("# default\nblock quick all\n")


def test_compile_dump_ir(office_file, tmp_path, capsys):
    assert run(["compile", str(office_file), "--dump-ir", "-o", str(tmp_path)]) == EXIT_OK
    assert "MyFirewall (iptables)" in capsys.readouterr().out


def test_compile_unsupported_construct_writes_nothing(tmp_path, capsys):
    path = write(tmp_path, OFFICE_FWB.replace(DST_REF, DYNAMIC_IF1))
    out = tmp_path / "out"
    assert run(["compile", str(path), "-o", str(out)]) == EXIT_UNSUPPORTED
    assert "dynamic-interface" in capsys.readouterr().err
    assert not out.exists() or not any(out.iterdir())
    assert run(["compile", str(path), "--target", "pf", "-o", str(out)]) == EXIT_OK


def test_compile_cross_check(office_file, tmp_path):
    universe = "src=10.0.0.4/31 dst=10.86.81.7,10.86.82.1 proto=udp,tcp ports=29,50,91 iface=if0,if1 dir=in,out"
    for target in ("iptables", "pf", "ipfilter"):
        argv = ["compile", str(office_file), "--target", target, "--universe", universe, "-o", str(tmp_path)]
        assert run(argv) == EXIT_OK


def test_unknown_firewall_name(office_file, capsys):
    assert run(["compile", str(office_file), "--fw", "nosuch"]) == EXIT_INVALID
    assert "nosuch" in capsys.readouterr().err


def test_analyze_reports_shadowing(tmp_path, capsys):
    path = write(tmp_path, with_duplicate_rule(OFFICE_FWB))
    assert run(["analyze", str(path)]) == EXIT_OK
    assert capsys.readouterr().out.startswith("MyFirewall: warning: rule 0 shadows rule 1: ")


def test_analyze_clean_policy_prints_nothing(office_file, capsys):
    assert run(["analyze", str(office_file)]) == EXIT_OK
    assert capsys.readouterr().out == ""


def test_analyze_optimize_writes_database(tmp_path):
    path = write(tmp_path, with_duplicate_rule(OFFICE_FWB))
    optimized = tmp_path / "optimized.fwb"
    assert run(["analyze", str(path), "--optimize", "-o", str(optimized)]) == EXIT_OK
    firewall = parse_file(optimized).find_firewall("MyFirewall")
    assert [rule.position for rule in firewall.rules] == [0]
    assert len(parse_file(path).find_firewall("MyFirewall").rules) == 2


def test_analyze_optimize_to_stdout(office_file, capsys):
    assert run(["analyze", str(office_file), "--optimize"]) == EXIT_OK
    assert "<FWObjectDatabase" in capsys.readouterr().out


@pytest.mark.parametrize("extra", [[], ["--target", "iptables"], ["--target", "pf"], ["--target", "ipfilter"]])
def test_simulate_office_packet(office_file, capsys, extra):
    assert run(["simulate", str(office_file), "--packet", UDP_LITERAL, *extra]) == EXIT_OK
    assert capsys.readouterr().out == "Deny (rule 0)\n"


def test_simulate_default_drop(office_file, capsys):
    literal = UDP_LITERAL.replace("dport=91", "dport=80")
    assert run(["simulate", str(office_file), "--packet", literal]) == EXIT_OK
    assert capsys.readouterr().out == "DefaultDrop\n"


def test_simulate_bad_packet(office_file, capsys):
    assert run(["simulate", str(office_file), "--packet", "proto=udp src=10.0.0.5"]) == EXIT_INVALID
    assert "error" in capsys.readouterr().err


def test_unknown_target_rejected_by_parser(office_file):
    with pytest.raises(SystemExit) as excinfo:
        run(["compile", str(office_file), "--target", "cisco"])
    assert excinfo.value.code == EXIT_INVALID


def with_office_hours(text: str) -> str:
    """Office policy whose rule only applies during office hours."""
    interval = '<Interval id="hours" name="office hours" weekdays="Mon,Tue" daily_start="09:00" daily_end="17:00"/>'
    text = text.replace("<Firewall ", interval + "\n    <Firewall ", 1)
    return text.replace('<IntervalRef ref="sysid2"/>', '<IntervalRef ref="hours"/>')


def with_second_firewall(text: str) -> str:
    """Office policy plus a copy of its firewall named Second."""
    start = text.index("<Firewall ")
    end = text.index("</Firewall>") + len("</Firewall>")
    copy = re.sub(r' id="(\w+)"', r' id="\1b"', text[start:end]).replace('name="MyFirewall"', 'name="Second"')
    return text[:end] + "\n    " + copy + text[end:]


def test_compile_time_interval_unsupported_on_pf(tmp_path, capsys):
    path = write(tmp_path, with_office_hours(OFFICE_FWB))
    out = tmp_path / "out"
    assert run(["compile", str(path), "--target", "pf", "-o", str(out)]) == EXIT_UNSUPPORTED
    assert "error: time:" in capsys.readouterr().err
    assert not out.exists() or not any(out.iterdir())
    assert run(["compile", str(path), "--target", "iptables", "-o", str(out)]) == EXIT_OK


def test_compile_dynamic_interface_source(tmp_path, capsys):
    path = write(tmp_path, OFFICE_FWB.replace('<ObjectRef ref="sysid0"/>', DYNAMIC_IF1, 1))
    assert parse_file(path).find_firewall("MyFirewall").rules[0].src.refs == ("id47505D0D16470",)
    out = tmp_path / "out"
    assert run(["compile", str(path), "-o", str(out)]) == EXIT_UNSUPPORTED
    assert "dynamic-interface" in capsys.readouterr().err
    assert run(["compile", str(path), "--target", "pf", "-o", str(out)]) == EXIT_OK
    assert "from (if1) port 30:70 to 10.86.81.0/24 port 90:92" in (out / "MyFirewall.pf.fw").read_text(encoding="ascii")


def test_compile_writes_every_firewall(tmp_path, capsys):
    path = write(tmp_path, with_second_firewall(OFFICE_FWB))
    out = tmp_path / "out"
    assert run(["compile", str(path), "-o", str(out)]) == EXIT_OK
    assert sorted(p.name for p in out.iterdir()) == ["MyFirewall.iptables.fw", "Second.iptables.fw"]
    assert capsys.readouterr().out.split() == [str(out / "MyFirewall.iptables.fw"), str(out / "Second.iptables.fw")]


def test_failed_write_leaves_no_output(tmp_path, monkeypatch):
    path = write(tmp_path, with_second_firewall(OFFICE_FWB))
    out = tmp_path / "out"
    original = Script.write
    written = []

    def write_then_fail(self, target):
        written.append(target)
        if len(written) == 2:
            raise OSError("no space left on device")
        return original(self, target)

    monkeypatch.setattr(Script, "write", write_then_fail)
    assert run(["compile", str(path), "-o", str(out)]) == EXIT_IO
    assert len(written) == 2
    assert list(out.iterdir()) == []


def test_analyze_reports_schema_errors_and_still_succeeds(tmp_path, capsys):
    path = write(tmp_path, with_duplicate_rule(OFFICE_FWB).replace('platform="iptables"', 'platform="cisco"'))
    assert run(["analyze", str(path)]) == EXIT_OK
    captured = capsys.readouterr()
    assert "unsupported-platform" in captured.err
    assert captured.out.startswith("MyFirewall: warning: rule 0 shadows rule 1: ")


def test_usage_errors_exit_as_invalid_input(office_file, capsys):
    with pytest.raises(SystemExit) as excinfo:
        run(["simulate", str(office_file)])
    assert excinfo.value.code == EXIT_INVALID
    assert "--packet" in capsys.readouterr().err
