import json

import pytest

from apsm.boot.images import read_image_dir, write_image_dir
from apsm.scenario import parse_scenario, run
from apsm.scenario.cli import avb_main, corpus_dir, main
from apsm.scenario.report import denials_by_threat, first_divergence, machine_report, text_report

PASSING = """scenario ok
t=0 install app=com.a key=k
t=1 write app=com.a path=/data/user/0/com.a/f data=x
t=2 assert last=allow
"""

FAILING = PASSING + "t=3 assert last=deny\n"


@pytest.fixture
def script(tmp_path):
    def write(text, name="s.scn"):
        p = tmp_path / name
        p.write_text(text)
        return str(p)
    return write


def test_all_pass_exits_zero(script, capsys):
    assert main(["run", script(PASSING)]) == 0
    out = capsys.readouterr().out
    assert "assertions: 1 passed, 0 failed" in out and out.rstrip().endswith("result: PASS")


def test_failed_assert_exits_one_and_lists_index(script, capsys):
    assert main(["run", script(FAILING)]) == 1
    out = capsys.readouterr().out
    assert "FAIL #3" in out and "result: FAIL" in out


def test_empty_scenario_exits_zero(script):
    assert main(["run", script("")]) == 0


def test_parse_error_exits_two(script, capsys):
    assert main(["run", script("t=0 nope\n")]) == 2
    assert "line 1" in capsys.readouterr().err


def test_machine_format_is_json_lines(script, tmp_path):
    out = tmp_path / "t.trace"
    assert main(["run", script(PASSING), "--format", "machine", "--out", str(out)]) == 0
    rows = [json.loads(line) for line in out.read_text().splitlines()]
    assert [r["verb"] for r in rows[:-1]] == ["install", "write", "assert"]
    assert rows[-1]["summary"] and rows[-1]["result"] == "pass"
    assert all(len(r["digest"]) == 64 for r in rows[:-1])


def _corpus(name):
    return parse_scenario((corpus_dir() / f"{name}.scn").read_text())


def test_ransomware_private_write_denied_by_dac():
    trace = run(_corpus("ransomware"))
    first_attack = trace.records[4]
    assert (first_attack.verb, first_attack.decision, first_attack.reasons) == \
        ("write", "deny", ("dac",))
    assert trace.passed


def test_share_one_image_decisions():
    trace = run(_corpus("share_one_image"))
    decisions = [(r.verb, r.decision) for r in trace.records]
    assert decisions == [
        ("install", "allow"), ("install", "allow"), ("write", "allow"), ("write", "allow"),
        ("access", "deny"), ("share", "deny"), ("respond", "ok"), ("share", "allow"),
        ("access", "allow"), ("access", "deny"), ("access", "deny"), ("assert", "pass"),
    ]
    assert trace.records[5].reasons == ("missing-consent:user:0",)
    assert trace.prompts >= 1
    assert denials_by_threat(trace)["T.A2"] == [4, 5, 9, 10]


def test_text_report_has_denials_section():
    report = text_report(run(_corpus("share_one_image")))
    assert "denials by threat:" in report and "T.A2: 4" in report


def test_runs_are_deterministic_and_seed_sensitive():
    sc = _corpus("lineage_update")
    a, b = machine_report(run(sc, seed=0)), machine_report(run(sc, seed=0))
    assert a == b
    assert first_divergence(a, machine_report(run(sc, seed=1))) is not None


def test_first_divergence():
    assert first_divergence("a\nb\n", "a\nb\n") is None
    assert first_divergence("a\nb\n", "a\nc\n") == 1
    assert first_divergence("a\n", "a\nb\n") == 1


def test_check_bundled_corpus_is_clean(capsys):
    assert main(["check"]) == 0
    out = capsys.readouterr().out
    assert out.count("OK ") == len(list(corpus_dir().glob("*.scn"))) >= 15


def test_check_reports_diff(tmp_path, capsys):
    (tmp_path / "a.scn").write_text(PASSING)
    assert main(["check", str(tmp_path)]) == 1
    assert "NOGOLD" in capsys.readouterr().out
    assert main(["check", str(tmp_path), "--update"]) == 0
    golden = tmp_path / "a.trace"
    golden.write_text(golden.read_text().replace('"allow"', '"deny"', 1))
    assert main(["check", str(tmp_path)]) == 1
    assert "first difference at trace line 0" in capsys.readouterr().out


# -- avb -----------------------------------------------------------------


def test_avb_fixture_verify_and_attest(tmp_path, capsys):
    d = str(tmp_path / "img")
    assert avb_main(["make-fixture", d]) == 0
    assert avb_main(["verify", d, "--json"]) == 0
    out = capsys.readouterr().out
    assert json.loads(out[out.index("{"):])["color"] == "GREEN"
    assert avb_main(["attest", d, "--challenge", "c1"]) == 0
    assert '"challenge": "c1"' in capsys.readouterr().out


def test_avb_corrupt_system_is_red(tmp_path, capsys):
    d = tmp_path / "img"
    avb_main(["make-fixture", str(d)])
    fixture = read_image_dir(d)
    bad = bytearray(fixture.images["system"])
    bad[5] ^= 1
    fixture.images["system"] = bytes(bad)
    write_image_dir(d, fixture)
    capsys.readouterr()
    assert avb_main(["verify", str(d)]) == 3
    assert "dm-verity-corruption:system" in capsys.readouterr().out
    assert main(["avb", "attest", str(d)]) == 3


def test_avb_unlocked_is_orange(tmp_path):
    d = str(tmp_path / "img")
    avb_main(["make-fixture", d, "--unlocked"])
    assert avb_main(["verify", d]) == 2


GROUP_DENY = """world group-deny={mode}
t=0 install app=com.a key=k perms=ACCESS_COARSE_LOCATION
t=1 set-foreground app=com.a
t=2 request app=com.a perm=ACCESS_COARSE_LOCATION response=deny-always
t=3 update app=com.a key=k perms=ACCESS_COARSE_LOCATION,ACCESS_FINE_LOCATION
t=4 assert app=com.a perm=ACCESS_FINE_LOCATION expect={expect}
"""


@pytest.mark.parametrize("mode,expect", [("inherit", "denied"), ("ask", "ask")])
def test_group_deny_world_setting(mode, expect):
    trace = run(parse_scenario(GROUP_DENY.format(mode=mode, expect=expect)))
    assert trace.passed, [(r.verb, r.decision, r.reasons) for r in trace.records]
