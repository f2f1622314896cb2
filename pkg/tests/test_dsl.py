import pytest

from apsm.scenario.dsl import (
    NonMonotonicTime,
    ScenarioSyntaxError,
    UnknownThreat,
    UnknownVerb,
    parse_scenario,
)

HEADER = "scenario demo\nthreats T.A1\nworld os=2 rollback=3 locked=false\n"


def test_install_event_maps_to_fields():
    sc = parse_scenario(HEADER + "t=0 install app=com.a key=K1 perms=CAMERA,INTERNET threat=T.A1\n")
    assert (sc.name, sc.threats, sc.world) == ("demo", ("T.A1",),
                                               {"os": "2", "rollback": "3", "locked": "false"})
    (ev,) = sc.events
    assert (ev.time, ev.verb, ev.threats, ev.line) == (0, "install", ("T.A1",), 4)
    assert ev.args == {"app": "com.a", "key": "K1", "perms": "CAMERA,INTERNET"}


def test_quoted_values_and_comments():
    sc = parse_scenario('t=1 confirm app=com.a message="pay 10 to bob" button=true  # trailing\n')
    assert sc.events[0].args["message"] == "pay 10 to bob"


def test_unknown_verb_reports_line():
    with pytest.raises(UnknownVerb) as exc:
        parse_scenario("t=0 reboot\nt=1 teleport app=x\n")
    assert exc.value.line == 2


def test_time_must_not_decrease():
    with pytest.raises(NonMonotonicTime) as exc:
        parse_scenario("t=5 reboot\nt=5 reboot\nt=4 reboot\n")
    assert exc.value.line == 3


@pytest.mark.parametrize("text,line", [
    ("t=0 install app=com.a\n", 1),                     # missing key
    ("t=0 reboot bogus=1\n", 1),                        # unknown key
    ("t=0 reboot\nscenario late\n", 2),                 # header after events
    ("t=x reboot\n", 1),
    ("t=0\n", 1),
    ("world colour=red\n", 1),
    ("t=0 install app=a app=b key=k\n", 1),
    ('t=0 act class="x apps=a\n', 1),
    ("hello\n", 1),
])
def test_syntax_errors(text, line):
    with pytest.raises(ScenarioSyntaxError) as exc:
        parse_scenario(text)
    assert exc.value.line == line


def test_unknown_threat_tag():
    with pytest.raises(UnknownThreat):
        parse_scenario("threats T.Z9\n")
    with pytest.raises(UnknownThreat):
        parse_scenario("t=0 reboot threat=T.Q1\n")


def test_empty_script_is_valid():
    sc = parse_scenario("# nothing\n\n")
    assert sc.events == [] and sc.name == "unnamed"
