"""Line-based scenario scripts.

::

    # comment
    scenario <name>
    threats T.A1,T.A2
    world os=1 rollback=1 locked=true
    t=0 install app=com.a key=K1 perms=CAMERA
    t=5 request app=com.a perm=CAMERA response=allow threat=T.A1

Header directives must precede the first event. Times are non-negative
integers (seconds) and never decrease.
"""

from __future__ import annotations

import re
import shlex
from dataclasses import dataclass, field
from typing import Mapping

from apsm.errors import ModelError

THREAT_TAGS = (
    "T.P1", "T.P2", "T.P3", "T.P4",
    "T.N1", "T.N2",
    "T.A1", "T.A2", "T.A3", "T.A4", "T.A5", "T.A6", "T.A7",
    "T.D1", "T.D2",
)

# verb -> (required keys, optional keys)
VERBS: Mapping[str, tuple[frozenset[str], frozenset[str]]] = {
    name: (frozenset(req.split()), frozenset(opt.split()))
    for name, req, opt in [
        ("install", "app key", "perms target user shared-uid lineage queries declares system"),
        ("update", "app key", "perms target lineage queries"),
        ("uninstall", "app", "user"),
        ("grant", "app perm", "user value"),
        ("revoke", "app perm", "user"),
        ("request", "app perm response", "user background"),
        ("settings-toggle", "app perm on", "user"),
        ("write", "path", "app uid user data"),
        ("access", "path mode", "app uid user"),
        ("share", "from to path", "mode user class"),
        ("act", "class apps", "user"),
        ("respond", "party value", ""),
        ("query-packages", "app", "user filter"),
        ("enroll", "modality", "user factor weaver"),
        ("lock", "", "user"),
        ("unlock", "modality", "user factor match"),
        ("reboot", "", ""),
        ("flash", "", "part flip os rollback signer"),
        ("set-root", "key", ""),
        ("unlock-bootloader", "", ""),
        ("relock", "", ""),
        ("factory-reset", "", ""),
        ("reset-party", "party", ""),
        ("ota", "os", "rollback"),
        ("trh-update", "fw", "signed user factor"),
        ("create-profile", "dpc", "allow deny owner"),
        ("set-foreground", "", "app user service"),
        ("set-frp", "value", "caller"),
        ("read-frp", "", "caller"),
        ("keygen", "app id", "user auth-bound presence min backing timeout"),
        ("use-key", "app id", "user presence"),
        ("confirm", "app message button", "user"),
        ("exploit", "target", "app id user message"),
        ("attest", "", "challenge tamper"),
        ("assert", "", "last reason check app perm path mode user expect target"),
    ]
}

_TIME_RE = re.compile(r"^t=(\d+)$")


class ScenarioParseError(ModelError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.message = message


class ScenarioSyntaxError(ScenarioParseError):
    pass


class UnknownVerb(ScenarioParseError):
    pass


class NonMonotonicTime(ScenarioParseError):
    pass


class UnknownThreat(ScenarioParseError):
    pass


@dataclass(frozen=True)
class Event:
    time: int
    verb: str
    args: dict[str, str]
    threats: tuple[str, ...] = ()
    line: int = 0


@dataclass
class Scenario:
    name: str = "unnamed"
    threats: tuple[str, ...] = ()
    world: dict[str, str] = field(default_factory=dict)
    events: list[Event] = field(default_factory=list)


WORLD_KEYS = frozenset({"os", "rollback", "locked", "group-deny"})


def _tags(lineno: int, text: str) -> tuple[str, ...]:
    tags = tuple(t for t in (x.strip() for x in text.split(",")) if t)
    for t in tags:
        if t not in THREAT_TAGS:
            raise UnknownThreat(lineno, f"unknown threat tag {t!r}")
    return tags


def _pairs(lineno: int, tokens: list[str]) -> dict[str, str]:
    out: dict[str, str] = {}
    for tok in tokens:
        key, sep, value = tok.partition("=")
        if not sep or not key:
            raise ScenarioSyntaxError(lineno, f"expected key=value, got {tok!r}")
        if key in out:
            raise ScenarioSyntaxError(lineno, f"duplicate key {key!r}")
        out[key] = value
    return out


def parse_scenario(text: str) -> Scenario:
    """Parse a scenario script; the first error raises with its line number."""
    sc = Scenario()
    last_time = 0
    for lineno, raw in enumerate(text.splitlines(), 1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        try:
            tokens = shlex.split(stripped, comments=True)
        except ValueError as exc:
            raise ScenarioSyntaxError(lineno, str(exc)) from None
        if not tokens:
            continue
        head = tokens[0]
        m = _TIME_RE.match(head)
        if m is None:
            if head.startswith("t="):
                raise ScenarioSyntaxError(lineno, f"bad time {head!r}")
            if sc.events:
                raise ScenarioSyntaxError(lineno, f"header {head!r} after the first event")
            if head == "scenario" and len(tokens) == 2:
                sc.name = tokens[1]
            elif head == "threats" and len(tokens) == 2:
                sc.threats = _tags(lineno, tokens[1])
            elif head == "world":
                sc.world = _pairs(lineno, tokens[1:])
                bad = set(sc.world) - WORLD_KEYS
                if bad:
                    raise ScenarioSyntaxError(lineno, f"unknown world keys {sorted(bad)}")
            else:
                raise ScenarioSyntaxError(lineno, f"expected 't=<int> <verb>', got {head!r}")
            continue
        time = int(m[1])
        if len(tokens) < 2:
            raise ScenarioSyntaxError(lineno, "missing verb")
        verb = tokens[1]
        if verb not in VERBS:
            raise UnknownVerb(lineno, f"unknown verb {verb!r}")
        if time < last_time:
            raise NonMonotonicTime(lineno, f"t={time} is before t={last_time}")
        last_time = time
        args = _pairs(lineno, tokens[2:])
        threats = _tags(lineno, args.pop("threat")) if "threat" in args else ()
        required, optional = VERBS[verb]
        missing = required - set(args)
        if missing:
            raise ScenarioSyntaxError(lineno, f"{verb}: missing {sorted(missing)}")
        unknown = set(args) - required - optional
        if unknown:
            raise ScenarioSyntaxError(lineno, f"{verb}: unknown keys {sorted(unknown)}")
        sc.events.append(Event(time, verb, args, threats, lineno))
    return sc
