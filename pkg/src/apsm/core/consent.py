"""Multi-party consent calculus.

An action executes only if every involved party resolves to ``allow``.
Cached responses come from a :class:`ConsentStore`; a missing entry is
``ask``, which either goes to a scripted responder or ends in a hard deny.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import TYPE_CHECKING, Callable, Iterable, Iterator, Optional

from apsm.errors import (
    ConsentMissing,
    MalformedAction,
    MissingConsent,
    ScopeViolation,
    UnknownParty,
)

if TYPE_CHECKING:
    from apsm.world import DeviceWorld

UI_FOREGROUND = "ui-foreground"
FOREGROUND_SERVICE = "foreground-service"


class PartyClass(str, Enum):
    USER = "user"
    DEVELOPER = "developer"
    PLATFORM = "platform"
    ORGANIZATION = "organization"


@dataclass
class StakeholderState:
    objects: set[str] = field(default_factory=set)
    attributes: dict[str, object] = field(default_factory=dict)

    def clear(self) -> None:
        self.objects.clear()
        self.attributes.clear()


@dataclass
class Party:
    id: str
    kind: PartyClass
    state: StakeholderState = field(default_factory=StakeholderState)

    def __setattr__(self, name, value):
        if name == "kind" and "kind" in self.__dict__:
            raise AttributeError("party class is immutable")
        super().__setattr__(name, value)

    @property
    def foreground(self) -> bool:
        attrs = self.state.attributes
        return bool(attrs.get(UI_FOREGROUND) or attrs.get(FOREGROUND_SERVICE))


class ConsentResponse(str, Enum):
    ALLOW_ALWAYS = "allow-always"
    ALLOW_ONCE = "allow-once"
    ALLOW_IN_FOREGROUND = "allow-in-foreground"
    DENY_ONCE = "deny-once"
    DENY_ALWAYS = "deny-always"

    @property
    def one_shot(self) -> bool:
        return self in (ConsentResponse.ALLOW_ONCE, ConsentResponse.DENY_ONCE)


class Verdict(str, Enum):
    ALLOW = "allow"
    DENY = "deny"
    ASK = "ask"


@dataclass
class DataObject:
    id: str
    controller: str
    data: bytes = b""


@dataclass(frozen=True)
class AccessScope:
    """A view onto at most one object of the granting party.

    Unbound scopes (``grant_id is None``) describe what an action asks for.
    Bound scopes come out of :func:`grant_scope` and can only ever touch
    ``object_id``; there is no way to name another object through them.
    """

    object_id: Optional[str] = None
    modes: frozenset[str] = frozenset()
    grant_id: Optional[str] = None
    granter: Optional[str] = None
    grantees: frozenset[str] = frozenset()

    def __post_init__(self):
        bad = set(self.modes) - {"read", "write"}
        if bad:
            raise ValueError(f"unknown access modes {sorted(bad)}")
        if self.object_id is None and self.modes:
            raise ValueError("empty scope cannot carry modes")

    @property
    def empty(self) -> bool:
        return self.object_id is None

    def live(self, world: "DeviceWorld") -> bool:
        return self.grant_id is not None and world.grants.get(self.grant_id) == self

    def _target(self, world: "DeviceWorld", mode: str) -> DataObject:
        if self.empty:
            raise ScopeViolation("empty scope")
        if mode not in self.modes:
            raise ScopeViolation(f"scope does not allow {mode}")
        if not self.live(world):
            raise ScopeViolation("grant is no longer live")
        obj = world.fs.get(self.object_id)
        if obj is None or obj.controller != self.granter:
            raise ScopeViolation("object left the granter's control")
        return obj

    def read(self, world: "DeviceWorld") -> bytes:
        return self._target(world, "read").data

    def write(self, world: "DeviceWorld", data: bytes) -> None:
        self._target(world, "write").data = data


EMPTY_SCOPE = AccessScope()


@dataclass(frozen=True)
class Action:
    id: str
    action_class: str
    parties: tuple[str, ...]
    requested_scope: AccessScope = EMPTY_SCOPE

    def __post_init__(self):
        object.__setattr__(self, "parties", tuple(sorted(set(self.parties))))

    @classmethod
    def new(cls, world: "DeviceWorld", action_class: str, parties: Iterable[str],
            scope: AccessScope = EMPTY_SCOPE) -> "Action":
        return cls(world.next_id("a"), action_class, tuple(parties), scope)


@dataclass(frozen=True)
class ConsentEntry:
    response: ConsentResponse
    about: frozenset[str] = frozenset()


Responder = Callable[[Party, Action], Optional[ConsentResponse]]


class ConsentStore:
    """Cached consent keyed by ``(party id, action class)``."""

    def __init__(self, responder: Optional[Responder] = None):
        self._entries: dict[tuple[str, str], ConsentEntry] = {}
        self.responder = responder
        self.spent: list[tuple[str, str, ConsentResponse]] = []

    def set(self, party_id: str, action_class: str, response: ConsentResponse,
            about: Iterable[str] = ()) -> None:
        self._entries[(party_id, action_class)] = ConsentEntry(
            ConsentResponse(response), frozenset(about))

    def peek(self, party_id: str, action_class: str) -> Optional[ConsentEntry]:
        return self._entries.get((party_id, action_class))

    def remove(self, party_id: str, action_class: str) -> None:
        self._entries.pop((party_id, action_class), None)

    def consume(self, party_id: str, action_class: str) -> ConsentResponse:
        entry = self._entries.pop((party_id, action_class))
        self.spent.append((party_id, action_class, entry.response))
        return entry.response

    def purge(self, party_id: str) -> int:
        """Drop every entry given by or toward ``party_id``."""
        doomed = [k for k, e in self._entries.items()
                  if k[0] == party_id or party_id in e.about]
        for k in doomed:
            del self._entries[k]
        return len(doomed)

    def clear(self) -> None:
        self._entries.clear()

    def items(self) -> Iterator[tuple[tuple[str, str], ConsentEntry]]:
        return iter(sorted(self._entries.items()))

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key) -> bool:
        return key in self._entries

    def copy(self) -> "ConsentStore":
        other = ConsentStore(self.responder)
        other._entries = dict(self._entries)
        other.spent = list(self.spent)
        return other

    def canonical(self) -> list:
        return [[p, c, e.response.value, sorted(e.about)] for (p, c), e in self.items()]


@dataclass(frozen=True)
class Decision:
    verdict: Verdict
    action_id: str
    vetoes: tuple[str, ...] = ()
    resolutions: tuple[tuple[str, Verdict], ...] = ()

    @property
    def allowed(self) -> bool:
        return self.verdict is Verdict.ALLOW

    def __bool__(self) -> bool:
        return self.allowed


def response_allows(response: ConsentResponse, foreground: bool) -> bool:
    if response is ConsentResponse.ALLOW_IN_FOREGROUND:
        return foreground
    return response in (ConsentResponse.ALLOW_ALWAYS, ConsentResponse.ALLOW_ONCE)


def _developer_foreground(action: Action, world: Optional["DeviceWorld"]) -> bool:
    if world is None:
        return False
    for pid in action.parties:
        p = world.parties.get(pid)
        if p is not None and p.kind is PartyClass.DEVELOPER and p.foreground:
            return True
    return False


def resolve_cached(party: Party, action: Action, store: ConsentStore,
                   world: Optional["DeviceWorld"] = None) -> Verdict:
    """Resolve one party's cached consent for ``action``.

    One-shot entries are consumed here. ``allow-in-foreground`` looks at the
    foreground attributes of the developer parties at resolution time.
    """
    entry = store.peek(party.id, action.action_class)
    if entry is None:
        return Verdict.ASK
    response = entry.response
    if response.one_shot:
        store.consume(party.id, action.action_class)
    if response_allows(response, _developer_foreground(action, world)):
        return Verdict.ALLOW
    return Verdict.DENY


def validate_parties(action: Action, world: "DeviceWorld") -> list[Party]:
    parties = []
    for pid in action.parties:
        if pid not in world.parties:
            raise UnknownParty(pid)
        parties.append(world.parties[pid])
    counts = {k: 0 for k in PartyClass}
    for p in parties:
        counts[p.kind] += 1
    if counts[PartyClass.USER] != 1 or counts[PartyClass.PLATFORM] != 1:
        raise MalformedAction("an action needs exactly one user and one platform party")
    if counts[PartyClass.ORGANIZATION] > 1:
        raise MalformedAction("at most one organization party")
    if counts[PartyClass.DEVELOPER] < 1:
        raise MalformedAction("an action needs at least one developer party")
    return parties


def evaluate_consent(action: Action, store: ConsentStore, world: "DeviceWorld") -> Decision:
    """``allow`` iff every party of ``action`` resolves to ``allow``.

    Any veto short-circuits the asking phase, so nobody is prompted for an
    action that is already denied. Parties still at ``ask`` go to the store's
    responder; without one, :class:`MissingConsent` is raised.
    """
    parties = validate_parties(action, world)
    results = {p.id: resolve_cached(p, action, store, world) for p in parties}

    if not any(v is Verdict.DENY for v in results.values()):
        for p in parties:
            if results[p.id] is not Verdict.ASK:
                continue
            response = store.responder(p, action) if store.responder else None
            if response is None:
                raise MissingConsent(p.id, action.action_class)
            others = [q for q in action.parties if q != p.id]
            store.set(p.id, action.action_class, response, about=others)
            results[p.id] = resolve_cached(p, action, store, world)
            if results[p.id] is Verdict.DENY:
                break

    vetoes = tuple(pid for pid, v in sorted(results.items()) if v is not Verdict.ALLOW)
    return Decision(
        Verdict.DENY if vetoes else Verdict.ALLOW,
        action.id,
        vetoes,
        tuple(sorted(results.items())),
    )


def grant_scope(world: "DeviceWorld", action: Action, granting: str,
                decision: Decision) -> AccessScope:
    """Bind the action's requested scope to a live grant from ``granting``."""
    if not decision.allowed or decision.action_id != action.id:
        raise ConsentMissing(f"action {action.id} was not allowed")
    if granting not in action.parties:
        raise ConsentMissing(f"{granting} is not part of action {action.id}")
    requested = action.requested_scope
    if requested.empty:
        return EMPTY_SCOPE
    obj = world.fs.get(requested.object_id)
    if obj is None or obj.controller != granting:
        raise ScopeViolation(f"{granting} does not control {requested.object_id}")
    scope = replace(
        requested,
        grant_id=world.next_id("g"),
        granter=granting,
        grantees=frozenset(p for p in action.parties if p != granting),
    )
    world.grants[scope.grant_id] = scope
    return scope
