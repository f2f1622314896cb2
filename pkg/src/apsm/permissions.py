"""Android permissions as the user party's consent channel.

Permission status is not stored separately: it *is* the user's cached
consent for the action class ``perm:<uid>:<name>``. Install-time classes
are written as ``allow-always`` at install, runtime classes start absent
(ask), and context-dependent states map onto the context-dependent consent
responses. Deleting the consent entry therefore revokes the permission.
"""

from __future__ import annotations

import shlex
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Optional

from apsm.core.consent import ConsentResponse, Verdict
from apsm.errors import (
    BackgroundRequest,
    NotRequestable,
    NotUserRevocable,
    RegistrySyntaxError,
    UnknownPermission,
)

if TYPE_CHECKING:
    from apsm.world import DeviceWorld, Package

PLATFORM_DECLARER = "android"
QUERY_ALL_PACKAGES = "QUERY_ALL_PACKAGES"
READ_EXTERNAL_STORAGE = "READ_EXTERNAL_STORAGE"
WRITE_EXTERNAL_STORAGE = "WRITE_EXTERNAL_STORAGE"


class ProtectionLevel(str, Enum):
    NORMAL = "normal"
    DANGEROUS = "dangerous"
    SPECIAL = "special"
    PRIVILEGED = "privileged"
    SIGNATURE = "signature"


KNOWN_FLAGS = frozenset({"privileged", "development", "installer", "preinstalled"})


@dataclass(frozen=True)
class PermissionDef:
    name: str
    level: ProtectionLevel
    flags: frozenset[str] = frozenset()
    group: Optional[str] = None
    declarer: str = PLATFORM_DECLARER

    def __post_init__(self):
        object.__setattr__(self, "level", ProtectionLevel(self.level))
        object.__setattr__(self, "flags", frozenset(self.flags))
        if self.group is not None and self.level is not ProtectionLevel.DANGEROUS:
            raise ValueError(f"{self.name}: only dangerous permissions carry a group")

    @property
    def user_revocable(self) -> bool:
        return self.level in (ProtectionLevel.DANGEROUS, ProtectionLevel.SPECIAL)


class PermissionRegistry:
    def __init__(self, defs: Iterable[PermissionDef] = ()):
        self._defs: dict[str, PermissionDef] = {}
        for d in defs:
            self.add(d)

    def add(self, d: PermissionDef) -> None:
        if d.name in self._defs:
            raise ValueError(f"duplicate permission {d.name}")
        self._defs[d.name] = d

    def get(self, name: str) -> PermissionDef:
        try:
            return self._defs[name]
        except KeyError:
            raise UnknownPermission(name) from None

    def __contains__(self, name: str) -> bool:
        return name in self._defs

    def __iter__(self):
        return iter(sorted(self._defs.values(), key=lambda d: d.name))

    def __len__(self) -> int:
        return len(self._defs)

    @classmethod
    def parse(cls, text: str, declarer: str = PLATFORM_DECLARER) -> "PermissionRegistry":
        """Parse ``perm <name> <level>[|flag...] [flags=a,b] [group=g]`` lines."""
        reg = cls()
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            toks = shlex.split(line)
            if toks[0] != "perm" or len(toks) < 3:
                raise RegistrySyntaxError(lineno, f"expected 'perm <name> <level>', got {raw!r}")
            name, level_tok = toks[1], toks[2]
            level, *flags = level_tok.split("|")
            group = None
            for opt in toks[3:]:
                key, sep, value = opt.partition("=")
                if not sep:
                    raise RegistrySyntaxError(lineno, f"bad option {opt!r}")
                if key == "flags":
                    flags.extend(f for f in value.split(",") if f)
                elif key == "group":
                    group = value
                else:
                    raise RegistrySyntaxError(lineno, f"unknown option {key!r}")
            try:
                lvl = ProtectionLevel(level)
            except ValueError:
                raise RegistrySyntaxError(lineno, f"unknown protection level {level!r}") from None
            unknown = set(flags) - KNOWN_FLAGS
            if unknown:
                raise RegistrySyntaxError(lineno, f"unknown flags {sorted(unknown)}")
            try:
                reg.add(PermissionDef(name, lvl, frozenset(flags), group, declarer))
            except ValueError as exc:
                raise RegistrySyntaxError(lineno, str(exc)) from None
        return reg

    @classmethod
    def load(cls, path: str | Path) -> "PermissionRegistry":
        return cls.parse(Path(path).read_text(encoding="utf-8"))


def platform_registry() -> PermissionRegistry:
    return PermissionRegistry.parse(
        (Path(__file__).parent / "data" / "platform.perms").read_text(encoding="utf-8"))


@dataclass
class Manifest:
    package_name: str
    requested_permissions: list[str] = field(default_factory=list)
    declared_permissions: list[PermissionDef] = field(default_factory=list)
    target_sdk: int = 30
    shared_uid_request: Optional[str] = None
    debuggable: bool = False
    queries: list[str] = field(default_factory=list)

    def canonical(self) -> dict:
        return {
            "package": self.package_name,
            "requested": sorted(self.requested_permissions),
            "declared": sorted(d.name for d in self.declared_permissions),
            "target_sdk": self.target_sdk,
            "shared_uid": self.shared_uid_request,
            "debuggable": self.debuggable,
            "queries": sorted(self.queries),
        }


class PermStatus(str, Enum):
    GRANTED = "granted"
    DENIED = "denied"
    ASK = "ask"
    FOREGROUND_ONLY = "foreground-only"
    ONE_TIME = "one-time"


class UserResponse(str, Enum):
    ALLOW = "allow"
    ALLOW_FOREGROUND_ONLY = "allow-foreground-only"
    ALLOW_ONE_TIME = "allow-one-time"
    DENY = "deny"
    DENY_ALWAYS = "deny-always"


RESPONSE_STATUS = {
    UserResponse.ALLOW: PermStatus.GRANTED,
    UserResponse.ALLOW_FOREGROUND_ONLY: PermStatus.FOREGROUND_ONLY,
    UserResponse.ALLOW_ONE_TIME: PermStatus.ONE_TIME,
    UserResponse.DENY: PermStatus.ASK,
    UserResponse.DENY_ALWAYS: PermStatus.DENIED,
}

_STATUS_CONSENT = {
    PermStatus.GRANTED: ConsentResponse.ALLOW_ALWAYS,
    PermStatus.FOREGROUND_ONLY: ConsentResponse.ALLOW_IN_FOREGROUND,
    PermStatus.ONE_TIME: ConsentResponse.ALLOW_ONCE,
    PermStatus.DENIED: ConsentResponse.DENY_ALWAYS,
}
_CONSENT_STATUS = {v: k for k, v in _STATUS_CONSENT.items()}
_CONSENT_STATUS[ConsentResponse.DENY_ONCE] = PermStatus.ASK


@dataclass(frozen=True)
class AppContext:
    foreground: bool = False
    foreground_service: bool = False

    @property
    def active(self) -> bool:
        return self.foreground or self.foreground_service


FOREGROUND = AppContext(foreground=True)
BACKGROUND = AppContext()


def action_class(uid: int, name: str) -> str:
    return f"perm:{uid}:{name}"


def context_of(world: "DeviceWorld", uid: int) -> AppContext:
    """Current foreground context of the (possibly shared) uid."""
    fg = svc = False
    for pkg in world.packages_for_uid(uid):
        attrs = world.parties[pkg.party_id].state.attributes
        if attrs.get("ui-foreground") and attrs.get("foreground-uid") == uid:
            fg = True
        if uid in attrs.get("foreground-service-uids", ()):
            svc = True
    return AppContext(fg, svc)


def requested_by(world: "DeviceWorld", uid: int) -> set[str]:
    names: set[str] = set()
    for pkg in world.packages_for_uid(uid):
        names.update(pkg.manifest.requested_permissions)
    return names


def status(world: "DeviceWorld", uid: int, name: str) -> PermStatus:
    defn = world.permission_def(name)
    entry = world.consents.peek(world.user_party_of_uid(uid), action_class(uid, name))
    if entry is not None:
        return _CONSENT_STATUS[entry.response]
    return PermStatus.ASK if defn.level is ProtectionLevel.DANGEROUS else PermStatus.DENIED


def _set_status(world: "DeviceWorld", uid: int, name: str, st: PermStatus) -> None:
    user = world.user_party_of_uid(uid)
    key = action_class(uid, name)
    if st is PermStatus.ASK:
        world.consents.remove(user, key)
    else:
        about = [p.party_id for p in world.packages_for_uid(uid)]
        world.consents.set(user, key, _STATUS_CONSENT[st], about=about)


def permission_state(world: "DeviceWorld", uid: int) -> dict[str, PermStatus]:
    return {n: status(world, uid, n) for n in sorted(requested_by(world, uid))
            if n in world.permission_names()}


def _group_members(world: "DeviceWorld", uid: int, defn: PermissionDef) -> list[str]:
    if defn.group is None:
        return [defn.name]
    out = []
    for n in sorted(requested_by(world, uid)):
        if n in world.permission_names():
            d = world.permission_def(n)
            if d.level is ProtectionLevel.DANGEROUS and d.group == defn.group:
                out.append(n)
    return out or [defn.name]


def _signing_key_of_declarer(world: "DeviceWorld", defn: PermissionDef) -> Optional[str]:
    if defn.declarer == PLATFORM_DECLARER:
        return world.image.platform_key
    pkg = world.packages.get(defn.declarer)
    return pkg.signing_key if pkg else None


def install_time_grantable(world: "DeviceWorld", pkg: "Package", defn: PermissionDef) -> bool:
    allowlisted = pkg.system and (pkg.name, defn.name) in world.image.privileged_allowlist
    if defn.level is ProtectionLevel.NORMAL:
        return True
    if defn.level is ProtectionLevel.PRIVILEGED:
        return allowlisted
    if defn.level is ProtectionLevel.SIGNATURE:
        if pkg.signing_key == _signing_key_of_declarer(world, defn):
            return True
        return "privileged" in defn.flags and allowlisted
    return False


def install_grant(world: "DeviceWorld", package: str, user_id: int = 0) -> dict[str, PermStatus]:
    """Apply install-time grants for ``package`` as installed for ``user_id``."""
    pkg = world.packages[package]
    uid = world.uid_of(package, user_id)
    for name in sorted(pkg.manifest.requested_permissions):
        defn = world.permission_def(name)
        if defn.level is ProtectionLevel.DANGEROUS:
            # a new group member inherits the group's current status
            siblings = [n for n in _group_members(world, uid, defn) if n != name]
            if siblings and world.consents.peek(world.user_party_of_uid(uid),
                                                action_class(uid, name)) is None:
                inherited = status(world, uid, siblings[0])
                if inherited is PermStatus.DENIED and not world.group_deny_covers_new_members:
                    continue
                _set_status(world, uid, name, inherited)
        elif defn.level is ProtectionLevel.SPECIAL:
            continue
        elif install_time_grantable(world, pkg, defn):
            _set_status(world, uid, name, PermStatus.GRANTED)
        else:
            _set_status(world, uid, name, PermStatus.DENIED)
    return permission_state(world, uid)


def request_runtime(world: "DeviceWorld", uid: int, name: str, response: UserResponse | str,
                    context: Optional[AppContext] = None) -> dict[str, PermStatus]:
    """Runtime prompt for a dangerous permission; the whole group shares the answer.

    No prompt is shown (and ``response`` is ignored) when the permission is
    already granted or fixed by a deny-always.
    """
    defn = world.permission_def(name)
    if defn.level is not ProtectionLevel.DANGEROUS:
        raise NotRequestable(f"{name} is {defn.level.value}, not runtime-requestable")
    if name not in requested_by(world, uid):
        raise NotRequestable(f"{name} is not in the manifest of uid {uid}")
    ctx = context if context is not None else context_of(world, uid)
    if not ctx.foreground:
        raise BackgroundRequest(f"uid {uid} is not in the foreground")
    current = status(world, uid, name)
    if current in (PermStatus.GRANTED, PermStatus.DENIED):
        return permission_state(world, uid)
    world.stats["prompts"] = world.stats.get("prompts", 0) + 1
    new = RESPONSE_STATUS[UserResponse(response)]
    for member in _group_members(world, uid, defn):
        _set_status(world, uid, member, new)
    return permission_state(world, uid)


def check_permission(world: "DeviceWorld", uid: int, name: str,
                     context: Optional[AppContext] = None) -> Verdict:
    """Decide a permission check from the user's cached consent.

    A one-time grant checked outside any foreground session has expired; the
    check spends it and denies.
    """
    if name not in world.permission_names() or name not in requested_by(world, uid):
        return Verdict.DENY
    if world.is_isolated_uid(uid):
        return Verdict.DENY
    ctx = context if context is not None else context_of(world, uid)
    user = world.user_party_of_uid(uid)
    key = action_class(uid, name)
    entry = world.consents.peek(user, key)
    if entry is None:
        return Verdict.DENY
    response = entry.response
    if response is ConsentResponse.ALLOW_ALWAYS:
        return Verdict.ALLOW
    if response is ConsentResponse.ALLOW_IN_FOREGROUND:
        return Verdict.ALLOW if ctx.active else Verdict.DENY
    if response is ConsentResponse.ALLOW_ONCE:
        if ctx.active:
            return Verdict.ALLOW
        world.consents.consume(user, key)
        return Verdict.DENY
    return Verdict.DENY


def expire_one_time(world: "DeviceWorld", uid: Optional[int] = None) -> int:
    """Spend one-time grants of ``uid`` (or every uid, e.g. at reboot)."""
    spent = 0
    for (party, key), entry in list(world.consents.items()):
        if not key.startswith("perm:") or entry.response is not ConsentResponse.ALLOW_ONCE:
            continue
        if uid is not None and key.split(":")[1] != str(uid):
            continue
        world.consents.consume(party, key)
        spent += 1
    return spent


def revoke(world: "DeviceWorld", uid: int, name: str) -> dict[str, PermStatus]:
    defn = world.permission_def(name)
    if not defn.user_revocable:
        raise NotUserRevocable(f"{name} is {defn.level.value}")
    if defn.level is ProtectionLevel.SPECIAL:
        _set_status(world, uid, name, PermStatus.DENIED)
    else:
        for member in _group_members(world, uid, defn):
            _set_status(world, uid, member, PermStatus.ASK)
    return permission_state(world, uid)


def set_from_settings(world: "DeviceWorld", uid: int, name: str,
                      response: UserResponse | str) -> dict[str, PermStatus]:
    """User changes a runtime permission in Settings (no prompt involved)."""
    defn = world.permission_def(name)
    if defn.level is not ProtectionLevel.DANGEROUS:
        raise NotRequestable(f"{name} is not a runtime permission")
    new = RESPONSE_STATUS[UserResponse(response)]
    for member in _group_members(world, uid, defn):
        _set_status(world, uid, member, new)
    return permission_state(world, uid)


def settings_toggle(world: "DeviceWorld", uid: int, name: str, on: bool) -> dict[str, PermStatus]:
    """Special-access grants happen only through this explicit settings path."""
    defn = world.permission_def(name)
    if defn.level is not ProtectionLevel.SPECIAL:
        raise NotRequestable(f"{name} is not a special-access permission")
    if name not in requested_by(world, uid):
        raise NotRequestable(f"{name} is not in the manifest of uid {uid}")
    _set_status(world, uid, name, PermStatus.GRANTED if on else PermStatus.DENIED)
    return permission_state(world, uid)
