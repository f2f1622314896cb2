"""Application sandbox: AIDs, the DAC/MAC/permission triple gate, scoped
storage, package visibility and work profiles."""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Iterable, Mapping, Optional

from apsm.core.consent import ConsentResponse, DataObject, Party, PartyClass, Verdict
from apsm.errors import (
    ModelError,
    ProfileExists,
    RangeExhausted,
    SharedUidKeyMismatch,
    UnknownPackage,
)
from apsm.permissions import (
    QUERY_ALL_PACKAGES,
    READ_EXTERNAL_STORAGE,
    WRITE_EXTERNAL_STORAGE,
    check_permission,
)

if TYPE_CHECKING:
    from apsm.world import DeviceWorld

AID_ROOT = 0
AID_SYSTEM = 1000
AID_APP_START = 10000
AID_APP_END = 19999
AID_ISOLATED_START = 99000
AID_ISOLATED_END = 99999
AID_USER_OFFSET = 100000

PRIVATE_DIR_MODE = 0o700
LEGACY_PRIVATE_DIR_MODE = 0o751
PRIVATE_MODE_MIN_SDK = 24
SCOPED_STORAGE_MIN_SDK = 29
PACKAGE_VISIBILITY_MIN_SDK = 30

SYSTEM_SHARED_UID = "android.uid.system"

_R, _W = 0o4, 0o2


@dataclass(frozen=True)
class Aid:
    user_id: int
    app_id: int

    def __post_init__(self):
        if self.user_id < 0:
            raise ValueError("user id must be non-negative")
        if not 0 <= self.app_id < AID_USER_OFFSET:
            raise ValueError(f"app id {self.app_id} out of range")

    @property
    def uid(self) -> int:
        return self.user_id * AID_USER_OFFSET + self.app_id

    @classmethod
    def from_uid(cls, uid: int) -> "Aid":
        return cls(uid // AID_USER_OFFSET, uid % AID_USER_OFFSET)

    @property
    def is_app(self) -> bool:
        return AID_APP_START <= self.app_id <= AID_APP_END

    @property
    def is_isolated(self) -> bool:
        return AID_ISOLATED_START <= self.app_id <= AID_ISOLATED_END


def isolated_uid(user_id: int, n: int = 0) -> int:
    return Aid(user_id, AID_ISOLATED_START + n).uid


class Location(str, Enum):
    APP_PRIVATE = "app-private"
    SHARED_STORAGE = "shared-storage"
    EXTERNAL_APP_DIR = "external-app-dir"
    SYSTEM = "system"


DEFAULT_LABELS = {
    Location.APP_PRIVATE: "app_data_file",
    Location.SHARED_STORAGE: "media_file",
    Location.EXTERNAL_APP_DIR: "ext_app_file",
    Location.SYSTEM: "system_file",
}


@dataclass(kw_only=True)
class FsObject(DataObject):
    owner_uid: int
    mode: int
    location: Location
    labels: frozenset[str] = frozenset()
    creator_uid: Optional[int] = None
    user_id: int = 0
    storage_class: str = "ce"

    @property
    def path(self) -> str:
        return self.id

    def canonical(self) -> dict:
        from apsm.crypto import hexdigest

        return {
            "path": self.id,
            "controller": self.controller,
            "owner_uid": self.owner_uid,
            "mode": f"{self.mode:04o}",
            "location": self.location.value,
            "labels": sorted(self.labels),
            "creator_uid": self.creator_uid,
            "user_id": self.user_id,
            "storage_class": self.storage_class,
            "data": hexdigest(self.data),
        }


_PRIVATE_RE = re.compile(r"^/data/(user|user_de)/(\d+)/([A-Za-z0-9_.]+)(/.*)?$")
_EXT_RE = re.compile(r"^/storage/emulated/(\d+)/Android/data/([A-Za-z0-9_.]+)(/.*)?$")
_SHARED_RE = re.compile(r"^/storage/emulated/(\d+)/(.+)$")


@dataclass(frozen=True)
class PathInfo:
    location: Location
    user_id: int
    package: Optional[str] = None
    storage_class: str = "ce"


def classify_path(path: str) -> PathInfo:
    """Derive location, owning user and package from a path convention.

    ``/data/user/<u>/<pkg>/...`` (CE) and ``/data/user_de/<u>/<pkg>/...`` (DE)
    are app-private, ``/storage/emulated/<u>/Android/data/<pkg>/...`` is the
    app's external directory, the rest of ``/storage/emulated/<u>/`` is shared
    storage, and ``/system/...`` is the read-only system image.
    """
    if m := _PRIVATE_RE.match(path):
        return PathInfo(Location.APP_PRIVATE, int(m[2]), m[3], "de" if m[1] == "user_de" else "ce")
    if m := _EXT_RE.match(path):
        return PathInfo(Location.EXTERNAL_APP_DIR, int(m[1]), m[2])
    if m := _SHARED_RE.match(path):
        return PathInfo(Location.SHARED_STORAGE, int(m[1]))
    if path.startswith("/system/"):
        return PathInfo(Location.SYSTEM, 0, storage_class="none")
    raise ValueError(f"path {path!r} matches no storage location")


@dataclass(frozen=True)
class MacPolicy:
    """Abstract type-enforcement policy. Absence of a rule denies."""

    rules: frozenset[tuple[str, str, str]] = frozenset()

    def allows(self, subject: str, labels: Iterable[str], mode: str) -> bool:
        labels = list(labels)
        return bool(labels) and all((subject, lbl, mode) in self.rules for lbl in labels)

    def without_rules(self) -> "MacPolicy":
        return MacPolicy(frozenset())


def _rules(subject: str, spec: Mapping[str, str]) -> set[tuple[str, str, str]]:
    out = set()
    for label, modes in spec.items():
        for m in modes:
            out.add((subject, label, {"r": "read", "w": "write"}[m]))
    return out


def default_mac_policy() -> MacPolicy:
    app = {"app_data_file": "rw", "media_file": "rw", "ext_app_file": "rw", "system_file": "r"}
    rules = _rules("untrusted_app", app) | _rules("priv_app", app)
    rules |= _rules("platform_app", app)
    rules |= _rules("system_server", {"system_file": "r", "media_file": "rw"})
    rules |= _rules("isolated_app", {"system_file": "r"})
    # no rules for "su": a user build grants root nothing under MAC
    return MacPolicy(frozenset(rules))


@dataclass(frozen=True)
class AccessDecision:
    verdict: Verdict
    reason: Optional[str] = None

    @property
    def allowed(self) -> bool:
        return self.verdict is Verdict.ALLOW


ALLOW = AccessDecision(Verdict.ALLOW)


def deny(reason: str) -> AccessDecision:
    return AccessDecision(Verdict.DENY, reason)


# ---------------------------------------------------------------------------
# uid assignment


def assign_uid(world: "DeviceWorld", user_id: int, package: str,
               shared_uid_group: Optional[str] = None,
               signing_key: Optional[str] = None) -> Aid:
    """Return the AID of ``package`` for ``user_id``, allocating an app id if new.

    App ids are per package and identical across users; shared-uid members
    reuse the group's app id once their signing key matches the group key.
    """
    if shared_uid_group is not None:
        group = world.shared_uids.get(shared_uid_group)
        if group is not None:
            if signing_key != group["key"]:
                raise SharedUidKeyMismatch(
                    f"{package} signed by {signing_key}, group {shared_uid_group} "
                    f"requires {group['key']}")
            world.app_ids[package] = group["app_id"]
            group["members"].add(package)
            return Aid(user_id, group["app_id"])
    if package in world.app_ids:
        app_id = world.app_ids[package]
    else:
        used = set(world.app_ids.values())
        app_id = next((a for a in range(AID_APP_START, AID_APP_END + 1) if a not in used), None)
        if app_id is None:
            raise RangeExhausted(f"no free app id for {package}")
        world.app_ids[package] = app_id
    if shared_uid_group is not None:
        world.shared_uids[shared_uid_group] = {
            "app_id": app_id, "key": signing_key, "members": {package}}
    return Aid(user_id, app_id)


# ---------------------------------------------------------------------------
# access checks


def subject_label(world: "DeviceWorld", uid: int) -> str:
    aid = Aid.from_uid(uid)
    if uid == AID_ROOT:
        return "su"
    if aid.is_isolated:
        return "isolated_app"
    if not aid.is_app:
        return "system_server"
    pkgs = world.packages_for_uid(uid)
    if any(p.signing_key == world.image.platform_key and p.system for p in pkgs):
        return "platform_app"
    if any(p.system for p in pkgs):
        return "priv_app"
    return "untrusted_app"


def _has_grant(world: "DeviceWorld", uid: int, obj: FsObject, mode: str) -> bool:
    holders = {p.party_id for p in world.packages_for_uid(uid)}
    for scope in world.grants.values():
        if scope.object_id == obj.id and mode in scope.modes and holders & scope.grantees:
            return True
    return False


def _dac(world: "DeviceWorld", uid: int, obj: FsObject, mode: str) -> bool:
    if uid == AID_ROOT:
        return True
    bit = _R if mode == "read" else _W
    if uid == obj.owner_uid:
        return bool(obj.mode & (bit << 6))
    if _has_grant(world, uid, obj, mode):
        return True
    return bool(obj.mode & bit)


def _mac(world: "DeviceWorld", uid: int, obj: FsObject, mode: str) -> bool:
    label = subject_label(world, uid)
    if not world.mac_policy.allows(label, obj.labels, mode):
        return False
    # per-user categories: apps never cross the user boundary on their own
    if label in ("untrusted_app", "priv_app", "platform_app", "isolated_app"):
        if obj.location is not Location.SYSTEM and Aid.from_uid(uid).user_id != obj.user_id:
            return _has_grant(world, uid, obj, mode)
    return True


def _target_sdk(world: "DeviceWorld", uid: int) -> int:
    pkgs = world.packages_for_uid(uid)
    return max((p.manifest.target_sdk for p in pkgs), default=10_000)


def _permission(world: "DeviceWorld", uid: int, obj: FsObject, mode: str) -> bool:
    aid = Aid.from_uid(uid)
    if not (aid.is_app or aid.is_isolated):
        return True
    if obj.location in (Location.APP_PRIVATE, Location.SYSTEM):
        return True
    if _has_grant(world, uid, obj, mode):
        return True
    scoped = _target_sdk(world, uid) >= SCOPED_STORAGE_MIN_SDK
    if obj.location is Location.EXTERNAL_APP_DIR:
        if obj.owner_uid == uid:
            return True
        if scoped:
            return False
    elif obj.creator_uid == uid:
        return True
    elif scoped and mode == "write":
        return False
    perm = READ_EXTERNAL_STORAGE if mode == "read" else WRITE_EXTERNAL_STORAGE
    return check_permission(world, uid, perm) is Verdict.ALLOW


def _storage_unlocked(world: "DeviceWorld", obj: FsObject) -> bool:
    if obj.storage_class != "ce":
        return True
    return world.auth.ce_available(obj.user_id)


def check_access(world: "DeviceWorld", subject_uid: int, obj: FsObject, mode: str) -> AccessDecision:
    """DAC, MAC and Android permission must all allow.

    Credential-encrypted objects of a user whose CE key is not unlocked are
    unreadable by anyone; that is checked before the three mechanisms.
    """
    if mode not in ("read", "write"):
        raise ValueError(f"bad mode {mode!r}")
    if not _storage_unlocked(world, obj):
        return deny("storage-locked")
    if not _dac(world, subject_uid, obj, mode):
        return deny("dac")
    if not _mac(world, subject_uid, obj, mode):
        return deny("mac")
    if not _permission(world, subject_uid, obj, mode):
        return deny("permission")
    return ALLOW


def new_object(world: "DeviceWorld", path: str, creator_uid: int, data: bytes = b"") -> FsObject:
    """Build the object an app would get by creating ``path``."""
    info = classify_path(path)
    if info.location is Location.APP_PRIVATE:
        pkg = world.packages.get(info.package)
        if pkg is None:
            raise UnknownPackage(info.package)
        owner = world.uid_of(pkg.name, info.user_id)
        mode = (PRIVATE_DIR_MODE if pkg.manifest.target_sdk >= PRIVATE_MODE_MIN_SDK
                else LEGACY_PRIVATE_DIR_MODE)
        controller = pkg.party_id
    elif info.location is Location.EXTERNAL_APP_DIR:
        pkg = world.packages.get(info.package)
        if pkg is None:
            raise UnknownPackage(info.package)
        owner = world.uid_of(pkg.name, info.user_id)
        mode = 0o700
        controller = pkg.party_id
    elif info.location is Location.SHARED_STORAGE:
        owner = creator_uid
        mode = 0o666
        controller = world.user_party(info.user_id)
    else:
        owner, mode, controller = AID_ROOT, 0o644, world.platform_id
    return FsObject(
        id=path, controller=controller, data=data, owner_uid=owner, mode=mode,
        location=info.location, labels=frozenset({DEFAULT_LABELS[info.location]}),
        creator_uid=creator_uid if info.location is Location.SHARED_STORAGE else None,
        user_id=info.user_id, storage_class=info.storage_class,
    )


# ---------------------------------------------------------------------------
# package visibility


def query_packages(world: "DeviceWorld", caller: str, user_id: int = 0,
                   filter: Optional[Iterable[str]] = None) -> list[str]:
    """Packages visible to ``caller`` (installed for ``user_id``)."""
    if caller not in world.packages:
        raise UnknownPackage(caller)
    me = world.packages[caller]
    installed = sorted(p.name for p in world.packages.values() if user_id in p.users)
    uid = world.uid_of(caller, user_id)
    if (me.manifest.target_sdk < PACKAGE_VISIBILITY_MIN_SDK
            or check_permission(world, uid, QUERY_ALL_PACKAGES) is Verdict.ALLOW):
        visible = installed
    else:
        declared = set(me.manifest.queries) | set(filter or ())
        visible = [n for n in installed
                   if n == caller or world.packages[n].system or n in declared]
    return visible


# ---------------------------------------------------------------------------
# work profiles


@dataclass
class DpcPolicy:
    """Organization consent per action class; unlisted classes are denied."""

    allow: frozenset[str] = frozenset()
    deny: frozenset[str] = frozenset()
    device_owner: bool = False

    def canonical(self) -> dict:
        return {"allow": sorted(self.allow), "deny": sorted(self.deny),
                "device_owner": self.device_owner}


def create_work_profile(world: "DeviceWorld", dpc_app: str, policy: DpcPolicy) -> int:
    """Create a managed profile user controlled by ``dpc_app``'s organization."""
    if dpc_app not in world.packages or 0 not in world.packages[dpc_app].users:
        raise UnknownPackage(dpc_app)
    if any(u.profile_of is not None for u in world.users.values()):
        raise ProfileExists("a work profile already exists")
    user_id = next(u for u in range(10, AID_USER_OFFSET) if u not in world.users)
    org_id = f"org:{dpc_app}"
    world.add_party(Party(org_id, PartyClass.ORGANIZATION))
    world.add_user(user_id, profile_of=0, organization=org_id)
    world.packages[dpc_app].users.add(user_id)
    world.dpc_policies[org_id] = policy
    for cls in sorted(policy.allow):
        world.consents.set(org_id, cls, ConsentResponse.ALLOW_ALWAYS)
    for cls in sorted(policy.deny):
        world.consents.set(org_id, cls, ConsentResponse.DENY_ALWAYS)
    if policy.device_owner:
        world.users[0].organization = org_id
    return user_id


def parties_for(world: "DeviceWorld", user_id: int, *packages: str) -> tuple[str, ...]:
    """The consent parties of an interaction by ``packages`` inside ``user_id``."""
    if user_id not in world.users:
        raise ModelError(f"no user {user_id}")
    out = [world.user_party(user_id), world.platform_id]
    for name in packages:
        if name not in world.packages:
            raise UnknownPackage(name)
        out.append(world.packages[name].party_id)
    org = world.users[user_id].organization
    if org is not None:
        out.append(org)
    return tuple(out)
