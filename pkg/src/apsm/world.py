"""The simulated device: parties, users, packages, files, boot and auth state."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional

from apsm.authn import AuthConfig, AuthSystem, DEFAULT_CONFIG
from apsm.boot.chain import BootChain, BootResult
from apsm.boot.images import DEFAULT_KEYS, FixtureKeys, build_images, default_partitions
from apsm.boot.lineage import SigningLineage
from apsm.core.consent import AccessScope, ConsentStore, Party, PartyClass, UI_FOREGROUND
from apsm.crypto import KeyedDigestScheme, hexdigest
from apsm.errors import ModelError, UnknownPackage, UnknownParty
from apsm.keystore import Keystore
from apsm.permissions import Manifest, PermissionDef, PermissionRegistry, platform_registry
from apsm.sandbox import (
    AID_USER_OFFSET,
    Aid,
    DpcPolicy,
    FsObject,
    MacPolicy,
    default_mac_policy,
)

PLATFORM_ID = "platform"


def user_party_id(user_id: int) -> str:
    return f"user:{user_id}"


def app_party_id(package: str) -> str:
    return f"app:{package}"


@dataclass(frozen=True)
class SystemPackage:
    manifest: Manifest
    signing_key: str


def _default_system_packages(keys: FixtureKeys) -> tuple[SystemPackage, ...]:
    return (
        SystemPackage(Manifest("com.android.settings",
                               ["WRITE_SECURE_SETTINGS", "NETWORK_SETTINGS", "INTERNET"]),
                      keys.platform.id),
        SystemPackage(Manifest("com.android.phone",
                               ["MODIFY_PHONE_STATE", "READ_PRIVILEGED_PHONE_STATE",
                                "BLUETOOTH_PRIVILEGED"]),
                      "oem-phone"),
        SystemPackage(Manifest("com.android.providers.media",
                               ["READ_EXTERNAL_STORAGE", "WRITE_EXTERNAL_STORAGE"]),
                      keys.platform.id),
    )


@dataclass(frozen=True)
class SystemImage:
    """Everything that comes from verified read-only partitions."""

    os_version: int = 1
    rollback_index: int = 1
    keys: FixtureKeys = DEFAULT_KEYS
    privileged_allowlist: frozenset[tuple[str, str]] = frozenset({
        ("com.android.phone", "MODIFY_PHONE_STATE"),
        ("com.android.phone", "READ_PRIVILEGED_PHONE_STATE"),
        ("com.android.phone", "BLUETOOTH_PRIVILEGED"),
    })
    system_packages: Optional[tuple[SystemPackage, ...]] = None
    block_size: int = 4096

    @property
    def platform_key(self) -> str:
        return self.keys.platform.id

    def packages(self) -> tuple[SystemPackage, ...]:
        if self.system_packages is None:
            return _default_system_packages(self.keys)
        return self.system_packages

    def canonical(self) -> dict:
        return {
            "os_version": self.os_version,
            "rollback_index": self.rollback_index,
            "platform_key": self.platform_key,
            "allowlist": sorted(list(p) for p in self.privileged_allowlist),
            "system_packages": [[p.manifest.package_name, p.signing_key] for p in self.packages()],
            "block_size": self.block_size,
        }


@dataclass
class Package:
    name: str
    party_id: str
    signing_key: str
    manifest: Manifest
    system: bool = False
    users: set[int] = field(default_factory=set)
    lineage: Optional[SigningLineage] = None

    def canonical(self) -> dict:
        return {
            "name": self.name,
            "party": self.party_id,
            "key": self.signing_key,
            "manifest": self.manifest.canonical(),
            "system": self.system,
            "users": sorted(self.users),
            "lineage": self.lineage.canonical() if self.lineage else None,
        }


@dataclass
class UserRecord:
    id: int
    party_id: str
    profile_of: Optional[int] = None
    organization: Optional[str] = None

    def canonical(self) -> dict:
        return {"party": self.party_id, "profile_of": self.profile_of,
                "organization": self.organization}


def _jsonable(value: Any) -> Any:
    if isinstance(value, (set, frozenset)):
        return sorted(_jsonable(v) for v in value)
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in sorted(value.items(), key=lambda kv: str(kv[0]))}
    if isinstance(value, bytes):
        return value.hex()
    return value


def canonical_json(obj: Any) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, separators=(",", ":"), ensure_ascii=True)


@dataclass
class RetainedState:
    """State that lives in read-only partitions or dedicated hardware and
    therefore survives a factory reset."""

    image: SystemImage
    boot: BootChain
    images: dict[str, bytes]
    auth_epoch: int
    trh_firmware: int
    attestation_key: str
    clock: int

    @classmethod
    def of(cls, world: "DeviceWorld") -> "RetainedState":
        return cls(world.image, world.boot.copy(), dict(world.images), world.auth.epoch,
                   world.auth.trh_firmware, world.attestation_key, world.clock)


class DeviceWorld:
    """Mutable device state. Use :meth:`snapshot` for an independent copy."""

    def __init__(self, image: SystemImage, seed: int = 0,
                 auth_config: AuthConfig = DEFAULT_CONFIG):
        self.image = image
        self.seed = seed
        self.scheme = KeyedDigestScheme(seed)
        self.clock = 0
        self.counters: dict[str, int] = {}
        self.stats: dict[str, int] = {}

        self.parties: dict[str, Party] = {}
        self.consents = ConsentStore()
        self.users: dict[int, UserRecord] = {}
        self.packages: dict[str, Package] = {}
        self.app_ids: dict[str, int] = {}
        self.shared_uids: dict[str, dict] = {}
        self.fs: dict[str, FsObject] = {}
        self.grants: dict[str, AccessScope] = {}
        self.registry: PermissionRegistry = platform_registry()
        self.declared: dict[str, PermissionDef] = {}
        self.mac_policy: MacPolicy = default_mac_policy()
        self.dpc_policies: dict[str, DpcPolicy] = {}
        # whether a denied permission group also denies members added by a later update
        self.group_deny_covers_new_members = True

        self.boot = BootChain(image.keys.rom.id)
        self.images: dict[str, bytes] = {}
        self.last_boot: Optional[BootResult] = None
        self.auth = AuthSystem(seed, auth_config)
        self.keystore = Keystore(self.auth)
        self.attestation_key = image.keys.attestation
        self.kernel_compromised = False

    # -- construction ----------------------------------------------------

    @classmethod
    def fresh(cls, image: Optional[SystemImage] = None, seed: int = 0, *,
              locked: bool = True, clock: int = 0,
              auth_config: AuthConfig = DEFAULT_CONFIG,
              retained: Optional[RetainedState] = None) -> "DeviceWorld":
        """Factory-new device: flashed OEM images, user 0, system apps, booted.

        With ``retained``, the device starts from that hardware-persistent
        state instead of the factory one (as after a factory reset).
        """
        from apsm.core.lifecycle import provision_system
        from apsm.device import reboot

        if retained is not None:
            image = retained.image
        w = cls(image or SystemImage(), seed, auth_config)
        w.clock = clock
        w.boot.locked = locked
        w.images = w.oem_images()
        if retained is not None:
            w.boot = retained.boot.copy()
            w.images = dict(retained.images)
            w.auth.epoch = retained.auth_epoch
            w.auth.trh_firmware = retained.trh_firmware
            w.attestation_key = retained.attestation_key
            w.clock = retained.clock
        w.add_party(Party(PLATFORM_ID, PartyClass.PLATFORM))
        w.add_user(0)
        provision_system(w)
        reboot(w)
        return w

    def oem_images(self, os_version: Optional[int] = None,
                   rollback_index: Optional[int] = None) -> dict[str, bytes]:
        img = self.image
        parts = default_partitions(os_version or img.os_version, img.block_size)
        return build_images(parts, self.scheme, img.keys, block_size=img.block_size,
                            rollback_index=img.rollback_index if rollback_index is None
                            else rollback_index)

    def snapshot(self) -> "DeviceWorld":
        return copy.deepcopy(self)

    # -- ids and parties -------------------------------------------------

    def next_id(self, prefix: str) -> str:
        n = self.counters.get(prefix, 0) + 1
        self.counters[prefix] = n
        return f"{prefix}{n}"

    @property
    def platform_id(self) -> str:
        return PLATFORM_ID

    def add_party(self, party: Party) -> Party:
        if party.id in self.parties:
            raise ModelError(f"party {party.id} already exists")
        self.parties[party.id] = party
        return party

    def remove_party(self, party_id: str) -> None:
        if party_id not in self.parties:
            raise UnknownParty(party_id)
        del self.parties[party_id]

    def add_user(self, user_id: int, profile_of: Optional[int] = None,
                 organization: Optional[str] = None) -> UserRecord:
        if user_id in self.users:
            raise ModelError(f"user {user_id} already exists")
        pid = user_party_id(user_id)
        self.add_party(Party(pid, PartyClass.USER))
        rec = UserRecord(user_id, pid, profile_of, organization)
        self.users[user_id] = rec
        self.auth.add_user(user_id)
        if self.running:
            self.auth.unlock_without_credential(user_id, self.clock)
        return rec

    def user_party(self, user_id: int) -> str:
        if user_id not in self.users:
            raise ModelError(f"no user {user_id}")
        return self.users[user_id].party_id

    def user_party_of_uid(self, uid: int) -> str:
        return self.user_party(uid // AID_USER_OFFSET)

    # -- packages --------------------------------------------------------

    def uid_of(self, package: str, user_id: int = 0) -> int:
        if package not in self.packages or package not in self.app_ids:
            raise UnknownPackage(package)
        return Aid(user_id, self.app_ids[package]).uid

    def packages_for_uid(self, uid: int) -> list[Package]:
        aid = Aid.from_uid(uid)
        return [p for name, p in sorted(self.packages.items())
                if self.app_ids.get(name) == aid.app_id and aid.user_id in p.users]

    def package_of_party(self, party_id: str) -> Package:
        for p in self.packages.values():
            if p.party_id == party_id:
                return p
        raise UnknownParty(party_id)

    def is_isolated_uid(self, uid: int) -> bool:
        return Aid.from_uid(uid).is_isolated

    def permission_def(self, name: str) -> PermissionDef:
        if name in self.declared:
            return self.declared[name]
        return self.registry.get(name)

    def permission_names(self) -> set[str]:
        return {d.name for d in self.registry} | set(self.declared)

    # -- objects and foreground -------------------------------------------

    def add_object(self, obj: FsObject) -> FsObject:
        if obj.controller not in self.parties:
            raise UnknownParty(obj.controller)
        old = self.fs.get(obj.id)
        if old is not None and old.controller in self.parties:
            self.parties[old.controller].state.objects.discard(old.id)
        self.fs[obj.id] = obj
        self.parties[obj.controller].state.objects.add(obj.id)
        return obj

    def remove_object(self, path: str) -> None:
        obj = self.fs.pop(path, None)
        if obj is not None and obj.controller in self.parties:
            self.parties[obj.controller].state.objects.discard(path)
        for gid in [g for g, s in self.grants.items() if s.object_id == path]:
            del self.grants[gid]

    def set_foreground(self, package: Optional[str], user_id: int = 0) -> None:
        """Bring ``package`` to the foreground (``None`` = home screen).

        At most one app holds the UI foreground at a time.
        """
        for p in self.packages.values():
            attrs = self.parties[p.party_id].state.attributes
            attrs.pop(UI_FOREGROUND, None)
            attrs.pop("foreground-uid", None)
        if package is not None:
            attrs = self.parties[self.packages[package].party_id].state.attributes
            attrs[UI_FOREGROUND] = True
            attrs["foreground-uid"] = self.uid_of(package, user_id)

    def foreground_package(self) -> Optional[str]:
        for name, p in sorted(self.packages.items()):
            if self.parties[p.party_id].state.attributes.get(UI_FOREGROUND):
                return name
        return None

    # -- state -----------------------------------------------------------

    @property
    def running(self) -> bool:
        return self.last_boot is not None and self.last_boot.booted

    def canonical(self) -> dict:
        """Canonical form used for digests.

        Id counters, prompt statistics and the per-boot nonce are excluded:
        they name or count events and carry no security state.
        """
        lb = self.last_boot
        return {
            "clock": self.clock,
            "parties": {pid: {"kind": p.kind.value,
                              "objects": sorted(p.state.objects),
                              "attributes": _jsonable(p.state.attributes)}
                        for pid, p in sorted(self.parties.items())},
            "consents": self.consents.canonical(),
            "users": {str(u): r.canonical() for u, r in sorted(self.users.items())},
            "packages": [p.canonical() for _, p in sorted(self.packages.items())],
            "app_ids": dict(sorted(self.app_ids.items())),
            "shared_uids": {g: {"app_id": v["app_id"], "key": v["key"],
                                "members": sorted(v["members"])}
                            for g, v in sorted(self.shared_uids.items())},
            "fs": [o.canonical() for _, o in sorted(self.fs.items())],
            "grants": [[g, s.object_id, sorted(s.modes), s.granter, sorted(s.grantees)]
                       for g, s in sorted(self.grants.items())],
            "declared": sorted([d.name, d.level.value, sorted(d.flags), d.group, d.declarer]
                               for d in self.declared.values()),
            "mac_rules": hexdigest(canonical_json(sorted(self.mac_policy.rules)).encode()),
            "dpc": {o: p.canonical() for o, p in sorted(self.dpc_policies.items())},
            "image": self.image.canonical(),
            "images": {n: hexdigest(b) for n, b in sorted(self.images.items())},
            "boot": self.boot.canonical(),
            "last_boot": None if lb is None else {
                "color": lb.color.value, "locked": lb.state.device_locked,
                "reasons": list(lb.reasons),
                "vbmeta_digest": lb.vbmeta_digest.hex() if lb.vbmeta_digest else None},
            "auth": self.auth.canonical(),
            "keystore": self.keystore.canonical(),
            "attestation_key": self.attestation_key,
            "kernel_compromised": self.kernel_compromised,
        }

    def digest(self) -> str:
        return hexdigest(canonical_json(self.canonical()).encode())

    def controllers(self) -> Iterable[tuple[str, str]]:
        return ((o.id, o.controller) for o in self.fs.values())
