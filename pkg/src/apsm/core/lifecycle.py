"""App registration, updates, and per-party reset (uninstall, user removal,
profile removal, factory reset)."""

from __future__ import annotations

import copy
from typing import TYPE_CHECKING, Optional

from apsm.boot.lineage import SigningLineage, verify_apk_update
from apsm.core.consent import Party, PartyClass, Verdict
from apsm.errors import (
    DuplicatePackageName,
    ModelError,
    UnknownPackage,
    UnknownParty,
    UnknownPermission,
)
from apsm.permissions import Manifest, PermissionDef, install_grant
from apsm.sandbox import Location, assign_uid, new_object

if TYPE_CHECKING:
    from apsm.world import DeviceWorld


def _private_dirs(package: str, user_id: int) -> list[str]:
    return [f"/data/user/{user_id}/{package}", f"/data/user_de/{user_id}/{package}"]


def _check_manifest(world: "DeviceWorld", manifest: Manifest) -> list[PermissionDef]:
    own = {}
    for d in manifest.declared_permissions:
        if d.name in own or d.name in world.permission_names():
            raise ModelError(f"permission {d.name} is already defined")
        own[d.name] = PermissionDef(d.name, d.level, d.flags, d.group, manifest.package_name)
    for name in manifest.requested_permissions:
        if name not in own and name not in world.permission_names():
            raise UnknownPermission(name)
    return list(own.values())


def register_app(world: "DeviceWorld", developer_key: str, manifest: Manifest, *,
                 user_id: int = 0, system: bool = False,
                 lineage: Optional[SigningLineage] = None) -> Party:
    """Install a new package as its own developer party."""
    from apsm.world import Package, app_party_id

    name = manifest.package_name
    if name in world.packages:
        raise DuplicatePackageName(name)
    if user_id not in world.users:
        raise ModelError(f"no user {user_id}")
    declared = _check_manifest(world, manifest)
    # raises before any state change when the shared-uid key does not match
    assign_uid(world, user_id, name, manifest.shared_uid_request, developer_key)

    party = world.add_party(Party(app_party_id(name), PartyClass.DEVELOPER))
    world.packages[name] = Package(name, party.id, developer_key, copy.deepcopy(manifest),
                                   system, {user_id}, lineage)
    for d in declared:
        world.declared[d.name] = d
    _provision_user_data(world, name, user_id)
    return party


def _provision_user_data(world: "DeviceWorld", package: str, user_id: int) -> None:
    uid = world.uid_of(package, user_id)
    for path in _private_dirs(package, user_id):
        world.add_object(new_object(world, path, uid))
    install_grant(world, package, user_id)


def install_for_user(world: "DeviceWorld", package: str, user_id: int) -> int:
    if package not in world.packages:
        raise UnknownPackage(package)
    pkg = world.packages[package]
    if user_id in pkg.users:
        return world.uid_of(package, user_id)
    pkg.users.add(user_id)
    _provision_user_data(world, package, user_id)
    return world.uid_of(package, user_id)


def update_app(world: "DeviceWorld", developer_key: str, manifest: Manifest,
               lineage: Optional[SigningLineage] = None) -> Verdict:
    """Replace an installed package if the new signer may update it."""
    name = manifest.package_name
    if name not in world.packages:
        raise UnknownPackage(name)
    pkg = world.packages[name]
    verdict = verify_apk_update(pkg.signing_key, pkg.lineage, developer_key, lineage,
                                world.scheme)
    if verdict is not Verdict.ALLOW:
        return verdict
    for name_ in [n for n, d in world.declared.items() if d.declarer == name]:
        del world.declared[name_]
    try:
        declared = _check_manifest(world, manifest)
    except ModelError:
        for d in pkg.manifest.declared_permissions:
            world.declared[d.name] = PermissionDef(d.name, d.level, d.flags, d.group, name)
        raise
    for d in declared:
        world.declared[d.name] = d
    pkg.manifest = copy.deepcopy(manifest)
    pkg.signing_key = developer_key
    pkg.lineage = lineage
    for u in sorted(pkg.users):
        install_grant(world, name, u)
    return Verdict.ALLOW


# ---------------------------------------------------------------------------
# resets


def _drop_grants(world: "DeviceWorld", party_id: str) -> None:
    for gid in [g for g, s in world.grants.items()
                if s.granter == party_id or party_id in s.grantees]:
        del world.grants[gid]


def _drop_uid_state(world: "DeviceWorld", uid: int, package: str) -> None:
    """Forget per-uid state unless another package still runs under ``uid``."""
    if any(p.name != package for p in world.packages_for_uid(uid)):
        return
    prefix = f"perm:{uid}:"
    for (party, cls), _ in list(world.consents.items()):
        if cls.startswith(prefix):
            world.consents.remove(party, cls)
    world.keystore.delete_owned_by(uid)


def _remove_app_files(world: "DeviceWorld", package: str, user_id: Optional[int]) -> None:
    pkg = world.packages[package]
    for path, obj in list(world.fs.items()):
        if user_id is not None and obj.user_id != user_id:
            continue
        mine = obj.controller == pkg.party_id
        if mine and obj.location in (Location.APP_PRIVATE, Location.EXTERNAL_APP_DIR):
            world.remove_object(path)


def uninstall(world: "DeviceWorld", package: str, user_id: Optional[int] = None) -> None:
    """Remove ``package`` for one user, or everywhere (a developer reset)."""
    if package not in world.packages:
        raise UnknownPackage(package)
    pkg = world.packages[package]
    users = sorted(pkg.users) if user_id is None else [user_id]
    for u in users:
        if u not in pkg.users:
            continue
        _drop_uid_state(world, world.uid_of(package, u), package)
        _remove_app_files(world, package, u)
        pkg.users.discard(u)
    if pkg.users:
        return

    _drop_grants(world, pkg.party_id)
    world.consents.purge(pkg.party_id)
    for name in [n for n, d in world.declared.items() if d.declarer == package]:
        del world.declared[name]
    world.app_ids.pop(package, None)
    for group, info in list(world.shared_uids.items()):
        info["members"].discard(package)
        if not info["members"]:
            del world.shared_uids[group]
    party = world.parties[pkg.party_id]
    party.state.clear()
    world.remove_party(pkg.party_id)
    del world.packages[package]


def remove_user(world: "DeviceWorld", user_id: int) -> None:
    """Delete a secondary user or profile with all of its data."""
    if user_id == 0:
        raise ModelError("the system user cannot be removed")
    if user_id not in world.users:
        raise ModelError(f"no user {user_id}")
    for name in sorted(world.packages):
        if name in world.packages and user_id in world.packages[name].users:
            uninstall(world, name, user_id)
    for path, obj in list(world.fs.items()):
        if obj.user_id == user_id:
            world.remove_object(path)
    pid = world.users[user_id].party_id
    _drop_grants(world, pid)
    world.consents.purge(pid)
    world.parties[pid].state.clear()
    world.remove_party(pid)
    world.auth.remove_user(user_id)
    del world.users[user_id]


def _reset_user(world: "DeviceWorld", user_id: int) -> None:
    if user_id != 0:
        remove_user(world, user_id)
        return
    pid = world.users[0].party_id
    for path, obj in list(world.fs.items()):
        if obj.controller == pid:
            world.remove_object(path)
    _drop_grants(world, pid)
    world.consents.purge(pid)
    world.parties[pid].state.clear()


def _reset_organization(world: "DeviceWorld", org_id: str) -> None:
    for u in sorted(world.users):
        rec = world.users.get(u)
        if rec is not None and rec.organization == org_id:
            if rec.profile_of is not None:
                remove_user(world, u)
            else:
                rec.organization = None
    world.dpc_policies.pop(org_id, None)
    _drop_grants(world, org_id)
    world.consents.purge(org_id)
    world.parties[org_id].state.clear()
    world.remove_party(org_id)


def reset_party(world: "DeviceWorld", party_id: str) -> "DeviceWorld":
    """Reset one party's state and every consent given by or toward it."""
    if party_id not in world.parties:
        raise UnknownParty(party_id)
    kind = world.parties[party_id].kind
    if kind is PartyClass.DEVELOPER:
        uninstall(world, world.package_of_party(party_id).name)
    elif kind is PartyClass.PLATFORM:
        factory_reset(world)
    elif kind is PartyClass.ORGANIZATION:
        _reset_organization(world, party_id)
    else:
        user_id = next(u for u, r in world.users.items() if r.party_id == party_id)
        _reset_user(world, user_id)
    return world


def provision_system(world: "DeviceWorld") -> None:
    for sp in world.image.packages():
        register_app(world, sp.signing_key, sp.manifest, system=True)


def factory_reset(world: "DeviceWorld") -> "DeviceWorld":
    """Wipe all writable state, then boot the verified image as new.

    Only hardware-persistent state survives: the flashed read-only images
    (and so the OS version), the boot configuration with its rollback
    counters, lock state, custom root key and FRP record, the secure
    element's epoch and firmware, and the attestation key.
    """
    from apsm.device import reboot
    from apsm.permissions import platform_registry
    from apsm.sandbox import default_mac_policy

    for u in sorted(world.users, reverse=True):
        if u != 0:
            remove_user(world, u)
    for name in sorted(world.packages):
        uninstall(world, name)
    for pid in [p for p, party in world.parties.items() if party.kind is PartyClass.ORGANIZATION]:
        world.remove_party(pid)
    world.remove_party(world.users[0].party_id)
    world.auth.wipe()
    del world.users[0]

    world.fs.clear()
    world.grants.clear()
    world.consents.clear()
    world.app_ids.clear()
    world.shared_uids.clear()
    world.declared.clear()
    world.dpc_policies.clear()
    world.registry = platform_registry()
    world.mac_policy = default_mac_policy()
    world.keystore.wipe()
    world.kernel_compromised = False
    world.last_boot = None
    for party in world.parties.values():
        party.state.clear()

    world.add_user(0)
    provision_system(world)
    reboot(world)
    return world
