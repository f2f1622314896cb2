"""Device-level operations: boot, bootloader lock state, flashing, OTA, FRP,
attestation and secure-element firmware updates."""

from __future__ import annotations

from dataclasses import replace
from typing import TYPE_CHECKING, Mapping, Optional

from apsm.authn import AuthState
from apsm.boot.attestation import AttestationRecord, attest_result
from apsm.boot.chain import BootResult, commit_boot, verify_boot_chain
from apsm.core.consent import FOREGROUND_SERVICE, UI_FOREGROUND
from apsm.errors import FrpAccessDenied
from apsm.keystore import KeyBacking
from apsm.permissions import expire_one_time

if TYPE_CHECKING:
    from apsm.world import DeviceWorld


def reboot(world: "DeviceWorld") -> BootResult:
    """Power-cycle: verify the chain, commit counters, reset volatile state.

    Processes die (no foreground, no foreground services), one-time
    permissions expire, in-memory kernel compromise is gone, and every
    user's CE key is evicted until the next qualifying unlock.
    """
    result = verify_boot_chain(world.boot, world.images, world.scheme)
    commit_boot(world.boot, result)
    world.last_boot = result
    world.kernel_compromised = False
    for party in world.parties.values():
        for attr in (UI_FOREGROUND, "foreground-uid", FOREGROUND_SERVICE,
                     "foreground-service-uids"):
            party.state.attributes.pop(attr, None)
    expire_one_time(world)
    if result.booted:
        world.auth.on_boot(world.clock)
    else:
        world.auth.boot_id += 1
        for ua in world.auth.users.values():
            ua.state = AuthState()
    return result


def unlock_bootloader(world: "DeviceWorld") -> BootResult:
    """Unlocking forces a wipe; later boots show the unlocked warning."""
    from apsm.core.lifecycle import factory_reset

    world.boot.locked = False
    factory_reset(world)
    return world.last_boot


def relock_bootloader(world: "DeviceWorld") -> BootResult:
    from apsm.core.lifecycle import factory_reset

    world.boot.locked = True
    factory_reset(world)
    return world.last_boot


def set_user_root_key(world: "DeviceWorld", key: Optional[str]) -> bool:
    """Install a custom vbmeta root key; only possible while unlocked."""
    if world.boot.locked:
        return False
    world.boot.user_root_key = key
    return True


def flash(world: "DeviceWorld", images: Mapping[str, bytes]) -> bool:
    """Write raw partition images. A locked bootloader refuses."""
    if world.boot.locked:
        return False
    world.images.update(images)
    return True


def ota(world: "DeviceWorld", os_version: int, rollback_index: Optional[int] = None) -> None:
    """Install OEM-signed images for ``os_version``; takes effect at reboot."""
    idx = world.image.rollback_index if rollback_index is None else rollback_index
    world.image = replace(world.image, os_version=os_version, rollback_index=idx)
    world.images = world.oem_images()


def set_frp(world: "DeviceWorld", caller: str, value: Optional[str]) -> None:
    if caller != world.platform_id:
        raise FrpAccessDenied(caller)
    world.boot.frp = value


def read_frp(world: "DeviceWorld", caller: str) -> Optional[str]:
    if caller != world.platform_id:
        raise FrpAccessDenied(caller)
    return world.boot.frp


def attest(world: "DeviceWorld", challenge: str = "") -> AttestationRecord:
    return attest_result(world.last_boot, world.attestation_key, world.scheme, challenge)


def exploit_kernel(world: "DeviceWorld") -> None:
    """Mark the running kernel as attacker-controlled until the next reboot."""
    world.kernel_compromised = True


TRH_VENDOR_KEY = "trh-vendor"


def sign_trh_firmware(world: "DeviceWorld", firmware: bytes) -> bytes:
    return world.scheme.sign(TRH_VENDOR_KEY, firmware)


def trh_update(world: "DeviceWorld", firmware: bytes, signature: bytes,
               credential: Optional[tuple[int, str]] = None) -> bool:
    """Secure-element update; returns whether secrets were preserved."""
    kept = world.auth.trh_update(firmware, signature, world.scheme, TRH_VENDOR_KEY,
                                 credential, world.clock)
    if not kept:
        for key_id, entry in list(world.keystore.entries.items()):
            if entry.backing is KeyBacking.STRONGBOX:
                world.keystore.delete(key_id)
    return kept
