"""Hardware-backed keystore: auth-bound key release and protected confirmation.

Key material lives only inside this object's private map, which stands in
for the TEE / secure element. Nothing in the public surface returns it, and
the ``kernel_compromised`` flag of the world grants no extra path to it.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Optional

from apsm.authn import AuthSystem, AuthToken, TokenStrength
from apsm.crypto import derive, digest
from apsm.errors import KeyMaterialUnavailable, UnknownKey

if TYPE_CHECKING:
    from apsm.world import DeviceWorld


class KeyBacking(str, Enum):
    TEE = "tee-keymaster"
    STRONGBOX = "trh-strongbox"


# only these proofs can release an auth-bound key
AUTH_BOUND_MIN = TokenStrength.STRONG


class Gate(str, Enum):
    USABLE = "usable"
    LOCKED = "locked"


@dataclass(frozen=True)
class KeyEntry:
    id: str
    owner_uid: int
    backing: KeyBacking = KeyBacking.TEE
    auth_bound: bool = False
    requires_user_presence: bool = False
    min_strength: TokenStrength = TokenStrength.STRONG
    timeout: Optional[int] = 30

    def __post_init__(self):
        object.__setattr__(self, "backing", KeyBacking(self.backing))
        object.__setattr__(self, "min_strength", TokenStrength(self.min_strength))

    def canonical(self) -> dict:
        return {
            "id": self.id,
            "owner_uid": self.owner_uid,
            "backing": self.backing.value,
            "auth_bound": self.auth_bound,
            "requires_user_presence": self.requires_user_presence,
            "min_strength": self.min_strength.name,
            "timeout": self.timeout,
        }


@dataclass(frozen=True)
class GateResult:
    gate: Gate
    reason: Optional[str] = None

    @property
    def usable(self) -> bool:
        return self.gate is Gate.USABLE


@dataclass(frozen=True)
class Confirmation:
    message_digest: bytes
    signature: bytes
    key_id: str


class Keystore:
    def __init__(self, auth: AuthSystem):
        self.auth = auth
        self.entries: dict[str, KeyEntry] = {}
        self._material: dict[str, bytes] = {}

    def _secret(self, key_id: str) -> bytes:
        return derive(self.auth.hw_secret, "keystore", key_id)

    def generate(self, entry: KeyEntry) -> KeyEntry:
        self.entries[entry.id] = entry
        self._material[entry.id] = self._secret(entry.id)
        return entry

    def get(self, key_id: str) -> KeyEntry:
        try:
            return self.entries[key_id]
        except KeyError:
            raise UnknownKey(key_id) from None

    def delete(self, key_id: str) -> None:
        self.entries.pop(key_id, None)
        self._material.pop(key_id, None)

    def delete_owned_by(self, uid: int) -> int:
        doomed = [k for k, e in self.entries.items() if e.owner_uid == uid]
        for k in doomed:
            self.delete(k)
        return len(doomed)

    def export(self, key_id: str) -> bytes:
        """Raw key bytes never leave the secure environment."""
        self.get(key_id)
        raise KeyMaterialUnavailable(f"key {key_id} is not exportable")

    def _sign(self, key_id: str, data: bytes) -> bytes:
        return derive(self._material[key_id], data)

    def canonical(self) -> list:
        return [self.entries[k].canonical() for k in sorted(self.entries)]

    def wipe(self) -> None:
        self.entries.clear()
        self._material.clear()


def key_gate(keystore: Keystore, key_id: str, token: Optional[AuthToken] = None,
             presence: bool = False, now: int = 0) -> GateResult:
    """Decide whether ``key_id`` may be used right now. Pure."""
    key = keystore.get(key_id)
    if key.auth_bound:
        if token is None:
            return GateResult(Gate.LOCKED, "no-auth-token")
        if not keystore.auth.token_valid(token):
            return GateResult(Gate.LOCKED, "invalid-token")
        if token.user_id != key.owner_uid // 100000:
            return GateResult(Gate.LOCKED, "wrong-user")
        needed = max(key.min_strength, AUTH_BOUND_MIN)
        if token.strength < needed:
            return GateResult(Gate.LOCKED, "insufficient-tier")
        if key.timeout is not None and now - token.issued_at > key.timeout:
            return GateResult(Gate.LOCKED, "stale-token")
    if key.requires_user_presence and not presence:
        return GateResult(Gate.LOCKED, "no-user-presence")
    return GateResult(Gate.USABLE)


def use_key(world: "DeviceWorld", caller_uid: int, key_id: str, data: bytes,
            token: Optional[AuthToken] = None, presence: bool = False) -> Optional[bytes]:
    """Sign ``data`` with a keystore key on behalf of its owner.

    This is the only use path. A compromised kernel can call it under the
    owner's uid (an oracle), but only while the gate is open.
    """
    ks = world.keystore
    key = ks.get(key_id)
    if caller_uid != key.owner_uid:
        return None
    if not key_gate(ks, key_id, token, presence, world.clock).usable:
        return None
    return ks._sign(key_id, data)


def verify_key_use(world: "DeviceWorld", key_id: str, data: bytes, sig: bytes) -> bool:
    ks = world.keystore
    return key_id in ks._material and ks._sign(key_id, data) == sig


# ---------------------------------------------------------------------------
# protected confirmation


def confirmation_key_id(uid: int) -> str:
    return f"confirm:{uid}"


def provision_confirmation(world: "DeviceWorld", uid: int) -> KeyEntry:
    return world.keystore.generate(KeyEntry(confirmation_key_id(uid), uid,
                                            requires_user_presence=True))


def protected_confirm(world: "DeviceWorld", uid: int, message: bytes,
                      user_button: bool) -> Optional[Confirmation]:
    """Sign the digest of the displayed ``message`` if the user pressed the
    hardware button. The signing path runs inside the secure environment, so
    nothing the kernel does can stand in for the button."""
    key_id = confirmation_key_id(uid)
    ks = world.keystore
    ks.get(key_id)
    if not user_button:
        return None
    md = digest(message)
    return Confirmation(md, ks._sign(key_id, b"confirm|" + md), key_id)


def verify_confirmation(world: "DeviceWorld", message: bytes, conf: Confirmation) -> bool:
    ks = world.keystore
    if conf.key_id not in ks._material or conf.message_digest != digest(message):
        return False
    return ks._sign(conf.key_id, b"confirm|" + conf.message_digest) == conf.signature


def kernel_read_key(world: "DeviceWorld", key_id: str) -> bytes:
    """What a kernel-level attacker gets when asking for key bytes."""
    world.keystore.get(key_id)
    raise KeyMaterialUnavailable("key material is outside the kernel's reach")


def kernel_forge_confirmation(world: "DeviceWorld", uid: int,
                              message: bytes) -> Optional[Confirmation]:
    """A compromised kernel driving the confirmation UI without the user:
    the secure side never sees a button press, so there is no signature."""
    return protected_confirm(world, uid, message, user_button=False)

