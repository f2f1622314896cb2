"""Tiered lockscreen authentication, Gatekeeper/Weaver and FBE key availability.

Time is the simulated clock of the world, in seconds.
"""

from __future__ import annotations

import hmac
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Optional

from apsm.crypto import derive, digest
from apsm.errors import BadSignature, NotEnrolled, TierLockout

HOUR = 3600


class ModalityKind(str, Enum):
    PASSWORD = "password"
    PIN = "pin"
    PATTERN = "pattern"
    BIOMETRIC = "biometric"
    TRUSTED_DEVICE = "trusted-device"
    TRUSTED_PLACE = "trusted-place"


KNOWLEDGE_FACTORS = frozenset({ModalityKind.PASSWORD, ModalityKind.PIN, ModalityKind.PATTERN})


class Tier(str, Enum):
    PRIMARY = "primary"
    SECONDARY = "secondary"
    TERTIARY = "tertiary"


class BiometricClass(str, Enum):
    STRONG = "strong"
    WEAK = "weak"
    CONVENIENCE = "convenience"


class TokenStrength(IntEnum):
    """Ordering of what an auth token proves; higher is stronger."""

    TERTIARY = 1
    CONVENIENCE = 2
    WEAK = 3
    STRONG = 4
    PRIMARY = 5


@dataclass(frozen=True)
class AuthConfig:
    secondary_window: int = 72 * HOUR
    # no published number for weak biometrics; configurable, defaults to the strong window
    weak_window: int = 72 * HOUR
    tertiary_idle: int = 4 * HOUR
    strong_max_sar: float = 0.07
    weak_max_sar: float = 0.20


DEFAULT_CONFIG = AuthConfig()


def classify_biometric(sar: float, pipeline_secure: bool,
                       config: AuthConfig = DEFAULT_CONFIG) -> BiometricClass:
    if pipeline_secure and sar <= config.strong_max_sar:
        return BiometricClass.STRONG
    if pipeline_secure and sar <= config.weak_max_sar:
        return BiometricClass.WEAK
    return BiometricClass.CONVENIENCE


@dataclass(frozen=True)
class Modality:
    kind: ModalityKind
    biometric_class: Optional[BiometricClass] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", ModalityKind(self.kind))
        if self.biometric_class is not None:
            object.__setattr__(self, "biometric_class", BiometricClass(self.biometric_class))
        if (self.kind is ModalityKind.BIOMETRIC) != (self.biometric_class is not None):
            raise ValueError("biometric class is required for, and only for, biometrics")

    @property
    def tier(self) -> Tier:
        if self.kind in KNOWLEDGE_FACTORS:
            return Tier.PRIMARY
        if self.kind is ModalityKind.BIOMETRIC:
            return Tier.SECONDARY
        return Tier.TERTIARY

    @property
    def strength(self) -> TokenStrength:
        if self.tier is Tier.PRIMARY:
            return TokenStrength.PRIMARY
        if self.tier is Tier.TERTIARY:
            return TokenStrength.TERTIARY
        return TokenStrength[self.biometric_class.name]

    @property
    def label(self) -> str:
        if self.biometric_class is not None:
            return f"{self.kind.value}:{self.biometric_class.value}"
        return self.kind.value

    @classmethod
    def parse(cls, text: str) -> "Modality":
        kind, _, klass = text.partition(":")
        if kind == ModalityKind.BIOMETRIC.value:
            return cls(ModalityKind.BIOMETRIC, BiometricClass(klass or "strong"))
        return cls(ModalityKind(kind))


@dataclass
class AuthState:
    last_primary_success: Optional[int] = None
    last_any_success: Optional[int] = None
    boot_unlocked_once: bool = False
    current_unlock_tier: Optional[Tier] = None
    ce_unlocked: bool = False

    def canonical(self) -> dict:
        return {
            "last_primary_success": self.last_primary_success,
            "last_any_success": self.last_any_success,
            "boot_unlocked_once": self.boot_unlocked_once,
            "current_unlock_tier": self.current_unlock_tier.value if self.current_unlock_tier else None,
            "ce_unlocked": self.ce_unlocked,
        }


@dataclass(frozen=True)
class AuthToken:
    user_id: int
    strength: TokenStrength
    issued_at: int
    boot_id: int
    mac: bytes


@dataclass(frozen=True)
class AuthResult:
    success: bool
    tier: Optional[Tier] = None
    token: Optional[AuthToken] = None
    reason: Optional[str] = None
    ce_unlocked_now: bool = False

    def __bool__(self) -> bool:
        return self.success


@dataclass
class UserAuth:
    # primary credential: (kind, verifier handle); None means no lockscreen
    credential: Optional[tuple[ModalityKind, bytes]] = None
    weaver: bool = False
    others: set[Modality] = field(default_factory=set)
    ce_verifier: bytes = b""
    state: AuthState = field(default_factory=AuthState)

    def canonical(self) -> dict:
        return {
            "credential": self.credential[0].value if self.credential else None,
            "handle": self.credential[1].hex() if self.credential else None,
            "weaver": self.weaver,
            "others": sorted(m.label for m in self.others),
            "ce_verifier": self.ce_verifier.hex(),
            "state": self.state.canonical(),
        }


NO_FACTOR = ""


class AuthSystem:
    """Per-device authentication: Gatekeeper, Weaver slots and FBE keys.

    ``hw_secret`` stands for the hardware-bound secret; it never appears in
    the canonical form, only its epoch does.
    """

    def __init__(self, seed: int = 0, config: AuthConfig = DEFAULT_CONFIG):
        self.seed = seed
        self.config = config
        self.epoch = 0
        self.boot_id = 0
        self.users: dict[int, UserAuth] = {}
        self.weaver_slots: dict[int, bytes] = {}
        self.trh_firmware = 1

    # -- secrets ---------------------------------------------------------

    @property
    def hw_secret(self) -> bytes:
        return digest(f"apsm-hw|{self.seed}|{self.epoch}".encode())

    def _token_key(self) -> bytes:
        return derive(self.hw_secret, "auth-token", str(self.boot_id))

    def _handle(self, user_id: int, kind: ModalityKind, factor: str) -> bytes:
        return derive(self.hw_secret, "gatekeeper", str(user_id), kind.value, factor)

    def ce_key(self, user_id: int, factor: str) -> bytes:
        """Credential-encrypted storage key: entangles the knowledge factor
        with the hardware secret."""
        return derive(self.hw_secret, "fbe-ce", str(user_id), factor)

    def de_key(self, user_id: int) -> bytes:
        return derive(self.hw_secret, "fbe-de", str(user_id))

    # -- enrollment ------------------------------------------------------

    def add_user(self, user_id: int) -> None:
        ua = UserAuth()
        ua.ce_verifier = digest(self.ce_key(user_id, NO_FACTOR))
        self.users[user_id] = ua

    def unlock_without_credential(self, user_id: int, now: int) -> bool:
        """Users with no lockscreen unlock with the empty factor."""
        if self._user(user_id).credential is not None:
            return False
        self._primary_success(user_id, NO_FACTOR, now)
        return True

    def remove_user(self, user_id: int) -> None:
        self.users.pop(user_id, None)
        self.weaver_slots.pop(user_id, None)

    def _user(self, user_id: int) -> UserAuth:
        if user_id not in self.users:
            raise NotEnrolled(f"no user {user_id}")
        return self.users[user_id]

    def set_credential(self, user_id: int, kind: ModalityKind | str, factor: str,
                       weaver: bool = False) -> None:
        """Enroll (or change) the primary knowledge factor.

        Re-wrapping the CE key needs the old key, so this requires CE storage
        to be unlocked already.
        """
        kind = ModalityKind(kind)
        if kind not in KNOWLEDGE_FACTORS:
            raise ValueError(f"{kind.value} is not a knowledge factor")
        ua = self._user(user_id)
        if not ua.state.ce_unlocked:
            raise TierLockout("fallback-required", "CE storage must be unlocked to change credential")
        handle = self._handle(user_id, kind, factor)
        ua.weaver = weaver
        if weaver:
            self.weaver_slots[user_id] = handle
            ua.credential = (kind, b"")
        else:
            ua.credential = (kind, handle)
        ua.ce_verifier = digest(self.ce_key(user_id, factor))

    def enroll(self, user_id: int, modality: Modality) -> None:
        ua = self._user(user_id)
        if modality.tier is Tier.PRIMARY:
            raise ValueError("use set_credential for knowledge factors")
        if ua.credential is None:
            raise NotEnrolled("secondary and tertiary factors need a primary credential")
        ua.others.add(modality)

    def enrolled(self, user_id: int, modality: Modality) -> bool:
        ua = self._user(user_id)
        if modality.tier is Tier.PRIMARY:
            return ua.credential is not None and ua.credential[0] is modality.kind
        return modality in ua.others

    # -- gatekeeper ------------------------------------------------------

    def _stored_handle(self, user_id: int) -> Optional[bytes]:
        ua = self._user(user_id)
        if ua.credential is None:
            return None
        if ua.weaver:
            return self.weaver_slots.get(user_id)
        return ua.credential[1]

    def _issue(self, user_id: int, strength: TokenStrength, now: int) -> AuthToken:
        msg = f"{user_id}|{int(strength)}|{now}|{self.boot_id}".encode()
        return AuthToken(user_id, strength, now, self.boot_id, derive(self._token_key(), msg))

    def token_valid(self, token: AuthToken) -> bool:
        msg = f"{token.user_id}|{int(token.strength)}|{token.issued_at}|{token.boot_id}".encode()
        return (token.boot_id == self.boot_id
                and hmac.compare_digest(derive(self._token_key(), msg), token.mac))

    def gatekeeper_verify(self, user_id: int, factor: str, now: int) -> Optional[AuthToken]:
        """Check a knowledge factor; a pass yields a primary-strength token."""
        ua = self._user(user_id)
        stored = self._stored_handle(user_id)
        if ua.credential is None or stored is None:
            return None
        candidate = self._handle(user_id, ua.credential[0], factor)
        if not hmac.compare_digest(candidate, stored):
            return None
        return self._issue(user_id, TokenStrength.PRIMARY, now)

    # -- authentication --------------------------------------------------

    def ce_available(self, user_id: int) -> bool:
        ua = self.users.get(user_id)
        return ua is not None and ua.state.ce_unlocked

    def _unlock_ce(self, user_id: int, factor: str) -> bool:
        ua = self.users[user_id]
        if digest(self.ce_key(user_id, factor)) == ua.ce_verifier:
            ua.state.ce_unlocked = True
        return ua.state.ce_unlocked

    def _primary_success(self, user_id: int, factor: str, now: int) -> AuthResult:
        ua = self.users[user_id]
        was = ua.state.ce_unlocked
        ua.state.last_primary_success = now
        ua.state.last_any_success = now
        ua.state.boot_unlocked_once = True
        ua.state.current_unlock_tier = Tier.PRIMARY
        self._unlock_ce(user_id, factor)
        return AuthResult(True, Tier.PRIMARY, self._issue(user_id, TokenStrength.PRIMARY, now),
                          ce_unlocked_now=ua.state.ce_unlocked and not was)

    def authenticate(self, user_id: int, modality: Modality, now: int,
                     factor: Optional[str] = None, match: bool = True) -> AuthResult:
        """One unlock attempt. Failures leave the state untouched.

        Raises :class:`TierLockout` when a secondary or tertiary modality is
        not allowed to unlock right now.
        """
        if not self.enrolled(user_id, modality):
            raise NotEnrolled(f"{modality.label} not enrolled for user {user_id}")
        ua = self.users[user_id]
        if modality.tier is Tier.PRIMARY:
            if factor is None or self.gatekeeper_verify(user_id, factor, now) is None:
                return AuthResult(False, reason="wrong-credential")
            return self._primary_success(user_id, factor, now)

        st = ua.state
        if not st.boot_unlocked_once or st.last_primary_success is None:
            raise TierLockout("fallback-required", "primary authentication required since boot")
        window = self.config.secondary_window
        if modality.biometric_class in (BiometricClass.WEAK, BiometricClass.CONVENIENCE):
            window = self.config.weak_window
        if not now - st.last_primary_success < window:
            raise TierLockout("fallback-required", "primary authentication window expired")
        if modality.tier is Tier.TERTIARY:
            if st.last_any_success is None or now - st.last_any_success > self.config.tertiary_idle:
                raise TierLockout("fallback-required", "idle too long for tertiary unlock")
        if not match:
            return AuthResult(False, reason="no-match")
        st.last_any_success = now
        st.current_unlock_tier = modality.tier
        return AuthResult(True, modality.tier, self._issue(user_id, modality.strength, now))

    def lock_screen(self, user_id: int) -> None:
        self._user(user_id).state.current_unlock_tier = None

    def on_boot(self, now: int) -> list[int]:
        """New boot: tokens from earlier boots die and CE keys are evicted.

        Users without a lockscreen credential are unlocked with the empty
        factor, which counts as their primary authentication. Returns those
        user ids.
        """
        self.boot_id += 1
        auto = []
        for uid in sorted(self.users):
            ua = self.users[uid]
            ua.state = AuthState()
            if self.unlock_without_credential(uid, now):
                auto.append(uid)
        return auto

    # -- insider attack resistance ----------------------------------------

    def trh_update(self, firmware: bytes, signature: bytes, scheme, vendor_key: str,
                   credential: Optional[tuple[int, str]] = None, now: int = 0) -> bool:
        """Apply secure-element firmware; returns whether secrets survived.

        Unsigned firmware is rejected. Without a valid user credential the
        update wipes the secrets, so existing CE data becomes unrecoverable.
        """
        if not scheme.verify(vendor_key, firmware, signature):
            raise BadSignature("firmware is not signed by the secure-element vendor")
        ok = False
        if credential is not None:
            user_id, factor = credential
            ok = user_id in self.users and self.gatekeeper_verify(user_id, factor, now) is not None
        self.trh_firmware += 1
        if not ok:
            self.epoch += 1
            self.weaver_slots.clear()
            for ua in self.users.values():
                ua.state.ce_unlocked = False
        return ok

    # -- reset and serialization ----------------------------------------

    def wipe(self) -> None:
        """Factory reset: forget every enrollment and slot."""
        self.users.clear()
        self.weaver_slots.clear()

    def canonical(self) -> dict:
        return {
            "epoch": self.epoch,
            "trh_firmware": self.trh_firmware,
            "users": {str(u): self.users[u].canonical() for u in sorted(self.users)},
            "weaver_slots": sorted(str(u) for u in self.weaver_slots),
            "config": {
                "secondary_window": self.config.secondary_window,
                "weak_window": self.config.weak_window,
                "tertiary_idle": self.config.tertiary_idle,
            },
        }
