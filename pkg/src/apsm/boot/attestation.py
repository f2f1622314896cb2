"""Key attestation records binding boot state to a hardware-held key."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Optional

from apsm.boot.chain import BootColor, BootResult
from apsm.crypto import SignatureScheme
from apsm.errors import KeystoreUnavailable


@dataclass(frozen=True)
class AttestationRecord:
    deviceLocked: bool
    verifiedBootState: str
    verifiedBootHash: str
    challenge: str
    attestation_key: str
    signature: str = ""

    def body(self) -> bytes:
        fields = asdict(self)
        del fields["signature"]
        return json.dumps(fields, sort_keys=True, separators=(",", ":")).encode()

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "AttestationRecord":
        return cls(**json.loads(text))


def attest_result(result: Optional[BootResult], key: str, scheme: SignatureScheme,
                  challenge: str = "") -> AttestationRecord:
    """Sign the boot facts of ``result`` with the attestation key.

    The keystore only runs on a booted OS, so there is nothing to attest
    before the first boot or after a RED boot.
    """
    if result is None or not result.booted:
        raise KeystoreUnavailable("keystore is not running")
    unsigned = AttestationRecord(
        deviceLocked=result.state.device_locked,
        verifiedBootState=result.color.value,
        verifiedBootHash=result.vbmeta_digest.hex() if result.vbmeta_digest else "",
        challenge=challenge,
        attestation_key=key,
    )
    sig = scheme.sign(key, unsigned.body())
    return AttestationRecord(**{**asdict(unsigned), "signature": sig.hex()})


@dataclass(frozen=True)
class AttestationCheck:
    ok: bool
    reasons: tuple[str, ...] = ()


def verify_attestation(record: AttestationRecord, scheme: SignatureScheme, trusted_key: str,
                       expected_vbmeta_digest: Optional[bytes] = None,
                       challenge: Optional[str] = None,
                       require_green: bool = False) -> AttestationCheck:
    """Relying-party check of an attestation record."""
    reasons = []
    if record.attestation_key != trusted_key:
        reasons.append("untrusted-key")
    try:
        sig = bytes.fromhex(record.signature)
    except ValueError:
        sig = b""
    if not scheme.verify(trusted_key, record.body(), sig):
        reasons.append("bad-signature")
    if expected_vbmeta_digest is not None and record.verifiedBootHash != expected_vbmeta_digest.hex():
        reasons.append("vbmeta-digest-mismatch")
    if challenge is not None and record.challenge != challenge:
        reasons.append("challenge-mismatch")
    if require_green and (record.verifiedBootState != BootColor.GREEN.value or not record.deviceLocked):
        reasons.append("not-green-locked")
    return AttestationCheck(not reasons, tuple(reasons))
