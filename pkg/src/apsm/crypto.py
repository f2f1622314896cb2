"""Digest and signature primitives.

Signatures are structural, not cryptographic: the default scheme is a keyed
digest (HMAC-SHA256) whose secret is derived from the key id and a seed.
Anything that needs signing takes a ``SignatureScheme`` so a real
asymmetric scheme can be dropped in.
"""

from __future__ import annotations

import hashlib
import hmac
from typing import Protocol, runtime_checkable

DIGEST_ALGORITHM = "sha256"
DIGEST_SIZE = 32


def digest(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def hexdigest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


@runtime_checkable
class SignatureScheme(Protocol):
    def sign(self, key_id: str, data: bytes) -> bytes: ...

    def verify(self, key_id: str, data: bytes, signature: bytes) -> bool: ...


class KeyedDigestScheme:
    """Deterministic toy signatures: ``HMAC(secret(key_id), data)``."""

    def __init__(self, seed: int = 0):
        self.seed = seed

    def _secret(self, key_id: str) -> bytes:
        return digest(f"apsm-key|{self.seed}|{key_id}".encode())

    def sign(self, key_id: str, data: bytes) -> bytes:
        return hmac.new(self._secret(key_id), data, hashlib.sha256).digest()

    def verify(self, key_id: str, data: bytes, signature: bytes) -> bool:
        return hmac.compare_digest(self.sign(key_id, data), signature)

    def __repr__(self) -> str:
        return f"KeyedDigestScheme(seed={self.seed})"


def derive(secret: bytes, *parts: str | bytes) -> bytes:
    """Opaque two-or-more-input derivation (HMAC-SHA256 over joined parts)."""
    msg = b"|".join(p.encode() if isinstance(p, str) else p for p in parts)
    return hmac.new(secret, msg, hashlib.sha256).digest()
