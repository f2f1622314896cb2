"""APK signing-key rotation (proof-of-rotation lineages)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from apsm.core.consent import Verdict
from apsm.crypto import SignatureScheme
from apsm.errors import MalformedLineage


def link_message(prev: str, new: str) -> bytes:
    return f"apsm-por|{prev}|{new}".encode()


@dataclass(frozen=True)
class LineageLink:
    key: str
    # signature by the previous key over link_message(prev, key); empty for the root
    signature: bytes = b""


@dataclass(frozen=True)
class SigningLineage:
    links: tuple[LineageLink, ...]

    @property
    def keys(self) -> tuple[str, ...]:
        return tuple(link.key for link in self.links)

    def validate_shape(self) -> None:
        if not self.links:
            raise MalformedLineage("empty lineage")
        if len(set(self.keys)) != len(self.keys):
            raise MalformedLineage("a key appears twice in the lineage")

    def verifies(self, scheme: SignatureScheme) -> bool:
        """Every link after the first is signed by its predecessor."""
        self.validate_shape()
        for prev, link in zip(self.links, self.links[1:]):
            if not scheme.verify(prev.key, link_message(prev.key, link.key), link.signature):
                return False
        return True

    def canonical(self) -> list:
        return [[link.key, link.signature.hex()] for link in self.links]


def make_lineage(keys: Sequence[str], scheme: SignatureScheme) -> SigningLineage:
    links = [LineageLink(keys[0])]
    for prev, new in zip(keys, keys[1:]):
        links.append(LineageLink(new, scheme.sign(prev, link_message(prev, new))))
    return SigningLineage(tuple(links))


def verify_apk_update(installed_key: str, installed_lineage: Optional[SigningLineage],
                      candidate_key: str, candidate_lineage: Optional[SigningLineage],
                      scheme: SignatureScheme) -> Verdict:
    """Allow an update signed by the same key, or by a key the installed key
    delegated to through a lineage whose every link verifies."""
    if candidate_lineage is not None:
        candidate_lineage.validate_shape()
        if candidate_lineage.keys[-1] != candidate_key:
            raise MalformedLineage("lineage does not end in the signing key")
    if installed_lineage is not None:
        installed_lineage.validate_shape()
    if candidate_key == installed_key:
        return Verdict.ALLOW
    if candidate_lineage is None or installed_key not in candidate_lineage.keys[:-1]:
        return Verdict.DENY
    return Verdict.ALLOW if candidate_lineage.verifies(scheme) else Verdict.DENY
