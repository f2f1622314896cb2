"""Keys, VBMeta and bootloader-stage wire formats.

All integers are big-endian. Strings are UTF-8 with a u16 length prefix.
See docs/format.md for the byte-exact layout.

VBMeta::

    magic "AVBM" | u32 version | u32 rollback_location | u64 rollback_index
    | str signer | u32 descriptor_count | descriptors... | u16 sig_len | sig

Descriptors start with a u8 tag:

    1 hashtree: str name | u32 block_size | u64 data_size | 32B root
    2 hash:     str name | u64 size | 32B digest
    3 chain:    str name | str key | u32 rollback_location

Bootloader stage::

    magic "ABLS" | u32 version | str name | str signer | str next_key
    | u32 payload_len | payload | u16 sig_len | sig

The signature covers every byte before ``sig_len``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import Enum
from typing import Union

from apsm.crypto import DIGEST_SIZE, SignatureScheme, digest
from apsm.errors import MalformedImage

VBMETA_MAGIC = b"AVBM"
STAGE_MAGIC = b"ABLS"
FORMAT_VERSION = 1

TAG_HASHTREE = 1
TAG_HASH = 2
TAG_CHAIN = 3


class KeyRole(str, Enum):
    ROM = "K_A"
    BOOTLOADER = "K_B"
    VBMETA = "K_C"
    USER_ROOT = "K_C'"
    PARTITION = "K_D"
    APK = "K_E"
    PLATFORM = "platform-signing"


@dataclass(frozen=True)
class KeyId:
    id: str
    role: KeyRole

    def __str__(self) -> str:
        return self.id


@dataclass(frozen=True)
class HashtreeDescriptor:
    partition: str
    block_size: int
    data_size: int
    root: bytes


@dataclass(frozen=True)
class HashDescriptor:
    partition: str
    size: int
    digest: bytes


@dataclass(frozen=True)
class ChainDescriptor:
    partition: str
    key: str
    rollback_location: int


Descriptor = Union[HashtreeDescriptor, HashDescriptor, ChainDescriptor]


@dataclass(frozen=True)
class VbMeta:
    signed_by: str
    rollback_index: int
    descriptors: tuple[Descriptor, ...]
    rollback_location: int = 0

    def __post_init__(self):
        if self.rollback_index < 0:
            raise ValueError("rollback index must be non-negative")


@dataclass(frozen=True)
class BootloaderStage:
    name: str
    signed_by: str
    next_key: str
    payload: bytes = b""


class _Writer:
    def __init__(self):
        self.parts: list[bytes] = []

    def u8(self, v): self.parts.append(struct.pack(">B", v))
    def u16(self, v): self.parts.append(struct.pack(">H", v))
    def u32(self, v): self.parts.append(struct.pack(">I", v))
    def u64(self, v): self.parts.append(struct.pack(">Q", v))
    def raw(self, b): self.parts.append(bytes(b))

    def str(self, s: str):
        b = s.encode("utf-8")
        self.u16(len(b))
        self.raw(b)

    def bytes(self) -> bytes:
        return b"".join(self.parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.data):
            raise MalformedImage(f"truncated at offset {self.pos}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u8(self): return struct.unpack(">B", self.take(1))[0]
    def u16(self): return struct.unpack(">H", self.take(2))[0]
    def u32(self): return struct.unpack(">I", self.take(4))[0]
    def u64(self): return struct.unpack(">Q", self.take(8))[0]

    def str(self) -> str:
        try:
            return self.take(self.u16()).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedImage(str(exc)) from None

    def done(self) -> None:
        if self.pos != len(self.data):
            raise MalformedImage(f"{len(self.data) - self.pos} trailing bytes")


def _encode_descriptor(w: _Writer, d: Descriptor) -> None:
    if isinstance(d, HashtreeDescriptor):
        w.u8(TAG_HASHTREE)
        w.str(d.partition)
        w.u32(d.block_size)
        w.u64(d.data_size)
        w.raw(d.root)
    elif isinstance(d, HashDescriptor):
        w.u8(TAG_HASH)
        w.str(d.partition)
        w.u64(d.size)
        w.raw(d.digest)
    elif isinstance(d, ChainDescriptor):
        w.u8(TAG_CHAIN)
        w.str(d.partition)
        w.str(d.key)
        w.u32(d.rollback_location)
    else:
        raise TypeError(d)


def _sign_and_close(w: _Writer, scheme: SignatureScheme, key: str) -> bytes:
    body = w.bytes()
    sig = scheme.sign(key, body)
    tail = _Writer()
    tail.u16(len(sig))
    tail.raw(sig)
    return body + tail.bytes()


def encode_vbmeta(vb: VbMeta, scheme: SignatureScheme, signing_key: str | None = None) -> bytes:
    """Serialize and sign. ``signing_key`` defaults to ``vb.signed_by``; a
    different key produces a blob whose signature will not verify."""
    w = _Writer()
    w.raw(VBMETA_MAGIC)
    w.u32(FORMAT_VERSION)
    w.u32(vb.rollback_location)
    w.u64(vb.rollback_index)
    w.str(vb.signed_by)
    w.u32(len(vb.descriptors))
    for d in vb.descriptors:
        _encode_descriptor(w, d)
    return _sign_and_close(w, scheme, signing_key or vb.signed_by)


@dataclass(frozen=True)
class Signed:
    body: bytes
    signature: bytes

    def verifies(self, scheme: SignatureScheme, key: str) -> bool:
        return scheme.verify(key, self.body, self.signature)


def _split_signature(r: _Reader) -> Signed:
    body_end = r.pos
    sig = r.take(r.u16())
    r.done()
    return Signed(r.data[:body_end], sig)


def decode_vbmeta(blob: bytes) -> tuple[VbMeta, Signed]:
    r = _Reader(blob)
    if r.take(4) != VBMETA_MAGIC:
        raise MalformedImage("bad vbmeta magic")
    if r.u32() != FORMAT_VERSION:
        raise MalformedImage("unsupported vbmeta version")
    location = r.u32()
    index = r.u64()
    signer = r.str()
    count = r.u32()
    descs: list[Descriptor] = []
    for _ in range(count):
        tag = r.u8()
        if tag == TAG_HASHTREE:
            descs.append(HashtreeDescriptor(r.str(), r.u32(), r.u64(), r.take(DIGEST_SIZE)))
        elif tag == TAG_HASH:
            descs.append(HashDescriptor(r.str(), r.u64(), r.take(DIGEST_SIZE)))
        elif tag == TAG_CHAIN:
            descs.append(ChainDescriptor(r.str(), r.str(), r.u32()))
        else:
            raise MalformedImage(f"unknown descriptor tag {tag}")
    signed = _split_signature(r)
    return VbMeta(signer, index, tuple(descs), location), signed


def encode_stage(stage: BootloaderStage, scheme: SignatureScheme,
                 signing_key: str | None = None) -> bytes:
    w = _Writer()
    w.raw(STAGE_MAGIC)
    w.u32(FORMAT_VERSION)
    w.str(stage.name)
    w.str(stage.signed_by)
    w.str(stage.next_key)
    w.u32(len(stage.payload))
    w.raw(stage.payload)
    return _sign_and_close(w, scheme, signing_key or stage.signed_by)


def decode_stage(blob: bytes) -> tuple[BootloaderStage, Signed]:
    r = _Reader(blob)
    if r.take(4) != STAGE_MAGIC:
        raise MalformedImage("bad bootloader magic")
    if r.u32() != FORMAT_VERSION:
        raise MalformedImage("unsupported bootloader version")
    name, signer, next_key = r.str(), r.str(), r.str()
    payload = r.take(r.u32())
    signed = _split_signature(r)
    return BootloaderStage(name, signer, next_key, payload), signed


def vbmeta_digest(blobs: list[bytes]) -> bytes:
    """Top-level digest over every VBMeta struct, in traversal order."""
    return digest(b"".join(blobs))
