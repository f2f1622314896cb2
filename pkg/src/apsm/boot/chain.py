"""Boot-chain verification, rollback protection and boot-state colors."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Optional

from apsm.boot.hashtree import parse_hash_tree, partition_verifies
from apsm.boot.vbmeta import (
    ChainDescriptor,
    HashDescriptor,
    HashtreeDescriptor,
    VbMeta,
    decode_stage,
    decode_vbmeta,
    vbmeta_digest,
)
from apsm.crypto import SignatureScheme, digest
from apsm.errors import MalformedImage

BOOTLOADER_STAGES = ("bootloader0", "bootloader1")
TOP_VBMETA = "vbmeta"
OS_PARTITION = "boot"
DEFAULT_READ_ONLY = ("boot", "system", "vendor")
MAX_CHAIN_DEPTH = 4


def chained_image(partition: str) -> str:
    return f"vbmeta_{partition}"


class BootColor(str, Enum):
    GREEN = "GREEN"
    YELLOW = "YELLOW"
    ORANGE = "ORANGE"
    RED = "RED"


class RootOfTrust(str, Enum):
    OEM = "oem"
    USER = "user"


@dataclass(frozen=True)
class BootState:
    color: BootColor
    device_locked: bool

    def __post_init__(self):
        if self.color is BootColor.ORANGE and self.device_locked:
            raise ValueError("ORANGE requires an unlocked device")
        if self.color in (BootColor.GREEN, BootColor.YELLOW) and not self.device_locked:
            raise ValueError(f"{self.color.value} requires a locked device")


def boot_color(locked: bool, root: RootOfTrust, verify_ok: bool, os_found: bool) -> BootColor:
    """The boot-state table.

    No OS means there is nothing to boot, whatever the lock state. An
    unlocked device boots anything with a warning. A locked device boots only
    a verified chain, flagged YELLOW when the chain ends in a user key.
    """
    if not os_found:
        return BootColor.RED
    if not locked:
        return BootColor.ORANGE
    if not verify_ok:
        return BootColor.RED
    return BootColor.YELLOW if root is RootOfTrust.USER else BootColor.GREEN


# ---------------------------------------------------------------------------
# rollback


class RollbackVerdict(str, Enum):
    OK = "ok"
    REJECTED = "rejected"


@dataclass
class RollbackStore:
    """Tamper-proof monotonic counters, one per rollback location."""

    counters: dict[int, int] = field(default_factory=dict)

    def get(self, location: int) -> int:
        return self.counters.get(location, 0)

    def raise_to(self, location: int, index: int) -> None:
        self.counters[location] = max(self.get(location), index)

    def canonical(self) -> dict:
        return {str(k): v for k, v in sorted(self.counters.items())}

    def copy(self) -> "RollbackStore":
        return RollbackStore(dict(self.counters))


def check_rollback(store: RollbackStore, vbmeta: VbMeta,
                   location: Optional[int] = None) -> RollbackVerdict:
    loc = vbmeta.rollback_location if location is None else location
    if vbmeta.rollback_index >= store.get(loc):
        return RollbackVerdict.OK
    return RollbackVerdict.REJECTED


# ---------------------------------------------------------------------------
# device configuration


@dataclass
class BootChain:
    """Persistent boot configuration of one device.

    ``rom_key`` is fused at manufacture and cannot be reassigned.
    """

    rom_key: str
    locked: bool = True
    user_root_key: Optional[str] = None
    rollback: RollbackStore = field(default_factory=RollbackStore)
    read_only: tuple[str, ...] = DEFAULT_READ_ONLY
    frp: Optional[str] = None

    def __setattr__(self, name, value):
        if name == "rom_key" and "rom_key" in self.__dict__:
            raise AttributeError("the ROM key cannot be changed")
        super().__setattr__(name, value)

    def canonical(self) -> dict:
        return {
            "rom_key": self.rom_key,
            "locked": self.locked,
            "user_root_key": self.user_root_key,
            "rollback": self.rollback.canonical(),
            "read_only": list(self.read_only),
            "frp": self.frp,
        }

    def copy(self) -> "BootChain":
        return BootChain(self.rom_key, self.locked, self.user_root_key,
                         self.rollback.copy(), self.read_only, self.frp)


@dataclass(frozen=True)
class BootResult:
    state: BootState
    reasons: tuple[str, ...]
    root: Optional[RootOfTrust]
    verify_ok: bool
    os_found: bool
    vbmeta_digest: Optional[bytes]
    rollback_indices: tuple[tuple[int, int], ...] = ()

    @property
    def color(self) -> BootColor:
        return self.state.color

    @property
    def booted(self) -> bool:
        return self.color is not BootColor.RED


class _Walk:
    def __init__(self, images: Mapping[str, bytes], scheme: SignatureScheme):
        self.images = images
        self.scheme = scheme
        self.reasons: list[str] = []
        self.blobs: list[bytes] = []
        self.covered: dict[str, int] = {}
        self.indices: dict[int, int] = {}

    def fail(self, reason: str) -> None:
        self.reasons.append(reason)


def _verify_bootloaders(chain: BootChain, w: _Walk) -> Optional[str]:
    """Walk ROM -> stage0 -> stage1; return the vbmeta key stage1 trusts."""
    key = chain.rom_key
    for name in BOOTLOADER_STAGES:
        blob = w.images.get(name)
        if blob is None:
            w.fail(f"missing:{name}")
            return None
        try:
            stage, signed = decode_stage(blob)
        except MalformedImage:
            w.fail(f"malformed:{name}")
            return None
        if not signed.verifies(w.scheme, key):
            w.fail(f"signature:{name}")
            return None
        key = stage.next_key
    return key


def _verify_descriptors(vb: VbMeta, w: _Walk, depth: int) -> None:
    for d in vb.descriptors:
        if isinstance(d, ChainDescriptor):
            _verify_chained(d, w, depth)
            continue
        w.covered[d.partition] = w.covered.get(d.partition, 0) + 1
        img = w.images.get(d.partition)
        if img is None:
            w.fail(f"missing:{d.partition}")
        elif isinstance(d, HashDescriptor):
            if len(img) != d.size or digest(img) != d.digest:
                w.fail(f"hash-mismatch:{d.partition}")
        elif isinstance(d, HashtreeDescriptor):
            _verify_hashtree(d, img, w)


def _verify_hashtree(d: HashtreeDescriptor, img: bytes, w: _Walk) -> None:
    if d.block_size < 1 or d.data_size % d.block_size or d.data_size == 0:
        w.fail(f"malformed:{d.partition}")
        return
    data, raw_tree = img[:d.data_size], img[d.data_size:]
    try:
        tree = parse_hash_tree(raw_tree, d.data_size // d.block_size, d.block_size, d.root)
    except (MalformedImage, ValueError):
        w.fail(f"malformed:{d.partition}")
        return
    if not partition_verifies(data, tree):
        w.fail(f"dm-verity-corruption:{d.partition}")


def _verify_chained(d: ChainDescriptor, w: _Walk, depth: int) -> None:
    name = chained_image(d.partition)
    if depth >= MAX_CHAIN_DEPTH:
        w.fail(f"chain-too-deep:{name}")
        return
    blob = w.images.get(name)
    if blob is None:
        w.fail(f"missing:{name}")
        return
    try:
        vb, signed = decode_vbmeta(blob)
    except MalformedImage:
        w.fail(f"malformed:{name}")
        return
    w.blobs.append(blob)
    if not signed.verifies(w.scheme, d.key):
        w.fail(f"signature:{name}")
    if vb.rollback_location != d.rollback_location:
        w.fail(f"rollback-location:{name}")
    _note_index(w, vb, d.rollback_location, name)
    _verify_descriptors(vb, w, depth + 1)


def _note_index(w: _Walk, vb: VbMeta, location: int, name: str) -> None:
    if location in w.indices:
        w.fail(f"rollback-location-reused:{name}")
    w.indices[location] = vb.rollback_index


def verify_boot_chain(chain: BootChain, images: Mapping[str, bytes],
                      scheme: SignatureScheme) -> BootResult:
    """Verify every stage, descriptor and rollback index, then pick a color.

    Pure: rollback counters are not touched here (see :func:`commit_boot`).
    Failures never raise; they show up as reasons and as a RED state on a
    locked device.
    """
    w = _Walk(images, scheme)
    vb_key = _verify_bootloaders(chain, w)

    top_blob = images.get(TOP_VBMETA)
    top: Optional[VbMeta] = None
    if top_blob is None:
        w.fail(f"missing:{TOP_VBMETA}")
    else:
        try:
            top, signed = decode_vbmeta(top_blob)
        except MalformedImage:
            w.fail(f"malformed:{TOP_VBMETA}")
    os_found = top is not None and OS_PARTITION in images

    root: Optional[RootOfTrust] = None
    if top is not None:
        w.blobs.append(top_blob)
        if vb_key is not None and signed.verifies(scheme, vb_key):
            root = RootOfTrust.OEM
        elif chain.user_root_key and signed.verifies(scheme, chain.user_root_key):
            root = RootOfTrust.USER
        else:
            w.fail(f"signature:{TOP_VBMETA}")
        _note_index(w, top, top.rollback_location, TOP_VBMETA)
        _verify_descriptors(top, w, 0)
        for part in chain.read_only:
            n = w.covered.get(part, 0)
            if n == 0:
                w.fail(f"not-covered:{part}")
            elif n > 1:
                w.fail(f"covered-twice:{part}")

    if chain.locked:
        for loc, idx in sorted(w.indices.items()):
            if idx < chain.rollback.get(loc):
                w.fail(f"rollback:{loc}:{idx}<{chain.rollback.get(loc)}")

    verify_ok = not w.reasons
    if not os_found and "no-valid-os" not in w.reasons:
        w.fail("no-valid-os")
    color = boot_color(chain.locked, root or RootOfTrust.OEM, verify_ok, os_found)
    return BootResult(
        state=BootState(color, chain.locked),
        reasons=tuple(w.reasons),
        root=root,
        verify_ok=verify_ok,
        os_found=os_found,
        vbmeta_digest=vbmeta_digest(w.blobs) if w.blobs else None,
        rollback_indices=tuple(sorted(w.indices.items())),
    )


def commit_boot(chain: BootChain, result: BootResult) -> None:
    """After a successful verified boot, raise the stored counters."""
    if result.color in (BootColor.GREEN, BootColor.YELLOW):
        for loc, idx in result.rollback_indices:
            chain.rollback.raise_to(loc, idx)
