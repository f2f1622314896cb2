"""Build signed boot images and read/write image directories."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional

from apsm.boot.chain import BootChain, RollbackStore, chained_image
from apsm.boot.hashtree import DEFAULT_BLOCK_SIZE, build_hash_tree
from apsm.boot.vbmeta import (
    BootloaderStage,
    ChainDescriptor,
    Descriptor,
    HashDescriptor,
    HashtreeDescriptor,
    KeyId,
    KeyRole,
    VbMeta,
    encode_stage,
    encode_vbmeta,
)
from apsm.crypto import KeyedDigestScheme, SignatureScheme, digest

DEVICE_FILE = "device.json"
IMAGE_SUFFIX = ".img"


@dataclass(frozen=True)
class FixtureKeys:
    rom: KeyId = KeyId("oem-rom", KeyRole.ROM)
    bootloader: KeyId = KeyId("oem-bootloader", KeyRole.BOOTLOADER)
    vbmeta: KeyId = KeyId("oem-vbmeta", KeyRole.VBMETA)
    user_root: KeyId = KeyId("user-root", KeyRole.USER_ROOT)
    partition: KeyId = KeyId("oem-partition", KeyRole.PARTITION)
    platform: KeyId = KeyId("oem-platform", KeyRole.PLATFORM)
    attestation: str = "attestation-key"


DEFAULT_KEYS = FixtureKeys()


def default_partitions(os_version: int = 1, block_size: int = DEFAULT_BLOCK_SIZE,
                       system_blocks: int = 4, vendor_blocks: int = 2) -> dict[str, bytes]:
    """Deterministic read-only partition contents for a given OS version."""
    def fill(tag: str, n: int) -> bytes:
        seed = f"{tag}|os={os_version}".encode()
        out = b"".join(digest(seed + i.to_bytes(4, "big")) for i in range(-(-n * block_size // 32)))
        return out[:n * block_size]

    return {
        "boot": f"kernel os={os_version}".encode(),
        "system": fill("system", system_blocks),
        "vendor": fill("vendor", vendor_blocks),
    }


def _descriptor_and_image(name: str, data: bytes, block_size: int) -> tuple[Descriptor, bytes]:
    if len(data) <= block_size:
        return HashDescriptor(name, len(data), digest(data)), data
    padded = data.ljust(-(-len(data) // block_size) * block_size, b"\0")
    tree = build_hash_tree(padded, block_size)
    return HashtreeDescriptor(name, block_size, len(padded), tree.root), padded + tree.serialize()


def build_images(partitions: Mapping[str, bytes], scheme: SignatureScheme,
                 keys: FixtureKeys = DEFAULT_KEYS, *,
                 chained: Iterable[str] = ("vendor",),
                 rollback_index: int = 0,
                 chained_rollback_index: Optional[int] = None,
                 block_size: int = DEFAULT_BLOCK_SIZE,
                 vbmeta_key: Optional[str] = None) -> dict[str, bytes]:
    """Produce bootloader stages, vbmeta structs and partition images.

    ``vbmeta_key`` overrides the key signing the top vbmeta (for example the
    user root of trust); by default the OEM vbmeta key signs it.
    """
    chained = sorted(set(chained) & set(partitions))
    if chained_rollback_index is None:
        chained_rollback_index = rollback_index
    images: dict[str, bytes] = {
        "bootloader0": encode_stage(
            BootloaderStage("bootloader0", keys.rom.id, keys.bootloader.id), scheme),
        "bootloader1": encode_stage(
            BootloaderStage("bootloader1", keys.bootloader.id, keys.vbmeta.id), scheme),
    }
    top: list[Descriptor] = []
    for name in sorted(partitions):
        desc, img = _descriptor_and_image(name, partitions[name], block_size)
        images[name] = img
        if name in chained:
            location = 1 + chained.index(name)
            sub = VbMeta(keys.partition.id, chained_rollback_index, (desc,), location)
            images[chained_image(name)] = encode_vbmeta(sub, scheme)
            top.append(ChainDescriptor(name, keys.partition.id, location))
        else:
            top.append(desc)
    signer = vbmeta_key or keys.vbmeta.id
    images["vbmeta"] = encode_vbmeta(VbMeta(signer, rollback_index, tuple(top), 0), scheme)
    return images


def default_chain(keys: FixtureKeys = DEFAULT_KEYS, locked: bool = True) -> BootChain:
    return BootChain(keys.rom.id, locked=locked)


# ---------------------------------------------------------------------------
# image directories


@dataclass
class ImageDir:
    chain: BootChain
    images: dict[str, bytes]
    seed: int = 0
    attestation_key: str = DEFAULT_KEYS.attestation

    @property
    def scheme(self) -> KeyedDigestScheme:
        return KeyedDigestScheme(self.seed)


def write_image_dir(path: str | Path, d: ImageDir) -> None:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    meta = {
        "rom_key": d.chain.rom_key,
        "locked": d.chain.locked,
        "user_root_key": d.chain.user_root_key,
        "rollback": d.chain.rollback.canonical(),
        "read_only": list(d.chain.read_only),
        "seed": d.seed,
        "attestation_key": d.attestation_key,
    }
    (root / DEVICE_FILE).write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n",
                                    encoding="utf-8")
    for name, blob in sorted(d.images.items()):
        (root / f"{name}{IMAGE_SUFFIX}").write_bytes(blob)


def read_image_dir(path: str | Path) -> ImageDir:
    root = Path(path)
    meta = json.loads((root / DEVICE_FILE).read_text(encoding="utf-8"))
    chain = BootChain(
        meta["rom_key"],
        locked=bool(meta.get("locked", True)),
        user_root_key=meta.get("user_root_key"),
        rollback=RollbackStore({int(k): int(v) for k, v in meta.get("rollback", {}).items()}),
        read_only=tuple(meta.get("read_only", ("boot", "system", "vendor"))),
    )
    images = {p.name[:-len(IMAGE_SUFFIX)]: p.read_bytes()
              for p in sorted(root.glob(f"*{IMAGE_SUFFIX}"))}
    return ImageDir(chain, images, int(meta.get("seed", 0)),
                    meta.get("attestation_key", DEFAULT_KEYS.attestation))


def make_fixture(path: str | Path, seed: int = 0, os_version: int = 1,
                 locked: bool = True, rollback_index: int = 0) -> ImageDir:
    scheme = KeyedDigestScheme(seed)
    images = build_images(default_partitions(os_version), scheme, rollback_index=rollback_index)
    d = ImageDir(default_chain(locked=locked), images, seed)
    write_image_dir(path, d)
    return d
