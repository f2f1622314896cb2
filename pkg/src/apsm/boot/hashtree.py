"""dm-verity style hash trees.

Level 0 hash blocks hold the packed digests of the data blocks; every
level above holds the packed digests of the hash blocks below, until a
single hash block remains. The root is the digest of that top block and is
the only value that has to be trusted (it is carried in signed VBMeta).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from apsm.crypto import DIGEST_SIZE, digest
from apsm.errors import IndexOutOfRange, MalformedImage

DEFAULT_BLOCK_SIZE = 4096


class BlockStatus(str, Enum):
    OK = "ok"
    CORRUPT = "corrupt"


@dataclass(frozen=True)
class HashTree:
    block_size: int
    leaf_count: int
    levels: tuple[tuple[bytes, ...], ...]
    root: bytes

    @property
    def fanout(self) -> int:
        return self.block_size // DIGEST_SIZE

    def serialize(self) -> bytes:
        return b"".join(b"".join(level) for level in self.levels)

    def is_consistent(self) -> bool:
        """Every stored node matches the digest of the level below it."""
        if digest(self.levels[-1][0]) != self.root or len(self.levels[-1]) != 1:
            return False
        for lower, upper in zip(self.levels, self.levels[1:]):
            if _pack([digest(b) for b in lower], self.block_size) != list(upper):
                return False
        return True


def _pack(digests: list[bytes], block_size: int) -> list[bytes]:
    fanout = block_size // DIGEST_SIZE
    blocks = []
    for i in range(0, len(digests), fanout):
        blk = b"".join(digests[i:i + fanout])
        blocks.append(blk.ljust(block_size, b"\0"))
    return blocks


def level_sizes(leaf_count: int, block_size: int) -> list[int]:
    """Number of hash blocks at each stored level, bottom first."""
    fanout = block_size // DIGEST_SIZE
    if fanout < 2:
        raise ValueError(f"block size {block_size} gives fan-out {fanout} < 2")
    if leaf_count < 1:
        raise ValueError("hash tree needs at least one data block")
    sizes = []
    n = leaf_count
    while True:
        n = -(-n // fanout)
        sizes.append(n)
        if n == 1:
            return sizes


def split_blocks(data: bytes, block_size: int) -> list[bytes]:
    if len(data) % block_size:
        raise MalformedImage(f"data size {len(data)} is not a multiple of {block_size}")
    return [data[i:i + block_size] for i in range(0, len(data), block_size)]


def build_hash_tree(data: bytes, block_size: int = DEFAULT_BLOCK_SIZE) -> HashTree:
    """Build the tree over ``data``, zero-padded to a whole number of blocks."""
    if not data:
        raise ValueError("cannot build a hash tree over empty data")
    padded = data.ljust(-(-len(data) // block_size) * block_size, b"\0")
    leaves = [digest(b) for b in split_blocks(padded, block_size)]
    levels = []
    current = leaves
    while True:
        blocks = _pack(current, block_size)
        levels.append(tuple(blocks))
        if len(blocks) == 1:
            break
        current = [digest(b) for b in blocks]
    return HashTree(block_size, len(leaves), tuple(levels), digest(levels[-1][0]))


def parse_hash_tree(raw: bytes, leaf_count: int, block_size: int, root: bytes) -> HashTree:
    """Rebuild a tree from its stored bytes; ``root`` comes from signed metadata."""
    sizes = level_sizes(leaf_count, block_size)
    if len(raw) != sum(sizes) * block_size:
        raise MalformedImage(f"hash tree is {len(raw)} bytes, expected {sum(sizes) * block_size}")
    levels, pos = [], 0
    for n in sizes:
        level = tuple(raw[pos + i * block_size: pos + (i + 1) * block_size] for i in range(n))
        levels.append(level)
        pos += n * block_size
    return HashTree(block_size, leaf_count, tuple(levels), root)


def verify_block(partition: bytes, block_index: int, tree: HashTree) -> BlockStatus:
    """Check one data block against the trusted root. Pure."""
    if not 0 <= block_index < tree.leaf_count:
        raise IndexOutOfRange(f"block {block_index} outside 0..{tree.leaf_count - 1}")
    bs = tree.block_size
    block = partition[block_index * bs:(block_index + 1) * bs]
    if len(block) != bs:
        return BlockStatus.CORRUPT
    fanout = tree.fanout
    node = digest(block)
    pos = block_index
    for level in tree.levels:
        holder = level[pos // fanout]
        off = (pos % fanout) * DIGEST_SIZE
        if holder[off:off + DIGEST_SIZE] != node:
            return BlockStatus.CORRUPT
        node = digest(holder)
        pos //= fanout
    return BlockStatus.OK if node == tree.root else BlockStatus.CORRUPT


def partition_verifies(partition: bytes, tree: HashTree) -> bool:
    """Whole-partition check in one bottom-up pass: every stored node and
    the root must equal the tree recomputed from the data."""
    if len(partition) != tree.leaf_count * tree.block_size:
        return False
    current = [digest(b) for b in split_blocks(partition, tree.block_size)]
    for level in tree.levels:
        if _pack(current, tree.block_size) != list(level):
            return False
        current = [digest(b) for b in level]
    return len(current) == 1 and current[0] == tree.root


def verify_partition(partition: bytes, tree: HashTree) -> list[int]:
    """Indices of corrupt blocks (empty list means the partition verifies)."""
    if len(partition) != tree.leaf_count * tree.block_size:
        return list(range(tree.leaf_count))
    return [i for i in range(tree.leaf_count)
            if verify_block(partition, i, tree) is BlockStatus.CORRUPT]
