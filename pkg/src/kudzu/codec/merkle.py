"""Domain-separated binary Merkle tree over indexed fragments."""
from __future__ import annotations

import hashlib
import struct

DIGEST_SIZE = 32
EMPTY_LEAF = bytes(DIGEST_SIZE)

_LEAF_TAG = b"leaf"
_NODE_TAG = b"node"


def hasher(name: str):
    h = hashlib.new(name)
    if h.digest_size != DIGEST_SIZE:
        raise ValueError(f"hash {name!r} has digest size {h.digest_size}, need {DIGEST_SIZE}")
    return lambda data: hashlib.new(name, data).digest()


def depth_for(n: int) -> int:
    """Path length for ``n`` leaves padded to the next power of two."""
    return max(n - 1, 0).bit_length()


def leaf_hash(index: int, data: bytes, hash_name: str = "sha256") -> bytes:
    return hashlib.new(hash_name, _LEAF_TAG + struct.pack("<H", index) + data).digest()


def node_hash(left: bytes, right: bytes, hash_name: str = "sha256") -> bytes:
    return hashlib.new(hash_name, _NODE_TAG + left + right).digest()


def build_levels(leaves: list[bytes], hash_name: str = "sha256") -> list[list[bytes]]:
    """All tree levels, leaf layer first, padded with ``EMPTY_LEAF``."""
    width = 1 << depth_for(len(leaves))
    level = list(leaves) + [EMPTY_LEAF] * (width - len(leaves))
    levels = [level]
    while len(level) > 1:
        level = [node_hash(level[i], level[i + 1], hash_name) for i in range(0, len(level), 2)]
        levels.append(level)
    return levels


def root_of(levels: list[list[bytes]]) -> bytes:
    return levels[-1][0]


def path_for(levels: list[list[bytes]], position: int) -> tuple[bytes, ...]:
    """Sibling digests from the leaf at zero-based ``position`` up to the root."""
    path = []
    for level in levels[:-1]:
        path.append(level[position ^ 1])
        position >>= 1
    return tuple(path)


def verify_path(root: bytes, position: int, leaf: bytes, path: tuple[bytes, ...],
                hash_name: str = "sha256") -> bool:
    # side of each sibling is the corresponding bit of the position
    node = leaf
    for sibling in path:
        if len(sibling) != DIGEST_SIZE:
            return False
        if position & 1:
            node = node_hash(sibling, node, hash_name)
        else:
            node = node_hash(node, sibling, hash_name)
        position >>= 1
    return position == 0 and node == root
