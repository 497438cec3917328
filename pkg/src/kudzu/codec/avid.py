"""Erasure-coded, Merkle-committed dispersal of block payloads.

A payload is padded to a multiple of ``d`` bytes and striped so that byte
``j*d + k`` becomes symbol ``j`` of data fragment ``k``. Fragments are the
evaluations of a degree < d polynomial at points ``0..n-1`` (data fragments
are the first ``d`` points, so the code is systematic). Any ``d`` fragments
determine the polynomial and therefore every other fragment.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import gf256, merkle


@dataclass(frozen=True)
class CodecParams:
    n: int
    d: int
    hash_name: str = "sha256"

    def __post_init__(self):
        if self.n < 1 or self.d < 1 or self.d > self.n:
            raise ValueError(f"need 1 <= d <= n, got n={self.n}, d={self.d}")
        if self.n > 256:
            raise ValueError("GF(256) Reed-Solomon supports at most 256 fragments")
        merkle.hasher(self.hash_name)

    @property
    def depth(self) -> int:
        return merkle.depth_for(self.n)


@dataclass(frozen=True)
class Tag:
    payload_len: int
    root: bytes

    def to_bytes(self) -> bytes:
        return struct.pack("<Q", self.payload_len) + self.root

    @classmethod
    def from_bytes(cls, data: bytes) -> "Tag":
        if len(data) != 8 + merkle.DIGEST_SIZE:
            raise ValueError("bad tag length")
        (beta,) = struct.unpack_from("<Q", data)
        return cls(beta, bytes(data[8:]))


@dataclass(frozen=True)
class CertifiedFragment:
    index: int  # 1-based position
    data: bytes = field(repr=False)
    path: tuple[bytes, ...] = field(repr=False)

    def to_bytes(self) -> bytes:
        return struct.pack("<HI", self.index, len(self.data)) + self.data + b"".join(self.path)

    @classmethod
    def from_bytes(cls, data: bytes) -> "CertifiedFragment":
        if len(data) < 6:
            raise ValueError("truncated fragment")
        index, length = struct.unpack_from("<HI", data)
        body = data[6:]
        if len(body) < length or (len(body) - length) % merkle.DIGEST_SIZE:
            raise ValueError("bad fragment framing")
        rest = body[length:]
        path = tuple(bytes(rest[i:i + merkle.DIGEST_SIZE])
                     for i in range(0, len(rest), merkle.DIGEST_SIZE))
        return cls(index, bytes(body[:length]), path)


def fragment_size(n: int, d: int, payload_len: int) -> int:
    return -(-payload_len // d)


def _points(indices) -> tuple[int, ...]:
    return tuple(i - 1 for i in indices)


def _stripes(params: CodecParams, payload: bytes) -> np.ndarray:
    width = fragment_size(params.n, params.d, len(payload))
    padded = payload + bytes(width * params.d - len(payload))
    return np.frombuffer(padded, dtype=np.uint8).reshape(width, params.d).T.copy()


def _all_fragments(params: CodecParams, data_rows: np.ndarray) -> list[bytes]:
    d, n = params.d, params.n
    frags = [data_rows[k].tobytes() for k in range(d)]
    if n > d:
        matrix = gf256.interpolation_matrix(tuple(range(d)), tuple(range(d, n)))
        parity = gf256.apply_matrix(matrix, data_rows)
        frags.extend(parity[k].tobytes() for k in range(n - d))
    return frags


def _commit(params: CodecParams, frags: list[bytes]):
    leaves = [merkle.leaf_hash(i + 1, f, params.hash_name) for i, f in enumerate(frags)]
    return merkle.build_levels(leaves, params.hash_name)


def encode(params: CodecParams, payload: bytes) -> tuple[Tag, list[CertifiedFragment]]:
    """Split ``payload`` into ``n`` certified fragments under one tag."""
    payload = bytes(payload)
    frags = _all_fragments(params, _stripes(params, payload))
    levels = _commit(params, frags)
    tag = Tag(len(payload), merkle.root_of(levels))
    return tag, [CertifiedFragment(i + 1, f, merkle.path_for(levels, i))
                 for i, f in enumerate(frags)]


def verify_fragment(params: CodecParams, tag: Tag, frag: CertifiedFragment) -> bool:
    """True iff ``frag`` is a certified fragment for ``tag`` at ``frag.index``."""
    try:
        if not 1 <= frag.index <= params.n:
            return False
        if len(tag.root) != merkle.DIGEST_SIZE or tag.payload_len < 0:
            return False
        if len(frag.data) != fragment_size(params.n, params.d, tag.payload_len):
            return False
        if len(frag.path) != params.depth:
            return False
        leaf = merkle.leaf_hash(frag.index, frag.data, params.hash_name)
        return merkle.verify_path(tag.root, frag.index - 1, leaf, frag.path, params.hash_name)
    except (TypeError, AttributeError, ValueError, struct.error):
        return False


def reconstruct(params: CodecParams, tag: Tag, frags) -> bytes:
    """Interpolate the padded-then-truncated payload from exactly ``d`` fragments.

    No commitment check; see :func:`decode`.
    """
    frags = sorted(frags, key=lambda fr: fr.index)
    if len(frags) != params.d:
        raise ValueError(f"decode needs exactly d={params.d} fragments, got {len(frags)}")
    if len({fr.index for fr in frags}) != len(frags):
        raise ValueError("fragment indices must be distinct")
    width = fragment_size(params.n, params.d, tag.payload_len)
    rows = np.zeros((params.d, width), dtype=np.uint8)
    for k, fr in enumerate(frags):
        rows[k] = np.frombuffer(fr.data, dtype=np.uint8)
    src = _points(fr.index for fr in frags)
    if src != tuple(range(params.d)):
        rows = gf256.apply_matrix(gf256.interpolation_matrix(src, tuple(range(params.d))), rows)
    return rows.T.tobytes()[:tag.payload_len]


def decode(params: CodecParams, tag: Tag, frags) -> bytes | None:
    """Recover the payload committed by ``tag`` or ``None`` when the tag is malformed.

    Callers pass exactly ``d`` fragments that already verify against ``tag``;
    anything else is a contract violation and raises ``ValueError``.
    """
    frags = list(frags)
    for fr in frags:
        if not verify_fragment(params, tag, fr):
            raise ValueError(f"fragment {fr.index} does not verify against tag")
    payload = reconstruct(params, tag, frags)
    retag, _ = encode(params, payload)
    if retag != tag:
        return None
    return payload
