"""Protocol objects, their canonical wire encoding and validity predicates."""
from __future__ import annotations

import enum
import hashlib
import struct
import warnings
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Union

from .codec import CertifiedFragment, CodecParams, Tag, verify_fragment
from .codec.merkle import DIGEST_SIZE
from .crypto import Certificate, Kind, MessageBody, SignShare, ThresholdScheme

GENESIS_HASH = bytes(DIGEST_SIZE)


class ParameterError(ValueError):
    pass


def check_resilience(n: int, f: int, p: int, strict_upper: bool = False) -> None:
    """Enforce ``n >= 3f + 2p + 1``; the upper bound ``n < 3(f+p+1)`` warns unless strict."""
    if f < 1 or p < 0:
        raise ParameterError(f"need f >= 1 and p >= 0, got f={f}, p={p}")
    if n < 3 * f + 2 * p + 1:
        raise ParameterError(f"n={n} < 3f+2p+1={3 * f + 2 * p + 1}")
    if n >= 3 * (f + p + 1):
        msg = f"n={n} >= 3(f+p+1)={3 * (f + p + 1)}; per-slot bounds are not guaranteed"
        if strict_upper:
            raise ParameterError(msg)
        warnings.warn(msg, stacklevel=2)


@dataclass(frozen=True)
class ProtocolParams:
    n: int
    f: int
    p: int
    instance: str = "kudzu"
    hash_name: str = "sha256"

    @property
    def notar_threshold(self) -> int:
        return self.n - self.f - self.p

    @property
    def fast_threshold(self) -> int:
        return self.n - self.p

    @property
    def d(self) -> int:
        return self.f + self.p + 1

    @cached_property
    def codec(self) -> CodecParams:
        return CodecParams(self.n, self.d, self.hash_name)


@dataclass(frozen=True)
class Block:
    slot: int
    tag: Tag | None
    parent_hash: bytes | None = None

    def __post_init__(self):
        if self.slot < 1:
            raise ValueError("block slots start at 1")
        if self.tag is None and self.parent_hash is not None:
            raise ValueError("a block without a tag must be the timeout block")
        object.__setattr__(self, "_hash", hash((self.slot, self.tag, self.parent_hash)))

    def __hash__(self) -> int:
        # blocks are hashed constantly as cache keys; the fields are immutable
        return self._hash

    @property
    def is_timeout(self) -> bool:
        return self.tag is None


def timeout_block(slot: int) -> Block:
    return Block(slot, None, None)


def encode_block(block: Block) -> bytes:
    out = struct.pack("<Q", block.slot)
    out += b"\x00" if block.tag is None else b"\x01" + block.tag.to_bytes()
    out += b"\x00" if block.parent_hash is None else b"\x01" + block.parent_hash
    return out


@lru_cache(maxsize=1 << 16)
def block_hash(block: Block, hash_name: str = "sha256") -> bytes:
    return hashlib.new(hash_name, b"block" + encode_block(block)).digest()


def body_for(block: Block, params: ProtocolParams) -> MessageBody:
    target = None if block.is_timeout else block_hash(block, params.hash_name)
    return MessageBody(params.instance, block.slot, target)


@dataclass(frozen=True)
class BlockProposal:
    block: Block
    fragment: CertifiedFragment

    @property
    def slot(self) -> int:
        return self.block.slot


@dataclass(frozen=True)
class NotarVote:
    block: Block
    share: SignShare
    fragment: CertifiedFragment | None = None

    @property
    def signer(self) -> int:
        return self.share.signer

    @property
    def slot(self) -> int:
        return self.block.slot


@dataclass(frozen=True)
class FirstVote:
    first_share: SignShare
    inner: NotarVote

    @property
    def block(self) -> Block:
        return self.inner.block

    @property
    def signer(self) -> int:
        return self.first_share.signer

    @property
    def slot(self) -> int:
        return self.inner.block.slot


@dataclass(frozen=True)
class FinalVote:
    block: Block
    share: SignShare

    @property
    def signer(self) -> int:
        return self.share.signer

    @property
    def slot(self) -> int:
        return self.block.slot


class CertKind(enum.IntEnum):
    NOTAR = 1
    TIMEOUT = 2
    FAST_FINAL = 3
    FINAL = 4

    @property
    def share_kind(self) -> Kind:
        return {CertKind.NOTAR: Kind.NOTAR, CertKind.TIMEOUT: Kind.NOTAR,
                CertKind.FAST_FINAL: Kind.FIRST, CertKind.FINAL: Kind.FINAL}[self]

    def threshold(self, params: ProtocolParams) -> int:
        return params.fast_threshold if self is CertKind.FAST_FINAL else params.notar_threshold


@dataclass(frozen=True)
class CertObject:
    kind: CertKind
    block: Block
    cert: Certificate = field(repr=False)

    @property
    def slot(self) -> int:
        return self.block.slot


Vote = Union[NotarVote, FirstVote, FinalVote]
Message = Union[BlockProposal, NotarVote, FirstVote, FinalVote, CertObject]


# --- wire format -----------------------------------------------------------

class WireError(ValueError):
    pass


_PROPOSAL, _NOTAR, _FIRST, _FINAL, _CERT = 1, 2, 3, 4, 5


def _share_bytes(share: SignShare) -> bytes:
    return struct.pack("<HH", share.signer, len(share.share)) + share.share


def _fragment_bytes(frag: CertifiedFragment) -> bytes:
    raw = frag.to_bytes()
    return struct.pack("<I", len(raw)) + raw


def _notar_body(vote: NotarVote) -> bytes:
    out = encode_block(vote.block) + _share_bytes(vote.share)
    if vote.fragment is None:
        return out + b"\x00"
    return out + b"\x01" + _fragment_bytes(vote.fragment)


def encode_message(msg: Message) -> bytes:
    if isinstance(msg, BlockProposal):
        return bytes([_PROPOSAL]) + encode_block(msg.block) + _fragment_bytes(msg.fragment)
    if isinstance(msg, NotarVote):
        return bytes([_NOTAR]) + _notar_body(msg)
    if isinstance(msg, FirstVote):
        return bytes([_FIRST]) + _share_bytes(msg.first_share) + _notar_body(msg.inner)
    if isinstance(msg, FinalVote):
        return bytes([_FINAL]) + encode_block(msg.block) + _share_bytes(msg.share)
    if isinstance(msg, CertObject):
        c = msg.cert
        out = bytes([_CERT, int(msg.kind)]) + encode_block(msg.block)
        out += struct.pack("<HH", c.threshold, len(c.signers))
        for s, sig in zip(c.signers, c.proof):
            out += struct.pack("<HH", s, len(sig)) + sig
        return out
    raise TypeError(f"not a protocol message: {msg!r}")


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, k: int) -> bytes:
        if k < 0 or self.pos + k > len(self.data):
            raise WireError("truncated message")
        out = self.data[self.pos:self.pos + k]
        self.pos += k
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def marker(self) -> bool:
        (m,) = self.unpack("<B")
        if m > 1:
            raise WireError("bad presence marker")
        return bool(m)

    def block(self) -> Block:
        (slot,) = self.unpack("<Q")
        tag = Tag.from_bytes(self.take(8 + DIGEST_SIZE)) if self.marker() else None
        parent = self.take(DIGEST_SIZE) if self.marker() else None
        try:
            return Block(slot, tag, parent)
        except ValueError as exc:
            raise WireError(str(exc)) from None

    def share(self, kind: Kind, body: MessageBody) -> SignShare:
        signer, length = self.unpack("<HH")
        return SignShare(signer, kind, body, self.take(length))

    def fragment(self) -> CertifiedFragment:
        (length,) = self.unpack("<I")
        try:
            return CertifiedFragment.from_bytes(self.take(length))
        except ValueError as exc:
            raise WireError(str(exc)) from None

    def notar(self, params: ProtocolParams) -> NotarVote:
        block = self.block()
        share = self.share(Kind.NOTAR, body_for(block, params))
        frag = self.fragment() if self.marker() else None
        return NotarVote(block, share, frag)

    def done(self) -> None:
        if self.pos != len(self.data):
            raise WireError("trailing bytes")


@lru_cache(maxsize=1 << 15)
def decode_message(data: bytes, params: ProtocolParams) -> Message:
    """Parse wire bytes; raises ``WireError`` on any malformation."""
    r = _Reader(data)
    (tag,) = r.unpack("<B")
    if tag == _PROPOSAL:
        msg = BlockProposal(r.block(), r.fragment())
    elif tag == _NOTAR:
        msg = r.notar(params)
    elif tag == _FIRST:
        signer, length = r.unpack("<HH")
        sig = r.take(length)
        inner = r.notar(params)
        msg = FirstVote(SignShare(signer, Kind.FIRST, body_for(inner.block, params), sig), inner)
    elif tag == _FINAL:
        block = r.block()
        msg = FinalVote(block, r.share(Kind.FINAL, body_for(block, params)))
    elif tag == _CERT:
        (kind,) = r.unpack("<B")
        try:
            ckind = CertKind(kind)
        except ValueError:
            raise WireError("unknown certificate kind") from None
        block = r.block()
        threshold, count = r.unpack("<HH")
        signers, proof = [], []
        for _ in range(count):
            s, length = r.unpack("<HH")
            signers.append(s)
            proof.append(r.take(length))
        cert = Certificate(ckind.share_kind, body_for(block, params), threshold,
                           tuple(signers), tuple(proof))
        msg = CertObject(ckind, block, cert)
    else:
        raise WireError(f"unknown message type {tag}")
    r.done()
    return msg


# --- validity --------------------------------------------------------------

def _valid_share(share: SignShare, kind: Kind, block: Block, params: ProtocolParams,
                 scheme: ThresholdScheme) -> bool:
    return (share.kind == kind and share.body == body_for(block, params)
            and 1 <= share.signer <= params.n and scheme.verify_share(share))


def _valid_notar(vote: NotarVote, params: ProtocolParams, scheme: ThresholdScheme) -> bool:
    if not _valid_share(vote.share, Kind.NOTAR, vote.block, params, scheme):
        return False
    if vote.block.is_timeout:
        return vote.fragment is None
    frag = vote.fragment
    return (frag is not None and frag.index == vote.signer
            and verify_fragment(params.codec, vote.block.tag, frag))


@lru_cache(maxsize=1 << 15)
def validate_vote(vote, params: ProtocolParams, scheme: ThresholdScheme) -> bool:
    """Every validity clause for notarization, first and finalization votes."""
    if isinstance(vote, NotarVote):
        return _valid_notar(vote, params, scheme)
    if isinstance(vote, FirstVote):
        return (vote.first_share.signer == vote.inner.signer
                and _valid_share(vote.first_share, Kind.FIRST, vote.inner.block, params, scheme)
                and _valid_notar(vote.inner, params, scheme))
    if isinstance(vote, FinalVote):
        return (not vote.block.is_timeout
                and _valid_share(vote.share, Kind.FINAL, vote.block, params, scheme))
    return False


@lru_cache(maxsize=1 << 14)
def validate_certificate(obj: CertObject, params: ProtocolParams, scheme: ThresholdScheme) -> bool:
    if not isinstance(obj, CertObject):
        return False
    if (obj.kind is CertKind.TIMEOUT) != obj.block.is_timeout:
        return False
    return scheme.verify_certificate(obj.cert, obj.kind.share_kind, body_for(obj.block, params),
                                     obj.kind.threshold(params))


def validate_proposal_form(prop: BlockProposal, recipient: int, params: ProtocolParams) -> bool:
    """Structural checks: a non-timeout block and a fragment certified at ``recipient``."""
    b = prop.block
    return (not b.is_timeout and prop.fragment.index == recipient
            and verify_fragment(params.codec, b.tag, prop.fragment))
