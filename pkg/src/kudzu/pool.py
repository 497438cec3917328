"""Per-slot vote and certificate pool with misbehaviour-bounded admission."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .codec import CertifiedFragment
from .crypto import ThresholdScheme
from .types import (Block, CertKind, CertObject, FinalVote, FirstVote, NotarVote, ProtocolParams,
                    block_hash)

log = logging.getLogger(__name__)

#: per-signer, per-slot admission caps
MAX_FIRST = 1
MAX_TIMEOUT = 1
MAX_FINAL = 1
MAX_NOTAR = 3
#: per-slot certificate caps
MAX_NOTAR_CERTS = 5


@dataclass
class PoolEffect:
    new_certificates: list[CertObject] = field(default_factory=list)
    stored: bool = False
    flagged: int | None = None

    def extend(self, other: "PoolEffect") -> None:
        self.new_certificates.extend(other.new_certificates)


class SlotPool:
    """Votes and certificates for one slot."""

    def __init__(self, slot: int, params: ProtocolParams, scheme: ThresholdScheme):
        self.slot = slot
        self.params = params
        self.scheme = scheme
        self.blocks: dict[bytes, Block] = {}
        self.first_votes: dict[int, FirstVote] = {}
        self.first_by_block: dict[bytes, dict[int, FirstVote]] = {}
        self.notar_votes: dict[bytes, dict[int, NotarVote]] = {}
        self.final_votes: dict[bytes, dict[int, FinalVote]] = {}
        self._notar_blocks: dict[int, set[bytes]] = {}
        self._timeout_voters: set[int] = set()
        self._final_voters: dict[int, bytes] = {}
        self.notar_certs: dict[bytes, CertObject] = {}
        self.timeout_cert: CertObject | None = None
        self.fast_cert: CertObject | None = None
        self.final_cert: CertObject | None = None
        self.flagged: set[int] = set()
        self.rejected_certs: list[CertObject] = []
        self._timeout_hash = block_hash(Block(slot, None), params.hash_name)
        self._timeout_first = 0
        self._max_first = 0

    # -- helpers ------------------------------------------------------------

    def _hash(self, block: Block) -> bytes:
        h = block_hash(block, self.params.hash_name)
        self.blocks.setdefault(h, block)
        return h

    def _flag(self, signer: int, why: str) -> PoolEffect:
        log.debug("slot %d: flagging replica %d (%s)", self.slot, signer, why)
        self.flagged.add(signer)
        return PoolEffect(flagged=signer)

    def _notar_admissible(self, vote: NotarVote, h: bytes) -> bool | None:
        """True to store, None if duplicate, False if it breaks a cap."""
        if vote.signer in self.notar_votes.get(h, ()):
            return None
        if vote.block.is_timeout:
            return vote.signer not in self._timeout_voters
        return len(self._notar_blocks.get(vote.signer, ())) < MAX_NOTAR

    def _store_notar(self, vote: NotarVote, h: bytes) -> None:
        self.notar_votes.setdefault(h, {})[vote.signer] = vote
        if vote.block.is_timeout:
            self._timeout_voters.add(vote.signer)
        else:
            self._notar_blocks.setdefault(vote.signer, set()).add(h)

    # -- admission ----------------------------------------------------------

    def add_vote(self, vote) -> PoolEffect:
        if isinstance(vote, FirstVote):
            return self._add_first(vote)
        if isinstance(vote, NotarVote):
            h = self._hash(vote.block)
            ok = self._notar_admissible(vote, h)
            if ok is None:
                return PoolEffect()
            if not ok:
                return self._flag(vote.signer, "notarization vote cap")
            self._store_notar(vote, h)
            eff = PoolEffect(stored=True)
            eff.extend(self._maybe_notar_cert(vote.block, h))
            return eff
        if isinstance(vote, FinalVote):
            h = self._hash(vote.block)
            prev = self._final_voters.get(vote.signer)
            if prev is not None:
                return PoolEffect() if prev == h else self._flag(vote.signer, "second final vote")
            self._final_voters[vote.signer] = h
            self.final_votes.setdefault(h, {})[vote.signer] = vote
            eff = PoolEffect(stored=True)
            eff.extend(self._maybe_final_cert(vote.block, h))
            return eff
        raise TypeError(f"not a vote: {vote!r}")

    def _add_first(self, vote: FirstVote) -> PoolEffect:
        h = self._hash(vote.block)
        prev = self.first_votes.get(vote.signer)
        if prev is not None:
            if prev.block == vote.block:
                return PoolEffect()
            return self._flag(vote.signer, "conflicting first vote")
        inner_ok = self._notar_admissible(vote.inner, h)
        if inner_ok is False:
            return self._flag(vote.signer, "first vote exceeds notarization cap")
        self.first_votes[vote.signer] = vote
        bucket = self.first_by_block.setdefault(h, {})
        bucket[vote.signer] = vote
        if vote.block.is_timeout:
            self._timeout_first += 1
        else:
            self._max_first = max(self._max_first, len(bucket))
        eff = PoolEffect(stored=True)
        if inner_ok:
            self._store_notar(vote.inner, h)
            eff.extend(self._maybe_notar_cert(vote.block, h))
        eff.extend(self._maybe_fast_cert(vote.block, h))
        return eff

    # -- certificate assembly -------------------------------------------------

    def _assemble(self, kind: CertKind, block: Block, shares) -> CertObject | None:
        cert = self.scheme.assemble_certificate(shares, kind.threshold(self.params))
        return None if cert is None else CertObject(kind, block, cert)

    def _maybe_notar_cert(self, block: Block, h: bytes) -> PoolEffect:
        votes = self.notar_votes.get(h, {})
        if len(votes) < self.params.notar_threshold:
            return PoolEffect()
        if block.is_timeout:
            if self.timeout_cert is not None:
                return PoolEffect()
            kind = CertKind.TIMEOUT
        else:
            if h in self.notar_certs or len(self.notar_certs) >= MAX_NOTAR_CERTS:
                return PoolEffect()
            kind = CertKind.NOTAR
        obj = self._assemble(kind, block, [v.share for v in votes.values()])
        return self._store_cert(obj, h) if obj else PoolEffect()

    def _maybe_fast_cert(self, block: Block, h: bytes) -> PoolEffect:
        if block.is_timeout or self.fast_cert is not None:
            return PoolEffect()
        votes = self.first_by_block.get(h, {})
        if len(votes) < self.params.fast_threshold:
            return PoolEffect()
        obj = self._assemble(CertKind.FAST_FINAL, block, [v.first_share for v in votes.values()])
        return self._store_cert(obj, h) if obj else PoolEffect()

    def _maybe_final_cert(self, block: Block, h: bytes) -> PoolEffect:
        if self.final_cert is not None:
            return PoolEffect()
        votes = self.final_votes.get(h, {})
        if len(votes) < self.params.notar_threshold:
            return PoolEffect()
        obj = self._assemble(CertKind.FINAL, block, [v.share for v in votes.values()])
        return self._store_cert(obj, h) if obj else PoolEffect()

    def _store_cert(self, obj: CertObject, h: bytes) -> PoolEffect:
        if obj.kind is CertKind.NOTAR:
            self.notar_certs[h] = obj
        elif obj.kind is CertKind.TIMEOUT:
            self.timeout_cert = obj
        elif obj.kind is CertKind.FAST_FINAL:
            self.fast_cert = obj
        else:
            self.final_cert = obj
        return PoolEffect([obj], stored=True)

    def has_certificate(self, obj: CertObject) -> bool:
        h = block_hash(obj.block, self.params.hash_name)
        return self._equivalent(obj.kind, h) is not None

    def _equivalent(self, kind: CertKind, h: bytes) -> CertObject | None:
        if kind is CertKind.NOTAR:
            return self.notar_certs.get(h)
        held = {CertKind.TIMEOUT: self.timeout_cert, CertKind.FAST_FINAL: self.fast_cert,
                CertKind.FINAL: self.final_cert}[kind]
        if held is not None and block_hash(held.block, self.params.hash_name) == h:
            return held
        return None

    def add_certificate(self, obj: CertObject) -> PoolEffect:
        """Store a verified certificate; the effect echoes it iff it was new."""
        h = self._hash(obj.block)
        if self._equivalent(obj.kind, h) is not None:
            return PoolEffect()
        full = {CertKind.NOTAR: len(self.notar_certs) >= MAX_NOTAR_CERTS,
                CertKind.TIMEOUT: self.timeout_cert is not None,
                CertKind.FAST_FINAL: self.fast_cert is not None,
                CertKind.FINAL: self.final_cert is not None}[obj.kind]
        if full:
            log.warning("slot %d: %s certificate cap reached, rejecting", self.slot, obj.kind.name)
            self.rejected_certs.append(obj)
            return PoolEffect()
        return self._store_cert(obj, h)

    # -- queries ------------------------------------------------------------

    def all_votes(self) -> int:
        return len(self.first_votes)

    def max_votes(self) -> int:
        return self._max_first

    def many_votes(self) -> list[Block]:
        """Non-timeout blocks with at least f+p+1 first votes, ordered by hash."""
        d = self.params.d
        return [self.blocks[h] for h in sorted(self.first_by_block)
                if h != self._timeout_hash and len(self.first_by_block[h]) >= d]

    def fragments_for(self, block: Block) -> dict[int, CertifiedFragment]:
        if block.is_timeout:
            return {}
        h = block_hash(block, self.params.hash_name)
        return {s: v.fragment for s, v in self.notar_votes.get(h, {}).items()}

    def certificates(self) -> list[CertObject]:
        out = list(self.notar_certs.values())
        out += [c for c in (self.timeout_cert, self.fast_cert, self.final_cert) if c is not None]
        return out

    def snapshot(self) -> dict:
        """Order-independent summary used to compare pool states."""
        return {
            "first": {s: block_hash(v.block, self.params.hash_name) for s, v in self.first_votes.items()},
            "notar": {h: frozenset(v) for h, v in self.notar_votes.items()},
            "final": {h: frozenset(v) for h, v in self.final_votes.items()},
            "certs": frozenset((c.kind, block_hash(c.block, self.params.hash_name))
                               for c in self.certificates()),
        }


class Pool:
    """Slot-indexed pool owned by one replica."""

    def __init__(self, params: ProtocolParams, scheme: ThresholdScheme):
        self.params = params
        self.scheme = scheme
        self.slots: dict[int, SlotPool] = {}

    def slot(self, v: int) -> SlotPool:
        sp = self.slots.get(v)
        if sp is None:
            sp = self.slots[v] = SlotPool(v, self.params, self.scheme)
        return sp

    def add_vote(self, vote) -> PoolEffect:
        return self.slot(vote.slot).add_vote(vote)

    def add_certificate(self, obj: CertObject) -> PoolEffect:
        return self.slot(obj.slot).add_certificate(obj)

    def all_votes(self, v: int) -> int:
        return self.slot(v).all_votes()

    def max_votes(self, v: int) -> int:
        return self.slot(v).max_votes()

    def many_votes(self, v: int) -> list[Block]:
        return self.slot(v).many_votes()

    def fragments_for(self, block: Block) -> dict[int, CertifiedFragment]:
        return self.slot(block.slot).fragments_for(block)

    def notar_cert(self, block: Block) -> CertObject | None:
        return self.slot(block.slot).notar_certs.get(block_hash(block, self.params.hash_name))

    def timeout_cert(self, v: int) -> CertObject | None:
        sp = self.slots.get(v)
        return None if sp is None else sp.timeout_cert

    @property
    def flagged(self) -> set[int]:
        out: set[int] = set()
        for sp in self.slots.values():
            out |= sp.flagged
        return out
