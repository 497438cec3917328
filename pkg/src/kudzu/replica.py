"""Event-driven replica: the Kudzu main loop and ReconstructAndNotarize.

A replica consumes timestamped events (message deliveries and timer
wake-ups) and returns outbound actions. All guards of the slot loop are
re-evaluated in a fixed order after every event until none fires.
"""
from __future__ import annotations

import hashlib
import random
import struct
from dataclasses import dataclass, field
from typing import Callable, Union

from .blocktree import CompleteBlockTree, ConsistencyFault, FinalizationState, LogEntry, accept_all
from .codec import encode
from .crypto import Kind, ThresholdScheme
from .pool import Pool, PoolEffect
from .types import (Block, BlockProposal, CertKind, CertObject, FinalVote, FirstVote, Message,
                    NotarVote, ProtocolParams, WireError, block_hash, body_for, decode_message,
                    encode_message, timeout_block, validate_certificate, validate_proposal_form,
                    validate_vote)

PayloadSource = Callable[[int, int], bytes]


def round_robin(n: int) -> Callable[[int], int]:
    return lambda v: (v - 1) % n + 1


def seeded_leaders(n: int, seed: int) -> Callable[[int], int]:
    def leader(v: int) -> int:
        h = hashlib.sha256(b"leader" + struct.pack("<qQ", seed, v)).digest()
        return int.from_bytes(h[:8], "little") % n + 1
    return leader


class RandomPayloads:
    """Deterministic pseudo-random payloads of a fixed size, keyed by (seed, slot)."""

    def __init__(self, size: int, seed: int = 0):
        self.size = size
        self.seed = seed

    def __call__(self, slot: int, proposer: int) -> bytes:
        return random.Random(f"{self.seed}:{slot}:{proposer}").randbytes(self.size)


# --- events and actions ------------------------------------------------------

@dataclass(frozen=True)
class Deliver:
    time: int
    sender: int
    data: bytes = field(repr=False)


@dataclass(frozen=True)
class Timer:
    time: int


InboundEvent = Union[Deliver, Timer]


@dataclass(frozen=True)
class Send:
    to: int
    data: bytes = field(repr=False)
    msg: Message = field(repr=False)


@dataclass(frozen=True)
class Broadcast:
    data: bytes = field(repr=False)
    msg: Message = field(repr=False)


@dataclass(frozen=True)
class Finalized:
    entries: tuple[LogEntry, ...]


@dataclass(frozen=True)
class Flag:
    replica: int
    reason: str


@dataclass(frozen=True)
class SetTimer:
    time: int


@dataclass(frozen=True)
class Observe:
    """Bookkeeping for auditors; has no protocol effect."""

    what: str
    slot: int
    info: dict = field(default_factory=dict)


OutboundAction = Union[Send, Broadcast, Finalized, Flag, SetTimer, Observe]


class Replica:
    def __init__(self, rid: int, params: ProtocolParams, scheme: ThresholdScheme, *,
                 delta_timeout: int, leader: Callable[[int], int] | None = None,
                 payload_source: PayloadSource | None = None, validity=accept_all,
                 max_slot: int | None = None):
        self.id = rid
        self.params = params
        self.scheme = scheme
        self.key = scheme.key(rid)
        self.delta_timeout = delta_timeout
        self.leader = leader or round_robin(params.n)
        self.payload_source = payload_source or RandomPayloads(256)
        self.max_slot = max_slot
        self.pool = Pool(params, scheme)
        self.tree = CompleteBlockTree(params, validity)
        self.final = FinalizationState()
        self.proposals: dict[int, list[BlockProposal]] = {}
        self.parent: Block | None = None  # None is genesis
        self.now = 0
        self.v = 0
        self.halted = False
        self._final_candidates: set[tuple[int, bytes, str]] = set()
        self._reset_slot()

    # -- slot bookkeeping -----------------------------------------------------

    def _reset_slot(self) -> None:
        self.t_start = self.now
        self.done = False
        self.proposed = False
        self.first_voted = False
        self.notarized: set[bytes] = set()
        self.second_look: set[bytes] = set()

    def _hash(self, block: Block) -> bytes:
        return block_hash(block, self.params.hash_name)

    def _enter(self, v: int, out: list) -> None:
        self.v = v
        self._reset_slot()
        out.append(SetTimer(self.t_start + self.delta_timeout))
        out.append(Observe("enter", v, {"time": self.now}))

    def _exit(self, reason: str, out: list, block: Block | None = None) -> None:
        self.done = True
        info = {"time": self.now, "reason": reason}
        if block is not None:
            info["block"] = self._hash(block).hex()
        out.append(Observe("exit", self.v, info))
        if self.max_slot is not None and self.v >= self.max_slot:
            self.halted = True
        else:
            self._enter(self.v + 1, out)

    def start(self, time: int = 0) -> list[OutboundAction]:
        self.now = time
        out: list[OutboundAction] = []
        self._enter(1, out)
        self._settle(out)
        return out

    # -- event handling -------------------------------------------------------

    def handle_event(self, event: InboundEvent) -> list[OutboundAction]:
        if event.time < self.now:
            raise ValueError("event timestamps must be non-decreasing")
        self.now = event.time
        out: list[OutboundAction] = []
        if isinstance(event, Deliver):
            self._on_message(event.sender, event.data, out)
        if self.v:
            self._settle(out)
        return out

    def _on_message(self, sender: int, data: bytes, out: list) -> None:
        try:
            msg = decode_message(data, self.params)
        except WireError as exc:
            out.append(Flag(sender, f"malformed: {exc}"))
            return
        if isinstance(msg, BlockProposal):
            self._on_proposal(sender, msg, out)
        elif isinstance(msg, CertObject):
            if not validate_certificate(msg, self.params, self.scheme):
                out.append(Flag(sender, "invalid certificate"))
                return
            self._apply(self.pool.add_certificate(msg), out)
        else:
            if not validate_vote(msg, self.params, self.scheme):
                out.append(Flag(sender, "invalid vote"))
                return
            self._apply(self.pool.add_vote(msg), out)
            block = msg.block
            if not block.is_timeout and self.tree.pending.get(self._hash(block)) == "fragments":
                self._tree_add(block, out)

    def _on_proposal(self, sender: int, prop: BlockProposal, out: list) -> None:
        if sender != self.leader(prop.slot):
            out.append(Flag(sender, "proposal from non-leader"))
            return
        if not validate_proposal_form(prop, self.id, self.params):
            out.append(Flag(sender, "malformed proposal"))
            return
        if prop.slot < self.v:
            return
        props = self.proposals.setdefault(prop.slot, [])
        if prop not in props:
            props.append(prop)

    def _apply(self, eff: PoolEffect, out: list) -> None:
        if eff.flagged is not None:
            out.append(Flag(eff.flagged, "exceeded vote cap"))
        for cert in eff.new_certificates:
            out.append(Broadcast(encode_message(cert), cert))
            h = self._hash(cert.block)
            out.append(Observe("cert", cert.slot, {
                "time": self.now, "kind": cert.kind.name, "block": h.hex(),
                "signers": list(cert.cert.signers)}))
            if cert.kind is CertKind.NOTAR:
                self._tree_add(cert.block, out)
            elif cert.kind is CertKind.FAST_FINAL:
                self._final_candidates.add((cert.slot, h, "fast"))
            elif cert.kind is CertKind.FINAL:
                self._final_candidates.add((cert.slot, h, "slow"))

    def _tree_add(self, block: Block, out: list) -> None:
        res = self.tree.try_add(block, self.pool)
        for b in res.added:
            parent = self.tree.nodes[self._hash(b)].parent
            out.append(Observe("tree_add", b.slot, {
                "time": self.now, "block": self._hash(b).hex(), "parent": parent.hex()}))
        if res.status.value == "rejected" and not res.added:
            out.append(Observe("tree_reject", block.slot, {
                "time": self.now, "block": self._hash(block).hex(), "reason": res.reason}))

    def _check_finalization(self, out: list) -> bool:
        progressed = False
        for cand in sorted(self._final_candidates):
            slot, h, kind = cand
            if h not in self.tree:
                continue
            self._final_candidates.discard(cand)
            try:
                entries = self.final.mark_finalized(self.tree, slot, h, kind, self.now)
            except ConsistencyFault as exc:
                out.append(Observe("fault", slot, {"time": self.now, "error": str(exc)}))
                raise
            out.append(Observe("explicit_final", slot, {"time": self.now, "block": h.hex(),
                                                         "kind": kind}))
            if entries:
                out.append(Finalized(tuple(entries)))
            progressed = True
        return progressed

    def _settle(self, out: list) -> None:
        while True:
            progressed = self._check_finalization(out)
            fired = False if self.halted else self._guards(out)
            if not (progressed or fired):
                return

    # -- signing helpers ------------------------------------------------------

    def _share(self, kind: Kind, block: Block):
        return self.scheme.sign_share(self.key, kind, body_for(block, self.params))

    def _notar_vote(self, block: Block, fragment) -> NotarVote:
        return NotarVote(block, self._share(Kind.NOTAR, block), fragment)

    def _broadcast(self, msg: Message, out: list) -> None:
        out.append(Broadcast(encode_message(msg), msg))

    # -- the slot loop ----------------------------------------------------------

    def _guards(self, out: list) -> bool:
        v = self.v
        fired = False

        blocks = self.tree.blocks_in_slot(v)
        if blocks:
            b = self.tree.tip_after_exit(v)
            self.parent = b
            if self.notarized <= {self._hash(b)}:
                self._broadcast(FinalVote(b, self._share(Kind.FINAL, b)), out)
            self._exit("block", out, b)
            return True

        if self.pool.timeout_cert(v) is not None:
            self._exit("timeout", out)
            return True

        if not self.proposed and self.leader(v) == self.id:
            self.proposed = True
            block, frags = self.make_proposal()
            out.append(Observe("propose", v, {"time": self.now, "block": self._hash(block).hex()}))
            for frag in frags:
                prop = BlockProposal(block, frag)
                out.append(Send(frag.index, encode_message(prop), prop))
            fired = True

        if not self.first_voted:
            prop = self._valid_proposal(v, out)
            if prop is not None:
                self.first_voted = True
                inner = self._notar_vote(prop.block, prop.fragment)
                self._broadcast(FirstVote(self._share(Kind.FIRST, prop.block), inner), out)
                self.notarized.add(self._hash(prop.block))
                fired = True

        t_block = timeout_block(v)
        t_hash = self._hash(t_block)
        if not self.first_voted and self.now >= self.t_start + self.delta_timeout:
            self.first_voted = True
            inner = self._notar_vote(t_block, None)
            self._broadcast(FirstVote(self._share(Kind.FIRST, t_block), inner), out)
            self.notarized.add(t_hash)
            fired = True

        if self.first_voted:
            for b in self.pool.many_votes(v):
                h = self._hash(b)
                if h not in self.second_look and self.tree.has_parent(b):
                    self.second_look.add(h)
                    self.reconstruct_and_notarize(v, b, out)
                    fired = True

        sp = self.pool.slot(v)
        if (self.first_voted and t_hash not in self.notarized
                and sp.all_votes() - sp.max_votes() >= self.params.d):
            self._broadcast(self._notar_vote(t_block, None), out)
            self.notarized.add(t_hash)
            fired = True

        return fired

    def reconstruct_and_notarize(self, v: int, block: Block, out: list) -> None:
        payload = self.tree.reconstruct(block, self.pool)
        if payload is False:
            raise AssertionError("second look without enough fragments")
        ok = payload is not None and self.tree.payload_valid(block, payload)
        h = self._hash(block)
        if ok:
            if h not in self.notarized:
                self._broadcast(self._notar_vote(block, self._own_fragment(block, payload)), out)
                self.notarized.add(h)
        else:
            t_block = timeout_block(v)
            t_hash = self._hash(t_block)
            if t_hash not in self.notarized:
                self._broadcast(self._notar_vote(t_block, None), out)
                self.notarized.add(t_hash)

    def _own_fragment(self, block: Block, payload: bytes):
        for prop in self.proposals.get(block.slot, ()):
            if prop.block == block:
                return prop.fragment
        _, frags = encode(self.params.codec, payload)
        return frags[self.id - 1]

    def make_proposal(self):
        payload = self.payload_source(self.v, self.id)
        tag, frags = encode(self.params.codec, payload)
        parent_hash = None if self.parent is None else self._hash(self.parent)
        return Block(self.v, tag, parent_hash), frags

    def validate_proposal(self, prop: BlockProposal) -> str:
        """``valid``, ``pending`` (parent or timeout certificates missing) or ``invalid``."""
        b = prop.block
        if b.slot != self.v or not validate_proposal_form(prop, self.id, self.params):
            return "invalid"
        node = self.tree.nodes.get(self.tree.parent_key(b))
        if node is None:
            return "pending"
        if node.slot >= b.slot:
            return "invalid"
        for s in range(node.slot + 1, b.slot):
            if self.pool.timeout_cert(s) is None:
                return "pending"
        return "valid"

    def _valid_proposal(self, v: int, out: list) -> BlockProposal | None:
        props = self.proposals.get(v)
        if not props:
            return None
        for prop in list(props):
            status = self.validate_proposal(prop)
            if status == "valid":
                return prop
            if status == "invalid":
                props.remove(prop)
                out.append(Flag(self.leader(v), "invalid proposal"))
        return None

    # -- introspection --------------------------------------------------------

    @property
    def finalized_log(self) -> list[LogEntry]:
        return self.final.finalized_log
