"""Complete block tree: notarized, reconstructed, payload-valid blocks rooted at genesis."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable

from .codec import decode
from .pool import Pool
from .types import GENESIS_HASH, Block, ProtocolParams, block_hash

#: validity_predicate(payloads from genesis to the parent, candidate payload)
ValidityPredicate = Callable[[list[bytes], bytes], bool]

MAX_BLOCKS_PER_SLOT = 5


def accept_all(path: list[bytes], payload: bytes) -> bool:
    return True


class ConsistencyFault(RuntimeError):
    """Two different blocks finalized for one slot, or a finalized fork."""


class Status(enum.Enum):
    ADDED = "added"
    PENDING = "pending"
    REJECTED = "rejected"


@dataclass
class AddResult:
    status: Status
    reason: str = ""
    added: list[Block] = field(default_factory=list)


@dataclass
class Node:
    block: Block | None
    payload: bytes
    parent: bytes | None
    slot: int


class CompleteBlockTree:
    def __init__(self, params: ProtocolParams, validity: ValidityPredicate = accept_all):
        self.params = params
        self.validity = validity
        self.nodes: dict[bytes, Node] = {GENESIS_HASH: Node(None, b"", None, 0)}
        self.children: dict[bytes, list[bytes]] = {}
        self.by_slot: dict[int, list[bytes]] = {}
        self.pending: dict[bytes, str] = {}
        self.rejected: dict[bytes, str] = {}
        self._waiting_parent: dict[bytes, set[bytes]] = {}
        self._candidates: dict[bytes, Block] = {}
        self._decoded: dict[bytes, bytes | None] = {}

    def hash(self, block: Block) -> bytes:
        return block_hash(block, self.params.hash_name)

    def parent_key(self, block: Block) -> bytes:
        return GENESIS_HASH if block.parent_hash is None else block.parent_hash

    def __contains__(self, h: bytes) -> bool:
        return h in self.nodes

    def has_parent(self, block: Block) -> bool:
        return self.parent_key(block) in self.nodes

    def blocks_in_slot(self, slot: int) -> list[Block]:
        return [self.nodes[h].block for h in self.by_slot.get(slot, [])]

    def path_payloads(self, h: bytes) -> list[bytes]:
        """Payloads from genesis (exclusive) down to the block with hash ``h``."""
        out = []
        while h != GENESIS_HASH:
            node = self.nodes[h]
            out.append(node.payload)
            h = node.parent
        out.reverse()
        return out

    def is_ancestor(self, anc: bytes, h: bytes) -> bool:
        while h is not None:
            if h == anc:
                return True
            h = self.nodes[h].parent if h in self.nodes else None
        return False

    def reconstruct(self, block: Block, pool: Pool) -> bytes | None | bool:
        """Decoded payload, ``None`` for an undecodable tag, ``False`` if fragments are short."""
        h = self.hash(block)
        if h in self._decoded:
            return self._decoded[h]
        frags = pool.fragments_for(block)
        if len(frags) < self.params.d:
            return False
        chosen = [frags[i] for i in sorted(frags)[:self.params.d]]
        result = decode(self.params.codec, block.tag, chosen)
        self._decoded[h] = result
        return result

    def payload_valid(self, block: Block, payload: bytes) -> bool:
        if self.validity is accept_all:
            return True  # skip walking the ancestor path
        return self.validity(self.path_payloads(self.parent_key(block)), payload)

    def try_add(self, block: Block, pool: Pool) -> AddResult:
        """Admit ``block`` if notarized, parented, decodable and valid; cascade to waiting children."""
        if block.is_timeout:
            raise ValueError("timeout blocks never enter the tree")
        h = self.hash(block)
        if h in self.nodes:
            return AddResult(Status.ADDED)
        if h in self.rejected:
            return AddResult(Status.REJECTED, self.rejected[h])
        result = self._try_one(block, h, pool)
        if result.status is Status.ADDED:
            queue = [h]
            while queue:
                parent = queue.pop()
                for child_h in sorted(self._waiting_parent.pop(parent, ())):
                    child = self._candidates.get(child_h)
                    if child is not None and self._try_one(child, child_h, pool).status is Status.ADDED:
                        result.added.append(child)
                        queue.append(child_h)
        return result

    def _try_one(self, block: Block, h: bytes, pool: Pool) -> AddResult:
        self._candidates[h] = block
        if pool.notar_cert(block) is None:
            return self._pend(h, "certificate")
        pk = self.parent_key(block)
        if pk not in self.nodes:
            self._waiting_parent.setdefault(pk, set()).add(h)
            return self._pend(h, "parent")
        payload = self.reconstruct(block, pool)
        if payload is False:
            return self._pend(h, "fragments")
        if payload is None:
            return self._reject(h, "decode")
        if not self.payload_valid(block, payload):
            return self._reject(h, "invalid")
        if len(self.by_slot.get(block.slot, [])) >= MAX_BLOCKS_PER_SLOT:
            return self._reject(h, "slot full")
        self.nodes[h] = Node(block, payload, pk, block.slot)
        self.children.setdefault(pk, []).append(h)
        self.by_slot.setdefault(block.slot, []).append(h)
        self.pending.pop(h, None)
        self._candidates.pop(h, None)
        return AddResult(Status.ADDED, added=[block])

    def _pend(self, h: bytes, reason: str) -> AddResult:
        self.pending[h] = reason
        return AddResult(Status.PENDING, reason)

    def _reject(self, h: bytes, reason: str) -> AddResult:
        self.pending.pop(h, None)
        self._candidates.pop(h, None)
        self.rejected[h] = reason
        return AddResult(Status.REJECTED, reason)

    def tip_after_exit(self, slot: int) -> Block:
        """The block to extend after exiting ``slot`` through the tree; lowest hash on ties."""
        hashes = self.by_slot.get(slot)
        if not hashes:
            raise LookupError(f"no block for slot {slot} in the tree")
        return self.nodes[min(hashes)].block


@dataclass
class LogEntry:
    slot: int
    block_hash: bytes
    payload: bytes
    kind: str  # "fast", "slow" or "implicit"
    time: int = 0

    def record(self) -> dict:
        return {"slot": self.slot, "block": self.block_hash.hex(), "payload_len": len(self.payload),
                "kind": self.kind, "time": self.time}


class FinalizationState:
    def __init__(self):
        self.explicitly_finalized: dict[int, bytes] = {}
        self.finalized_log: list[LogEntry] = []
        self._logged: dict[bytes, int] = {GENESIS_HASH: 0}
        self._by_slot: dict[int, bytes] = {}
        self._tip = GENESIS_HASH

    def is_finalized(self, h: bytes) -> bool:
        return h in self._logged

    def mark_finalized(self, tree: CompleteBlockTree, slot: int, h: bytes, kind: str,
                       time: int = 0) -> list[LogEntry]:
        """Explicitly finalize ``h`` and implicitly its ancestors; returns the new log suffix."""
        other = self._by_slot.get(slot)
        if other is not None and other != h:
            raise ConsistencyFault(f"slot {slot}: {h.hex()[:12]} conflicts with finalized {other.hex()[:12]}")
        if h not in tree.nodes:
            raise LookupError("block must be in the tree before it is finalized")
        self.explicitly_finalized.setdefault(slot, h)
        chain = []
        cur = h
        while cur not in self._logged:
            chain.append(cur)
            cur = tree.nodes[cur].parent
        if cur != self._tip:
            if chain:
                raise ConsistencyFault(f"slot {slot}: finalized chain forks from log at {cur.hex()[:12]}")
            if not tree.is_ancestor(h, self._tip):
                raise ConsistencyFault(f"slot {slot}: block is not on the finalized chain")
            return []
        new = []
        for bh in reversed(chain):
            node = tree.nodes[bh]
            prev = self._by_slot.get(node.slot)
            if prev is not None and prev != bh:
                raise ConsistencyFault(f"slot {node.slot}: implicit finalization conflicts")
            entry = LogEntry(node.slot, bh, node.payload, kind if bh == h else "implicit", time)
            self._logged[bh] = node.slot
            self._by_slot[node.slot] = bh
            self.finalized_log.append(entry)
            new.append(entry)
        if chain:
            self._tip = h
        return new
