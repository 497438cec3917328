"""Deterministic discrete-event simulation of a Kudzu deployment."""
from __future__ import annotations

import heapq
import logging
import random
from dataclasses import dataclass, field
from typing import Callable

from ..blocktree import ConsistencyFault, accept_all
from ..crypto import HmacThresholdScheme, ThresholdScheme
from ..replica import (Broadcast, Deliver, Finalized, Flag, Observe, Replica, RandomPayloads,
                       Send, SetTimer, Timer, round_robin)
from ..types import (BlockProposal, CertObject, FinalVote, FirstVote, NotarVote, ProtocolParams,
                     WireError, block_hash, check_resilience, decode_message)
from .adversary import AdversaryContext, Behavior, Injection, make_behavior
from .network import NetworkModel
from .trace import RunTrace

log = logging.getLogger(__name__)


@dataclass
class AdversaryScript:
    """Static corruption: ``behaviors`` maps each corrupt replica to a behaviour spec."""

    behaviors: dict[int, dict] = field(default_factory=dict)

    @property
    def corrupt(self) -> frozenset[int]:
        return frozenset(self.behaviors)

    def byzantine_count(self) -> int:
        return sum(1 for spec in self.behaviors.values()
                   if spec.get("behavior") not in ("crash", "silent"))


def _msg_slot(msg) -> int:
    return getattr(msg, "slot", 0)


def _vote_record(msg, hash_name: str) -> dict | None:
    if isinstance(msg, FirstVote):
        b = msg.block
        return {"vote": "first", "block": block_hash(b, hash_name).hex(), "timeout": b.is_timeout}
    if isinstance(msg, NotarVote):
        b = msg.block
        return {"vote": "notar", "block": block_hash(b, hash_name).hex(), "timeout": b.is_timeout}
    if isinstance(msg, FinalVote):
        return {"vote": "final", "block": block_hash(msg.block, hash_name).hex(), "timeout": False}
    return None


class Simulation:
    def __init__(self, params: ProtocolParams, network: NetworkModel, adversary: AdversaryScript,
                 *, delta_timeout: int, horizon: int, seed: int = 0,
                 payload_source=None, leader: Callable[[int], int] | None = None,
                 max_slot: int | None = None, validity=accept_all,
                 scheme: ThresholdScheme | None = None, strict_upper: bool = False,
                 config: dict | None = None):
        check_resilience(params.n, params.f, params.p, strict_upper)
        if adversary.byzantine_count() > params.f:
            raise ValueError(f"{adversary.byzantine_count()} Byzantine replicas exceed f={params.f}")
        if any(not 1 <= r <= params.n for r in adversary.corrupt):
            raise ValueError("corrupt replica ids must be in 1..n")
        self.params = params
        self.network = network
        self.adversary = adversary
        self.horizon = horizon
        self.seed = seed
        self.rng = random.Random(f"net:{seed}")
        self.scheme = scheme or HmacThresholdScheme(params.n, seed)
        self.leader = leader or round_robin(params.n)
        payload_source = payload_source or RandomPayloads(256, seed)
        n = params.n
        self.nodes: dict[int, Replica] = {
            i: Replica(i, params, self.scheme, delta_timeout=delta_timeout, leader=self.leader,
                       payload_source=payload_source, validity=validity, max_slot=max_slot)
            for i in range(1, n + 1)}
        self.honest = [i for i in range(1, n + 1) if i not in adversary.corrupt]
        self.ctx = AdversaryContext(params, self.scheme, adversary.corrupt, self.leader)
        self.behaviors: dict[int, Behavior] = {
            rid: make_behavior(spec, rid, self.ctx, random.Random(f"adv:{seed}:{rid}"))
            for rid, spec in sorted(adversary.behaviors.items())}
        self.trace = RunTrace(config=config or {}, honest=list(self.honest),
                              corrupt=sorted(adversary.corrupt))
        self._queue: list = []
        self._seq = 0
        self.now = 0

    # -- queue ----------------------------------------------------------------

    def _push(self, time: int, target: int, event) -> None:
        heapq.heappush(self._queue, (time, self._seq, target, event))
        self._seq += 1

    def _account(self, sender: int, slot: int, nbytes: int, count: int) -> None:
        entry = self.trace.traffic.setdefault((slot, sender), [0, 0])
        entry[0] += count
        entry[1] += nbytes * count

    def _deliver(self, sender: int, receiver: int, data: bytes, send_time: int) -> None:
        t = send_time + self.network.delay(sender, receiver, send_time, self.rng)
        if sender != receiver and sender in self.nodes and receiver in self.nodes \
                and sender not in self.behaviors and receiver not in self.behaviors:
            self.trace.deliveries.append((send_time, t, sender, receiver))
        self._push(t, receiver, Deliver(t, sender, data))

    def inject_adversary_message(self, sender: int, data: bytes, recipients, time: int) -> None:
        """Enqueue arbitrary bytes from corrupt ``sender`` sent at ``time``."""
        if sender not in self.behaviors:
            raise ValueError(f"replica {sender} is not corrupt")
        time = max(time, self.now)
        try:
            slot = _msg_slot(decode_message(data, self.params))
        except WireError:
            slot = 0
        self._account(sender, slot, len(data), len(recipients))
        for r in recipients:
            self._deliver(sender, r, data, time)

    # -- action dispatch ------------------------------------------------------

    def _record(self, rid: int, what: str, slot: int, info: dict) -> None:
        self.trace.records.append({"what": what, "replica": rid, "slot": slot, **info})

    def _dispatch_honest(self, rid: int, actions) -> None:
        hname = self.params.hash_name
        for a in actions:
            if isinstance(a, Send):
                self._account(rid, _msg_slot(a.msg), len(a.data), 1)
                self._deliver(rid, a.to, a.data, self.now)
            elif isinstance(a, Broadcast):
                slot = _msg_slot(a.msg)
                self._account(rid, slot, len(a.data), self.params.n)
                vote = _vote_record(a.msg, hname)
                if vote is not None:
                    self._record(rid, "vote", slot, {"time": self.now, **vote})
                for r in range(1, self.params.n + 1):
                    self._deliver(rid, r, a.data, self.now)
            elif isinstance(a, SetTimer):
                self._push(a.time, rid, Timer(a.time))
            elif isinstance(a, Finalized):
                self.trace.logs.setdefault(rid, []).extend(e.record() for e in a.entries)
                for e in a.entries:
                    self._record(rid, "finalize", e.slot, {"time": self.now, "block": e.block_hash.hex(),
                                                           "kind": e.kind})
            elif isinstance(a, Flag):
                self.trace.flags.append({"by": rid, "replica": a.replica, "reason": a.reason,
                                         "time": self.now})
            elif isinstance(a, Observe):
                self._record(rid, a.what, a.slot, a.info)

    def _dispatch_corrupt(self, rid: int, actions) -> None:
        for a in actions:
            if isinstance(a, SetTimer):
                self._push(a.time, rid, Timer(a.time))
        for inj in self.behaviors[rid].transform(self.now, actions):
            self.inject_adversary_message(rid, inj.data, inj.recipients, inj.time)

    def _step(self, rid: int, actions) -> None:
        if rid in self.behaviors:
            self._dispatch_corrupt(rid, actions)
        else:
            self._dispatch_honest(rid, actions)

    # -- main loop --------------------------------------------------------------

    def run(self) -> RunTrace:
        try:
            for rid in sorted(self.nodes):
                self._step(rid, self.nodes[rid].start(0))
            while self._queue:
                time, _, rid, event = heapq.heappop(self._queue)
                if time > self.horizon:
                    break
                self.now = time
                self.trace.events += 1
                node = self.nodes[rid]
                if rid in self.behaviors and isinstance(event, Deliver):
                    try:
                        msg = decode_message(event.data, self.params)
                    except WireError:
                        msg = None
                    self.behaviors[rid].observe(time, event.sender, event.data, msg)
                self._step(rid, node.handle_event(event))
        except ConsistencyFault as exc:
            self.trace.aborted = f"consistency fault at t={self.now}: {exc}"
            log.error(self.trace.aborted)
        self.trace.end_time = self.now
        for rid in self.honest:
            self.trace.logs.setdefault(rid, [])
        return self.trace


def run(params: ProtocolParams, network: NetworkModel, adversary: AdversaryScript | None = None,
        payload_source=None, horizon: int = 10 ** 9, **kwargs) -> RunTrace:
    """Drive every replica to ``horizon`` (or quiescence) and return the trace."""
    sim = Simulation(params, network, adversary or AdversaryScript(), horizon=horizon,
                     payload_source=payload_source, **kwargs)
    return sim.run()
