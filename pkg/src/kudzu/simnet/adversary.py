"""Corrupt-replica behaviours.

Every corrupt replica runs an honest shadow replica so that it tracks slots,
pools and proposals; its behaviour then rewrites the shadow's outbound
actions into arbitrary injections. Corrupt replicas share one
``AdversaryContext`` (they collude) but only ever hold their own keys.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field

from ..codec import CertifiedFragment, Tag, encode, merkle
from ..crypto import Kind
from ..types import (Block, BlockProposal, CertObject, FirstVote, NotarVote, ProtocolParams,
                     block_hash, body_for, encode_message, timeout_block)
from ..replica import Broadcast, Send


@dataclass(frozen=True)
class Injection:
    recipients: tuple[int, ...]
    data: bytes = field(repr=False)
    time: int


class AdversaryContext:
    def __init__(self, params: ProtocolParams, scheme, corrupt, leader):
        self.params = params
        self.n = params.n
        self.corrupt = frozenset(corrupt)
        self.honest = tuple(i for i in range(1, params.n + 1) if i not in self.corrupt)
        self.leader = leader
        self._keys = {i: scheme.key(i) for i in self.corrupt}
        self._scheme = scheme
        #: slot -> block hash -> (block, all n certified fragments)
        self.registry: dict[int, dict[bytes, tuple[Block, list[CertifiedFragment]]]] = {}
        #: slot -> block hash -> {replica: fragment} learnt from received proposals
        self.known: dict[int, dict[bytes, tuple[Block, dict[int, CertifiedFragment]]]] = {}
        self.history: list[bytes] = []

    @property
    def everyone(self) -> tuple[int, ...]:
        return tuple(range(1, self.n + 1))

    def sign(self, rid: int, kind: Kind, block: Block):
        return self._scheme.sign_share(self._keys[rid], kind, body_for(block, self.params))

    def register(self, block: Block, frags: list[CertifiedFragment]) -> None:
        h = block_hash(block, self.params.hash_name)
        self.registry.setdefault(block.slot, {})[h] = (block, frags)

    def learn(self, rid: int, prop: BlockProposal) -> None:
        h = block_hash(prop.block, self.params.hash_name)
        _, frags = self.known.setdefault(prop.slot, {}).setdefault(h, (prop.block, {}))
        frags[rid] = prop.fragment

    def fragment_for(self, rid: int, block: Block) -> CertifiedFragment | None:
        h = block_hash(block, self.params.hash_name)
        mat = self.registry.get(block.slot, {}).get(h)
        if mat is not None:
            return mat[1][rid - 1]
        known = self.known.get(block.slot, {}).get(h)
        return None if known is None else known[1].get(rid)

    def votable_blocks(self, rid: int, slot: int) -> list[Block]:
        """Blocks of ``slot`` that ``rid`` can vote for with a valid fragment, plus timeout."""
        seen = {}
        for h, (b, _) in self.registry.get(slot, {}).items():
            seen[h] = b
        for h, (b, frags) in self.known.get(slot, {}).items():
            if rid in frags:
                seen[h] = b
        return [seen[h] for h in sorted(seen)] + [timeout_block(slot)]

    def notar_vote(self, rid: int, block: Block) -> NotarVote | None:
        frag = None
        if not block.is_timeout:
            frag = self.fragment_for(rid, block)
            if frag is None:
                return None
        return NotarVote(block, self.sign(rid, Kind.NOTAR, block), frag)

    def first_vote(self, rid: int, block: Block) -> FirstVote | None:
        inner = self.notar_vote(rid, block)
        if inner is None:
            return None
        return FirstVote(self.sign(rid, Kind.FIRST, block), inner)

    def alternative(self, block: Block, salt: int) -> tuple[Block, list[CertifiedFragment]]:
        payload = random.Random(f"alt:{block.slot}:{salt}").randbytes(max(block.tag.payload_len, 1))
        tag, frags = encode(self.params.codec, payload)
        alt = Block(block.slot, tag, block.parent_hash)
        self.register(alt, frags)
        return alt, frags

    def spliced(self, block: Block, salt: int) -> tuple[Block, list[CertifiedFragment]]:
        """A block whose fragments come from two different payloads; it decodes to bottom."""
        codec = self.params.codec
        size = max(block.tag.payload_len, codec.d)
        rng = random.Random(f"splice:{block.slot}:{salt}")
        _, fa = encode(codec, rng.randbytes(size))
        _, fb = encode(codec, rng.randbytes(size))
        half = self.n // 2
        datas = [fr.data for fr in fa[:half]] + [fr.data for fr in fb[half:]]
        leaves = [merkle.leaf_hash(i + 1, d, codec.hash_name) for i, d in enumerate(datas)]
        levels = merkle.build_levels(leaves, codec.hash_name)
        tag = Tag(size, merkle.root_of(levels))
        frags = [CertifiedFragment(i + 1, d, merkle.path_for(levels, i)) for i, d in enumerate(datas)]
        bad = Block(block.slot, tag, block.parent_hash)
        self.register(bad, frags)
        return bad, frags


def _partition(rng: random.Random, ids, k: int) -> list[list[int]]:
    ids = list(ids)
    rng.shuffle(ids)
    if k <= 1 or len(ids) < 2:
        return [ids]
    cuts = sorted(rng.sample(range(1, len(ids)), min(k - 1, len(ids) - 1)))
    bounds = [0, *cuts, len(ids)]
    return [ids[a:b] for a, b in zip(bounds, bounds[1:])]


def _garbage(rng: random.Random) -> bytes:
    return rng.randbytes(rng.randint(0, 160))


def _mutate(rng: random.Random, data: bytes) -> bytes:
    if not data:
        return b"\xff"
    buf = bytearray(data)
    for _ in range(rng.randint(1, 3)):
        buf[rng.randrange(len(buf))] ^= 1 << rng.randrange(8)
    return bytes(buf)


class Behavior:
    """Honest pass-through; subclasses override the hooks."""

    name = "honest"

    def __init__(self, rid: int, ctx: AdversaryContext, rng: random.Random, **opts):
        self.rid = rid
        self.ctx = ctx
        self.rng = rng
        self.opts = opts

    def observe(self, now: int, sender: int, data: bytes, msg) -> None:
        if isinstance(msg, BlockProposal) and msg.fragment.index == self.rid:
            self.ctx.learn(self.rid, msg)
        self.ctx.history.append(data)

    def honest(self, now: int, action) -> list[Injection]:
        if isinstance(action, Send):
            return [Injection((action.to,), action.data, now)]
        if isinstance(action, Broadcast):
            return [Injection(self.ctx.everyone, action.data, now)]
        return []

    def transform(self, now: int, actions) -> list[Injection]:
        out = []
        for a in actions:
            if isinstance(a, Send) and isinstance(a.msg, BlockProposal):
                out += self.on_proposal(now, a)
            elif isinstance(a, Broadcast) and isinstance(a.msg, (FirstVote, NotarVote)):
                out += self.on_vote(now, a)
            else:
                out += self.on_other(now, a)
        return out

    def on_proposal(self, now, action) -> list[Injection]:
        return self.honest(now, action)

    def on_vote(self, now, action) -> list[Injection]:
        return self.honest(now, action)

    def on_other(self, now, action) -> list[Injection]:
        return self.honest(now, action)

    @staticmethod
    def _active(actions) -> bool:
        # spontaneous extras piggyback on real traffic, so junk echoed back cannot feed itself
        return any(isinstance(a, (Send, Broadcast)) for a in actions)


class Crash(Behavior):
    name = "crash"

    def transform(self, now, actions):
        if now >= self.opts.get("at", 0):
            return []
        return super().transform(now, actions)


class Silent(Crash):
    name = "silent"

    def transform(self, now, actions):
        return []


class EquivocateLeader(Behavior):
    """As leader, send different blocks to disjoint groups of honest replicas."""

    name = "equivocate"

    def __init__(self, *a, **kw):
        super().__init__(*a, **kw)
        self._plan: dict[bytes, dict[int, tuple[Block, list[CertifiedFragment]]]] = {}

    def _assign(self, block: Block) -> dict[int, tuple[Block, list[CertifiedFragment]]]:
        h = block_hash(block, self.ctx.params.hash_name)
        if h not in self._plan:
            k = self.opts.get("variants") or self.rng.randint(2, 3)
            groups = _partition(self.rng, self.ctx.honest, k)
            plan = {}
            for j, group in enumerate(groups):
                if j == 0:
                    continue
                if self.opts.get("splice") and j == len(groups) - 1:
                    mat = self.ctx.spliced(block, self.rng.randrange(1 << 30))
                else:
                    mat = self.ctx.alternative(block, self.rng.randrange(1 << 30))
                for r in group:
                    plan[r] = mat
            self._plan[h] = plan
        return self._plan[h]

    def on_proposal(self, now, action):
        prop = action.msg
        self.ctx.register(prop.block, self._frags_of(prop))
        mat = self._assign(prop.block).get(action.to)
        if mat is None:
            return self.honest(now, action)
        alt, frags = mat
        return [Injection((action.to,), encode_message(BlockProposal(alt, frags[action.to - 1])), now)]

    # the shadow emits one Send per recipient; collect the genuine fragments as they pass
    def _frags_of(self, prop: BlockProposal) -> list[CertifiedFragment]:
        h = block_hash(prop.block, self.ctx.params.hash_name)
        mat = self.ctx.registry.get(prop.slot, {}).get(h)
        frags = list(mat[1]) if mat else [None] * self.ctx.n
        frags[prop.fragment.index - 1] = prop.fragment
        return frags


class VoteSplit(Behavior):
    """First-vote different blocks towards different recipients and add stray notarization votes."""

    name = "vote_split"

    def on_vote(self, now, action):
        msg = action.msg
        if not isinstance(msg, FirstVote):
            return self._stray(now, msg.slot) + self.honest(now, action)
        options = self.ctx.votable_blocks(self.rid, msg.slot)
        groups = _partition(self.rng, self.ctx.everyone, self.rng.randint(2, 3))
        out = []
        for group in groups:
            block = self.rng.choice(options) if len(group) else None
            vote = None if block is None else self.ctx.first_vote(self.rid, block)
            if vote is None:
                vote = msg
            out.append(Injection(tuple(group), encode_message(vote), now))
        return out + self._stray(now, msg.slot)

    def _stray(self, now, slot) -> list[Injection]:
        out = []
        for block in self.ctx.votable_blocks(self.rid, slot):
            if self.rng.random() < 0.5:
                vote = self.ctx.notar_vote(self.rid, block)
                if vote is not None:
                    targets = tuple(r for r in self.ctx.everyone if self.rng.random() < 0.7)
                    out.append(Injection(targets, encode_message(vote), now))
        return out


class Withhold(Behavior):
    """Send proposals and votes only to random subsets; never echo certificates."""

    name = "withhold"

    def _subset(self) -> tuple[int, ...]:
        frac = self.opts.get("fraction")
        if frac is None:
            frac = self.rng.random()
        return tuple(r for r in self.ctx.everyone if self.rng.random() < frac or r == self.rid)

    def on_proposal(self, now, action):
        if self.rng.random() < 0.5 and action.to != self.rid:
            return []
        return self.honest(now, action)

    def on_vote(self, now, action):
        return [Injection(self._subset(), action.data, now)]

    def on_other(self, now, action):
        if isinstance(action, Broadcast) and isinstance(action.msg, CertObject):
            return [Injection((self.rid,), action.data, now)]
        return self.honest(now, action)


class Garbage(Behavior):
    """As leader, send malformed or mutated proposals; sprinkle random bytes."""

    name = "garbage"

    def on_proposal(self, now, action):
        if action.to == self.rid:
            return self.honest(now, action)
        data = _garbage(self.rng) if self.rng.random() < 0.5 else _mutate(self.rng, action.data)
        return [Injection((action.to,), data, now)]

    def transform(self, now, actions):
        out = super().transform(now, actions)
        if self._active(actions) and self.rng.random() < self.opts.get("rate", 0.05):
            out.append(Injection(self.ctx.everyone, _garbage(self.rng), now))
        return out


class Replay(Behavior):
    """Honest, plus re-sends of previously seen messages from any slot."""

    name = "replay"

    def transform(self, now, actions):
        out = super().transform(now, actions)
        hist = self.ctx.history
        if hist and self._active(actions) and self.rng.random() < self.opts.get("rate", 0.2):
            data = hist[self.rng.randrange(len(hist))]
            out.append(Injection(self.ctx.everyone, data, now + self.rng.randint(0, 30)))
        return out


class ByzantineRandom(Behavior):
    """Seeded mixture of every other behaviour, re-drawn per slot and per message."""

    name = "random"

    def __init__(self, *a, **kw):
        super().__init__(*a, **kw)
        self._equiv = EquivocateLeader(self.rid, self.ctx, self.rng, splice=True)
        self._split = VoteSplit(self.rid, self.ctx, self.rng)
        self._withhold = Withhold(self.rid, self.ctx, self.rng)
        self._garbage = Garbage(self.rid, self.ctx, self.rng)
        self._leader_mode: dict[int, str] = {}
        self._alive = True

    def _delay(self, injections, now):
        spread = self.opts.get("max_delay", 40)
        return [Injection(i.recipients, i.data, now + self.rng.randint(0, spread))
                if self.rng.random() < 0.3 else i for i in injections]

    def on_proposal(self, now, action):
        slot = action.msg.slot
        mode = self._leader_mode.get(slot)
        if mode is None:
            mode = self._leader_mode[slot] = self.rng.choice(
                ["honest", "equivocate", "equivocate", "withhold", "silent", "garbage"])
        if mode == "equivocate":
            return self._delay(self._equiv.on_proposal(now, action), now)
        if mode == "withhold":
            return self._withhold.on_proposal(now, action)
        if mode == "silent":
            return []
        if mode == "garbage":
            return self._garbage.on_proposal(now, action)
        return self._delay(self.honest(now, action), now)

    def on_vote(self, now, action):
        r = self.rng.random()
        if r < 0.4:
            out = self._split.on_vote(now, action)
        elif r < 0.6:
            out = self._withhold.on_vote(now, action)
        elif r < 0.7:
            out = []
        else:
            out = self.honest(now, action)
        return self._delay(out, now)

    def on_other(self, now, action):
        r = self.rng.random()
        if r < 0.2:
            return []
        out = self.honest(now, action)
        if r > 0.9:
            out = out + out
        return self._delay(out, now)

    def transform(self, now, actions):
        out = super().transform(now, actions)
        hist = self.ctx.history
        if not self._active(actions):
            return out
        if hist and self.rng.random() < 0.15:
            data = hist[self.rng.randrange(len(hist))]
            if self.rng.random() < 0.3:
                data = _mutate(self.rng, data)
            targets = tuple(r for r in self.ctx.everyone if self.rng.random() < 0.5)
            out.append(Injection(targets, data, now + self.rng.randint(0, 30)))
        if self.rng.random() < 0.03:
            out.append(Injection(self.ctx.everyone, _garbage(self.rng), now))
        return out


BEHAVIORS = {cls.name: cls for cls in
             (Behavior, Crash, Silent, EquivocateLeader, VoteSplit, Withhold, Garbage, Replay,
              ByzantineRandom)}


def make_behavior(spec: dict, rid: int, ctx: AdversaryContext, rng: random.Random) -> Behavior:
    spec = dict(spec)
    name = spec.pop("behavior")
    spec.pop("replica", None)
    try:
        cls = BEHAVIORS[name]
    except KeyError:
        raise ValueError(f"unknown behaviour {name!r}; choose from {sorted(BEHAVIORS)}") from None
    return cls(rid, ctx, rng, **spec)
