import random

import pytest

from kudzu.codec import CertifiedFragment, Tag, encode, merkle
from kudzu.replica import (Broadcast, Deliver, Finalized, Flag, Observe, Replica, Send, SetTimer,
                           Timer, round_robin, seeded_leaders)
from kudzu.types import (GENESIS_HASH, Block, BlockProposal, CertKind, CertObject, FinalVote,
                         FirstVote, NotarVote, encode_message)

from helpers import World


def replica(w, rid, delta_timeout=30, **kw):
    return Replica(rid, w.params, w.scheme, delta_timeout=delta_timeout, **kw)


def deliver(r, t, sender, msg):
    return r.handle_event(Deliver(t, sender, encode_message(msg)))


def broadcasts(actions, cls=None):
    return [a.msg for a in actions if isinstance(a, Broadcast) and (cls is None or isinstance(a.msg, cls))]


def loopback(r, t, actions):
    """Feed a replica its own broadcasts, as the network does with zero delay."""
    out = []
    for m in broadcasts(actions):
        out += deliver(r, t, r.id, m)
    return out


def proposal(w, block, rid):
    return BlockProposal(block, w.materials[block][1][rid - 1])


def test_leader_rotation():
    rr = round_robin(4)
    assert [rr(v) for v in range(1, 9)] == [1, 2, 3, 4, 1, 2, 3, 4]
    s = seeded_leaders(7, 3)
    seq = [s(v) for v in range(1, 200)]
    assert set(seq) == set(range(1, 8))
    assert seq == [seeded_leaders(7, 3)(v) for v in range(1, 200)]
    assert seq != [seeded_leaders(7, 4)(v) for v in range(1, 200)]


def test_leader_proposes_on_start():
    w = World(n=4)
    r = replica(w, 1)
    out = r.start(0)
    sends = [a for a in out if isinstance(a, Send)]
    assert sorted(a.to for a in sends) == [1, 2, 3, 4]
    blocks = {a.msg.block for a in sends}
    assert len(blocks) == 1
    (b,) = blocks
    assert b.slot == 1 and b.parent_hash is None
    assert all(a.msg.fragment.index == a.to for a in sends)
    assert SetTimer(30) in out
    # not the leader: nothing but the timer and the entry record
    out2 = replica(w, 2).start(0)
    assert not [a for a in out2 if isinstance(a, (Send, Broadcast))]


def test_valid_proposal_gets_first_vote():
    w = World(n=4)
    r = replica(w, 2)
    r.start(0)
    b = w.block(1)
    out = deliver(r, 5, 1, proposal(w, b, 2))
    [fv] = broadcasts(out, FirstVote)
    assert fv.block == b and fv.inner.fragment.index == 2


def test_timeout_first_vote_non_strict():
    w = World(n=4)
    r = replica(w, 2, delta_timeout=30)
    r.start(0)
    assert broadcasts(r.handle_event(Timer(29))) == []
    [fv] = broadcasts(r.handle_event(Timer(30)), FirstVote)
    assert fv.block.is_timeout and fv.inner.fragment is None


def test_proposal_from_non_leader_flagged():
    w = World(n=4)
    r = replica(w, 2)
    r.start(0)
    out = deliver(r, 1, 3, proposal(w, w.block(1), 2))
    assert [a.replica for a in out if isinstance(a, Flag)] == [3]
    assert not broadcasts(out)


def test_proposal_with_wrong_fragment_flagged():
    w = World(n=4)
    r = replica(w, 2)
    r.start(0)
    b = w.block(1)
    out = deliver(r, 1, 1, BlockProposal(b, w.materials[b][1][2]))
    assert [a.replica for a in out if isinstance(a, Flag)] == [1]


def test_validate_proposal_states():
    w = World(n=4)
    r = replica(w, 3)
    r.start(0)
    b = w.block(1)
    assert r.validate_proposal(proposal(w, b, 3)) == "valid"
    assert r.validate_proposal(proposal(w, w.block(2), 3)) == "invalid"  # not the current slot
    orphan = w.block(1, parent=b"\x07" * 32)
    assert r.validate_proposal(proposal(w, orphan, 3)) == "pending"
    assert r.validate_proposal(proposal(w, b, 2)) == "invalid"  # fragment for someone else


def test_skip_needs_timeout_certificates():
    w = World(n=4)
    r = replica(w, 3)
    r.start(0)
    t1 = w.timeout(1)
    cert = CertObject(CertKind.TIMEOUT, t1,
                      w.scheme.assemble_certificate([w.notar(i, t1).share for i in (1, 2, 4)], 3))
    b3 = w.block(3)  # genesis parent, slot 3: needs timeout certs for 1 and 2
    deliver(r, 1, 1, cert)
    assert r.v == 2
    r.v = 3  # inspect validity without running slot 2
    assert r.validate_proposal(proposal(w, b3, 3)) == "pending"
    t2 = w.timeout(2)
    r.pool.add_certificate(CertObject(CertKind.TIMEOUT, t2, w.scheme.assemble_certificate(
        [w.notar(i, t2).share for i in (1, 2, 4)], 3)))
    assert r.validate_proposal(proposal(w, b3, 3)) == "valid"


def test_special_timeout_vote_counter_trace():
    """n=6: own first vote on B1, then 2 on B2, 1 on B3, 1 on timeout: 5 - 2 = 3 = f+p+1."""
    w = World(n=6, f=1, p=1)
    r = replica(w, 2)
    r.start(0)
    b1, b2, b3, t = w.block(1), w.block(1), w.block(1), w.timeout(1)
    out = deliver(r, 1, 1, proposal(w, b1, 2))
    loopback(r, 1, out)
    timeout_notar = lambda acts: [m for m in broadcasts(acts, NotarVote) if m.block.is_timeout]
    sp = r.pool.slot(1)
    steps = [(3, b2), (4, b2), (5, b3), (6, t)]
    seen = []
    for i, (s, b) in enumerate(steps):
        acts = deliver(r, 2 + i, s, w.first(s, b))
        seen.append((sp.all_votes(), sp.max_votes(), len(timeout_notar(acts))))
    assert seen == [(2, 1, 0), (3, 2, 0), (4, 2, 0), (5, 2, 1)]
    # and it is sent at most once
    assert timeout_notar(deliver(r, 9, 1, w.first(1, b3))) == []


def test_second_look_notarizes_decodable_block():
    w = World(n=4)
    r = replica(w, 4)
    r.start(0)
    b, other = w.block(1), w.block(1)
    loopback(r, 1, deliver(r, 1, 1, proposal(w, b, 4)))
    acts = deliver(r, 2, 2, w.first(2, other))
    acts += deliver(r, 3, 3, w.first(3, other))
    votes = [m for m in broadcasts(acts, NotarVote) if m.block == other]
    assert len(votes) == 1 and votes[0].fragment.index == 4
    # re-encoded fragment matches the one the honest encoder gives replica 4
    assert votes[0].fragment == w.materials[other][1][3]


def test_second_look_on_spliced_block_votes_timeout():
    w = World(n=4)
    r = replica(w, 4)
    r.start(0)
    b = w.block(1)
    rng = random.Random(5)
    _, fa = encode(w.params.codec, rng.randbytes(40))
    _, fb = encode(w.params.codec, rng.randbytes(40))
    datas = [fa[0].data, fa[1].data, fb[2].data, fb[3].data]
    levels = merkle.build_levels([merkle.leaf_hash(i + 1, x) for i, x in enumerate(datas)])
    bad = Block(1, Tag(40, merkle.root_of(levels)), GENESIS_HASH)
    w.materials[bad] = (None, [CertifiedFragment(i + 1, x, merkle.path_for(levels, i))
                               for i, x in enumerate(datas)])
    loopback(r, 1, deliver(r, 1, 1, proposal(w, b, 4)))
    acts = deliver(r, 2, 2, w.first(2, bad)) + deliver(r, 3, 3, w.first(3, bad))
    notars = broadcasts(acts, NotarVote)
    assert [m.block.is_timeout for m in notars] == [True]


def run_four(seed=0, slots=3):
    """Drive four replicas by hand with zero-latency delivery."""
    w = World(n=4, seed=seed)
    reps = {i: replica(w, i, max_slot=slots) for i in range(1, 5)}
    queue = []
    for i, r in reps.items():
        queue += [(0, i, a) for a in r.start(0)]
    logs = {i: [] for i in reps}
    trail = []
    t = 0
    while queue:
        t += 1
        nxt = []
        for _, src, a in queue:
            trail.append((src, type(a).__name__, getattr(a, "data", b"")))
            if isinstance(a, Send):
                nxt += [(t, a.to, x) for x in reps[a.to].handle_event(Deliver(t, src, a.data))]
            elif isinstance(a, Broadcast):
                for j in reps:
                    nxt += [(t, j, x) for x in reps[j].handle_event(Deliver(t, src, a.data))]
            elif isinstance(a, Finalized):
                logs[src] += [e.record() for e in a.entries]
        queue = nxt
    return logs, trail


def test_replicas_finalize_and_are_deterministic():
    logs, trail = run_four()
    assert [e["slot"] for e in logs[1]] == [1, 2, 3]
    assert all(logs[i] == logs[1] for i in logs)
    assert {e["kind"] for e in logs[1]} == {"fast"}
    logs2, trail2 = run_four()
    assert trail == trail2 and logs == logs2


def test_time_must_not_go_backwards():
    w = World(n=4)
    r = replica(w, 2)
    r.start(10)
    with pytest.raises(ValueError):
        r.handle_event(Timer(5))
