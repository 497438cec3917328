"""Post-hoc auditors over run traces.

Each auditor reads only the trace records, so the same checks apply to a
live run and to a trace loaded back from disk.
"""
from __future__ import annotations

import statistics
from collections import defaultdict
from dataclasses import dataclass, field

from ..simnet import RunTrace

GENESIS_HEX = "00" * 32


@dataclass
class Verdict:
    name: str
    ok: bool = True
    violations: list[str] = field(default_factory=list)
    details: dict = field(default_factory=dict)

    def fail(self, msg: str) -> None:
        self.ok = False
        if len(self.violations) < 50:
            self.violations.append(msg)

    def to_dict(self) -> dict:
        return {"ok": self.ok, "violations": self.violations, **self.details}


def _honest(trace: RunTrace, what: str):
    honest = set(trace.honest)
    return [r for r in trace.records if r["what"] == what and r["replica"] in honest]


def notar_cap(n: int, f: int, p: int, f_prime: int) -> int | None:
    """Upper bound on notarization-certified non-timeout blocks per slot."""
    denom = n - f - p - f_prime
    if denom <= 0:
        return None
    return (3 * (n - f_prime)) // denom


def audit_safety(trace: RunTrace) -> Verdict:
    v = Verdict("safety")
    if trace.aborted:
        v.fail(trace.aborted)
    finalized: dict[int, dict[str, list[int]]] = defaultdict(lambda: defaultdict(list))
    for rid in trace.honest:
        for e in trace.logs.get(rid, []):
            finalized[e["slot"]][e["block"]].append(rid)
    for slot, blocks in sorted(finalized.items()):
        if len(blocks) > 1:
            v.fail(f"slot {slot}: honest replicas finalized different blocks "
                   + "; ".join(f"{b[:12]} by {sorted(rs)}" for b, rs in blocks.items()))

    explicit: dict[int, str] = {}
    for r in _honest(trace, "explicit_final"):
        prev = explicit.setdefault(r["slot"], r["block"])
        if prev != r["block"]:
            v.fail(f"slot {r['slot']}: conflicting explicit finalizations")
    # every tree block at a slot >= v must descend from the block finalized at v
    trees: dict[int, dict[str, tuple[str, int]]] = defaultdict(dict)
    for r in _honest(trace, "tree_add"):
        trees[r["replica"]][r["block"]] = (r["parent"], r["slot"])
    fin_slots = sorted(explicit)
    for rid, nodes in sorted(trees.items()):
        matched: dict[str, int] = {GENESIS_HEX: 0}

        def count(h: str) -> int:
            stack = []
            while h not in matched:
                stack.append(h)
                h = nodes[h][0]
            base = matched[h]
            for x in reversed(stack):
                base += explicit.get(nodes[x][1]) == x
                matched[x] = base
            return matched[stack[0]] if stack else base

        for h, (_, slot) in nodes.items():
            need = sum(1 for s in fin_slots if s <= slot)
            if count(h) != need:
                v.fail(f"replica {rid}: tree block {h[:12]} at slot {slot} does not descend "
                       "from every finalized block below it")

    certs = _honest(trace, "cert")
    final_block: dict[int, str] = {}
    for r in certs:
        if r["kind"] in ("FAST_FINAL", "FINAL"):
            prev = final_block.setdefault(r["slot"], r["block"])
            if prev != r["block"]:
                v.fail(f"slot {r['slot']}: finalization certificates for two blocks")
    for r in certs:
        b = final_block.get(r["slot"])
        if b is None:
            continue
        if r["kind"] == "TIMEOUT":
            v.fail(f"slot {r['slot']}: timeout certificate alongside finalization of {b[:12]}")
        elif r["kind"] == "NOTAR" and r["block"] != b:
            v.fail(f"slot {r['slot']}: notarization of {r['block'][:12]} alongside finalization of {b[:12]}")
    v.details = {"finalized_slots": len(finalized), "explicit": len(explicit)}
    return v


def audit_bounds(trace: RunTrace, n: int, f: int, p: int) -> Verdict:
    v = Verdict("bounds")
    f_prime = len(trace.corrupt)
    counts: dict[tuple[int, int], dict[str, set]] = defaultdict(lambda: defaultdict(set))
    for r in _honest(trace, "vote"):
        c = counts[(r["slot"], r["replica"])]
        if r["vote"] == "first":
            c["first"].add(r["block"])
        if r["vote"] in ("first", "notar"):
            c["timeout" if r["timeout"] else "notar"].add(r["block"])
        if r["vote"] == "final":
            c["final"].add(r["block"])
    caps = {"first": 1, "timeout": 1, "final": 1, "notar": 3}
    worst = defaultdict(int)
    for (slot, rid), c in sorted(counts.items()):
        for kind, cap in caps.items():
            worst[kind] = max(worst[kind], len(c[kind]))
            if len(c[kind]) > cap:
                v.fail(f"slot {slot}: replica {rid} cast {len(c[kind])} {kind} votes (cap {cap})")

    bound_n = notar_cap(n, f, p, f_prime)
    certified: dict[int, set] = defaultdict(set)
    per_pool: dict[tuple[int, int], dict[str, set]] = defaultdict(lambda: defaultdict(set))
    for r in _honest(trace, "cert"):
        per_pool[(r["slot"], r["replica"])][r["kind"]].add(r["block"])
        if r["kind"] == "NOTAR":
            certified[r["slot"]].add(r["block"])
    limit = 5 if bound_n is None else min(5, bound_n)
    max_cert = max((len(s) for s in certified.values()), default=0)
    for slot, blocks in sorted(certified.items()):
        if len(blocks) > limit:
            v.fail(f"slot {slot}: {len(blocks)} notarized blocks (limit {limit})")
    cert_caps = {"NOTAR": 5, "TIMEOUT": 1, "FAST_FINAL": 1, "FINAL": 1}
    for (slot, rid), kinds in sorted(per_pool.items()):
        for kind, cap in cert_caps.items():
            if len(kinds[kind]) > cap:
                v.fail(f"slot {slot}: replica {rid} holds {len(kinds[kind])} {kind} certificates")

    honest = set(trace.honest)
    per_slot = defaultdict(int)
    for (slot, sender), (msgs, _) in trace.traffic.items():
        if sender in honest and slot > 0:
            per_slot[slot] += msgs
    # per honest replica: <= 5 vote broadcasts and <= 8 certificate echoes, plus n proposals
    msg_bound = 13 * n * len(honest) + n
    for slot, m in sorted(per_slot.items()):
        if m > msg_bound:
            v.fail(f"slot {slot}: {m} honest messages exceed {msg_bound}")
    fitted = [m / n ** 2 for m in per_slot.values()]
    v.details = {
        "N": bound_n, "max_notarized_per_slot": max_cert, "max_votes": dict(worst),
        "messages_per_slot_over_n2_mean": statistics.fmean(fitted) if fitted else 0.0,
        "messages_per_slot_over_n2_max": max(fitted, default=0.0),
    }
    return v


_VOTE_FOR_KIND = {"NOTAR": ("first", "notar"), "TIMEOUT": ("first", "notar"),
                  "FAST_FINAL": ("first",), "FINAL": ("final",)}


def audit_quorum(trace: RunTrace, n: int, f: int, p: int) -> Verdict:
    """Every certificate accepted by an honest replica has k - f' honest signers who really voted."""
    v = Verdict("quorum")
    f_prime = len(trace.corrupt)
    honest = set(trace.honest)
    voted: set[tuple[int, str, str]] = set()
    for r in _honest(trace, "vote"):
        voted.add((r["replica"], r["vote"], r["block"]))
    seen = set()
    checked = 0
    for r in _honest(trace, "cert"):
        key = (r["kind"], r["block"], tuple(r["signers"]))
        if key in seen:
            continue
        seen.add(key)
        checked += 1
        k = n - p if r["kind"] == "FAST_FINAL" else n - f - p
        genuine = [s for s in r["signers"] if s in honest
                   and any((s, w, r["block"]) in voted for w in _VOTE_FOR_KIND[r["kind"]])]
        forged = [s for s in r["signers"] if s in honest and s not in genuine]
        if forged:
            v.fail(f"slot {r['slot']}: {r['kind']} certificate names honest {forged} who never voted")
        if len(genuine) < k - f_prime:
            v.fail(f"slot {r['slot']}: {r['kind']} certificate has {len(genuine)} honest shares < {k - f_prime}")
    v.details = {"certificates_checked": checked}
    return v


def audit_synchrony(trace: RunTrace, delta: int, windows) -> Verdict:
    v = Verdict("synchrony")
    spans = None if windows is None else [tuple(w) for w in windows]
    checked = 0
    for send, recv, s, r in trace.deliveries:
        if spans is None or any(a <= send <= b for a, b in spans):
            checked += 1
            if recv - send > delta:
                v.fail(f"message {s}->{r} sent at {send} arrived at {recv}")
    v.details = {"deliveries_checked": checked}
    return v


def audit_liveness(trace: RunTrace, delta_timeout: int, delta: int, slots: int) -> Verdict:
    """Every honest replica exits each slot within delta_timeout + 3 delta of the first honest entry."""
    v = Verdict("liveness")
    enter: dict[int, int] = {}
    exits: dict[tuple[int, int], int] = {}
    for r in _honest(trace, "enter"):
        enter[r["slot"]] = min(enter.get(r["slot"], r["time"]), r["time"])
    for r in _honest(trace, "exit"):
        exits[(r["slot"], r["replica"])] = r["time"]
    bound = delta_timeout + 3 * delta
    worst = 0
    for slot in range(1, slots + 1):
        if slot not in enter:
            v.fail(f"slot {slot}: no honest replica entered")
            continue
        for rid in trace.honest:
            t = exits.get((slot, rid))
            if t is None:
                v.fail(f"slot {slot}: replica {rid} never exited")
                continue
            worst = max(worst, t - enter[slot])
            if t - enter[slot] > bound:
                v.fail(f"slot {slot}: replica {rid} exited {t - enter[slot]} after first entry (> {bound})")
    v.details = {"worst_exit_delay": worst, "bound": bound}
    return v


def latencies(trace: RunTrace) -> dict[int, dict]:
    """Per slot: honest leader's proposal time and each honest replica's finalization delay."""
    honest = set(trace.honest)
    proposals = {r["slot"]: (r["time"], r["block"]) for r in trace.records
                 if r["what"] == "propose" and r["replica"] in honest}
    out: dict[int, dict] = {}
    for rid in trace.honest:
        for e in trace.logs.get(rid, []):
            prop = proposals.get(e["slot"])
            if prop is None or prop[1] != e["block"]:
                continue
            slot = out.setdefault(e["slot"], {"proposed": prop[0], "delays": {}, "kinds": set()})
            slot["delays"][rid] = e["time"] - prop[0]
            slot["kinds"].add(e["kind"])
    return out


def traffic_summary(trace: RunTrace) -> dict:
    sent_bytes: dict[int, int] = defaultdict(int)
    sent_msgs: dict[int, int] = defaultdict(int)
    for (slot, sender), (msgs, nbytes) in trace.traffic.items():
        sent_bytes[sender] += nbytes
        sent_msgs[sender] += msgs
    return {"bytes": dict(sent_bytes), "messages": dict(sent_msgs)}


def leader_balance(trace: RunTrace, leader) -> float:
    """Worst per-slot ratio of the leader's bytes to the median replica's bytes."""
    per_slot: dict[int, dict[int, int]] = defaultdict(dict)
    for (slot, sender), (_, nbytes) in trace.traffic.items():
        if slot > 0:
            per_slot[slot][sender] = nbytes
    worst = 0.0
    for slot, senders in per_slot.items():
        med = statistics.median(senders.get(r, 0) for r in trace.honest)
        if med:
            worst = max(worst, senders.get(leader(slot), 0) / med)
    return worst


def audit_all(trace: RunTrace, *, n: int, f: int, p: int, delta: int, delta_timeout: int,
              windows=None, slots: int | None = None, check_liveness: bool = False) -> dict[str, Verdict]:
    out = {
        "safety": audit_safety(trace),
        "bounds": audit_bounds(trace, n, f, p),
        "quorum": audit_quorum(trace, n, f, p),
        "synchrony": audit_synchrony(trace, delta, windows),
    }
    if check_liveness and slots:
        out["liveness"] = audit_liveness(trace, delta_timeout, delta, slots)
    return out
