"""Fit honest messages per slot against c * n^2 for all-honest runs.

    python scripts/complexity_fit.py [--sizes 4 7 10 13 16]
"""
import argparse

import numpy as np

from kudzu.harness import Scenario, run_scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", type=int, nargs="+", default=[4, 7, 10, 13, 16])
    ap.add_argument("--slots", type=int, default=30)
    ap.add_argument("--payload", type=int, default=1024)
    args = ap.parse_args()
    ns, msgs = [], []
    print(f"{'n':>3s} {'f':>2s} {'msgs/slot':>10s} {'/n^2':>7s} {'leader/median bytes':>20s}")
    for n in args.sizes:
        sc = Scenario(n=n, f=(n - 1) // 3, p=0, slots=args.slots, payload_size=args.payload)
        rep, trace = run_scenario(sc)
        per_slot = rep["verdicts"]["bounds"]["messages_per_slot_over_n2_mean"] * n * n
        ns.append(n)
        msgs.append(per_slot)
        print(f"{n:3d} {sc.f:2d} {per_slot:10.1f} {per_slot / n ** 2:7.3f} {rep['leader_balance']:20.3f}")
    x = np.array(ns, dtype=float) ** 2
    c = float(np.dot(x, msgs) / np.dot(x, x))
    resid = np.array(msgs) - c * x
    print(f"least squares: msgs/slot ~= {c:.3f} * n^2 (max relative residual "
          f"{float(np.max(np.abs(resid) / np.array(msgs))):.3f})")


if __name__ == "__main__":
    main()
