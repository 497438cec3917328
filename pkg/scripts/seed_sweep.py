"""Sweep seeds for one or more scenarios and tabulate audit failures.

    python scripts/seed_sweep.py byz_leader_equivocate vote_split --seeds 200 --jobs 1
"""
import argparse
import time
from concurrent.futures import ProcessPoolExecutor

from kudzu.harness import load_scenario, merge_reports, run_scenario


def one(sc):
    return run_scenario(sc)[0]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("scenarios", nargs="+")
    ap.add_argument("--seeds", type=int, default=100)
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    for name in args.scenarios:
        base = load_scenario(name)
        scs = [base.with_seed(s) for s in range(args.seeds)]
        t = time.perf_counter()
        if args.jobs > 1:
            with ProcessPoolExecutor(args.jobs) as ex:
                reports = list(ex.map(one, scs))
        else:
            reports = [one(sc) for sc in scs]
        merged = merge_reports(reports)
        worst = max((r["verdicts"].get("liveness", {}).get("worst_exit_delay", 0) for r in reports),
                    default=0)
        flagged = sum(bool(r["flagged"]) for r in reports)
        print(f"{name:24s} runs={merged['runs']} failed={merged['failed_seeds'][:10]} "
              f"by_check={merged['failures_by_check']} worst_exit={worst} "
              f"runs_with_flags={flagged} {time.perf_counter() - t:.1f}s")


if __name__ == "__main__":
    main()
