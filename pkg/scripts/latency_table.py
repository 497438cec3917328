"""Per-scenario finalization latency table (in units of delta).

    python scripts/latency_table.py [--slots 50]
"""
import argparse
import warnings

from kudzu.harness import bundled_names, load_scenario, run_scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--slots", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    warnings.simplefilter("ignore")
    print(f"{'scenario':24s} {'n':>3s} {'final':>6s} {'fast':>6s} {'slow':>6s} {'min/δ':>6s} {'max/δ':>6s}")
    for name in bundled_names():
        sc = load_scenario(name)
        sc.slots = args.slots
        rep, _ = run_scenario(sc.with_seed(args.seed))
        lat = rep["latency"]
        lo = "-" if lat["min"] is None else f"{lat['min'] / sc.delta:.1f}"
        hi = "-" if lat["max"] is None else f"{lat['max'] / sc.delta:.1f}"
        print(f"{name:24s} {sc.n:3d} {lat['slots']:6d} {lat['fast_slots']:6d} "
              f"{lat['slow_slots']:6d} {lo:>6s} {hi:>6s}")


if __name__ == "__main__":
    main()
