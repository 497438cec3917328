"""Command line entry point: ``kudzu run | sweep | audit``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import yaml

from ..simnet import RunTrace
from .scenario import (ConfigError, Scenario, bundled_names, load_scenario, merge_reports,
                       metrics_records, report, run_scenario, simulate)


def _write_outputs(out: Path, sc: Scenario, rep: dict, trace: RunTrace, keep_trace: bool) -> None:
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{sc.name}-seed{sc.seed}"
    (out / f"{stem}.report.yaml").write_text(yaml.safe_dump(rep, sort_keys=False))
    with open(out / f"{stem}.metrics.jsonl", "w") as fh:
        for rec in metrics_records(sc, trace):
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    if keep_trace:
        trace.save(out / f"{stem}.trace.jsonl")


def _print_summary(rep: dict) -> None:
    status = "PASS" if rep["ok"] else "FAIL"
    lat = rep["latency"]
    print(f"{status} {rep['scenario']} seed={rep['seed']} slots_finalized={lat['slots']} "
          f"latency=[{lat['min']}, {lat['max']}] digest={rep['digest'][:16]}")
    for name, v in rep["verdicts"].items():
        print(f"  {name:10s} {'ok' if v['ok'] else 'VIOLATED'}")
        for msg in v["violations"][:5]:
            print(f"    - {msg}")


def cmd_run(args) -> int:
    sc = load_scenario(args.config)
    if args.seed is not None:
        sc = sc.with_seed(args.seed)
    rep, trace = run_scenario(sc)
    _print_summary(rep)
    if args.out:
        _write_outputs(Path(args.out), sc, rep, trace, not args.no_trace)
    return 0 if rep["ok"] else 1


def _sweep_one(args):
    sc, out = args
    rep, trace = run_scenario(sc)
    if out:
        _write_outputs(Path(out), sc, rep, trace, keep_trace=False)
    return rep


def parse_seeds(text: str) -> list[int]:
    if ":" in text:
        a, b = text.split(":")
        return list(range(int(a), int(b)))
    return [int(s) for s in text.split(",")]


def cmd_sweep(args) -> int:
    base = load_scenario(args.config)
    jobs = [(base.with_seed(s), args.out) for s in parse_seeds(args.seeds)]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            reports = list(pool.map(_sweep_one, jobs))
    else:
        reports = [_sweep_one(j) for j in jobs]
    merged = merge_reports(reports)
    print(f"{'PASS' if merged['ok'] else 'FAIL'} {base.name}: {merged['runs']} runs, "
          f"failed seeds {merged['failed_seeds'][:20]}")
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / f"{base.name}.sweep.yaml").write_text(yaml.safe_dump(merged, sort_keys=False))
    return 0 if merged["ok"] else 1


def cmd_audit(args) -> int:
    trace = RunTrace.load(args.trace)
    sc = Scenario.from_dict(trace.config)
    rep = report(sc, trace)
    _print_summary(rep)
    code = 0 if rep["ok"] else 1
    if args.replay:
        again = simulate(sc)
        same = again.serialize() == Path(args.trace).read_text()
        print(f"replay {'identical' if same else 'DIFFERS'}")
        code = code or (0 if same else 1)
    return code


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="kudzu", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", help="run one scenario")
    r.add_argument("config", help=f"YAML path or bundled name: {', '.join(bundled_names())}")
    r.add_argument("--seed", type=int)
    r.add_argument("--out", help="output directory for report, metrics and trace")
    r.add_argument("--no-trace", action="store_true")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run a scenario over a seed range")
    s.add_argument("config")
    s.add_argument("--seeds", default="0:100", help="'a:b' range or comma list")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep)

    a = sub.add_parser("audit", help="re-audit a saved trace")
    a.add_argument("trace")
    a.add_argument("--replay", action="store_true", help="re-run inputs and compare byte-for-byte")
    a.set_defaults(func=cmd_audit)

    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
