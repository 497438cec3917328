"""Scenario configuration and orchestration."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import yaml

from ..replica import RandomPayloads, round_robin, seeded_leaders
from ..simnet import AdversaryScript, NetworkModel, RunTrace, Simulation
from ..types import ProtocolParams, check_resilience
from . import audit


class ConfigError(ValueError):
    pass


@dataclass
class Scenario:
    name: str = "scenario"
    n: int = 4
    f: int = 1
    p: int = 0
    delta: int = 10
    delta_timeout: int | None = None  # defaults to 3 * delta
    leader_rotation: str = "round_robin"  # or "seeded"
    payload_size: int = 256
    seed: int = 0
    slots: int | None = 20
    horizon: int = 10 ** 9
    latency: str = "constant"
    min_latency: int = 1
    windows: list[list[int]] | None = None
    async_max: int = 100
    async_mode: str = "random"
    adversary: list[dict] = field(default_factory=list)
    strict_upper: bool = False
    hash_name: str = "sha256"
    instance: str = "kudzu"

    def __post_init__(self):
        if self.delta_timeout is None:
            self.delta_timeout = 3 * self.delta
        if self.leader_rotation not in ("round_robin", "seeded"):
            raise ConfigError(f"unknown leader rotation {self.leader_rotation!r}")
        try:
            check_resilience(self.n, self.f, self.p, self.strict_upper)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        seen = set()
        for spec in self.adversary:
            if "replica" not in spec or "behavior" not in spec:
                raise ConfigError(f"adversary entries need 'replica' and 'behavior': {spec}")
            if spec["replica"] in seen:
                raise ConfigError(f"replica {spec['replica']} listed twice")
            seen.add(spec["replica"])

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def with_seed(self, seed: int) -> "Scenario":
        return dataclasses.replace(self, seed=seed, adversary=[dict(a) for a in self.adversary])

    @property
    def params(self) -> ProtocolParams:
        return ProtocolParams(self.n, self.f, self.p, self.instance, self.hash_name)

    def leader(self):
        if self.leader_rotation == "seeded":
            return seeded_leaders(self.n, self.seed)
        return round_robin(self.n)

    def network(self) -> NetworkModel:
        return NetworkModel(self.delta, self.latency, self.min_latency, self.windows,
                            self.async_max, self.async_mode)

    def script(self) -> AdversaryScript:
        return AdversaryScript({a["replica"]: {k: v for k, v in a.items() if k != "replica"}
                                for a in self.adversary})

    @property
    def synchronous(self) -> bool:
        return self.windows is None


def bundled_names() -> list[str]:
    root = resources.files("kudzu.harness") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def load_scenario(ref: str | Path) -> Scenario:
    """Load a YAML scenario from a path or by bundled name (e.g. ``fastpath_n4``)."""
    path = Path(ref)
    if path.exists():
        text = path.read_text()
    else:
        res = resources.files("kudzu.harness") / "scenarios" / f"{ref}.yaml"
        if not res.is_file():
            raise ConfigError(f"no scenario file or bundled scenario named {ref!r}")
        text = res.read_text()
    data = yaml.safe_load(text)
    if not isinstance(data, dict):
        raise ConfigError("scenario must be a mapping")
    return Scenario.from_dict(data)


def simulate(sc: Scenario) -> RunTrace:
    sim = Simulation(sc.params, sc.network(), sc.script(), delta_timeout=sc.delta_timeout,
                     horizon=sc.horizon, seed=sc.seed, leader=sc.leader(),
                     payload_source=RandomPayloads(sc.payload_size, sc.seed), max_slot=sc.slots,
                     strict_upper=sc.strict_upper, config=sc.to_dict())
    return sim.run()


def report(sc: Scenario, trace: RunTrace) -> dict:
    verdicts = audit.audit_all(trace, n=sc.n, f=sc.f, p=sc.p, delta=sc.delta,
                               delta_timeout=sc.delta_timeout, windows=sc.windows,
                               slots=sc.slots, check_liveness=sc.synchronous)
    lat = audit.latencies(trace)
    delays = [d for s in lat.values() for d in s["delays"].values()]
    fast = sorted({d for s in lat.values() if "fast" in s["kinds"] for d in s["delays"].values()})
    slow = sorted({d for s in lat.values() if "slow" in s["kinds"] for d in s["delays"].values()})
    flagged = sorted({fl["replica"] for fl in trace.flags})
    return {
        "scenario": sc.name,
        "seed": sc.seed,
        "ok": all(v.ok for v in verdicts.values()),
        "verdicts": {k: v.to_dict() for k, v in verdicts.items()},
        "latency": {"slots": len(lat), "min": min(delays, default=None),
                    "max": max(delays, default=None), "fast_delays": fast, "slow_delays": slow,
                    "fast_slots": sum("fast" in s["kinds"] for s in lat.values()),
                    "slow_slots": sum("slow" in s["kinds"] for s in lat.values())},
        "finalized": {str(r): len(trace.logs.get(r, [])) for r in trace.honest},
        "traffic": {k: {str(r): x for r, x in v.items()} for k, v in audit.traffic_summary(trace).items()},
        "leader_balance": audit.leader_balance(trace, sc.leader()),
        "flagged": flagged,
        "flagged_honest": [r for r in flagged if r in set(trace.honest)],
        "end_time": trace.end_time,
        "events": trace.events,
        "digest": trace.digest(),
    }


def run_scenario(sc: Scenario) -> tuple[dict, RunTrace]:
    trace = simulate(sc)
    return report(sc, trace), trace


def metrics_records(sc: Scenario, trace: RunTrace):
    """Line-delimited metrics: per-replica per-slot traffic and per-slot latency."""
    for (slot, sender), (msgs, nbytes) in sorted(trace.traffic.items()):
        yield {"type": "traffic", "seed": sc.seed, "slot": slot, "replica": sender,
               "messages": msgs, "bytes": nbytes}
    for slot, info in sorted(audit.latencies(trace).items()):
        for rid, d in sorted(info["delays"].items()):
            yield {"type": "latency", "seed": sc.seed, "slot": slot, "replica": rid,
                   "proposed": info["proposed"], "delay": d, "kinds": sorted(info["kinds"])}


def merge_reports(reports: list[dict]) -> dict:
    """Associative, order-independent summary of a seed sweep."""
    reports = sorted(reports, key=lambda r: r["seed"])
    failed = [r["seed"] for r in reports if not r["ok"]]
    by_check: dict[str, int] = {}
    for r in reports:
        for k, v in r["verdicts"].items():
            by_check[k] = by_check.get(k, 0) + (not v["ok"])
    return {"runs": len(reports), "failed_seeds": failed, "failures_by_check": by_check,
            "ok": not failed}
