import copy
import random

import pytest
import yaml

from kudzu.harness import (ConfigError, Scenario, audit_bounds, audit_quorum, audit_safety,
                           bundled_names, load_scenario, merge_reports, notar_cap, run_scenario)
from kudzu.harness.audit import audit_liveness, audit_synchrony, latencies
from kudzu.harness.cli import main


@pytest.fixture(scope="module")
def honest_run():
    sc = Scenario(n=4, f=1, p=0, slots=6)
    return sc, *run_scenario(sc)


def test_notar_cap_values():
    assert notar_cap(4, 1, 0, 1) == 4
    assert notar_cap(6, 1, 1, 1) == 5
    assert notar_cap(11, 2, 2, 2) == 5  # floor(27 / 5)
    assert notar_cap(4, 1, 0, 3) is None


def test_honest_run_passes_everything(honest_run):
    sc, rep, trace = honest_run
    assert rep["ok"], rep["verdicts"]
    assert rep["verdicts"]["bounds"]["max_votes"] == {"first": 1, "timeout": 0, "final": 1, "notar": 1}
    assert rep["latency"]["fast_delays"] == [20]


def test_forged_conflicting_finalization_detected(honest_run):
    _, _, trace = honest_run
    bad = copy.deepcopy(trace)
    bad.logs[2][3] = dict(bad.logs[2][3], block="ab" * 32)
    v = audit_safety(bad)
    assert not v.ok and any("slot 4" in m for m in v.violations)


def test_forged_fork_and_incompatible_certificates(honest_run):
    _, _, trace = honest_run
    bad = copy.deepcopy(trace)
    # a notarized sibling at slot 3 whose parent skips the finalized slot-2 block
    slot1 = next(r for r in bad.records if r["what"] == "tree_add" and r["slot"] == 1)
    bad.records.append({"what": "tree_add", "replica": 1, "slot": 3, "time": 0,
                        "block": "cd" * 32, "parent": slot1["block"]})
    bad.records.append({"what": "cert", "replica": 1, "slot": 3, "time": 0, "kind": "NOTAR",
                        "block": "cd" * 32, "signers": [1, 2, 3]})
    bad.records.append({"what": "cert", "replica": 2, "slot": 5, "time": 0, "kind": "TIMEOUT",
                        "block": "ef" * 32, "signers": [1, 2, 3]})
    v = audit_safety(bad)
    text = " ".join(v.violations)
    assert "does not descend" in text
    assert "notarization of cdcdcd" in text
    assert "timeout certificate alongside" in text


def test_bounds_auditor_catches_excess_votes(honest_run):
    _, _, trace = honest_run
    bad = copy.deepcopy(trace)
    for i in range(3):
        bad.records.append({"what": "vote", "replica": 1, "slot": 2, "time": 0, "vote": "notar",
                            "block": f"{i:02x}" * 32, "timeout": False})
    v = audit_bounds(bad, 4, 1, 0)
    assert not v.ok and "4 notar votes" in v.violations[0]


def test_quorum_auditor_catches_phantom_signers(honest_run):
    _, _, trace = honest_run
    bad = copy.deepcopy(trace)
    cert = next(r for r in bad.records if r["what"] == "cert")
    bad.records.append(dict(cert, block="99" * 32))
    v = audit_quorum(bad, 4, 1, 0)
    assert not v.ok and "never voted" in v.violations[0]


def test_synchrony_and_liveness_auditors(honest_run):
    _, _, trace = honest_run
    bad = copy.deepcopy(trace)
    bad.deliveries.append((100, 125, 1, 2))
    assert not audit_synchrony(bad, 10, None).ok
    assert audit_synchrony(bad, 10, [(0, 50)]).ok
    assert audit_liveness(trace, 30, 10, 6).ok
    assert not audit_liveness(trace, 30, 10, 7).ok
    assert not audit_liveness(trace, 0, 2, 6).ok


def test_latencies_anchor_on_proposal(honest_run):
    _, _, trace = honest_run
    lat = latencies(trace)
    assert sorted(lat) == [1, 2, 3, 4, 5, 6]
    assert all(set(s["delays"].values()) == {20} for s in lat.values())


def test_scenario_validation():
    with pytest.raises(ConfigError):
        Scenario(n=3, f=1, p=0)
    with pytest.raises(ConfigError):
        Scenario.from_dict({"n": 4, "bogus": 1})
    with pytest.raises(ConfigError):
        Scenario(adversary=[{"behavior": "crash"}])
    with pytest.raises(ConfigError):
        Scenario(leader_rotation="whim")
    assert Scenario(delta=7).delta_timeout == 21


def test_bundled_scenarios_load():
    names = bundled_names()
    for required in ("fastpath_n4", "crash_gt_p", "byz_leader_equivocate"):
        assert required in names
    for name in names:
        assert load_scenario(name).name == name


def test_seeded_rotation_runs():
    sc = Scenario(n=4, f=1, p=0, slots=8, leader_rotation="seeded", seed=3)
    rep, _ = run_scenario(sc)
    assert rep["ok"]


def test_merge_is_order_independent():
    reports = [run_scenario(Scenario(n=4, slots=3, seed=s))[0] for s in range(4)]
    reports[2] = dict(reports[2], ok=False)
    a = merge_reports(reports)
    shuffled = reports[:]
    random.Random(1).shuffle(shuffled)
    assert merge_reports(shuffled) == a
    assert a["failed_seeds"] == [2]


def test_cli_run_sweep_audit(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", "fastpath_n4", "--seed", "1", "--out", str(out)]) == 0
    files = sorted(p.name for p in out.iterdir())
    assert files == ["fastpath_n4-seed1.metrics.jsonl", "fastpath_n4-seed1.report.yaml",
                     "fastpath_n4-seed1.trace.jsonl"]
    report = yaml.safe_load((out / "fastpath_n4-seed1.report.yaml").read_text())
    assert report["ok"] and report["seed"] == 1
    assert main(["audit", str(out / "fastpath_n4-seed1.trace.jsonl"), "--replay"]) == 0
    assert "replay identical" in capsys.readouterr().out
    assert main(["sweep", "vote_split", "--seeds", "0:3", "--out", str(out)]) == 0


def test_cli_exit_codes(tmp_path):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("n: 3\nf: 1\n")
    assert main(["run", str(cfg)]) == 2
    # a tampered trace fails its audit and its replay
    assert main(["run", "fastpath_n4", "--out", str(tmp_path)]) == 0
    path = tmp_path / "fastpath_n4-seed0.trace.jsonl"
    lines = path.read_text().splitlines()
    idx = next(i for i, l in enumerate(lines) if l.startswith('{"block"') and '"type":"log"' in l
               and '"replica":2' in l)
    lines[idx] = lines[idx].replace(lines[idx][10:20], "0123456789")
    path.write_text("\n".join(lines) + "\n")
    assert main(["audit", str(path), "--replay"]) == 1
