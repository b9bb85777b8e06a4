import csv
import json
from pathlib import Path

import numpy as np
import pytest

from made_lab import harness
from made_lab.config import config_from_dict
from made_lab.envs import chain_optimal_value
from made_lab.harness import learning_curve, policy_return_at, run_experiment


def _lock_cfg(out, **extra):
    data = {"experiment": "lock", "seeds": [0, 1], "out": str(out),
            "lock": {"env": {"depth": 3}, "learner": {"episodes": 25, "heatmap_period": 10},
                     "scales": [0.5, 1.0], "learners": ["vi", "q"],
                     "bonuses": ["hoeffding", "made"], "curve_every": 10}}
    data.update(extra)
    return config_from_dict(data)


def _read(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def _csv_bytes(root):
    return {p.relative_to(root): p.read_bytes() for p in sorted(Path(root).rglob("*.csv"))}


@pytest.fixture(scope="module")
def lock_out(tmp_path_factory):
    out = tmp_path_factory.mktemp("lock")
    res = run_experiment(_lock_cfg(out))
    assert res.exit_code == 0
    return out


def test_lock_layout_of_outputs(lock_out):
    for name in ("resolved_config.json", "lock_runs.csv", "lock_cells.csv",
                 "lock_best_scale.csv", "bonus_decay.csv"):
        assert (lock_out / name).is_file()
    assert len(list((lock_out / "curves").glob("*.csv"))) == 8
    assert len(list((lock_out / "plots").glob("*.svg"))) == 4
    sidecar = json.loads((lock_out / "runs" / "vi-made-x1.0-seed1.json").read_text())
    assert sidecar["run_seed"] == 1 and sidecar["env_seed"] == 1
    assert sidecar["learner_config"]["bonus_scale"] == 1.0
    # detailed artifacts for the first seed only
    assert (lock_out / "traces" / "vi-made-x1.0-seed0" / "final_bonus.csv").is_file()
    assert not (lock_out / "traces" / "vi-made-x1.0-seed1").exists()


def test_step_log_matches_episode_table(lock_out):
    steps = _read(lock_out / "runs" / "q-hoeffding-x0.5-seed0.csv")
    episodes = _read(lock_out / "runs" / "q-hoeffding-x0.5-seed0.episodes.csv")
    assert [int(r["cum_steps"]) for r in steps] == list(range(1, len(steps) + 1))
    assert int(episodes[-1]["end_step"]) == len(steps)
    for ep in episodes:
        rewards = [float(r["reward"]) for r in steps if r["episode"] == ep["episode"]]
        assert sum(rewards) == pytest.approx(float(ep["return"]))


def test_heatmaps_sum_to_steps(lock_out):
    rid = "vi-hoeffding-x1.0-seed0"
    episodes = _read(lock_out / "runs" / f"{rid}.episodes.csv")
    ends = {0: 0, **{int(e["episode"]) + 1: int(e["end_step"]) for e in episodes}}
    files = sorted((lock_out / "heatmaps" / rid).glob("*.csv"))
    assert [f.name for f in files] == ["episode000000.csv", "episode000010.csv",
                                       "episode000020.csv", "episode000025.csv"]
    for f in files:
        grid = _read(f)
        total = sum(float(v) for row in grid for k, v in row.items() if k != "row")
        assert total == ends[int(f.stem[7:])]


def test_aggregates_recompute_from_csv(lock_out):
    runs = _read(lock_out / "lock_runs.csv")
    for cell in _read(lock_out / "lock_cells.csv"):
        mine = [r for r in runs if (r["learner"], r["bonus"], r["scale"])
                == (cell["learner"], cell["bonus"], cell["scale"])]
        vals = [np.inf if r["steps_to_max_return"] == "" else int(r["steps_to_max_return"])
                for r in mine]
        assert float(cell["median_steps_to_max_return"]) == float(np.median(vals))
        both = all(r["visited_end_0"] == r["visited_end_1"] == "1" for r in mine)
        assert cell["all_seeds_visit_both_ends"] == ("1" if both else "0")

    cid = "vi-made-x0.5"
    tables = [_read(lock_out / "runs" / f"{cid}-seed{s}.episodes.csv") for s in (0, 1)]
    rebuilt = learning_curve([{"starts": [int(e["start_step"]) for e in t],
                               "policy_returns": [float(e["policy_return"]) for e in t],
                               "total_steps": int(t[-1]["end_step"])} for t in tables], 10)
    curve = _read(lock_out / "curves" / f"{cid}.csv")
    assert [tuple(float(r[k]) for k in harness.CURVE_FIELDS) for r in curve] == rebuilt


def test_best_scale_is_minimum(lock_out):
    cells = _read(lock_out / "lock_cells.csv")
    for row in _read(lock_out / "lock_best_scale.csv"):
        meds = [float(c["median_steps_to_max_return"]) for c in cells
                if (c["learner"], c["bonus"]) == (row["learner"], row["bonus"])]
        assert float(row["median_steps_to_max_return"]) == min(meds)


def test_lock_is_deterministic_across_workers(lock_out, tmp_path):
    again = tmp_path / "again"
    run_experiment(_lock_cfg(again, workers=2))
    assert _csv_bytes(again) == _csv_bytes(lock_out)


def test_run_failure_is_isolated(tmp_path, monkeypatch):
    real = harness.run_learner

    def flaky(name, env, bonus, cfg, evaluate=None):
        if bonus == "made" and cfg.rng_seed == 1:
            raise RuntimeError("boom")
        return real(name, env, bonus, cfg, evaluate)

    monkeypatch.setattr(harness, "run_learner", flaky)
    res = run_experiment(_lock_cfg(tmp_path, seeds=[0, 1]))
    assert res.exit_code == 1 and len(res.errors) == 4
    assert (tmp_path / "errors" / "vi-made-x0.5-seed1.json").is_file()
    assert len(_read(tmp_path / "lock_runs.csv")) == 12


def test_policy_return_lookup():
    starts, values = [0, 5, 9], [0.1, 0.2, 0.3]
    assert [policy_return_at(starts, values, t) for t in (0, 4, 5, 9, 50)] == \
        [0.1, 0.1, 0.2, 0.3, 0.3]


def test_chain_outputs(tmp_path):
    cfg = config_from_dict({"experiment": "chain_pg", "out": str(tmp_path),
                            "chain_pg": {"iters": 30, "step_sizes": [1.0, 5.0],
                                         "objectives": ["vanilla", "made"], "log_every": 5}})
    res = run_experiment(cfg)
    ref = json.loads((tmp_path / "chain_reference.json").read_text())
    assert ref["J_star"] == pytest.approx(9 * (8 / 9) ** 9)
    assert ref["J_star"] == chain_optimal_value(8)
    assert len(_read(tmp_path / "chain_summary.csv")) == 4
    best = {r["objective"]: r for r in _read(tmp_path / "chain_best.csv")}
    assert best["made"]["best_step_size"] == "5.0"
    assert res.summary["best"]["made"]["iters"] is not None
    first = _csv_bytes(tmp_path)
    run_experiment(cfg)
    assert _csv_bytes(tmp_path) == first


def test_meta_outputs(tmp_path):
    cfg = config_from_dict({"experiment": "meta", "seeds": [0, 1], "out": str(tmp_path),
                            "meta": {"eps": 0.3, "n_states": 3}})
    res = run_experiment(cfg)
    assert res.exit_code == 0
    rows = _read(tmp_path / "meta_summary.csv")
    assert [r["seed"] for r in rows] == ["0", "1"] and all(r["passed"] == "1" for r in rows)
    log = _read(tmp_path / "meta" / "seed0-exact.csv")
    assert len(log) == int(rows[0]["iters"])
    mixture = json.loads((tmp_path / "meta" / "seed0-exact-mixture.json").read_text())
    assert sum(mixture["weights"]) == pytest.approx(1.0)


def test_checks_outputs(tmp_path, capsys):
    cfg = config_from_dict({"experiment": "checks", "out": str(tmp_path),
                            "checks": {"occupancy_mdps": 1, "mc_samples": 20_000,
                                       "gradient_mdps": 1, "argmax_instances": 1,
                                       "trials": 20, "k_max": 100, "convergence": False}})
    res = run_experiment(cfg)
    report = _read(tmp_path / "checks_report.csv")
    assert [r["check"] for r in report] == ["occupancy_mc", "gradient_fd", "regularizer_argmax",
                                            "regularity"]
    assert res.exit_code == 0
    assert capsys.readouterr().out.count("PASS") == 4


def test_check_only(tmp_path):
    cfg = _lock_cfg(tmp_path)
    run_experiment(cfg, check_only=True)
    assert [p.name for p in tmp_path.iterdir()] == ["resolved_config.json"]
    assert config_from_dict(json.loads((tmp_path / "resolved_config.json").read_text())) == cfg
