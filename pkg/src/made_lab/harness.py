"""Seeded experiment runner writing CSV artifacts.

Each experiment expands into independent jobs that write only to their own
paths; the parent process aggregates the returned summaries in job order, so
output bytes do not depend on the worker count.  Floats are written with
``repr`` so every CSV value round-trips exactly.
"""
from __future__ import annotations

import csv
import json
import logging
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .bonuses import write_bonus_csv
from .checks import (
    argmax_suite,
    convergence_suite,
    gradient_suite,
    meta_gap,
    occupancy_suite,
    regularity_suite,
)
from .config import ExperimentConfig
from .envs import (
    ChainConfig,
    LockConfig,
    chain_optimal_value,
    lock_layout,
    make_bidirectional_lock,
    make_chain_mdp,
    make_random_mdp,
)
from .learners import STEP_FIELDS, LearnerConfig, RunRecord, run_learner
from .mdp import finite_horizon_optimum, finite_horizon_return
from .meta import LOG_FIELDS, MetaConfig, run_algorithm1
from .plot import write_svg
from .policy_grad import PgConfig, pg_run

log = logging.getLogger("made_lab")

CURVE_FIELDS = ("env_steps", "median_return", "q25", "q75")
EPISODE_FIELDS = ("episode", "start_step", "end_step", "return", "policy_return")
CHAIN_FIELDS = ("iter", "objective", "J", "grad_inf_norm")
GRID_ROWS = ("good_0", "dead_0", "good_1", "dead_1")


@dataclass
class ExperimentResult:
    experiment: str
    out_dir: Path
    errors: list = field(default_factory=list)
    failed_checks: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    @property
    def exit_code(self) -> int:
        return 0 if not self.errors and not self.failed_checks else 1


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, header, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_json(path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"not serialisable: {type(o).__name__}")


def _scale_tag(scale: float) -> str:
    return f"x{float(scale)!r}"


def cell_id(learner: str, bonus: str, scale: float) -> str:
    return f"{learner}-{bonus}-{_scale_tag(scale)}"


def run_id(learner: str, bonus: str, scale: float, seed: int) -> str:
    return f"{cell_id(learner, bonus, scale)}-seed{seed}"


def _run_jobs(fn, jobs, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def _guarded(fn, job, out_dir: Path, name: str):
    try:
        return fn(job)
    except Exception as exc:  # noqa: BLE001 - isolate per-run failures
        write_json(out_dir / "errors" / f"{name}.json",
                   {"run": name, "error": repr(exc), "traceback": traceback.format_exc()})
        log.error("run %s failed: %r", name, exc)
        return {"error": repr(exc), "run": name}


# lock


def lock_env_config(cfg: ExperimentConfig, seed: int) -> LockConfig:
    e = cfg.lock.env
    return LockConfig(depth=e.depth, slip=e.slip, anti_reward=e.anti_reward,
                      big_reward=e.big_reward, small_reward=e.small_reward,
                      env_seed=seed if e.env_seed is None else e.env_seed,
                      randomize_actions=e.randomize_actions, discount=e.discount)


def lock_learner_config(cfg: ExperimentConfig, scale: float, seed: int) -> LearnerConfig:
    s = cfg.lock.learner
    return LearnerConfig(episodes=s.episodes, max_episode_steps=s.max_episode_steps,
                         discount=s.discount, plan_tol=s.plan_tol,
                         q_horizon=s.q_learning_rate_horizon, ppo_total_iters=s.ppo_total_iters,
                         ppo_horizon=s.ppo_horizon, rng_seed=seed, bonus_scale=scale,
                         v_max=s.v_max, buffer_capacity=s.buffer_capacity,
                         heatmap_period=s.heatmap_period, log_steps=s.log_steps)


def steps_to_max_return(record: RunRecord, optimum: float, fraction: float) -> int | None:
    """Env steps taken before the first episode whose acting policy earns at
    least ``fraction`` of the optimal expected episode return."""
    starts = [0] + record.episode_end_steps[:-1]
    for start, value in zip(starts, record.policy_returns):
        if value >= fraction * optimum:
            return start
    return None


def traced_pairs(record: RunRecord, n: int) -> list[tuple[int, int]]:
    """The ``n`` most-visited pairs; ties broken by flat index."""
    flat = record.final_counts.ravel()
    order = np.lexsort((np.arange(flat.size), -flat))[:n]
    A = record.final_counts.shape[1]
    return [(int(i // A), int(i % A)) for i in order]


def _lock_job(job):
    cfg, learner, bonus, scale, seed, detailed, out = job
    out = Path(out)
    env_cfg = lock_env_config(cfg, seed)
    mdp = make_bidirectional_lock(env_cfg)
    lay = lock_layout(env_cfg)
    lcfg = lock_learner_config(cfg, scale, seed)
    horizon = lcfg.max_episode_steps
    optimum = finite_horizon_optimum(mdp, horizon)
    record = run_learner(learner, mdp, bonus, lcfg,
                         evaluate=lambda p: finite_horizon_return(mdp, p, horizon))
    rid = run_id(learner, bonus, scale, seed)

    if lcfg.log_steps:
        write_csv(out / "runs" / f"{rid}.csv", STEP_FIELDS, record.steps)
    starts = [0] + record.episode_end_steps[:-1]
    write_csv(out / "runs" / f"{rid}.episodes.csv", EPISODE_FIELDS,
              [(i, s, e, r, p) for i, (s, e, r, p) in enumerate(
                  zip(starts, record.episode_end_steps, record.episode_returns,
                      record.policy_returns))])

    pairs = ([tuple(p) for p in cfg.lock.bonus_trace_pairs] or
             traced_pairs(record, cfg.lock.traced_pairs))
    first_bonus, last_bonus = record.bonus_history[0][1], record.bonus_history[-1][1]
    ends = [bool(record.final_counts[lay.good[lock][-1]].sum() > 0) for lock in (0, 1)]
    hit = steps_to_max_return(record, optimum, cfg.lock.success_fraction)
    sidecar = {
        "run": rid, "learner": learner, "bonus": bonus, "scale": scale,
        "run_seed": seed, "env_seed": env_cfg.env_seed,
        "env": asdict(env_cfg), "learner_config": asdict(lcfg),
        "big_lock": lay.big_lock, "optimal_return": optimum,
        "steps_to_max_return": hit, "visited_ends": ends,
        "total_steps": record.cum_steps,
        "traced_pairs": [{"state": s, "action": a,
                          "visits": int(record.final_counts[s, a]),
                          "initial_bonus": float(first_bonus[s, a]),
                          "final_bonus": float(last_bonus[s, a])} for s, a in pairs],
    }
    write_json(out / "runs" / f"{rid}.json", sidecar)

    if detailed:
        for s, a in pairs:
            write_csv(out / "traces" / rid / f"s{s}_a{a}.csv", ("env_steps", "bonus"),
                      [(t, tab[s, a]) for t, tab in record.bonus_history])
        write_bonus_csv(out / "traces" / rid / "final_bonus.csv", last_bonus)
        emit_heatmap(record, lay, out / "heatmaps" / rid)
    return {"run": rid, "learner": learner, "bonus": bonus, "scale": scale, "seed": seed,
            "steps_to_max_return": hit, "visited_ends": ends,
            "starts": starts, "policy_returns": record.policy_returns,
            "total_steps": record.cum_steps, "traced": sidecar["traced_pairs"]}


def emit_heatmap(record: RunRecord, layout, directory) -> list[Path]:
    """One CSV per snapshot: per-state visit totals laid out on the lock grid."""
    directory = Path(directory)
    paths = []
    for episode, steps, per_state in record.snapshots:
        grid = layout.grid(per_state)
        path = directory / f"episode{episode:06d}.csv"
        write_csv(path, ["row"] + [f"col{j}" for j in range(grid.shape[1])],
                  [[name, *row] for name, row in zip(GRID_ROWS, grid.tolist())])
        paths.append(path)
    return paths


def policy_return_at(starts, values, t: int) -> float:
    """Return of the policy in force at env step ``t`` (latest episode start <= t)."""
    idx = int(np.searchsorted(starts, t, side="right")) - 1
    return float(values[max(idx, 0)])


def learning_curve(runs: list, every: int) -> list[tuple]:
    """Median and quartiles across seeds on a grid of env steps."""
    horizon = min(r["total_steps"] for r in runs)
    rows = []
    for t in range(0, horizon + 1, every):
        vals = np.array([policy_return_at(r["starts"], r["policy_returns"], t) for r in runs])
        q25, med, q75 = np.percentile(vals, [25, 50, 75])
        rows.append((t, float(med), float(q25), float(q75)))
    return rows


def _median_steps(runs) -> float:
    return float(np.median([np.inf if r["steps_to_max_return"] is None
                            else r["steps_to_max_return"] for r in runs]))


def _run_lock(cfg: ExperimentConfig, out: Path, result: ExperimentResult) -> None:
    lk = cfg.lock
    jobs, names = [], []
    for learner in lk.learners:
        for bonus in lk.bonuses:
            for scale in lk.scales:
                for i, seed in enumerate(cfg.seeds):
                    jobs.append((cfg, learner, bonus, scale, seed, i == 0, str(out)))
                    names.append(run_id(learner, bonus, scale, seed))
    log.info("lock: %d runs on %d worker(s)", len(jobs), cfg.workers)
    outs = _run_jobs(_guarded_lock, list(zip(jobs, names)), cfg.workers)

    cells: dict = {}
    for res in outs:
        if "error" in res:
            result.errors.append(res)
            continue
        cells.setdefault((res["learner"], res["bonus"], res["scale"]), []).append(res)

    summary_rows, cell_rows = [], []
    for (learner, bonus, scale), runs in cells.items():
        cid = cell_id(learner, bonus, scale)
        write_csv(out / "curves" / f"{cid}.csv", CURVE_FIELDS, learning_curve(runs, lk.curve_every))
        for r in runs:
            summary_rows.append((r["run"], learner, bonus, scale, r["seed"],
                                 r["steps_to_max_return"], r["visited_ends"][0],
                                 r["visited_ends"][1], r["total_steps"]))
        reached = [r["steps_to_max_return"] for r in runs if r["steps_to_max_return"] is not None]
        cell_rows.append((learner, bonus, scale, len(runs), len(reached), _median_steps(runs),
                          all(all(r["visited_ends"]) for r in runs)))
    write_csv(out / "lock_runs.csv",
              ("run", "learner", "bonus", "scale", "seed", "steps_to_max_return",
               "visited_end_0", "visited_end_1", "total_steps"), summary_rows)
    write_csv(out / "lock_cells.csv",
              ("learner", "bonus", "scale", "seeds", "seeds_reaching", "median_steps_to_max_return",
               "all_seeds_visit_both_ends"), cell_rows)

    best_rows = []
    best: dict = {}
    for learner in lk.learners:
        for bonus in lk.bonuses:
            options = [(row[5], row[2]) for row in cell_rows if row[0] == learner and row[1] == bonus]
            if not options:
                continue
            med, scale = min(options)
            best[(learner, bonus)] = (med, scale)
            best_rows.append((learner, bonus, scale, med))
    write_csv(out / "lock_best_scale.csv",
              ("learner", "bonus", "best_scale", "median_steps_to_max_return"), best_rows)

    trace_rows = []
    for res in outs:
        if "error" in res:
            continue
        for p in res["traced"]:
            trace_rows.append((res["run"], res["bonus"], p["state"], p["action"], p["visits"],
                               p["initial_bonus"], p["final_bonus"]))
    write_csv(out / "bonus_decay.csv",
              ("run", "bonus", "state", "action", "visits", "initial_bonus", "final_bonus"),
              trace_rows)

    if cfg.plots:
        for learner in lk.learners:
            for scale in lk.scales:
                series = []
                for bonus in lk.bonuses:
                    runs = cells.get((learner, bonus, scale))
                    if runs:
                        rows = learning_curve(runs, lk.curve_every)
                        series.append((bonus, [r[0] for r in rows], [r[1] for r in rows]))
                if series:
                    write_svg(out / "plots" / f"lock-{learner}-{_scale_tag(scale)}.svg", series,
                              title=f"{learner}, bonus scale {scale}", xlabel="environment steps",
                              ylabel="median expected return")
    result.summary = {
        "cells": len(cell_rows),
        "best": {f"{l}/{b}": {"scale": s, "median_steps": m} for (l, b), (m, s) in best.items()},
    }


def _guarded_lock(item):
    job, name = item
    return _guarded(_lock_job, job, Path(job[-1]), name)


# chain


def _chain_job(job):
    cfg, objective, step, out = job
    ch = cfg.chain_pg
    mdp = make_chain_mdp(ChainConfig(depth=ch.depth))
    trace = pg_run(mdp, PgConfig(objective=objective, step_size=step, iters=ch.iters,
                                 tau0=ch.tau0, made_sign=ch.made_sign, log_every=ch.log_every))
    name = f"{objective}-step{float(step)!r}"
    write_csv(Path(out) / "chain" / f"{name}.csv", CHAIN_FIELDS, trace.rows())
    j_star = chain_optimal_value(ch.depth)
    return {"run": name, "objective": objective, "step": step,
            "iters_to_threshold": trace.first_reaching(ch.threshold_fraction * j_star),
            "initial_J": trace.values[0], "final_J": trace.values[-1],
            "max_J": max(trace.values), "iters": trace.iters, "values": trace.values}


def _guarded_chain(item):
    job, name = item
    return _guarded(_chain_job, job, Path(job[-1]), name)


def _run_chain(cfg: ExperimentConfig, out: Path, result: ExperimentResult) -> None:
    ch = cfg.chain_pg
    j_star = chain_optimal_value(ch.depth)
    gamma = ChainConfig(depth=ch.depth).discount
    write_json(out / "chain_reference.json",
               {"depth": ch.depth, "discount": gamma, "J_star": j_star,
                "threshold": ch.threshold_fraction * j_star})
    jobs = [((cfg, o, s, str(out)), f"{o}-step{float(s)!r}")
            for o in ch.objectives for s in ch.step_sizes]
    outs = _run_jobs(_guarded_chain, jobs, cfg.workers)
    rows, best = [], {}
    for res in outs:
        if "error" in res:
            result.errors.append(res)
            continue
        rows.append((res["objective"], res["step"], res["iters_to_threshold"], res["initial_J"],
                     res["final_J"], res["max_J"] - res["initial_J"]))
        key = np.inf if res["iters_to_threshold"] is None else res["iters_to_threshold"]
        if res["objective"] not in best or key < best[res["objective"]][0]:
            best[res["objective"]] = (key, res)
    write_csv(out / "chain_summary.csv",
              ("objective", "step_size", "iters_to_threshold", "initial_J", "final_J", "max_gain"),
              rows)
    write_csv(out / "chain_best.csv", ("objective", "best_step_size", "iters_to_threshold"),
              [(o, r["step"], r["iters_to_threshold"]) for o, (_, r) in best.items()])
    if cfg.plots and best:
        write_svg(out / "plots" / "chain.svg",
                  [(f"{o} (step {r['step']})", r["iters"], r["values"]) for o, (_, r) in best.items()],
                  title=f"chain, H = {ch.depth}", xlabel="iteration", ylabel="J",
                  hlines=[("J*", j_star)])
    result.summary = {"J_star": j_star,
                      "best": {o: {"step": r["step"], "iters": r["iters_to_threshold"]}
                               for o, (_, r) in best.items()}}


# meta


def _meta_job(job):
    cfg, seed, out = job
    m = cfg.meta
    mdp = make_random_mdp(m.n_states, m.n_actions, seed, m.discount)
    mcfg = MetaConfig.convergence_preset(m.eps, m.n_states, m.n_actions, smoothing=m.smoothing,
                                     decay_exponent=m.decay_exponent)
    beta = mcfg.constants(m.n_states, m.n_actions).beta
    row = {"seed": seed, "iters": mcfg.iters, "eta": mcfg.mix_rate, "eps_d": mcfg.density_err}
    for label, noise in (("exact", None), ("noisy", seed + 1_000_003)):
        res = run_algorithm1(mdp, mcfg, density_noise=noise)
        write_csv(Path(out) / "meta" / f"seed{seed}-{label}.csv", LOG_FIELDS,
                  [tuple(e[f] for f in LOG_FIELDS) for e in res.log])
        write_json(Path(out) / "meta" / f"seed{seed}-{label}-mixture.json",
                   res.mixture.to_dict())
        row[f"gap_{label}"] = meta_gap(mdp, mcfg, res, m.oracle_gap)
    row["noise_allowance"] = row["gap_exact"] + 2 * beta * mcfg.density_err + m.noise_slack
    row["passed"] = row["gap_exact"] <= m.eps and row["gap_noisy"] <= row["noise_allowance"]
    return row


def _guarded_meta(item):
    job, name = item
    return _guarded(_meta_job, job, Path(job[-1]), name)


def _run_meta(cfg: ExperimentConfig, out: Path, result: ExperimentResult) -> None:
    jobs = [((cfg, s, str(out)), f"meta-seed{s}") for s in cfg.seeds]
    outs = _run_jobs(_guarded_meta, jobs, cfg.workers)
    fields_ = ("seed", "iters", "eta", "eps_d", "gap_exact", "gap_noisy", "noise_allowance",
               "passed")
    rows = []
    for res in outs:
        if "error" in res:
            result.errors.append(res)
            continue
        rows.append(tuple(res[f] for f in fields_))
        if not res["passed"]:
            result.failed_checks.append(f"meta-seed{res['seed']}")
    write_csv(out / "meta_summary.csv", fields_, rows)
    result.summary = {"runs": len(rows)}


# checks


def _run_checks(cfg: ExperimentConfig, out: Path, result: ExperimentResult) -> None:
    c, seed = cfg.checks, cfg.seeds[0]
    suites = [
        lambda: occupancy_suite(c.occupancy_mdps, c.mc_samples, seed=seed),
        lambda: gradient_suite(c.gradient_mdps, c.fd_step, tau=c.tau, seed=seed),
        lambda: argmax_suite(c.argmax_instances, seed=seed),
        lambda: regularity_suite(tuple(c.lams), tau=c.tau, trials=c.trials, k_max=c.k_max,
                                 seed=seed),
    ]
    if c.convergence:
        suites.append(lambda: convergence_suite(mdp_seed=seed))
    report = []
    for run in suites:
        try:
            res = run()
        except Exception as exc:  # noqa: BLE001
            result.errors.append({"run": "checks", "error": repr(exc)})
            continue
        print(res.line())
        report.append((res.name, res.passed, res.worst, res.tolerance))
        if res.rows:
            keys = list(res.rows[0])
            write_csv(out / "checks" / f"{res.name}.csv", keys,
                      [tuple(r[k] for k in keys) for r in res.rows])
        if not res.passed:
            result.failed_checks.append(res.name)
    write_csv(out / "checks_report.csv", ("check", "passed", "worst", "tolerance"), report)
    result.summary = {name: bool(p) for name, p, _, _ in report}


RUNNERS = {"lock": _run_lock, "chain_pg": _run_chain, "meta": _run_meta, "checks": _run_checks}


def run_experiment(cfg: ExperimentConfig, check_only: bool = False) -> ExperimentResult:
    """Write ``resolved_config.json`` first, then every artifact under ``cfg.out``."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved_config.json").write_text(cfg.to_json())
    result = ExperimentResult(cfg.experiment, out)
    if check_only:
        return result
    RUNNERS[cfg.experiment](cfg, out, result)
    if result.errors:
        write_json(out / "errors.json", result.errors)
    return result
