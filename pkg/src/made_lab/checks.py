"""Numerical verification suites shared by the ``checks`` experiment and the tests.

Every suite returns a :class:`SuiteResult` whose ``rows`` are flat dicts,
one per instance, so callers can dump them as CSV without post-processing.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .envs import make_random_mdp
from .mdp import exact_occupancy, mc_occupancy, mixture_occupancy
from .meta import MetaConfig, final_objective, regularity_check, regularizer_argmax, run_algorithm1
from .oracles import conditional_gradient_max, simplex_argmax_pga, tangent_finite_difference
from .policy_grad import OBJECTIVES, objective_grad, objective_value, tangent


@dataclass
class SuiteResult:
    name: str
    passed: bool
    worst: float
    tolerance: float
    seconds: float
    rows: list = field(default_factory=list)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.name}: worst={self.worst:.3g} tol={self.tolerance:.3g} "
                f"({self.seconds:.1f}s)")


def _random_policy(rng, S: int, A: int, floor: float = 0.05) -> np.ndarray:
    pi = rng.dirichlet(np.ones(A), size=S)
    pi = np.maximum(pi, floor)
    return pi / pi.sum(axis=1, keepdims=True)


def occupancy_suite(n_mdps: int = 20, samples: int = 200_000, tol: float = 0.01,
                    seed: int = 0, discount: float = 0.9) -> SuiteResult:
    """Exact occupancy against geometric-horizon Monte Carlo (sup norm)."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(n_mdps):
        S, A = int(rng.integers(2, 7)), int(rng.integers(2, 4))
        mdp = make_random_mdp(S, A, int(rng.integers(2**31)), discount)
        pi = _random_policy(rng, S, A, floor=0.0)
        err = float(np.max(np.abs(exact_occupancy(mdp, pi)
                                  - mc_occupancy(mdp, pi, samples, int(rng.integers(2**31))))))
        rows.append({"instance": i, "S": S, "A": A, "linf": err})
    worst = max(r["linf"] for r in rows)
    return SuiteResult("occupancy_mc", worst <= tol, worst, tol, time.perf_counter() - t0, rows)


def gradient_suite(n_mdps: int = 10, h: float = 1e-6, tol: float = 1e-4, tau: float = 0.1,
                   seed: int = 0, discount: float = 0.9) -> SuiteResult:
    """Closed-form gradients of all four objectives against tangent-space central differences.

    Relative error is max |g_tan - fd| / max |fd| per (instance, objective).
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(n_mdps):
        S, A = int(rng.integers(2, 5)), int(rng.integers(2, 4))
        mdp = make_random_mdp(S, A, int(rng.integers(2**31)), discount)
        pi = _random_policy(rng, S, A)
        for obj in OBJECTIVES:
            g = tangent(objective_grad(mdp, pi, obj, tau))
            fd = tangent_finite_difference(lambda p: objective_value(mdp, p, obj, tau), pi, h)
            rel = float(np.max(np.abs(g - fd)) / max(np.max(np.abs(fd)), 1e-300))
            rows.append({"instance": i, "S": S, "A": A, "objective": obj, "rel_err": rel})
    worst = max(r["rel_err"] for r in rows)
    return SuiteResult("gradient_fd", worst <= tol, worst, tol, time.perf_counter() - t0, rows)


def argmax_suite(n_instances: int = 10, tol: float = 1e-6, seed: int = 0) -> SuiteResult:
    """Closed-form regularizer maximiser against projected gradient ascent (L1)."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(n_instances):
        n = int(rng.integers(2, 13))
        rho = rng.dirichlet(np.ones(n)) + 0.01
        rho /= rho.sum()
        err = float(np.abs(regularizer_argmax(rho) - simplex_argmax_pga(rho)).sum())
        rows.append({"instance": i, "n": n, "l1": err})
    worst = max(r["l1"] for r in rows)
    return SuiteResult("regularizer_argmax", worst <= tol, worst, tol,
                       time.perf_counter() - t0, rows)


def regularity_suite(lams=(0.25, 1.0), n_states: int = 5, n_actions: int = 2,
                     tau: float = 0.1, trials: int = 1000, k_max: int = 10_000,
                     seed: int = 0) -> SuiteResult:
    """All four regularity claims, plus the closed-form constants, per smoothing level."""
    t0 = time.perf_counter()
    rows = []
    for lam in lams:
        rep = regularity_check(n_states, n_actions, lam, tau, trials=trials, seed=seed,
                               k_max=k_max)
        c = rep["constants"]
        beta_ok = abs(c["beta"] - 1.0 / (4 * lam**2)) <= 1e-12
        B_ok = abs(c["B"] - n_states * n_actions * (1 + np.sqrt((1 + lam) / lam))) <= 1e-9
        rows.append({"lam": lam, **rep["claims"], "beta": c["beta"], "B": c["B"],
                     "xi": c["xi"], "constants_ok": beta_ok and B_ok})
    failures = sum(not all(r[k] for k in ("concave", "smooth", "bounded", "drift",
                                          "constants_ok")) for r in rows)
    return SuiteResult("regularity", failures == 0, float(failures), 0.0,
                       time.perf_counter() - t0, rows)


def meta_gap(mdp, cfg: MetaConfig, result, oracle_gap: float = 1e-4) -> float:
    """Upper bound on max L_K - L_K(d_mix): Frank-Wolfe value plus its duality gap."""
    value, grad = final_objective(mdp, cfg, result)
    _, best, fw_gap = conditional_gradient_max(mdp, value, grad, gap_tol=oracle_gap)
    return best + fw_gap - value(mixture_occupancy(mdp, result.mixture))


def convergence_suite(eps: float = 0.05, n_states: int = 5, n_actions: int = 2,
                      discount: float = 0.9, smoothing: float = 1.0, mdp_seed: int = 0,
                      noise_seed: int = 1, oracle_gap: float = 1e-4,
                      slack: float = 0.01) -> SuiteResult:
    """Meta algorithm with the convergence-rate preset against a Frank-Wolfe maximiser.

    The gap is (FW value + FW duality gap) - L_K(d_mix), an upper bound on
    the true suboptimality.  The noisy run must stay within
    2 beta eps_d + ``slack`` of the exact run.
    """
    t0 = time.perf_counter()
    mdp = make_random_mdp(n_states, n_actions, mdp_seed, discount)
    cfg = MetaConfig.convergence_preset(eps, n_states, n_actions, smoothing=smoothing)
    beta = cfg.constants(n_states, n_actions).beta
    rows = []
    for label, noise in (("exact", None), ("noisy", noise_seed)):
        gap = meta_gap(mdp, cfg, run_algorithm1(mdp, cfg, density_noise=noise), oracle_gap)
        rows.append({"run": label, "iters": cfg.iters, "eta": cfg.mix_rate, "gap": gap,
                     "eps_d": cfg.density_err if noise is not None else 0.0})
    exact, noisy = rows
    allowed = exact["gap"] + 2 * beta * cfg.density_err + slack
    passed = exact["gap"] <= eps and noisy["gap"] <= allowed
    worst = max(exact["gap"] / eps, noisy["gap"] / allowed)
    return SuiteResult("convergence", passed, worst, 1.0, time.perf_counter() - t0, rows)


SUITES = {
    "occupancy_mc": occupancy_suite,
    "gradient_fd": gradient_suite,
    "regularizer_argmax": argmax_suite,
    "regularity": regularity_suite,
    "convergence": convergence_suite,
}
