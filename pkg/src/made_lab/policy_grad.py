"""Exact-gradient projected policy gradient under the direct parameterization.

The policy is its own parameter, ``theta[s, a] = pi(a|s)``, constrained to
the product of simplices.  Gradients returned here are ambient gradients
with respect to ``theta``; only their component tangent to the simplex
(row mean removed) is meaningful, and the row-wise simplex projection in
:func:`pg_run` discards the rest.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .mdp import (
    TabularMdp,
    all_occupancies_from,
    check_policy,
    exact_occupancy,
    policy_q,
    policy_value,
    state_occupancy,
    uniform_policy,
)

OBJECTIVES = ("vanilla", "entropy", "rel_entropy", "made")
INTERIOR_FLOOR = 1e-12


def _require_interior(policy: np.ndarray) -> None:
    if np.any(policy <= 0.0):
        raise ValueError("policy must be strictly positive for this objective")


def grad_vanilla(mdp: TabularMdp, policy: np.ndarray) -> np.ndarray:
    """dJ/dtheta[s, a] = d^pi(s) Q^pi(s, a) / (1 - gamma)."""
    pi = check_policy(mdp, policy)
    d_s = state_occupancy(mdp, pi)
    return d_s[:, None] * policy_q(mdp, pi) / (1.0 - mdp.discount)


def _score_weighted(mdp: TabularMdp, policy: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Gradient of F(theta) = <d^pi, f> for a fixed per-pair function ``f``.

    Equals E_{(s,a)~d}[grad log pi(a|s) ((1-gamma)^-1 <d^+_{s,a}, f> + f(s,a))]
    where d^+_{s,a} is the occupancy mass from step 1 onward after starting
    at (s, a).  Under the direct parameterization grad log pi(a|s) picks out
    coordinate (s, a) with weight 1 / pi(a|s), so d(s,a) / pi(a|s) = d(s).
    """
    gamma = mdp.discount
    d_s = state_occupancy(mdp, policy)
    d_from = all_occupancies_from(mdp, policy)
    # <d_{s,a}, f> includes the forced step-0 visit; strip it to get d^+
    future = np.einsum("sauv,uv->sa", d_from, f) - (1.0 - gamma) * f
    return d_s[:, None] * (future / (1.0 - gamma) + f)


def entropy_regularizer(mdp: TabularMdp, policy: np.ndarray) -> float:
    """-E_{d^pi}[log pi(a|s)]."""
    d = exact_occupancy(mdp, policy)
    return float(-(d * np.log(policy)).sum())


def grad_entropy_regularizer(mdp: TabularMdp, policy: np.ndarray) -> np.ndarray:
    # the explicit theta-dependence of -log pi contributes sum_s d(s) * 1, a
    # row constant, so it vanishes on the tangent space and is dropped
    return _score_weighted(mdp, policy, -np.log(policy)) - state_occupancy(mdp, policy)[:, None]


def grad_entropy(mdp: TabularMdp, policy: np.ndarray, tau_k: float) -> np.ndarray:
    """Gradient of J - tau_k (1 - gamma)^-1 E_{d^pi}[log pi]."""
    g = grad_vanilla(mdp, policy)
    if tau_k == 0:
        return g
    pi = check_policy(mdp, policy)
    _require_interior(pi)
    return g + tau_k / (1.0 - mdp.discount) * grad_entropy_regularizer(mdp, pi)


def grad_rel_entropy(mdp: TabularMdp, policy: np.ndarray, tau_k: float) -> np.ndarray:
    """Gradient of J + tau_k sum_{s,a} log theta[s, a]."""
    g = grad_vanilla(mdp, policy)
    if tau_k == 0:
        return g
    pi = check_policy(mdp, policy)
    _require_interior(pi)
    return g + tau_k / pi


def made_regularizer(mdp: TabularMdp, policy: np.ndarray) -> float:
    """sum_{s,a} sqrt(d^pi(s, a))."""
    return float(np.sqrt(exact_occupancy(mdp, policy)).sum())


def grad_made_regularizer(mdp: TabularMdp, policy: np.ndarray) -> np.ndarray:
    """Gradient of sum sqrt(d^pi) as the score-weighted form of f = 1 / (2 sqrt d).

    Pairs with zero occupancy are unreachable under ``policy`` and carry no
    gradient through the chain rule; their f is set to zero.
    """
    pi = check_policy(mdp, policy)
    d = exact_occupancy(mdp, pi)
    with np.errstate(divide="ignore"):
        f = np.where(d > 0, 0.5 / np.sqrt(d), 0.0)
    return _score_weighted(mdp, pi, f)


def grad_made(mdp: TabularMdp, policy: np.ndarray, tau_k: float, sign: int = 1) -> np.ndarray:
    """Gradient of J + sign * tau_k * sum sqrt(d^pi)."""
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    g = grad_vanilla(mdp, policy)
    if tau_k == 0:
        return g
    return g + sign * tau_k * grad_made_regularizer(mdp, policy)


def objective_value(mdp: TabularMdp, policy: np.ndarray, objective: str, tau_k: float,
                    sign: int = 1) -> float:
    """Scalar objective whose gradient the matching ``grad_*`` returns."""
    J = policy_value(mdp, policy)
    if objective == "vanilla" or tau_k == 0:
        return J
    if objective == "entropy":
        return J + tau_k / (1.0 - mdp.discount) * entropy_regularizer(mdp, policy)
    if objective == "rel_entropy":
        return J + tau_k * float(np.log(policy).sum())
    if objective == "made":
        return J + sign * tau_k * made_regularizer(mdp, policy)
    raise ValueError(f"unknown objective {objective!r}")


def objective_grad(mdp: TabularMdp, policy: np.ndarray, objective: str, tau_k: float,
                   sign: int = 1) -> np.ndarray:
    if objective == "vanilla":
        return grad_vanilla(mdp, policy)
    if objective == "entropy":
        return grad_entropy(mdp, policy, tau_k)
    if objective == "rel_entropy":
        return grad_rel_entropy(mdp, policy, tau_k)
    if objective == "made":
        return grad_made(mdp, policy, tau_k, sign)
    raise ValueError(f"unknown objective {objective!r}")


def tangent(g: np.ndarray) -> np.ndarray:
    """Project a gradient table onto the tangent space of the row simplices."""
    return g - g.mean(axis=-1, keepdims=True)


def simplex_project(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (last axis).

    Sort-and-threshold: find the largest k with u_k > (sum_{j<=k} u_j - 1) / k
    over the descending sort u, then shift and clip.
    """
    v = np.asarray(v, dtype=float)
    flat = v.reshape(-1, v.shape[-1])
    n = flat.shape[1]
    u = -np.sort(-flat, axis=1)
    css = np.cumsum(u, axis=1) - 1.0
    ind = np.arange(1, n + 1)
    rho = np.count_nonzero(u - css / ind > 0, axis=1)
    theta = css[np.arange(flat.shape[0]), rho - 1] / rho
    out = np.maximum(flat - theta[:, None], 0.0)
    return out.reshape(v.shape)


@dataclass
class PgConfig:
    objective: str = "vanilla"
    step_size: float = 1.0
    iters: int = 1000
    tau0: float = 0.1
    made_sign: int = 1
    init_policy: np.ndarray | None = None
    log_every: int = 1
    stop_at: float | None = None
    # regularised objectives halve a step that would lower L_k, up to this many times
    max_backtracks: int = 40

    def __post_init__(self) -> None:
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}")
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if self.tau0 < 0:
            raise ValueError("tau0 must be non-negative")
        if self.iters < 1:
            raise ValueError("iters must be >= 1")
        if self.max_backtracks < 0:
            raise ValueError("max_backtracks must be >= 0")

    def tau(self, k: int) -> float:
        """tau_k = tau0 / sqrt(k) for k >= 1."""
        return self.tau0 / np.sqrt(k)


@dataclass
class PgTrace:
    objective: str
    iters: list = field(default_factory=list)
    values: list = field(default_factory=list)
    grad_norms: list = field(default_factory=list)
    policy: np.ndarray | None = None

    def first_reaching(self, threshold: float) -> int | None:
        for k, v in zip(self.iters, self.values):
            if v >= threshold:
                return k
        return None

    def rows(self) -> list[tuple]:
        return [(k, self.objective, v, g)
                for k, v, g in zip(self.iters, self.values, self.grad_norms)]


def _interior_project(v: np.ndarray) -> np.ndarray:
    theta = np.maximum(simplex_project(v), INTERIOR_FLOOR)
    return theta / theta.sum(axis=1, keepdims=True)


def _backtracking_step(mdp: TabularMdp, theta: np.ndarray, g: np.ndarray, cfg: PgConfig,
                       tau_k: float) -> np.ndarray:
    """Projected step on a regularised objective, halved until L_k does not drop.

    The barrier-like regularisers have curvature of order 1 / tau_k near the
    optimum, so any fixed step eventually overshoots onto the floor, where
    tau / theta explodes and the iterate bounces between vertices.
    """
    def value(p):
        return objective_value(mdp, p, cfg.objective, tau_k, cfg.made_sign)

    base = value(theta)
    step = cfg.step_size
    for _ in range(cfg.max_backtracks + 1):
        cand = _interior_project(theta + step * g)
        if value(cand) >= base:
            return cand
        step /= 2.0
    return theta


def pg_run(mdp: TabularMdp, cfg: PgConfig,
           callback: Callable[[int, np.ndarray], None] | None = None) -> PgTrace:
    """Projected gradient ascent on the chosen objective.

    Iteration k (from 1) takes theta <- proj(theta + step * grad L_k(theta))
    with tau_k = tau0 / sqrt(k).  Regularised variants clip each entry at
    ``INTERIOR_FLOOR`` after projection (and renormalise) so log and 1/theta
    stay finite, and halve any step that would lower L_k (see
    :func:`_backtracking_step`).  J of the pre-update iterate is logged (extrinsic reward
    only); a final entry logs the returned policy.  With ``stop_at`` set the
    run ends once J reaches it.
    """
    theta = (uniform_policy(mdp.n_states, mdp.n_actions) if cfg.init_policy is None
             else check_policy(mdp, cfg.init_policy).copy())
    trace = PgTrace(cfg.objective)
    interior = cfg.objective != "vanilla"
    for k in range(1, cfg.iters + 1):
        g = objective_grad(mdp, theta, cfg.objective, cfg.tau(k), cfg.made_sign)
        J = policy_value(mdp, theta)
        reached = cfg.stop_at is not None and J >= cfg.stop_at
        if (k - 1) % cfg.log_every == 0 or reached:
            trace.iters.append(k - 1)
            trace.values.append(J)
            trace.grad_norms.append(float(np.max(np.abs(tangent(g)))))
        if reached:
            trace.policy = theta
            return trace
        if interior:
            theta = _backtracking_step(mdp, theta, g, cfg, cfg.tau(k))
        else:
            theta = simplex_project(theta + cfg.step_size * g)
        if callback is not None:
            callback(k, theta)
    trace.iters.append(cfg.iters)
    trace.values.append(policy_value(mdp, theta))
    g = objective_grad(mdp, theta, cfg.objective, cfg.tau(cfg.iters + 1), cfg.made_sign)
    trace.grad_norms.append(float(np.max(np.abs(tangent(g)))))
    trace.policy = theta
    return trace
