"""Independent reference computations used to check the main code paths.

Nothing here calls value iteration or the closed-form gradients; each
routine reaches its answer by a different route (enumeration, policy
iteration, Frank-Wolfe, projected gradient, finite differences).
"""
from __future__ import annotations

import itertools
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar

from .mdp import TabularMdp, deterministic_policy, exact_occupancy


def iterative_policy_evaluation(mdp: TabularMdp, policy: np.ndarray,
                                tol: float = 1e-13) -> np.ndarray:
    """V^pi by repeated Bellman expectation backups."""
    r_pi = (policy * mdp.reward).sum(axis=1)
    P_pi = np.einsum("sa,sat->st", policy, mdp.transition)
    v = np.zeros(mdp.n_states)
    while True:
        v_new = r_pi + mdp.discount * P_pi @ v
        if np.max(np.abs(v_new - v)) <= tol:
            return v_new
        v = v_new


def enumerate_deterministic(mdp: TabularMdp, reward: np.ndarray | None = None):
    """Best deterministic policy by exhaustive search; returns (value, policy)."""
    r = mdp.reward if reward is None else reward
    best_val, best_pi = -np.inf, None
    for actions in itertools.product(range(mdp.n_actions), repeat=mdp.n_states):
        pi = deterministic_policy(actions, mdp.n_actions)
        val = float((exact_occupancy(mdp, pi) * r).sum() / (1 - mdp.discount))
        if val > best_val + 1e-15:
            best_val, best_pi = val, pi
    return best_val, best_pi


def policy_iteration(mdp: TabularMdp, reward: np.ndarray | None = None,
                     max_iter: int = 10_000) -> np.ndarray:
    """Exact optimal deterministic policy by Howard's policy iteration."""
    r = mdp.reward if reward is None else np.asarray(reward, dtype=float)
    S, A = r.shape
    actions = np.zeros(S, dtype=int)
    for _ in range(max_iter):
        pi = deterministic_policy(actions, A)
        P_pi = np.einsum("sa,sat->st", pi, mdp.transition)
        v = np.linalg.solve(np.eye(S) - mdp.discount * P_pi, (pi * r).sum(axis=1))
        q = r + mdp.discount * mdp.transition @ v
        current = q[np.arange(S), actions]
        improve = q.max(axis=1) > current + 1e-12 * (1 + np.abs(current))
        if not improve.any():
            return pi
        actions = np.where(improve, q.argmax(axis=1), actions)
    raise RuntimeError("policy iteration did not converge")


def conditional_gradient_max(mdp: TabularMdp, value: Callable[[np.ndarray], float],
                             grad: Callable[[np.ndarray], np.ndarray],
                             gap_tol: float = 1e-4, max_iter: int = 100_000):
    """Maximise a concave function of the occupancy over the occupancy polytope.

    Frank-Wolfe with exact line search; the linear maximisation oracle is
    policy iteration on reward ``grad(d)``, whose optimal occupancy is the
    polytope vertex maximising <d', grad(d)>.  Stops once the duality gap
    <d_vertex - d, grad(d)> drops below ``gap_tol``; returns
    ``(d, value(d), gap)`` where ``value(d) + gap`` bounds the maximum.
    """
    d = exact_occupancy(mdp, np.full((mdp.n_states, mdp.n_actions), 1.0 / mdp.n_actions))
    gap = np.inf
    for _ in range(max_iter):
        g = grad(d)
        vertex = exact_occupancy(mdp, policy_iteration(mdp, g))
        direction = vertex - d
        gap = float((direction * g).sum())
        if gap <= gap_tol:
            break
        res = minimize_scalar(lambda t: -value(d + t * direction), bounds=(0.0, 1.0),
                              method="bounded", options={"xatol": 1e-12})
        d = d + res.x * direction
    return d, float(value(d)), gap


def simplex_argmax_pga(rho: np.ndarray, iters: int = 200_000, tol: float = 1e-13) -> np.ndarray:
    """Maximise sum sqrt(d / rho) over the simplex by projected gradient ascent.

    Starts from the uniform point and uses a self-contained sort-based
    projection; the step shrinks whenever the objective fails to increase.
    """
    rho = np.asarray(rho, dtype=float).ravel()
    n = rho.size

    def project(v):
        u = np.sort(v)[::-1]
        css = np.cumsum(u) - 1.0
        k = np.nonzero(u * np.arange(1, n + 1) > css)[0][-1]
        return np.maximum(v - css[k] / (k + 1), 0.0)

    def f(d):
        return np.sqrt(d / rho).sum()

    d = np.full(n, 1.0 / n)
    step = 1e-3
    for _ in range(iters):
        g = 0.5 / np.sqrt(np.maximum(d, 1e-300) * rho)
        cand = project(d + step * g)
        if f(cand) >= f(d):
            if np.max(np.abs(cand - d)) < tol:
                return cand
            d = cand
            step *= 1.2
        else:
            step *= 0.5
    return d


def tangent_finite_difference(f: Callable[[np.ndarray], float], policy: np.ndarray,
                              h: float = 1e-6) -> np.ndarray:
    """Central differences of ``f`` along e_{s,a} - 1/A within each row simplex.

    Entry (s, a) is the directional derivative, which equals the row-centred
    (tangent) component of the true gradient.
    """
    S, A = policy.shape
    out = np.zeros((S, A))
    for s in range(S):
        for a in range(A):
            e = np.zeros((S, A))
            e[s] -= h / A
            e[s, a] += h
            out[s, a] = (f(policy + e) - f(policy - e)) / (2 * h)
    return out
