"""Exact finite-MDP machinery: occupancy measures, values, planning, mixtures.

Policies, value tables and visitation densities are plain numpy arrays:
a policy is an ``(S, A)`` row-stochastic table, a density an ``(S, A)``
table summing to one.  Only the MDP and the policy mixture get their own
types, since they carry structure beyond a single array.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg

PROB_ATOL = 1e-12
DENSITY_ATOL = 1e-9
DEFAULT_TOL = 1e-10


class MdpError(ValueError):
    """Raised for malformed MDPs, policies or mismatched dimensions."""


def _check_stochastic(arr: np.ndarray, name: str, atol: float = PROB_ATOL) -> None:
    if not np.all(np.isfinite(arr)):
        raise MdpError(f"{name} has non-finite entries")
    if np.any(arr < 0):
        raise MdpError(f"{name} has negative entries")
    sums = arr.sum(axis=-1)
    if not np.allclose(sums, 1.0, rtol=0.0, atol=atol):
        worst = float(np.max(np.abs(sums - 1.0)))
        raise MdpError(f"{name} rows do not sum to 1 (max deviation {worst:.3e})")


@dataclass(frozen=True, eq=False)
class TabularMdp:
    """Finite discounted MDP with an explicit transition tensor.

    ``transition[s, a, s']`` is P(s'|s,a) and ``reward[s, a]`` the expected
    one-step reward.  ``transition_reward[s, a, s']``, when given, is the
    reward realised on a particular transition; simulators use it so that
    rewards can depend on the successor.  ``terminal`` marks absorbing
    states at which episodic simulators stop.
    """

    transition: np.ndarray
    reward: np.ndarray
    initial: np.ndarray
    discount: float
    transition_reward: np.ndarray | None = None
    terminal: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        P = np.asarray(self.transition, dtype=float)
        r = np.asarray(self.reward, dtype=float)
        rho = np.asarray(self.initial, dtype=float)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise MdpError(f"transition must have shape (S, A, S), got {P.shape}")
        S, A, _ = P.shape
        if S < 1 or A < 1:
            raise MdpError("need at least one state and one action")
        if r.shape != (S, A):
            raise MdpError(f"reward must have shape {(S, A)}, got {r.shape}")
        if rho.shape != (S,):
            raise MdpError(f"initial must have shape {(S,)}, got {rho.shape}")
        _check_stochastic(P, "transition")
        _check_stochastic(rho, "initial")
        if not np.all(np.isfinite(r)) or np.any(np.abs(r) > 1.0):
            raise MdpError("rewards must lie in [-1, 1]")
        if not 0.0 <= self.discount < 1.0:
            raise MdpError(f"discount must lie in [0, 1), got {self.discount}")
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "reward", r)
        object.__setattr__(self, "initial", rho)
        if self.transition_reward is not None:
            R = np.asarray(self.transition_reward, dtype=float)
            if R.shape != P.shape:
                raise MdpError("transition_reward must match transition shape")
            if not np.allclose((P * R).sum(axis=2), r, atol=1e-12):
                raise MdpError("transition_reward is inconsistent with reward")
            object.__setattr__(self, "transition_reward", R)
        if self.terminal is not None:
            term = np.asarray(self.terminal, dtype=bool)
            if term.shape != (S,):
                raise MdpError("terminal mask must have shape (S,)")
            object.__setattr__(self, "terminal", term)
        for arr in (self.transition, self.reward, self.initial,
                    self.transition_reward, self.terminal):
            if arr is not None:
                arr.flags.writeable = False

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    def with_reward(self, reward: np.ndarray) -> "TabularMdp":
        return TabularMdp(self.transition, reward, self.initial, self.discount,
                          terminal=self.terminal, meta=dict(self.meta))

    def to_dict(self) -> dict:
        """JSON-ready layout: dims plus row-major flattened tensors."""
        out = {
            "n_states": self.n_states,
            "n_actions": self.n_actions,
            "discount": self.discount,
            "transition": self.transition.ravel().tolist(),
            "reward": self.reward.ravel().tolist(),
            "initial": self.initial.tolist(),
            "meta": self.meta,
        }
        if self.transition_reward is not None:
            out["transition_reward"] = self.transition_reward.ravel().tolist()
        if self.terminal is not None:
            out["terminal"] = [bool(x) for x in self.terminal]
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "TabularMdp":
        S, A = int(data["n_states"]), int(data["n_actions"])
        R = data.get("transition_reward")
        return cls(
            transition=np.asarray(data["transition"], dtype=float).reshape(S, A, S),
            reward=np.asarray(data["reward"], dtype=float).reshape(S, A),
            initial=np.asarray(data["initial"], dtype=float),
            discount=float(data["discount"]),
            transition_reward=None if R is None else np.asarray(R, dtype=float).reshape(S, A, S),
            terminal=None if data.get("terminal") is None else np.asarray(data["terminal"], dtype=bool),
            meta=dict(data.get("meta", {})),
        )


def check_policy(mdp: TabularMdp, policy: np.ndarray) -> np.ndarray:
    pi = np.asarray(policy, dtype=float)
    if pi.shape != (mdp.n_states, mdp.n_actions):
        raise MdpError(f"policy shape {pi.shape} does not match MDP "
                       f"({mdp.n_states}, {mdp.n_actions})")
    _check_stochastic(pi, "policy")
    return pi


def uniform_policy(n_states: int, n_actions: int) -> np.ndarray:
    return np.full((n_states, n_actions), 1.0 / n_actions)


def deterministic_policy(actions: Sequence[int], n_actions: int) -> np.ndarray:
    actions = np.asarray(actions, dtype=int)
    pi = np.zeros((len(actions), n_actions))
    pi[np.arange(len(actions)), actions] = 1.0
    return pi


def state_transition(mdp: TabularMdp, policy: np.ndarray) -> np.ndarray:
    """P_pi[s, s'] = sum_a pi(a|s) P(s'|s,a)."""
    return np.einsum("sa,sat->st", policy, mdp.transition)


def _state_occupancy(mdp: TabularMdp, policy: np.ndarray, start: np.ndarray) -> np.ndarray:
    """Solve (I - gamma P_pi^T) d = (1 - gamma) start; ``start`` may be (S,) or (S, m)."""
    gamma = mdp.discount
    system = np.eye(mdp.n_states) - gamma * state_transition(mdp, policy).T
    d = linalg.solve(system, (1.0 - gamma) * start)
    if not np.all(np.isfinite(d)):
        raise FloatingPointError("occupancy solve produced non-finite values")
    return d


def state_occupancy(mdp: TabularMdp, policy: np.ndarray) -> np.ndarray:
    pi = check_policy(mdp, policy)
    return _state_occupancy(mdp, pi, mdp.initial)


def exact_occupancy(mdp: TabularMdp, policy: np.ndarray) -> np.ndarray:
    """Discounted state-action occupancy d^pi(s, a) by direct linear solve."""
    pi = check_policy(mdp, policy)
    d_s = _state_occupancy(mdp, pi, mdp.initial)
    # round-off can leave entries at -1e-17
    return np.clip(d_s[:, None] * pi, 0.0, None)


def occupancy_residual(mdp: TabularMdp, policy: np.ndarray, d: np.ndarray) -> float:
    """Sup-norm residual of the state-occupancy flow equation for ``d``."""
    d_s = np.asarray(d).sum(axis=1)
    lhs = d_s - mdp.discount * state_transition(mdp, policy).T @ d_s
    return float(np.max(np.abs(lhs - (1.0 - mdp.discount) * mdp.initial)))


def occupancy_from(mdp: TabularMdp, policy: np.ndarray, s0: int, a0: int) -> np.ndarray:
    """Occupancy when step 0 is forced to ``(s0, a0)`` and ``policy`` is followed after."""
    pi = check_policy(mdp, policy)
    if not (0 <= s0 < mdp.n_states and 0 <= a0 < mdp.n_actions):
        raise MdpError(f"pair ({s0}, {a0}) out of range")
    d_next = _state_occupancy(mdp, pi, mdp.transition[s0, a0])
    d = mdp.discount * d_next[:, None] * pi
    d[s0, a0] += 1.0 - mdp.discount
    return d


def all_occupancies_from(mdp: TabularMdp, policy: np.ndarray) -> np.ndarray:
    """Stack of ``occupancy_from`` for every start pair, shape (S, A, S, A).

    One factorisation serves all S*A right-hand sides.
    """
    pi = check_policy(mdp, policy)
    S, A = pi.shape
    starts = mdp.transition.reshape(S * A, S).T
    d_next = _state_occupancy(mdp, pi, starts).T.reshape(S, A, S)
    out = mdp.discount * d_next[..., None] * pi[None, None]
    idx_s, idx_a = np.meshgrid(np.arange(S), np.arange(A), indexing="ij")
    out[idx_s, idx_a, idx_s, idx_a] += 1.0 - mdp.discount
    return out


def mc_occupancy(mdp: TabularMdp, policy: np.ndarray, n_rollouts: int,
                 rng_seed: int) -> np.ndarray:
    """Monte-Carlo occupancy via geometric stopping times.

    Each rollout draws T ~ Geometric(1 - gamma) on {0, 1, ...} and records
    the pair visited at step T, which makes the histogram unbiased for d^pi.
    """
    if n_rollouts < 1:
        raise ValueError("n_rollouts must be >= 1")
    pi = check_policy(mdp, policy)
    rng = np.random.default_rng(rng_seed)
    S, A = pi.shape
    stop = rng.geometric(1.0 - mdp.discount, size=n_rollouts) - 1
    cum_pi = np.cumsum(pi, axis=1)
    cum_P = np.cumsum(mdp.transition, axis=2)

    def draw(cum: np.ndarray) -> np.ndarray:
        u = rng.random(cum.shape[0])[:, None]
        return np.minimum((u >= cum).sum(axis=1), cum.shape[1] - 1)

    states = draw(np.broadcast_to(np.cumsum(mdp.initial), (n_rollouts, S)))
    actions = draw(cum_pi[states])
    counts = np.zeros(S * A)
    alive = np.arange(n_rollouts)
    t = 0
    while alive.size:
        done = stop[alive] == t
        np.add.at(counts, states[done] * A + actions[done], 1)
        keep = ~done
        alive, states, actions = alive[keep], states[keep], actions[keep]
        if not alive.size:
            break
        states = draw(cum_P[states, actions])
        actions = draw(cum_pi[states])
        t += 1
    return counts.reshape(S, A) / n_rollouts


@dataclass(frozen=True)
class PolicyMixture:
    """A weighted sequence of policies; one policy is sampled per episode."""

    policies: tuple
    weights: np.ndarray
    eta: float

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=float)
        if len(self.policies) != w.shape[0]:
            raise MdpError("policies and weights differ in length")
        if np.any(w < 0) or abs(w.sum() - 1.0) > PROB_ATOL:
            raise MdpError("mixture weights must lie on the simplex")
        if not 0.0 < self.eta < 1.0:
            raise MdpError("mixing rate must lie in (0, 1)")
        object.__setattr__(self, "policies", tuple(np.asarray(p, float) for p in self.policies))
        object.__setattr__(self, "weights", w)

    @classmethod
    def single(cls, policy: np.ndarray, eta: float) -> "PolicyMixture":
        return cls((policy,), np.ones(1), eta)

    @classmethod
    def geometric(cls, policies: Sequence[np.ndarray], eta: float) -> "PolicyMixture":
        """Weights ((1-eta)^(k-1), (1-eta)^(k-2) eta, ..., eta)."""
        k = len(policies)
        w = np.array([eta * (1 - eta) ** (k - 1 - i) for i in range(k)])
        w[0] = (1 - eta) ** (k - 1)
        return cls(tuple(policies), w, eta)

    def append(self, policy: np.ndarray) -> "PolicyMixture":
        """w^{k+1} = ((1 - eta) w^k, eta)."""
        w = np.append((1.0 - self.eta) * self.weights, self.eta)
        # re-normalise away the float drift of repeated scaling
        w /= w.sum()
        return PolicyMixture(self.policies + (np.asarray(policy, float),), w, self.eta)

    def __len__(self) -> int:
        return len(self.policies)

    def to_dict(self) -> dict:
        return {
            "eta": self.eta,
            "weights": self.weights.tolist(),
            "policies": [p.ravel().tolist() for p in self.policies],
            "shape": list(self.policies[0].shape),
        }


def mixture_occupancy(mdp: TabularMdp, mix: PolicyMixture) -> np.ndarray:
    return sum(w * exact_occupancy(mdp, p) for w, p in zip(mix.weights, mix.policies))


def policy_q(mdp: TabularMdp, policy: np.ndarray, reward: np.ndarray | None = None,
             terminal: np.ndarray | None = None) -> np.ndarray:
    """Exact Q^pi by solving the policy-evaluation linear system.

    ``terminal`` states are treated as zero-value absorbing states.
    """
    r = mdp.reward if reward is None else np.asarray(reward, dtype=float)
    return evaluate_q(mdp.transition, r, mdp.discount, policy, terminal)


def evaluate_q(P: np.ndarray, r: np.ndarray, gamma: float, policy: np.ndarray,
               terminal: np.ndarray | None = None) -> np.ndarray:
    S = P.shape[0]
    r_pi = np.einsum("sa,sa->s", policy, r)
    P_pi = np.einsum("sa,sat->st", policy, P)
    if terminal is not None and terminal.any():
        r_pi = np.where(terminal, 0.0, r_pi)
        P_pi = np.where(terminal[:, None], 0.0, P_pi)
    v = linalg.solve(np.eye(S) - gamma * P_pi, r_pi)
    q = r + gamma * P @ v
    if terminal is not None and terminal.any():
        q[terminal] = 0.0
    return q


def policy_values(mdp: TabularMdp, policy: np.ndarray) -> np.ndarray:
    """V^pi(s)."""
    pi = check_policy(mdp, policy)
    return (pi * policy_q(mdp, pi)).sum(axis=1)


def policy_value(mdp: TabularMdp, policy: np.ndarray, reward: np.ndarray | None = None) -> float:
    """J(pi) = (1 - gamma)^-1 <d^pi, r>."""
    r = mdp.reward if reward is None else reward
    d = exact_occupancy(mdp, policy)
    return float((d * r).sum() / (1.0 - mdp.discount))


def bellman_optimality(P: np.ndarray, r: np.ndarray, gamma: float, q: np.ndarray,
                       terminal: np.ndarray | None = None) -> np.ndarray:
    v = q.max(axis=1)
    if terminal is not None:
        v = np.where(terminal, 0.0, v)
    out = r + gamma * P @ v
    if terminal is not None:
        out[terminal] = 0.0
    return out


def greedy(q: np.ndarray) -> np.ndarray:
    """Deterministic greedy policy; ties go to the lowest action index."""
    return deterministic_policy(np.argmax(q, axis=1), q.shape[1])


def solve_q_optimal(P: np.ndarray, r: np.ndarray, gamma: float, tol: float = DEFAULT_TOL,
                    q0: np.ndarray | None = None, terminal: np.ndarray | None = None,
                    accelerate: bool = False, max_iter: int = 1_000_000) -> np.ndarray:
    """Value iteration on raw arrays until the Bellman residual is <= tol.

    With ``accelerate`` each backup is followed by exact evaluation of the
    greedy policy (policy-iteration style jumps), which matters when gamma
    is close to 1.  The stopping rule is the same either way.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    q = np.zeros_like(r, dtype=float) if q0 is None else np.array(q0, dtype=float)
    for _ in range(max_iter):
        q_new = bellman_optimality(P, r, gamma, q, terminal)
        if np.max(np.abs(q_new - q)) <= tol:
            return q_new
        if accelerate:
            pi = greedy(q_new)
            q = evaluate_q(P, r, gamma, pi, terminal)
        else:
            q = q_new
    raise RuntimeError("value iteration did not converge")


def value_iteration_plan(mdp: TabularMdp, tol: float = DEFAULT_TOL,
                         reward: np.ndarray | None = None,
                         q0: np.ndarray | None = None,
                         accelerate: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Approximate planning oracle.

    Returns ``(Q, greedy_policy)`` with Bellman residual of ``Q`` at most
    ``tol``; the greedy policy is then within ``2 gamma tol / (1 - gamma)``
    of optimal.  ``reward`` overrides the MDP's reward (it need not lie in
    [-1, 1], e.g. when bonuses are added).
    """
    r = mdp.reward if reward is None else np.asarray(reward, dtype=float)
    q = solve_q_optimal(mdp.transition, r, mdp.discount, tol, q0, mdp.terminal, accelerate)
    return q, greedy(q)


def finite_horizon_return(mdp: TabularMdp, policy: np.ndarray, horizon: int) -> float:
    """Expected undiscounted return of ``policy`` over an episode of ``horizon``
    steps from the initial distribution; terminal states end the episode."""
    v = np.zeros(mdp.n_states)
    for _ in range(horizon):
        q = mdp.reward + mdp.transition @ v
        v = (policy * q).sum(axis=1)
        if mdp.terminal is not None:
            v[mdp.terminal] = 0.0
    return float(mdp.initial @ v)


def finite_horizon_optimum(mdp: TabularMdp, horizon: int) -> float:
    """Best achievable expected episode return (backward induction)."""
    v = np.zeros(mdp.n_states)
    for _ in range(horizon):
        v = (mdp.reward + mdp.transition @ v).max(axis=1)
        if mdp.terminal is not None:
            v[mdp.terminal] = 0.0
    return float(mdp.initial @ v)
