"""Policy computation for the adaptively regularised objective.

The objective at iteration k is

    L_k(d) = J(d) + tau_k * R_lam(d; rho_k),    J(d) = <d, r> / (1 - gamma),
    R_lam(d; rho) = sum_{s,a} sqrt((d + lam) / (rho + lam)),

with rho_k the uniform average of the occupancies of the first k policies
and tau_k = tau / k^c.  Each iteration plans against the reward
(1 - gamma) * grad L_k at the current mixture density and mixes the new
policy in with weight eta.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .mdp import (
    DEFAULT_TOL,
    PolicyMixture,
    TabularMdp,
    exact_occupancy,
    mixture_occupancy,
    uniform_policy,
    value_iteration_plan,
)


def smoothed_regularizer(d: np.ndarray, rho: np.ndarray, lam: float) -> float:
    if lam <= 0:
        raise ValueError("lam must be positive")
    return float(np.sqrt((d + lam) / (rho + lam)).sum())


def regularizer_grad(d: np.ndarray, rho: np.ndarray, lam: float) -> np.ndarray:
    """dR_lam/dd(s, a) = 1 / (2 sqrt((d + lam)(rho + lam)))."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    return 0.5 / np.sqrt((d + lam) * (rho + lam))


def regularizer_hessian_diag(d: np.ndarray, rho: np.ndarray, lam: float) -> np.ndarray:
    return -0.25 / ((d + lam) ** 1.5 * np.sqrt(rho + lam))


def meta_reward(mdp: TabularMdp, d_hat: np.ndarray, rho: np.ndarray, tau_k: float,
                lam: float) -> np.ndarray:
    """r_k = r + (1 - gamma) tau_k grad R_lam(d_hat)."""
    return mdp.reward + (1.0 - mdp.discount) * tau_k * regularizer_grad(d_hat, rho, lam)


def regularized_objective(mdp: TabularMdp, d: np.ndarray, rho: np.ndarray, tau_k: float,
                          lam: float) -> float:
    J = float((d * mdp.reward).sum()) / (1.0 - mdp.discount)
    return J + tau_k * smoothed_regularizer(d, rho, lam)


def regularizer_argmax(rho: np.ndarray) -> np.ndarray:
    """Maximiser of sum sqrt(d / rho) over the simplex: d proportional to 1 / rho."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0):
        raise ValueError("policy cover must be strictly positive")
    inv = 1.0 / rho
    return inv / inv.sum()


@dataclass(frozen=True)
class RegularityConstants:
    n_states: int
    n_actions: int
    lam: float
    tau: float
    c: float = 2.0

    @property
    def _root(self) -> float:
        return math.sqrt((1.0 + self.lam) / self.lam)

    @property
    def beta(self) -> float:
        return 1.0 / (4.0 * self.lam**2)

    @property
    def bound_B(self) -> float:
        return self.n_states * self.n_actions * (1.0 + self._root)

    @property
    def xi(self) -> float:
        return math.pi**2 * self.n_states * self.n_actions / 6.0 * self._root

    def delta(self, k: int) -> float:
        return self.n_states * self.n_actions * self.tau / (k + 1) ** self.c * self._root


def drift_sums(consts: RegularityConstants, eta: float, k_max: int) -> np.ndarray:
    """sum_{i=0}^k (1 - eta)^i delta_{k-i} for k = 0..k_max (by recursion)."""
    out = np.empty(k_max + 1)
    acc = 0.0
    for k in range(k_max + 1):
        acc = (1.0 - eta) * acc + consts.delta(k)
        out[k] = acc
    return out


@dataclass(frozen=True)
class MetaConfig:
    iters: int = 100
    mix_rate: float = 0.1
    temperature: float = 0.1
    decay_exponent: float = 2.0
    smoothing: float = 1.0
    plan_err: float = 0.0
    density_err: float = 0.0
    target_gap: float | None = None

    def __post_init__(self) -> None:
        if self.iters < 1:
            raise ValueError("iters must be >= 1")
        if not 0.0 < self.mix_rate < 1.0:
            raise ValueError("mix_rate must lie in (0, 1)")
        if not 0.0 < self.temperature < 1.0:
            raise ValueError("temperature must lie in (0, 1)")
        if self.decay_exponent <= 0 or self.smoothing <= 0:
            raise ValueError("decay_exponent and smoothing must be positive")
        if self.plan_err < 0 or self.density_err < 0:
            raise ValueError("oracle errors must be non-negative")

    @classmethod
    def convergence_preset(cls, eps: float, n_states: int, n_actions: int,
                       smoothing: float = 1.0, decay_exponent: float = 2.0) -> "MetaConfig":
        """eta = 0.1 eps / beta, eps_p = 0.1 eps, eps_d = 0.1 eps / beta,
        tau = 0.1 eps, K = ceil(log(10 B / eps) / eta)."""
        consts = RegularityConstants(n_states, n_actions, smoothing, 0.1 * eps, decay_exponent)
        eta = min(0.1 * eps / consts.beta, 0.5)
        return cls(
            iters=math.ceil(math.log(10 * consts.bound_B / eps) / eta),
            mix_rate=eta,
            temperature=0.1 * eps,
            decay_exponent=decay_exponent,
            smoothing=smoothing,
            plan_err=0.1 * eps,
            density_err=0.1 * eps / consts.beta,
            target_gap=eps,
        )

    def tau_k(self, k: int) -> float:
        return self.temperature / k**self.decay_exponent

    def constants(self, n_states: int, n_actions: int) -> RegularityConstants:
        return RegularityConstants(n_states, n_actions, self.smoothing, self.temperature,
                                   self.decay_exponent)

    def step_slack(self, n_states: int, n_actions: int, k: int) -> float:
        """delta_k + eta eps_p + 2 eta beta eps_d + 4 eta^2 beta."""
        c = self.constants(n_states, n_actions)
        eta = self.mix_rate
        return (c.delta(k) + eta * self.plan_err + 2 * eta * c.beta * self.density_err
                + 4 * eta**2 * c.beta)


@dataclass
class MetaResult:
    mixture: PolicyMixture
    log: list = field(default_factory=list)
    cover: np.ndarray | None = None
    tau_final: float = 0.0
    occupancies: list = field(default_factory=list)

    def __iter__(self):
        # allows ``mixture, log = run_algorithm1(...)``
        return iter((self.mixture, self.log))


LOG_FIELDS = ("k", "tau_k", "J", "R_lambda", "L_k", "plan_gap")


def run_algorithm1(mdp: TabularMdp, cfg: MetaConfig, density_noise: int | None = None,
                   plan_tol: float | None = None) -> MetaResult:
    """Mix in one planned policy per iteration; return the mixture and per-k log.

    ``density_noise`` seeds a perturbation of the density estimate, uniform
    in [-eps_d, eps_d] per entry (then clipped at zero, which only shrinks
    the error).  The policy cover is always built from exact occupancies.
    ``plan_tol`` defaults to the value-iteration residual that guarantees
    planning error ``eps_p`` (or 1e-10 when eps_p is zero).

    Log entries are taken at the start of iteration k and evaluate
    L_k at the current (k-policy) mixture.  ``plan_gap`` is the shortfall of
    the new policy against the planner's optimal value on the modified MDP.
    """
    S, A = mdp.n_states, mdp.n_actions
    gamma, lam = mdp.discount, cfg.smoothing
    if plan_tol is None:
        plan_tol = (cfg.plan_err * (1 - gamma) / (2 * gamma) if cfg.plan_err > 0 and gamma > 0
                    else DEFAULT_TOL)
        plan_tol = min(plan_tol, 1e-6)
    rng = None if density_noise is None else np.random.default_rng(density_noise)

    pi1 = uniform_policy(S, A)
    mixture = PolicyMixture.single(pi1, cfg.mix_rate)
    occs = [exact_occupancy(mdp, pi1)]
    cover_sum = occs[0].copy()
    d_mix = occs[0].copy()
    result = MetaResult(mixture)
    q_warm = None
    for k in range(1, cfg.iters + 1):
        cover = cover_sum / k
        tau_k = cfg.tau_k(k)
        d_hat = d_mix
        if rng is not None and cfg.density_err > 0:
            d_hat = np.maximum(d_mix + rng.uniform(-cfg.density_err, cfg.density_err, d_mix.shape), 0.0)
        r_k = meta_reward(mdp, d_hat, cover, tau_k, lam)
        q, pi_next = value_iteration_plan(mdp, plan_tol, reward=r_k, q0=q_warm)
        q_warm = q
        d_next = exact_occupancy(mdp, pi_next)
        v_best = float(mdp.initial @ q.max(axis=1))
        v_new = float((d_next * r_k).sum() / (1 - gamma))

        J = float((d_mix * mdp.reward).sum() / (1 - gamma))
        R = smoothed_regularizer(d_mix, cover, lam)
        result.log.append({"k": k, "tau_k": tau_k, "J": J, "R_lambda": R,
                           "L_k": J + tau_k * R, "plan_gap": max(v_best - v_new, 0.0)})

        mixture = mixture.append(pi_next)
        d_mix = (1.0 - cfg.mix_rate) * d_mix + cfg.mix_rate * d_next
        occs.append(d_next)
        cover_sum += d_next

    result.mixture = mixture
    result.cover = (cover_sum - occs[-1]) / cfg.iters
    result.tau_final = cfg.tau_k(cfg.iters)
    result.occupancies = occs
    return result


def final_objective(mdp: TabularMdp, cfg: MetaConfig, result: MetaResult):
    """(value, grad) callables for L_K, the objective of the last iteration."""
    rho, tau, lam = result.cover, result.tau_final, cfg.smoothing

    def value(d):
        return regularized_objective(mdp, d, rho, tau, lam)

    def grad(d):
        return mdp.reward / (1 - mdp.discount) + tau * regularizer_grad(d, rho, lam)

    return value, grad


def regularity_check(n_states: int, n_actions: int, lam: float, tau: float, c: float = 2.0,
                     trials: int = 1000, seed: int = 0, k_max: int = 10_000,
                     etas: tuple = (0.01, 0.1, 0.5, 0.9)) -> dict:
    """Numerically probe the four regularity claims on random (d, rho, r, k).

    Claims (i)-(iii) use L_k(d) = <d, r> + tau_k R_lam(d; rho) with r in
    [0, 1], the per-unit-discount scaling under which the bound B holds.
    Returns ``{"claims": {...: bool}, "witnesses": {...}, "constants": {...}}``.
    """
    consts = RegularityConstants(n_states, n_actions, lam, tau, c)
    rng = np.random.default_rng(seed)
    n = n_states * n_actions
    beta, B = consts.beta, consts.bound_B

    def sample_density():
        if rng.random() < 0.1:
            return np.eye(n)[rng.integers(n)]
        return rng.dirichlet(np.full(n, rng.choice([0.2, 1.0, 5.0])))

    claims = {"concave": True, "smooth": True, "bounded": True, "drift": True}
    witnesses: dict = {}

    def fail(name, info):
        if claims[name]:
            witnesses[name] = info
        claims[name] = False

    for _ in range(trials):
        d, d2, rho, rho2 = (sample_density() for _ in range(4))
        r = rng.uniform(0, 1, n)
        k = int(rng.integers(1, 1000))
        tau_k = tau / k**c

        def L(x):
            return float(x @ r) + tau_k * smoothed_regularizer(x, rho, lam)

        def gradL(x):
            return r + tau_k * regularizer_grad(x, rho, lam)

        alpha = rng.random()
        chord = L(alpha * d + (1 - alpha) * d2) - (alpha * L(d) + (1 - alpha) * L(d2))
        if chord < -1e-9:
            fail("concave", {"d": d.tolist(), "d2": d2.tolist(), "alpha": alpha, "chord": chord})

        hess = tau_k * regularizer_hessian_diag(d, rho, lam)
        lip = np.max(np.abs(gradL(d) - gradL(d2))) - beta * np.max(np.abs(d - d2))
        if hess.min() < -beta - 1e-15 or hess.max() > 0 or lip > 1e-12:
            fail("smooth", {"d": d.tolist(), "rho": rho.tolist(), "hess_min": float(hess.min()),
                            "lipschitz_excess": float(lip)})

        if L(d) > B or np.max(np.abs(gradL(d))) > B:
            fail("bounded", {"d": d.tolist(), "L": L(d)})

        tau_next = tau / (k + 1) ** c
        step = (float(d @ r) + tau_next * smoothed_regularizer(d, rho2, lam)) - L(d)
        if step > consts.delta(k) + 1e-12:
            fail("drift", {"k": k, "increase": step, "delta_k": consts.delta(k)})

    if c == 2:
        for eta in etas:
            sums = drift_sums(consts, eta, k_max)
            worst = int(np.argmax(sums))
            if sums[worst] > tau * consts.xi:
                fail("drift", {"eta": eta, "k": worst, "sum": float(sums[worst]),
                               "tau_xi": tau * consts.xi})

    return {
        "claims": claims,
        "witnesses": witnesses,
        "constants": {"beta": beta, "B": B, "xi": consts.xi, "n_states": n_states,
                      "n_actions": n_actions, "lam": lam, "tau": tau, "c": c},
        "trials": trials,
    }
