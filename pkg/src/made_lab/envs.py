"""Benchmark MDPs: the stochastic bidirectional lock, the PG chain, random MDPs."""
from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .mdp import TabularMdp


@dataclass(frozen=True)
class LockConfig:
    depth: int = 5
    slip: float = 0.5
    anti_reward: float = -0.01
    big_reward: float = 1.0
    small_reward: float = 0.1
    env_seed: int = 0
    randomize_actions: bool = True
    discount: float = 0.99

    def __post_init__(self) -> None:
        if self.depth < 1:
            raise ValueError("lock depth must be >= 1")
        if not 0.0 <= self.slip < 1.0:
            raise ValueError("slip probability must lie in [0, 1)")
        if not self.big_reward > self.small_reward > 0:
            raise ValueError("need big_reward > small_reward > 0")
        if self.anti_reward > 0:
            raise ValueError("anti_reward must be <= 0")


@dataclass(frozen=True)
class LockLayout:
    """State indices of a constructed lock.

    ``good[l][i]`` / ``dead[l][i]`` is the (i+1)-th good / dead state of lock
    ``l``; ``good_action[l][i]`` is the action that advances along the good
    chain there; ``big_lock`` holds the large terminal reward.
    """

    depth: int
    start: int
    terminal: int
    good: tuple
    dead: tuple
    good_action: tuple
    big_lock: int

    def grid(self, state_values: np.ndarray) -> np.ndarray:
        """Arrange per-state values as the 4 x (H+1) picture of the lock.

        Rows: lock-0 good, lock-0 dead, lock-1 good, lock-1 dead.  Column 0
        holds the start state (rows 0 and 2) and the terminal (rows 1 and 3).
        """
        v = np.asarray(state_values)
        out = np.zeros((4, self.depth + 1), dtype=v.dtype)
        for lock in (0, 1):
            out[2 * lock, 1:] = v[list(self.good[lock])]
            out[2 * lock + 1, 1:] = v[list(self.dead[lock])]
        out[0, 0] = v[self.start]
        out[1, 0] = v[self.terminal]
        return out

    def end_pairs(self) -> list[tuple[int, int]]:
        """The (state, action) pairs that collect each lock's end reward."""
        return [(self.good[lock][-1], a) for lock in (0, 1) for a in (0, 1)]


def lock_layout(cfg: LockConfig) -> LockLayout:
    H = cfg.depth
    rng = np.random.default_rng(cfg.env_seed)
    big_lock = int(rng.integers(2))
    if cfg.randomize_actions:
        good_action = rng.integers(2, size=(2, H))
    else:
        good_action = np.zeros((2, H), dtype=int)
    good = tuple(tuple(1 + lock * 2 * H + i for i in range(H)) for lock in (0, 1))
    dead = tuple(tuple(1 + lock * 2 * H + H + i for i in range(H)) for lock in (0, 1))
    return LockLayout(
        depth=H, start=0, terminal=4 * H + 1, good=good, dead=dead,
        good_action=tuple(tuple(int(a) for a in row) for row in good_action),
        big_lock=big_lock,
    )


def make_bidirectional_lock(cfg: LockConfig) -> TabularMdp:
    """Two parallel H-deep locks with anti-shaped rewards and a decoy end reward.

    At the start, action ``a`` enters lock ``a``.  Along a lock, the good
    action keeps the agent on the good chain with probability ``1 - slip``;
    everything else drops into the reward-free dead chain, which never
    rejoins the good chain.  Entering a good state pays ``anti_reward``.
    """
    lay = lock_layout(cfg)
    H, p = cfg.depth, cfg.slip
    S, A = 4 * H + 2, 2
    P = np.zeros((S, A, S))
    R = np.zeros((S, A, S))

    for lock in (0, 1):
        g, x = lay.good[lock], lay.dead[lock]
        P[lay.start, lock, g[0]] = 1.0 - p
        P[lay.start, lock, x[0]] += p
        R[lay.start, lock, g[0]] = cfg.anti_reward
        for i in range(H - 1):
            good_a = lay.good_action[lock][i]
            P[g[i], good_a, g[i + 1]] = 1.0 - p
            P[g[i], good_a, x[i + 1]] += p
            R[g[i], good_a, g[i + 1]] = cfg.anti_reward
            P[g[i], 1 - good_a, x[i + 1]] = 1.0
            P[x[i], :, x[i + 1]] = 1.0
        end = cfg.big_reward if lock == lay.big_lock else cfg.small_reward
        P[g[H - 1], :, lay.terminal] = 1.0
        R[g[H - 1], :, lay.terminal] = end
        P[x[H - 1], :, lay.terminal] = 1.0
    P[lay.terminal, :, lay.terminal] = 1.0

    initial = np.zeros(S)
    initial[lay.start] = 1.0
    terminal = np.zeros(S, dtype=bool)
    terminal[lay.terminal] = True
    return TabularMdp(
        transition=P,
        reward=(P * R).sum(axis=2),
        initial=initial,
        discount=cfg.discount,
        transition_reward=R,
        terminal=terminal,
        meta={"env": "bidirectional_lock", **asdict(cfg)},
    )


@dataclass(frozen=True)
class ChainConfig:
    depth: int = 8

    def __post_init__(self) -> None:
        if self.depth < 1:
            raise ValueError("chain depth must be >= 1")

    @property
    def discount(self) -> float:
        return self.depth / (self.depth + 1)


def make_chain_mdp(cfg: ChainConfig) -> TabularMdp:
    """Deterministic chain s_0..s_{H+1}; a_1 advances, a_2..a_4 step back.

    Action index 0 plays the role of a_1.  The only reward is r(s_{H+1}, a_1) = 1.
    """
    H = cfg.depth
    S, A = H + 2, 4
    P = np.zeros((S, A, S))
    for s in range(S):
        P[s, 0, min(s + 1, S - 1)] = 1.0
        P[s, 1:, max(s - 1, 0)] = 1.0
    r = np.zeros((S, A))
    r[S - 1, 0] = 1.0
    initial = np.zeros(S)
    initial[0] = 1.0
    return TabularMdp(P, r, initial, cfg.discount, meta={"env": "chain", "depth": H})


def chain_optimal_value(depth: int) -> float:
    """J* = gamma^(H+1) / (1 - gamma) with gamma = H / (H + 1)."""
    gamma = depth / (depth + 1)
    return gamma ** (depth + 1) / (1.0 - gamma)


def make_random_mdp(n_states: int, n_actions: int, rng_seed: int,
                    discount: float = 0.9) -> TabularMdp:
    """Dirichlet(1) transition rows, Uniform[0, 1] rewards, uniform start."""
    if n_states < 1 or n_actions < 1:
        raise ValueError("dimensions must be >= 1")
    rng = np.random.default_rng(rng_seed)
    P = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    # dirichlet rows can be off by an ulp or two
    P /= P.sum(axis=2, keepdims=True)
    r = rng.uniform(0.0, 1.0, size=(n_states, n_actions))
    return TabularMdp(P, r, np.full(n_states, 1.0 / n_states), discount,
                      meta={"env": "random", "seed": rng_seed})
