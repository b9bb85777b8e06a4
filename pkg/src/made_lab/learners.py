"""Online tabular learners driven by a pluggable exploration bonus.

Learners never see the transition tensor or the reward table.  They talk to
a :class:`Simulator`, which exposes only the state/action counts and a
``reset``/``step`` pair, and build their own empirical model from counts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .bonuses import (
    BONUS_KINDS,
    BonusConfig,
    CountTable,
    RecentBuffer,
    bonus_table,
    empirical_model,
)
from .mdp import TabularMdp, evaluate_q, solve_q_optimal

LEARNERS = ("vi", "ppo", "q")


class Simulator:
    """Sampling-only view of a :class:`TabularMdp`.

    ``step`` returns ``(next_state, reward, terminated)``; rewards are drawn
    from ``transition_reward`` when the MDP defines it.
    """

    def __init__(self, mdp: TabularMdp, seed: int):
        self._mdp = mdp
        self._rng = np.random.default_rng(seed)
        self._cum_P = np.cumsum(mdp.transition, axis=2)
        self._cum_rho = np.cumsum(mdp.initial)
        self.n_states = mdp.n_states
        self.n_actions = mdp.n_actions
        self._state = None

    def _draw(self, cum: np.ndarray) -> int:
        return min(int(np.searchsorted(cum, self._rng.random(), side="right")), len(cum) - 1)

    def reset(self) -> int:
        self._state = self._draw(self._cum_rho)
        return self._state

    def step(self, action: int) -> tuple[int, float, bool]:
        s = self._state
        s_next = self._draw(self._cum_P[s, action])
        if self._mdp.transition_reward is not None:
            r = float(self._mdp.transition_reward[s, action, s_next])
        else:
            r = float(self._mdp.reward[s, action])
        done = bool(self._mdp.terminal is not None and self._mdp.terminal[s_next])
        self._state = s_next
        return s_next, r, done


@dataclass
class LearnerConfig:
    episodes: int = 2000
    max_episode_steps: int = 12
    discount: float = 0.99
    plan_tol: float = 1e-6
    q_horizon: int | None = None
    ppo_total_iters: int | None = None
    ppo_horizon: int | None = None
    rng_seed: int = 0
    bonus_scale: float = 1.0
    v_max: float = 1.0
    buffer_capacity: int = 1000
    heatmap_period: int = 200
    log_steps: bool = True

    def __post_init__(self) -> None:
        for name in ("episodes", "max_episode_steps", "buffer_capacity", "heatmap_period"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0.0 <= self.discount < 1.0:
            raise ValueError("discount must lie in [0, 1)")

    @property
    def effective_horizon(self) -> int:
        """H_eff = ceil(1 / (1 - gamma)) unless set explicitly."""
        if self.q_horizon is not None:
            return self.q_horizon
        return math.ceil(1.0 / (1.0 - self.discount) - 1e-9)

    def ppo_step(self, n_actions: int) -> float:
        """alpha = sqrt(2 log A / (H K))."""
        H = self.ppo_horizon or self.max_episode_steps
        K = self.ppo_total_iters or self.episodes
        return math.sqrt(2.0 * math.log(n_actions) / (H * K))

    def bonus(self) -> BonusConfig:
        return BonusConfig(v_max=self.v_max, scale=self.bonus_scale)


STEP_FIELDS = ("episode", "step", "state", "action", "reward", "bonus", "cum_steps")


@dataclass
class RunRecord:
    learner: str
    bonus_kind: str
    config: dict
    steps: list = field(default_factory=list)
    episode_returns: list = field(default_factory=list)
    policy_returns: list = field(default_factory=list)
    episode_end_steps: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    bonus_history: list = field(default_factory=list)
    final_counts: np.ndarray | None = None
    final_policy: np.ndarray | None = None
    final_q: np.ndarray | None = None
    cum_steps: int = 0

    def snapshot(self, episode: int, counts: CountTable) -> None:
        self.snapshots.append((episode, self.cum_steps, counts.n.sum(axis=1).copy()))


class _Tracker:
    """Shared bookkeeping: counts, buffer, successor model, reward means."""

    def __init__(self, n_states: int, n_actions: int, cfg: LearnerConfig):
        self.counts = CountTable(n_states, n_actions)
        self.buffer = RecentBuffer(n_states, n_actions, cfg.buffer_capacity)
        self.reward_sum = np.zeros((n_states, n_actions))
        self.terminal = np.zeros(n_states, dtype=bool)
        self.v_max = cfg.v_max

    def record(self, s: int, a: int, r: float, s_next: int, done: bool) -> None:
        self.counts.record(s, a, s_next)
        self.buffer.record(s, a)
        self.reward_sum[s, a] += r
        if done:
            self.terminal[s_next] = True

    def reward_estimate(self) -> np.ndarray:
        n = self.counts.n
        return np.where(n > 0, self.reward_sum / np.maximum(n, 1), self.v_max)

    def model(self) -> np.ndarray:
        return empirical_model(self.counts)

    def bonus(self, kind: str, cfg: BonusConfig, values: np.ndarray | None = None,
              model: np.ndarray | None = None) -> np.ndarray:
        return bonus_table(kind, self.counts, self.buffer, cfg, values, model)


def _check_kind(kind: str) -> None:
    if kind not in BONUS_KINDS:
        raise ValueError(f"unknown bonus kind {kind!r}; expected one of {BONUS_KINDS}")


def _as_sim(env, seed: int) -> Simulator:
    return env if isinstance(env, Simulator) else Simulator(env, seed)


def _run_episode(sim: Simulator, record: RunRecord, tracker: _Tracker, episode: int,
                 choose, bonus: np.ndarray, cfg: LearnerConfig, on_step=None,
                 policy: np.ndarray | None = None, evaluate=None) -> None:
    if evaluate is not None:
        record.policy_returns.append(float(evaluate(policy)))
    s = sim.reset()
    total = 0.0
    for t in range(cfg.max_episode_steps):
        a = choose(s)
        s_next, r, done = sim.step(a)
        tracker.record(s, a, r, s_next, done)
        record.cum_steps += 1
        b = float(bonus[s, a])
        if on_step is not None:
            b = on_step(s, a, r, s_next, done)
        if cfg.log_steps:
            record.steps.append((episode, t, s, a, r, b, record.cum_steps))
        total += r
        s = s_next
        if done:
            break
    record.episode_returns.append(total)
    record.episode_end_steps.append(record.cum_steps)


def run_vi_agent(env, bonus_kind: str, cfg: LearnerConfig, evaluate=None) -> RunRecord:
    """Optimistic model-based value iteration, replanned after every episode.

    Plans on the empirical model with reward r_hat + bonus and acts greedily.
    Bernstein's value input is the optimistic V = max_a Q of the last plan.
    """
    _check_kind(bonus_kind)
    sim = _as_sim(env, cfg.rng_seed)
    S, A = sim.n_states, sim.n_actions
    tracker = _Tracker(S, A, cfg)
    record = RunRecord("vi", bonus_kind, asdict(cfg))
    bcfg = cfg.bonus()
    q = np.zeros((S, A))
    for ep in range(cfg.episodes):
        if ep % cfg.heatmap_period == 0:
            record.snapshot(ep, tracker.counts)
        model = tracker.model()
        bonus = tracker.bonus(bonus_kind, bcfg, q.max(axis=1), model)
        q = solve_q_optimal(model, tracker.reward_estimate() + bonus, cfg.discount,
                            cfg.plan_tol, q0=q, terminal=tracker.terminal, accelerate=True)
        record.bonus_history.append((record.cum_steps, bonus))
        policy_q = q
        _run_episode(sim, record, tracker, ep, lambda s: int(np.argmax(policy_q[s])), bonus, cfg,
                     policy=np.eye(A)[np.argmax(q, axis=1)], evaluate=evaluate)
    record.snapshot(cfg.episodes, tracker.counts)
    record.final_counts = tracker.counts.n.copy()
    record.final_policy = np.eye(A)[np.argmax(q, axis=1)]
    record.final_q = q.copy()
    return record


def mirror_update(policy: np.ndarray, q: np.ndarray, alpha: float) -> np.ndarray:
    """pi'(a|s) proportional to pi(a|s) exp(alpha Q(s, a))."""
    logits = np.log(np.maximum(policy, 1e-300)) + alpha * q
    logits -= logits.max(axis=1, keepdims=True)
    w = np.exp(logits)
    return w / w.sum(axis=1, keepdims=True)


def run_ppo_agent(env, bonus_kind: str, cfg: LearnerConfig, evaluate=None) -> RunRecord:
    """Optimistic policy optimisation with a learned model.

    Each iteration samples one trajectory with the stochastic policy,
    refreshes the model and bonus, evaluates Q of the current policy on
    (P_hat, r_hat + bonus) and takes a multiplicative-weights step.
    """
    _check_kind(bonus_kind)
    sim = _as_sim(env, cfg.rng_seed)
    S, A = sim.n_states, sim.n_actions
    tracker = _Tracker(S, A, cfg)
    record = RunRecord("ppo", bonus_kind, asdict(cfg))
    bcfg = cfg.bonus()
    alpha = cfg.ppo_step(A)
    rng = np.random.default_rng([cfg.rng_seed, 1])
    policy = np.full((S, A), 1.0 / A)
    values = np.zeros(S)
    bonus = tracker.bonus(bonus_kind, bcfg, values)
    for ep in range(cfg.episodes):
        if ep % cfg.heatmap_period == 0:
            record.snapshot(ep, tracker.counts)
        record.bonus_history.append((record.cum_steps, bonus))
        current = policy
        _run_episode(sim, record, tracker, ep,
                     lambda s: int(rng.choice(A, p=current[s])), bonus, cfg,
                     policy=current, evaluate=evaluate)
        model = tracker.model()
        bonus = tracker.bonus(bonus_kind, bcfg, values, model)
        q = evaluate_q(model, tracker.reward_estimate() + bonus, cfg.discount, policy,
                       tracker.terminal)
        values = (policy * q).sum(axis=1)
        policy = mirror_update(policy, q, alpha)
    record.snapshot(cfg.episodes, tracker.counts)
    record.final_counts = tracker.counts.n.copy()
    record.final_policy = policy
    return record


def q_learning_rate(visit: int, horizon: int) -> float:
    """alpha_t = (H + 1) / (H + t)."""
    return (horizon + 1.0) / (horizon + visit)


def run_q_agent(env, bonus_kind: str, cfg: LearnerConfig, evaluate=None) -> RunRecord:
    """Optimistic Q-learning with a bonus added to each target.

    Q starts at V_max / (1 - gamma); actions are greedy with lowest-index
    ties, so optimism alone drives exploration.
    """
    _check_kind(bonus_kind)
    sim = _as_sim(env, cfg.rng_seed)
    S, A = sim.n_states, sim.n_actions
    tracker = _Tracker(S, A, cfg)
    record = RunRecord("q", bonus_kind, asdict(cfg))
    bcfg = cfg.bonus()
    H = cfg.effective_horizon
    gamma = cfg.discount
    q = np.full((S, A), cfg.v_max / (1.0 - gamma))

    def update(s, a, r, s_next, done):
        if bonus_kind == "bernstein":
            b = float(tracker.bonus(bonus_kind, bcfg, q.max(axis=1))[s, a])
        else:
            b = float(tracker.bonus(bonus_kind, bcfg)[s, a])
        lr = q_learning_rate(int(tracker.counts.n[s, a]), H)
        target = r + b + (0.0 if done else gamma * q[s_next].max())
        q[s, a] = (1.0 - lr) * q[s, a] + lr * target
        return b

    for ep in range(cfg.episodes):
        if ep % cfg.heatmap_period == 0:
            record.snapshot(ep, tracker.counts)
        record.bonus_history.append(
            (record.cum_steps, tracker.bonus(bonus_kind, bcfg, q.max(axis=1))))
        _run_episode(sim, record, tracker, ep, lambda s: int(np.argmax(q[s])),
                     np.zeros((S, A)), cfg, on_step=update,
                     policy=np.eye(A)[np.argmax(q, axis=1)], evaluate=evaluate)
    record.snapshot(cfg.episodes, tracker.counts)
    record.final_counts = tracker.counts.n.copy()
    record.final_policy = np.eye(A)[np.argmax(q, axis=1)]
    record.final_q = q.copy()
    return record


RUNNERS = {"vi": run_vi_agent, "ppo": run_ppo_agent, "q": run_q_agent}


def run_learner(name: str, env, bonus_kind: str, cfg: LearnerConfig,
                evaluate=None) -> RunRecord:
    """Dispatch by learner name.  ``evaluate(policy) -> float``, if given, is
    called with the acting policy before each episode; the harness uses it
    to score policies on the true MDP, which the learner never sees."""
    if name not in RUNNERS:
        raise ValueError(f"unknown learner {name!r}; expected one of {LEARNERS}")
    return RUNNERS[name](env, bonus_kind, cfg, evaluate)
