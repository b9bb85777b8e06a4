"""Strict YAML experiment configuration.

Every section is a dataclass; unknown keys, wrong types and out-of-range
values raise :class:`ConfigError` naming the dotted key path.
"""
from __future__ import annotations

import json
import re
import types
import typing
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path

import yaml

EXPERIMENTS = ("lock", "chain_pg", "meta", "checks")


class ConfigError(ValueError):
    pass


class _Loader(yaml.SafeLoader):
    """SafeLoader that also reads exponent floats without a dot (``1e-6``)."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
                 |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
                 |\.[0-9_]+(?:[eE][-+][0-9]+)?
                 |[-+]?\.(?:inf|Inf|INF)
                 |\.(?:nan|NaN|NAN))$""", re.X),
    list("-+0123456789."),
)


@dataclass
class LockEnvSection:
    depth: int = 5
    slip: float = 0.5
    anti_reward: float = -0.01
    big_reward: float = 1.0
    small_reward: float = 0.1
    randomize_actions: bool = True
    discount: float = 0.99
    # None: each run seed also seeds the layout
    env_seed: int | None = None


@dataclass
class LearnerSection:
    episodes: int = 2000
    max_episode_steps: int = 12
    discount: float = 0.99
    plan_tol: float = 1e-6
    q_learning_rate_horizon: int | None = None
    ppo_total_iters: int | None = None
    ppo_horizon: int | None = None
    v_max: float = 1.0
    buffer_capacity: int = 1000
    heatmap_period: int = 200
    log_steps: bool = True


@dataclass
class LockSection:
    env: LockEnvSection = field(default_factory=LockEnvSection)
    learner: LearnerSection = field(default_factory=LearnerSection)
    learners: list[str] = field(default_factory=lambda: ["vi", "ppo", "q"])
    bonuses: list[str] = field(default_factory=lambda: ["hoeffding", "bernstein", "made"])
    scales: list[float] = field(default_factory=lambda: [0.1, 0.5, 1.0])
    curve_every: int = 100
    success_fraction: float = 0.9
    traced_pairs: int = 5
    # explicit [state, action] pairs; empty means the most-visited ones
    bonus_trace_pairs: list[list[int]] = field(default_factory=list)


@dataclass
class ChainSection:
    depth: int = 8
    objectives: list[str] = field(
        default_factory=lambda: ["vanilla", "entropy", "rel_entropy", "made"])
    step_sizes: list[float] = field(default_factory=lambda: [0.5, 1.0, 2.0, 5.0])
    iters: int = 10_000
    tau0: float = 0.1
    made_sign: int = 1
    threshold_fraction: float = 0.9
    log_every: int = 1


@dataclass
class MetaSection:
    n_states: int = 5
    n_actions: int = 2
    discount: float = 0.9
    eps: float = 0.05
    smoothing: float = 1.0
    decay_exponent: float = 2.0
    oracle_gap: float = 1e-4
    noise_slack: float = 0.01


@dataclass
class ChecksSection:
    occupancy_mdps: int = 20
    mc_samples: int = 200_000
    gradient_mdps: int = 10
    fd_step: float = 1e-6
    argmax_instances: int = 10
    lams: list[float] = field(default_factory=lambda: [0.25, 1.0])
    trials: int = 1000
    tau: float = 0.1
    k_max: int = 10_000
    convergence: bool = True


@dataclass
class ExperimentConfig:
    experiment: str = "lock"
    seeds: list[int] = field(default_factory=lambda: [0])
    out: str = "runs"
    workers: int = 1
    plots: bool = True
    lock: LockSection = field(default_factory=LockSection)
    chain_pg: ChainSection = field(default_factory=ChainSection)
    meta: MetaSection = field(default_factory=MetaSection)
    checks: ChecksSection = field(default_factory=ChecksSection)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


_CHOICES = {
    "experiment": EXPERIMENTS,
    "lock.learners": ("vi", "ppo", "q"),
    "lock.bonuses": ("hoeffding", "bernstein", "made", "none"),
    "chain_pg.objectives": ("vanilla", "entropy", "rel_entropy", "made"),
}
_POSITIVE = {
    "workers", "lock.env.depth", "lock.learner.episodes", "lock.learner.max_episode_steps",
    "lock.learner.v_max", "lock.learner.buffer_capacity", "lock.learner.heatmap_period",
    "lock.learner.plan_tol", "lock.curve_every", "lock.traced_pairs", "lock.scales",
    "chain_pg.depth", "chain_pg.step_sizes", "chain_pg.iters", "chain_pg.log_every",
    "meta.n_states", "meta.n_actions", "meta.eps", "meta.smoothing", "meta.oracle_gap",
    "checks.occupancy_mdps", "checks.mc_samples", "checks.gradient_mdps", "checks.fd_step",
    "checks.argmax_instances", "checks.lams", "checks.trials", "checks.tau", "checks.k_max",
}
_UNIT = {"lock.env.discount", "lock.learner.discount", "meta.discount", "lock.env.slip"}


def _check_scalar(value, tp, path: str):
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected bool, got {type(value).__name__}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected int, got {type(value).__name__}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected number, got {type(value).__name__}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected string, got {type(value).__name__}")
        return value
    raise ConfigError(f"{path}: unsupported field type {tp}")


def _coerce(value, tp, path: str):
    origin = typing.get_origin(tp)
    if origin in (typing.Union, types.UnionType):
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if value is None:
            return None
        return _coerce(value, args[0], path)
    if origin is list:
        if not isinstance(value, list):
            raise ConfigError(f"{path}: expected list, got {type(value).__name__}")
        (item,) = typing.get_args(tp)
        return [_coerce(v, item, f"{path}[{i}]") for i, v in enumerate(value)]
    if is_dataclass(tp):
        return _build(tp, value, path)
    return _check_scalar(value, tp, path)


def _build(cls, data, path: str = ""):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path or '<root>'}: expected a mapping, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in fields(cls)}
    for key in data:
        if key not in names:
            where = f"{path}.{key}" if path else str(key)
            raise ConfigError(f"{where}: unknown key")
    kwargs = {}
    for name in names:
        if name in data:
            where = f"{path}.{name}" if path else name
            kwargs[name] = _coerce(data[name], hints[name], where)
    return cls(**kwargs)


def _validate(cfg: ExperimentConfig) -> None:
    flat = {}

    def walk(obj, prefix):
        for f in fields(obj):
            v = getattr(obj, f.name)
            key = f"{prefix}{f.name}"
            if is_dataclass(v):
                walk(v, key + ".")
            else:
                flat[key] = v

    walk(cfg, "")
    for key, allowed in _CHOICES.items():
        vals = flat[key] if isinstance(flat[key], list) else [flat[key]]
        for v in vals:
            if v not in allowed:
                raise ConfigError(f"{key}: {v!r} not one of {list(allowed)}")
    for key in sorted(_POSITIVE):
        vals = flat[key] if isinstance(flat[key], list) else [flat[key]]
        if any(v is not None and v <= 0 for v in vals):
            raise ConfigError(f"{key}: must be positive")
    for key in _UNIT:
        if not 0.0 <= flat[key] < 1.0:
            raise ConfigError(f"{key}: must lie in [0, 1)")
    if not cfg.seeds:
        raise ConfigError("seeds: need at least one seed")
    if len(set(cfg.seeds)) != len(cfg.seeds) or any(s < 0 for s in cfg.seeds):
        raise ConfigError("seeds: must be distinct non-negative integers")
    if not 0.0 < cfg.lock.success_fraction <= 1.0:
        raise ConfigError("lock.success_fraction: must lie in (0, 1]")
    for i, pair in enumerate(cfg.lock.bonus_trace_pairs):
        if len(pair) != 2 or min(pair) < 0:
            raise ConfigError(f"lock.bonus_trace_pairs[{i}]: expected [state, action]")
    if cfg.chain_pg.made_sign not in (1, -1):
        raise ConfigError("chain_pg.made_sign: must be 1 or -1")
    for key in ("lock.learners", "lock.bonuses", "lock.scales", "chain_pg.objectives",
                "chain_pg.step_sizes"):
        if not flat[key]:
            raise ConfigError(f"{key}: must not be empty")


def config_from_dict(data: dict) -> ExperimentConfig:
    cfg = _build(ExperimentConfig, data)
    _validate(cfg)
    return cfg


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = yaml.load(path.read_text(), Loader=_Loader)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML ({exc})") from exc
    return config_from_dict(data or {})


def parse_seeds(text: str) -> list[int]:
    """``"0..9"`` (inclusive), ``"3"`` or ``"0,2,5"``."""
    text = text.strip()
    try:
        if ".." in text:
            lo, hi = text.split("..")
            seeds = list(range(int(lo), int(hi) + 1))
        else:
            seeds = [int(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise ConfigError(f"seeds: cannot parse {text!r}") from exc
    if not seeds:
        raise ConfigError(f"seeds: empty range {text!r}")
    return seeds
