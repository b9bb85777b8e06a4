"""Visit counting and the three tabular exploration bonuses.

Unvisited pairs are treated as if visited once, so every bonus starts at
its maximal value and stays finite.
"""
from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass

import numpy as np

BONUS_KINDS = ("hoeffding", "bernstein", "made", "none")


class CountTable:
    """Total visit counts N(s, a) plus successor counts N(s, a, s')."""

    def __init__(self, n_states: int, n_actions: int):
        self.n = np.zeros((n_states, n_actions), dtype=np.int64)
        self.successors = np.zeros((n_states, n_actions, n_states), dtype=np.int64)
        self.total = 0

    @property
    def shape(self) -> tuple[int, int]:
        return self.n.shape

    def record(self, s: int, a: int, s_next: int | None = None) -> None:
        S, A = self.n.shape
        if not (0 <= s < S and 0 <= a < A):
            raise IndexError(f"pair ({s}, {a}) out of range for {S}x{A} table")
        self.n[s, a] += 1
        self.total += 1
        if s_next is not None:
            if not 0 <= s_next < S:
                raise IndexError(f"successor {s_next} out of range")
            self.successors[s, a, s_next] += 1

    def cover(self) -> np.ndarray:
        """Empirical policy cover N(s, a) / N."""
        if self.total == 0:
            return np.full(self.n.shape, 1.0 / self.n.size)
        return self.n / self.total


class RecentBuffer:
    """FIFO window over the last ``capacity`` visited pairs with live counts."""

    def __init__(self, n_states: int, n_actions: int, capacity: int = 1000):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.ring: deque[tuple[int, int]] = deque()
        self.b = np.zeros((n_states, n_actions), dtype=np.int64)

    def record(self, s: int, a: int) -> None:
        S, A = self.b.shape
        if not (0 <= s < S and 0 <= a < A):
            raise IndexError(f"pair ({s}, {a}) out of range for {S}x{A} table")
        if len(self.ring) == self.capacity:
            old = self.ring.popleft()
            self.b[old] -= 1
        self.ring.append((s, a))
        self.b[s, a] += 1

    def recount(self) -> np.ndarray:
        out = np.zeros_like(self.b)
        for pair in self.ring:
            out[pair] += 1
        return out


def record(counts: CountTable, buffer: RecentBuffer | None, s: int, a: int,
           s_next: int | None = None) -> None:
    counts.record(s, a, s_next)
    if buffer is not None:
        buffer.record(s, a)


@dataclass(frozen=True)
class BonusConfig:
    v_max: float = 1.0
    scale: float = 1.0

    def __post_init__(self) -> None:
        if self.v_max <= 0:
            raise ValueError("v_max must be positive")
        if self.scale < 0:
            raise ValueError("scale must be non-negative")


def _floored(n: np.ndarray) -> np.ndarray:
    return np.maximum(n, 1).astype(float)


def hoeffding_bonus(counts: CountTable, cfg: BonusConfig) -> np.ndarray:
    """scale * V_max / sqrt(N(s, a))."""
    return cfg.scale * cfg.v_max / np.sqrt(_floored(counts.n))


def empirical_model(counts: CountTable) -> np.ndarray:
    """P_k(s'|s,a) = N(s,a,s') / N(s,a); unvisited rows are uniform."""
    S = counts.successors.shape[0]
    seen = counts.successors.sum(axis=2, keepdims=True)
    uniform = np.full(counts.successors.shape, 1.0 / S)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(seen > 0, counts.successors / np.maximum(seen, 1), uniform)


def bernstein_bonus(counts: CountTable, model: np.ndarray, values: np.ndarray,
                    cfg: BonusConfig) -> np.ndarray:
    """scale * (sqrt(Var_{s'~P_k} V(s') / N) + 1 / N); zero variance if unvisited."""
    v = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("values must be finite")
    mean = model @ v
    var = np.maximum(model @ v**2 - mean**2, 0.0)
    var = np.where(counts.n > 0, var, 0.0)
    n = _floored(counts.n)
    return cfg.scale * (np.sqrt(var / n) + 1.0 / n)


def made_bonus(counts: CountTable, buffer: RecentBuffer, cfg: BonusConfig) -> np.ndarray:
    """scale / sqrt(N(s, a) * B(s, a)) with both counts floored at 1."""
    return cfg.scale / np.sqrt(_floored(counts.n) * _floored(buffer.b))


def bonus_table(kind: str, counts: CountTable, buffer: RecentBuffer | None,
                cfg: BonusConfig, values: np.ndarray | None = None,
                model: np.ndarray | None = None) -> np.ndarray:
    if kind == "hoeffding":
        return hoeffding_bonus(counts, cfg)
    if kind == "bernstein":
        if values is None:
            values = np.zeros(counts.shape[0])
        if model is None:
            model = empirical_model(counts)
        return bernstein_bonus(counts, model, values, cfg)
    if kind == "made":
        if buffer is None:
            raise ValueError("made bonus needs a recent buffer")
        return made_bonus(counts, buffer, cfg)
    if kind == "none":
        return np.zeros(counts.shape)
    raise ValueError(f"unknown bonus kind {kind!r}; expected one of {BONUS_KINDS}")


def write_bonus_csv(path, table: np.ndarray) -> None:
    """Rows are states, columns actions."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["state"] + [f"a{a}" for a in range(table.shape[1])])
        for s, row in enumerate(table):
            w.writerow([s] + [repr(float(x)) for x in row])
