"""Noisy observation channel with budget accounting and trajectory logging."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .objectives import Objective


class BudgetExhausted(RuntimeError):
    pass


@dataclass(frozen=True)
class NoiseModel:
    sigma: float = 0.0

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValueError("sigma must be nonnegative")

    @classmethod
    def from_variance(cls, sigma2: float) -> "NoiseModel":
        if sigma2 < 0:
            raise ValueError("sigma2 must be nonnegative")
        return cls(float(np.sqrt(sigma2)))

    @property
    def sigma2(self) -> float:
        return self.sigma**2


def hash_seed(*parts) -> int:
    """128-bit integer from an ordered tuple of values."""
    text = "\x1f".join(repr(p) for p in parts)
    return int.from_bytes(hashlib.blake2b(text.encode(), digest_size=16).digest(), "little")


@dataclass(frozen=True)
class RngStream:
    """Counter-based random stream addressed by (seed, coordinates).

    Draws depend only on the seed and the coordinate path, never on the order
    in which sibling streams are consumed.
    """

    master_seed: int
    coords: tuple[int, ...] = ()

    def fork(self, *coords: int) -> "RngStream":
        return RngStream(self.master_seed, self.coords + tuple(int(c) for c in coords))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.master_seed, spawn_key=self.coords)
        return np.random.Generator(np.random.Philox(ss))


class Trajectory:
    """Observations stored as blocks of (points, repeat counts, values)."""

    def __init__(self, d: int):
        self.d = d
        self._X: list[np.ndarray] = []
        self._cnt: list[np.ndarray] = []
        self._vals: list[np.ndarray] = []
        self._len = 0
        self.recommendation: np.ndarray | None = None

    def append(self, X: np.ndarray, counts: np.ndarray, values: np.ndarray) -> None:
        self._X.append(X)
        self._cnt.append(counts)
        self._vals.append(values)
        self._len += values.size

    def __len__(self) -> int:
        return self._len

    def blocks(self):
        return zip(self._X, self._cnt)

    @property
    def distinct_points(self) -> np.ndarray:
        return np.vstack(self._X) if self._X else np.empty((0, self.d))

    @property
    def counts(self) -> np.ndarray:
        return np.concatenate(self._cnt) if self._cnt else np.empty(0, dtype=np.int64)

    @property
    def points(self) -> np.ndarray:
        return np.repeat(self.distinct_points, self.counts, axis=0)

    @property
    def values(self) -> np.ndarray:
        return np.concatenate(self._vals) if self._vals else np.empty(0)

    def visited(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return any(bool(np.any(np.all(X == x, axis=1))) for X in self._X)

    @classmethod
    def from_points(cls, points, values=None) -> "Trajectory":
        P = np.atleast_2d(np.asarray(points, dtype=float))
        t = cls(P.shape[1])
        v = np.zeros(P.shape[0]) if values is None else np.asarray(values, dtype=float)
        t.append(P, np.ones(P.shape[0], dtype=np.int64), v)
        return t

    def concat(self, other: "Trajectory") -> "Trajectory":
        t = Trajectory(self.d)
        for X, c, v in zip(self._X + other._X, self._cnt + other._cnt, self._vals + other._vals):
            t.append(X, c, v)
        return t


class SimulationOracle:
    """Noisy objective behind a hard budget; every call is logged."""

    def __init__(self, objective: Objective, noise: NoiseModel, budget: int, rng: RngStream | np.random.Generator):
        if budget < 0:
            raise ValueError("budget must be nonnegative")
        self.objective = objective
        self.noise = noise
        self.budget = int(budget)
        self.spent = 0
        self.log = Trajectory(objective.dim)
        self._rng = rng.generator() if isinstance(rng, RngStream) else rng

    @property
    def dim(self) -> int:
        return self.objective.dim

    def spend_remaining(self) -> int:
        return self.budget - self.spent

    def _reserve(self, k: int) -> None:
        if self.spent + k > self.budget:
            raise BudgetExhausted(f"budget {self.budget} exhausted ({self.spent} spent, {k} requested)")

    def _noise(self, k: int) -> np.ndarray:
        if self.noise.sigma == 0:
            return np.zeros(k)
        return self.noise.sigma * self._rng.standard_normal(k)

    @staticmethod
    def _check_domain(X: np.ndarray) -> None:
        if not np.all((X >= 0) & (X <= 1)):
            raise ValueError("observation point outside [0,1]^d")

    def observe_repeated(self, x, k: int) -> np.ndarray:
        """k independent observations at one point."""
        x = np.asarray(x, dtype=float).reshape(1, -1)
        self._check_domain(x)
        self._reserve(k)
        vals = self.objective.func(x)[0] + self._noise(k)
        self.spent += k
        self.log.append(x, np.array([k]), vals)
        return vals

    def observe_points(self, X) -> np.ndarray:
        """One observation at each row of X, in row order."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        self._check_domain(X)
        k = X.shape[0]
        self._reserve(k)
        vals = self.objective.func(X) + self._noise(k)
        self.spent += k
        self.log.append(X, np.ones(k, dtype=np.int64), vals)
        return vals

    def observe(self, x) -> float:
        return float(self.observe_repeated(x, 1)[0])


def observe(oracle: SimulationOracle, x) -> float:
    return oracle.observe(x)


def spend_remaining(oracle: SimulationOracle) -> int:
    return oracle.spend_remaining()
