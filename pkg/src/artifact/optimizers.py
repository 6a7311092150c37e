"""Budget-constrained optimizers, from plain uniform search to adaptive tree search."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .simulation import SimulationOracle, Trajectory

KINDS = ("uniform", "kwsa", "stroquool")


@dataclass(frozen=True)
class OptimizerSpec:
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown optimizer kind {self.kind!r}")
        for k, v in self.params.items():
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"optimizer parameter {k}={v} must be positive and finite")

    @property
    def label(self) -> str:
        return self.kind


@dataclass
class Recommendation:
    x_hat: np.ndarray
    trajectory: Trajectory
    diagnostics: dict = field(default_factory=dict)


def _finish(oracle: SimulationOracle, x_hat, diagnostics) -> Recommendation:
    x_hat = np.array(x_hat, dtype=float)
    oracle.log.recommendation = x_hat
    return Recommendation(x_hat, oracle.log, diagnostics)


def uniform_search(oracle: SimulationOracle, n: int, rng: np.random.Generator) -> Recommendation:
    if n < 1:
        raise ValueError("uniform search needs n >= 1")
    X = rng.uniform(size=(n, oracle.dim))
    vals = oracle.observe_points(X)
    best = int(np.argmax(vals))  # first maximum wins ties
    return _finish(oracle, X[best], {"best_index": best})


# Kiefer-Wolfowitz -----------------------------------------------------------

def _fd_points(x: np.ndarray, c: float):
    """Rows to observe and the step, per coordinate, for one gradient estimate."""
    d = x.size
    rows, steps = [], []
    for i in range(d):
        ci = c
        up_ok, dn_ok = x[i] + ci <= 1, x[i] - ci >= 0
        if not (up_ok or dn_ok):
            # shrink so that one side stays inside
            ci = max(x[i], 1 - x[i])
            up_ok = x[i] + ci <= 1
            dn_ok = not up_ok
        e = np.zeros(d)
        e[i] = ci
        if up_ok and dn_ok:
            rows += [x + e, x - e]
            steps.append(2 * ci)
        elif up_ok:
            rows += [x + e, x.copy()]
            steps.append(ci)
        else:
            rows += [x.copy(), x - e]
            steps.append(ci)
    return np.clip(np.array(rows), 0.0, 1.0), np.array(steps)


def fd_gradient(oracle: SimulationOracle, x, c: float) -> np.ndarray:
    """Finite-difference gradient at x from 2d observations."""
    rows, steps = _fd_points(np.asarray(x, dtype=float), c)
    vals = oracle.observe_points(rows)
    return (vals[0::2] - vals[1::2]) / steps


def kwsa(oracle: SimulationOracle, n: int, rng: np.random.Generator | None = None,
         spec: OptimizerSpec | None = None) -> Recommendation:
    d = oracle.dim
    if n < 2 * d + 1:
        raise ValueError(f"KWSA needs n >= 2d+1 = {2 * d + 1}")
    params = {"a": 1.0, "c_fd": 0.2, **(spec.params if spec else {})}
    x = np.full(d, 0.5)
    iters = (n - 1) // (2 * d)
    for k in range(1, iters + 1):
        g = fd_gradient(oracle, x, params["c_fd"] / k**0.25)
        x = np.clip(x + params["a"] / k * g, 0.0, 1.0)
    oracle.observe(x)
    return _finish(oracle, x, {"iterations": iters})


# StroquOOL ------------------------------------------------------------------

def stroquool_schedule(n: int) -> tuple[int, int, int]:
    """(h_max, p_max, validation evaluations per candidate) for budget n."""
    log_n = (n - 1).bit_length()  # ceil(log2 n)
    h_max = max(1, n // (2 * (log_n + 1) ** 2))
    p_max = h_max.bit_length() - 1
    return h_max, p_max, n // (2 * (p_max + 1))


class _Tree:
    """Ternary partition tree; nodes kept in (depth, index) creation order."""

    def __init__(self, oracle: SimulationOracle, limit: int):
        self.oracle, self.limit = oracle, limit
        d = oracle.dim
        self.d = d
        self.centers = [np.full(d, 0.5)]
        self.depth = [0]
        self.count = [0]
        self.total = [0.0]
        self.opened = [False]
        self.by_depth: dict[int, list[int]] = {0: [0]}
        self.widths = {0: np.ones(d)}
        self.skipped = 0

    def open(self, i: int, p: int) -> bool:
        k = 1 << p
        if self.oracle.spent + 3 * k > self.limit:
            self.skipped += 1
            return False
        h = self.depth[i]
        j = h % self.d
        w = self.widths[h].copy()
        w[j] /= 3
        self.widths.setdefault(h + 1, w)
        self.opened[i] = True
        kids = self.by_depth.setdefault(h + 1, [])
        for off in (-w[j], 0.0, w[j]):
            c = self.centers[i].copy()
            c[j] += off
            vals = self.oracle.observe_repeated(c, k)
            kids.append(len(self.centers))
            self.centers.append(c)
            self.depth.append(h + 1)
            self.count.append(k)
            self.total.append(float(vals.sum()))
            self.opened.append(False)
        return True

    def best(self, nodes, min_count: int, unopened: bool) -> int | None:
        best, best_val = None, -np.inf
        for i in nodes:
            if self.count[i] < min_count or (unopened and self.opened[i]):
                continue
            m = self.total[i] / self.count[i]
            if m > best_val:
                best, best_val = i, m
        return best


def stroquool(oracle: SimulationOracle, n: int, rng: np.random.Generator | None = None) -> Recommendation:
    if n < 16:
        raise ValueError("StroquOOL needs n >= 16")
    h_max, p_max, n_val = stroquool_schedule(n)
    tree = _Tree(oracle, n - (p_max + 1) * n_val)
    tree.open(0, p_max)
    deepest = 0
    for h in range(1, h_max + 1):
        for p in range((h_max // h).bit_length() - 1, -1, -1):
            i = tree.best(tree.by_depth.get(h, ()), 1 << p, unopened=True)
            if i is not None and tree.open(i, p):
                deepest = h
    explore_spent = oracle.spent

    all_nodes = range(len(tree.centers))
    candidates = []
    for p in range(p_max + 1):
        i = tree.best(all_nodes, 1 << p, unopened=False)
        if i is not None and i not in candidates:
            candidates.append(i)
    scores = [oracle.observe_repeated(tree.centers[i], n_val).mean() for i in candidates]
    pick = candidates[int(np.argmax(scores))]
    diag = {"h_max": h_max, "p_max": p_max, "deepest_opened": deepest,
            "explore_spent": explore_spent, "validation_spent": oracle.spent - explore_spent,
            "candidates": len(candidates), "skipped_openings": tree.skipped,
            "recommended_depth": tree.depth[pick]}
    return _finish(oracle, tree.centers[pick], diag)


def run_algorithm(spec: OptimizerSpec, oracle: SimulationOracle, rng: np.random.Generator,
                  n: int | None = None) -> Recommendation:
    n = oracle.budget if n is None else n
    if spec.kind == "uniform":
        return uniform_search(oracle, n, rng)
    if spec.kind == "kwsa":
        return kwsa(oracle, n, rng, spec)
    if spec.kind == "stroquool":
        return stroquool(oracle, n, rng)
    raise ValueError(f"unknown optimizer kind {spec.kind!r}")
