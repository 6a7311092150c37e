"""Max-norm cells on the unit cube, arranged as flat grids or a base-5 hierarchy.

Cells are half-open boxes ``[c - r, c + r)`` per axis.  A cell whose upper face
touches 1 is closed there, so every point of ``[0, 1]^d`` lies in exactly one
cell of a grid or hierarchy level.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

INSTANCE_CAP = 10**7


class CapExceeded(ValueError):
    """Raised when an enumeration would exceed the instance cap."""


def as_point(x, d: int | None = None) -> np.ndarray:
    p = np.asarray(x, dtype=float).reshape(-1)
    if d is not None and p.size != d:
        raise ValueError(f"expected a point of dimension {d}, got {p.size}")
    return p


def max_norm_dist(a, b) -> float:
    a = np.asarray(a, dtype=float).reshape(-1)
    b = np.asarray(b, dtype=float).reshape(-1)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.size} vs {b.size}")
    return float(np.max(np.abs(a - b))) if a.size else 0.0


def max_norm_rows(X: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Row-wise ``||X_i - c||_inf`` for an (m, d) array."""
    return np.max(np.abs(X - c), axis=1)


@dataclass(frozen=True, eq=False)
class Cell:
    center: np.ndarray
    radius: float
    level: int = 0
    lo: np.ndarray = field(default=None, repr=False)
    hi: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        c = as_point(self.center)
        if not self.radius > 0:
            raise ValueError("cell radius must be positive")
        object.__setattr__(self, "center", c)
        if self.lo is None:
            object.__setattr__(self, "lo", c - self.radius)
        if self.hi is None:
            object.__setattr__(self, "hi", c + self.radius)

    @property
    def dim(self) -> int:
        return self.center.size

    def contains(self, X) -> np.ndarray | bool:
        """Half-open membership; the top face of the cube is included."""
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        upper = (X < self.hi) | ((self.hi >= 1.0) & (X <= 1.0))
        inside = np.all((X >= self.lo) & upper, axis=1)
        return bool(inside[0]) if single else inside

    def subset_of(self, other: "Cell") -> bool:
        return bool(np.all(self.lo >= other.lo) and np.all(self.hi <= other.hi))

    def disjoint_from(self, other: "Cell") -> bool:
        # half-open boxes are disjoint iff some axis separates them
        return bool(np.any((self.hi <= other.lo) | (other.hi <= self.lo)))


@dataclass(frozen=True)
class CellIndex:
    kappa: tuple[int, ...]
    level: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kappa", tuple(int(k) for k in self.kappa))
        if self.level < 0:
            raise ValueError("level must be nonnegative")

    @property
    def dim(self) -> int:
        return len(self.kappa)


def _grid_cell(kappa: Sequence[int], n_per_axis: int, level: int) -> Cell:
    k = np.asarray(kappa, dtype=float)
    center = (2 * k - 1) / (2 * n_per_axis)
    return Cell(center, 0.5 / n_per_axis, level, lo=(k - 1) / n_per_axis, hi=k / n_per_axis)


def grid_cell(kappa: Sequence[int], psi: int) -> Cell:
    if any(not 1 <= k <= psi for k in kappa):
        raise ValueError(f"grid index {tuple(kappa)} outside 1..{psi}")
    return _grid_cell(kappa, psi, 0)


def grid_partition(d: int, psi: int, cap: int = INSTANCE_CAP) -> list[Cell]:
    if psi < 1 or d < 1:
        raise ValueError("need psi >= 1 and d >= 1")
    if psi**d > cap:
        raise CapExceeded(f"psi^d = {psi}^{d} exceeds the instance cap {cap}")
    return [_grid_cell(k, psi, 0) for k in itertools.product(range(1, psi + 1), repeat=d)]


def grid_locate(X, psi: int) -> np.ndarray:
    """Grid multi-index (1-based) of each row of X."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return np.clip(np.floor(X * psi).astype(np.int64) + 1, 1, psi)


# hierarchy ------------------------------------------------------------------

def gamma(a: int) -> float:
    # repeated division keeps gamma(a + 1) == gamma(a) / 5 exact in floating point
    g = 0.5
    for _ in range(a):
        g /= 5
    return g


@dataclass(frozen=True)
class HierarchyParams:
    d: int
    a_bar: int

    def __post_init__(self):
        if self.d < 1 or self.a_bar < 1:
            raise ValueError("need d >= 1 and a_bar >= 1")

    @property
    def delta(self) -> int:
        return 3**self.d // 2

    def gamma(self, a: int) -> float:
        return gamma(a)


def hierarchy_params(n: int, d: int) -> HierarchyParams:
    """Depth of the hierarchy for budget n: a_bar = ceil(4(n+1)/delta) + 2."""
    delta = 3**d // 2
    a_bar = -(-4 * (n + 1) // delta) + 2
    return HierarchyParams(d, a_bar)


def _check_index(idx: CellIndex) -> None:
    top = 5**idx.level
    if any(not 1 <= k <= top for k in idx.kappa):
        raise ValueError(f"index {idx.kappa} outside 1..{top} at level {idx.level}")


def hierarchy_cell(idx: CellIndex) -> Cell:
    _check_index(idx)
    return _grid_cell(idx.kappa, 5**idx.level, idx.level)


def hierarchy_center(idx: CellIndex) -> np.ndarray:
    return (2 * np.asarray(idx.kappa, dtype=float) - 1) / (2 * 5**idx.level)


def parent(idx: CellIndex) -> CellIndex:
    if idx.level == 0:
        raise ValueError("the root cell has no parent")
    _check_index(idx)
    return CellIndex(tuple(-(-k // 5) for k in idx.kappa), idx.level - 1)


def ancestors(idx: CellIndex) -> list[CellIndex]:
    """Chain P(idx), P^2(idx), ..., root."""
    out = []
    while idx.level > 0:
        idx = parent(idx)
        out.append(idx)
    return out


def root(d: int) -> CellIndex:
    return CellIndex((1,) * d, 0)


def _selected_child_axes(k: int) -> tuple[int, int, int]:
    # children within 2*gamma_{a+1} of the parent center: the central three fifths
    return (5 * k - 3, 5 * k - 2, 5 * k - 1)


def is_selected(idx: CellIndex) -> bool:
    _check_index(idx)
    if idx.level == 0:
        return True
    for anc in [idx] + ancestors(idx)[:-1]:
        par = parent(anc)
        for k, kp in zip(anc.kappa, par.kappa):
            if k not in _selected_child_axes(kp):
                return False
    return True


def children_in_selection(idx: CellIndex, params: HierarchyParams) -> list[CellIndex]:
    if idx.level >= params.a_bar:
        raise ValueError("cells at the deepest level have no children")
    if idx.dim != params.d or not is_selected(idx):
        raise ValueError(f"{idx} is not in the selection set of level {idx.level}")
    axes = [_selected_child_axes(k) for k in idx.kappa]
    return [CellIndex(k, idx.level + 1) for k in itertools.product(*axes)]


def selected_axis_indices(level: int) -> list[int]:
    """Per-axis indices of U_level (U_level is their d-fold product)."""
    idx = [1]
    for _ in range(level):
        idx = [c for k in idx for c in _selected_child_axes(k)]
    return idx


def selection_sets(params: HierarchyParams, cap: int = INSTANCE_CAP) -> dict[int, list[CellIndex]]:
    total = sum(3 ** (a * params.d) for a in range(params.a_bar + 1))
    if total > cap:
        raise CapExceeded(f"selection sets hold {total} cells, above the cap {cap}")
    out = {}
    for a in range(params.a_bar + 1):
        axis = selected_axis_indices(a)
        out[a] = [CellIndex(k, a) for k in itertools.product(axis, repeat=params.d)]
    return out


def selected_leaf(digits: Sequence[Sequence[int]]) -> CellIndex:
    """Leaf of U_a picked by per-level, per-axis choices in {0, 1, 2}.

    ``digits[j][l]`` picks the child along axis l when descending from level j.
    """
    if not digits:
        raise ValueError("need at least one level")
    kappa = [1] * len(digits[0])
    for row in digits:
        kappa = [5 * k - 3 + int(t) for k, t in zip(kappa, row)]
    return CellIndex(tuple(kappa), len(digits))
