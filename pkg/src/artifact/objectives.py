"""Objectives on the unit cube, both hard instances and smooth test functions, with envelope checks.

Every objective is a vectorized function of an (m, d) array.  Members of a
family share code paths with their benchmark so that evaluations agree bit for
bit outside the member's private cell.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np
from scipy.stats import qmc

from . import geometry as geo
from .geometry import Cell, CellIndex, HierarchyParams

_TOL = 1e-12


class InfeasibleInstance(ValueError):
    """A construction precondition failed; the message names the inequality."""


@dataclass(frozen=True)
class EnvelopeParams:
    alpha: float
    beta: float
    M: float
    M_tilde: float

    def __post_init__(self):
        if not (0 < self.alpha <= self.beta < math.inf):
            raise ValueError(f"need 0 < alpha <= beta < inf, got {self.alpha}, {self.beta}")
        if not (self.M > 0 and self.M_tilde > 0):
            raise ValueError("M and M_tilde must be positive")

    @property
    def rho(self) -> float:
        return (self.M / (2 ** (2 * self.beta + 1) * self.M_tilde)) ** (1 / self.beta)

    def effective_dimension(self, d: int) -> float:
        return d * (1 / self.alpha - 1 / self.beta)

    def check_yG(self) -> None:
        ratio = self.M / (2 ** (4 * self.beta + 1) * self.M_tilde)
        if ratio < 1 - _TOL:
            raise InfeasibleInstance(f"M/(2^(4beta+1) M_tilde) = {ratio:.6g} < 1")

    @property
    def yC_ratio_bound(self) -> float:
        a = self.alpha
        return (1 - 5.0**-a) ** -1 * (1 + 1 / (5**a - 3**a)) * 80**a

    def check_yC(self) -> None:
        if self.alpha != self.beta:
            raise InfeasibleInstance("the hierarchical construction needs alpha == beta")
        if self.M / self.M_tilde < self.yC_ratio_bound * (1 - _TOL):
            raise InfeasibleInstance(
                f"M/M_tilde = {self.M / self.M_tilde:.6g} < {self.yC_ratio_bound:.6g}")

    @property
    def M_hat(self) -> float:
        a = self.alpha
        return 40**a / (5**a - 3**a) * self.M_tilde


@dataclass(frozen=True, eq=False)
class Objective:
    dim: int
    func: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    x_star: np.ndarray
    y_star: float
    envelope: EnvelopeParams | None = None
    label: str = ""
    # (center, radius) max-norm shells where branches meet; used by envelope_check
    shells: tuple = field(default=(), repr=False)

    def __call__(self, x):
        X = np.asarray(x, dtype=float)
        if X.ndim == 1:
            return float(self.func(X[None, :])[0])
        return self.func(X)

    def gap(self, x) -> float:
        return self.y_star - self(x)


# y_G / y_B ------------------------------------------------------------------

def _plateau_radius(zeta: float, env: EnvelopeParams) -> float:
    return env.rho * zeta ** (env.alpha / env.beta)


def _outer_branch(r0: np.ndarray, zeta: float, env: EnvelopeParams) -> np.ndarray:
    scale = 2**env.beta * env.M_tilde
    return scale * env.rho**env.beta * zeta**env.alpha - scale * r0**env.beta


def _check_plateau(c0: np.ndarray, zeta: float, env: EnvelopeParams) -> float:
    if not 0 < zeta <= 1:
        raise InfeasibleInstance(f"zeta = {zeta} not in (0, 1]")
    env.check_yG()
    rad = _plateau_radius(zeta, env)
    if np.any(c0 - rad < -_TOL) or np.any(c0 + rad > 1 + _TOL):
        raise InfeasibleInstance(
            f"plateau ball of radius rho*zeta^(alpha/beta) = {rad:.6g} around c0 leaves [0,1]^d")
    return rad


def _yB_values(X, c0, zeta, env, rad):
    r0 = geo.max_norm_rows(X, c0)
    return np.where(r0 <= rad, 0.0, _outer_branch(r0, zeta, env))


def make_yG(c, c0, zeta: float, env: EnvelopeParams, label: str = "yG") -> Objective:
    c = geo.as_point(c)
    c0 = geo.as_point(c0, c.size)
    rad = _check_plateau(c0, zeta, env)
    dist = geo.max_norm_dist(c, c0)
    if dist > rad - zeta + _TOL:
        raise InfeasibleInstance(
            f"||c - c0|| = {dist:.6g} > rho*zeta^(alpha/beta) - zeta = {rad - zeta:.6g}")
    half_m, a = env.M / 2, env.alpha

    def f(X):
        rc = geo.max_norm_rows(X, c)
        return np.where(rc <= zeta, half_m * zeta**a - half_m * rc**a, _yB_values(X, c0, zeta, env, rad))

    return Objective(c.size, f, c, half_m * zeta**a, env, label, shells=((c, zeta), (c0, rad)))


def make_yB(c0, zeta: float, env: EnvelopeParams, label: str = "yB") -> Objective:
    c0 = geo.as_point(c0)
    rad = _check_plateau(c0, zeta, env)
    return Objective(c0.size, lambda X: _yB_values(X, c0, zeta, env, rad), c0, 0.0, None, label,
                     shells=((c0, rad),))


# y_C ------------------------------------------------------------------------

@dataclass(frozen=True)
class HierarchyObjectiveSpec:
    leaf_index: CellIndex
    ancestors: tuple[CellIndex, ...]
    M_hat: float

    @classmethod
    def for_leaf(cls, leaf: CellIndex, env: EnvelopeParams) -> "HierarchyObjectiveSpec":
        return cls(leaf, tuple(geo.ancestors(leaf)), env.M_hat)


def _select_component(X, idx: CellIndex, m_hat: float, a: float) -> np.ndarray:
    g = geo.gamma(idx.level + 1)
    r = geo.max_norm_rows(X, geo.hierarchy_center(idx))
    plateau = m_hat * (5**a - 3**a) * g**a
    slope = m_hat * 5**a * g**a - m_hat * r**a
    return np.where(r <= 3 * g, plateau, np.where(r <= 5 * g, slope, 0.0))


def _terminal_component(X, idx: CellIndex, m_hat: float, a: float) -> np.ndarray:
    g = geo.gamma(idx.level)
    r = geo.max_norm_rows(X, geo.hierarchy_center(idx))
    return np.where(r <= g, m_hat * g**a - m_hat * r**a, 0.0)


def _chain_sum(X, chain: Sequence[CellIndex], m_hat: float, a: float) -> np.ndarray:
    # chain is ordered root first; summation order is fixed for bit-identical benchmarks
    total = np.zeros(X.shape[0])
    for idx in chain:
        total = total + _select_component(X, idx, m_hat, a)
    return total


def _chain_shells(chain):
    out = []
    for idx in chain:
        g = geo.gamma(idx.level + 1)
        c = geo.hierarchy_center(idx)
        out += [(c, 3 * g), (c, 5 * g)]
    return tuple(out)


def _chain_peak(chain, m_hat, a) -> float:
    return sum(m_hat * (5**a - 3**a) * geo.gamma(idx.level + 1) ** a for idx in chain)


def make_yC(spec: HierarchyObjectiveSpec, params: HierarchyParams, env: EnvelopeParams) -> Objective:
    env.check_yC()
    leaf = spec.leaf_index
    if leaf.level != params.a_bar or leaf.dim != params.d:
        raise InfeasibleInstance(f"leaf must sit at level {params.a_bar} in dimension {params.d}")
    if not geo.is_selected(leaf):
        raise InfeasibleInstance(f"leaf {leaf.kappa} is not in the selection set")
    chain = tuple(reversed(spec.ancestors))
    m_hat, a = spec.M_hat, env.alpha
    g_bar = geo.gamma(leaf.level)
    center = geo.hierarchy_center(leaf)

    def f(X):
        return _chain_sum(X, chain, m_hat, a) + _terminal_component(X, leaf, m_hat, a)

    peak = _chain_peak(chain, m_hat, a) + m_hat * g_bar**a
    shells = _chain_shells(chain) + ((center, g_bar),)
    return Objective(leaf.dim, f, center, peak, env, f"yC{leaf.kappa}@{leaf.level}", shells)


def make_yC_benchmark(idx: CellIndex, env: EnvelopeParams) -> Objective:
    """Ancestor objective: components for idx and all of its ancestors."""
    chain = tuple(reversed(geo.ancestors(idx))) + (idx,)
    m_hat, a = env.M_hat, env.alpha
    return Objective(idx.dim, lambda X: _chain_sum(X, chain, m_hat, a), geo.hierarchy_center(idx),
                     _chain_peak(chain, m_hat, a), None, f"yC{idx.kappa}@{idx.level}",
                     _chain_shells(chain))


# test functions -------------------------------------------------------------

def default_center(d: int) -> np.ndarray:
    return np.full(d, math.exp(-1))


def make_test1(d: int, c=None) -> Objective:
    c = default_center(d) if c is None else geo.as_point(c, d)
    env = EnvelopeParams(2.0, 2.0, float(d), 1.0)
    return Objective(d, lambda X: 1.0 - np.sum((X - c) ** 2, axis=1), c, 1.0, env, f"test1_d{d}")


def make_test2(d: int, c=None) -> Objective:
    c = default_center(d) if c is None else geo.as_point(c, d)
    # 1 - y = r + s (r - r^2/2) with s in [0, 1]; r <= sqrt(d) r_inf gives M = 2 sqrt(d)
    env = EnvelopeParams(1.0, 2.0, 2 * math.sqrt(d), 1.0)

    def f(X):
        r = np.sqrt(np.sum((X - c) ** 2, axis=1))
        safe = np.where(r < 1e-12, 1.0, r)
        s = (1 - np.cos(4 * np.pi / safe)) / 2
        return np.where(r < 1e-12, 1.0, 1 - (r - s * (0.5 * r**2 - r)))

    return Objective(d, f, c, 1.0, env, f"test2_d{d}")


# envelope certification -----------------------------------------------------

@dataclass
class EnvelopeReport:
    n_points: int
    violations: list[dict]

    @property
    def ok(self) -> bool:
        return not self.violations


def sample_plan(d: int, n: int = 100_000, shells: Sequence = (), per_shell: int = 2000,
                seed: int = 0) -> np.ndarray:
    """Halton points, plus points straddling each shell radius."""
    pts = [qmc.Halton(d, scramble=True, seed=seed).random(n)]
    rng = np.random.default_rng(seed)
    for c, r in shells:
        u = rng.uniform(-1, 1, size=(per_shell, d))
        u /= np.max(np.abs(u), axis=1, keepdims=True)
        for eps in (-1e-9, 0.0, 1e-9):
            pts.append(np.clip(c + (r * (1 + eps)) * u, 0.0, 1.0))
    return np.vstack(pts)


def envelope_check(obj: Objective, env: EnvelopeParams, sampler: np.ndarray | int = 100_000,
                   tol: float = 1e-9, max_report: int = 100) -> EnvelopeReport:
    X = sampler if isinstance(sampler, np.ndarray) else sample_plan(obj.dim, sampler, obj.shells)
    r = geo.max_norm_rows(X, obj.x_star)
    dev = np.abs(obj.y_star - obj(X))
    lo_margin = dev - (env.M_tilde * r**env.beta - tol)
    hi_margin = (env.M * r**env.alpha + tol) - dev
    bad = np.flatnonzero((lo_margin < 0) | (hi_margin < 0))
    viol = [{"x": X[i].tolist(), "lower_margin": float(lo_margin[i]),
             "upper_margin": float(hi_margin[i])} for i in bad[:max_report]]
    if bad.size > max_report:
        viol.append({"truncated": int(bad.size - max_report)})
    return EnvelopeReport(X.shape[0], viol)


# instance families ----------------------------------------------------------

class InstanceFamily:
    """Lazily materialized family; each member comes with a private cell and a benchmark."""

    def __init__(self, keys: Sequence, build: Callable, region: Callable, benchmark_of: Callable,
                 meta: dict):
        self._keys = keys
        self._build = build
        self._region = region
        self._benchmark_of = benchmark_of
        self.meta = meta

    def __len__(self) -> int:
        return len(self._keys)

    def key(self, i: int):
        return self._keys[i]

    def member(self, i: int) -> Objective:
        return self._build(self._keys[i])

    def region(self, i: int) -> Cell:
        return self._region(self._keys[i])

    def benchmark_of(self, i: int) -> Objective:
        return self._benchmark_of(self._keys[i])

    @property
    def benchmark(self) -> Objective:
        return self.benchmark_of(0)

    @property
    def members(self) -> Iterator[Objective]:
        return (self.member(i) for i in range(len(self)))


class _ProductKeys(Sequence):
    """Cartesian power of a per-axis index list, addressed by flat index."""

    def __init__(self, axis: Sequence[int], d: int):
        self.axis, self.d = list(axis), d

    def __len__(self):
        return len(self.axis) ** self.d

    def __getitem__(self, i):
        if not 0 <= i < len(self):
            raise IndexError(i)
        out = []
        for _ in range(self.d):
            i, j = divmod(i, len(self.axis))
            out.append(self.axis[j])
        return tuple(reversed(out))


def grid_family_params(kind: str, n: int, env: EnvelopeParams, d: int, sigma2: float | None = None) -> dict:
    """Grid size and plateau data for the global-structure families."""
    a, D = env.alpha, env.effective_dimension(d)
    rho = env.rho
    if kind == "G1":
        if sigma2 is None or sigma2 <= 0:
            raise InfeasibleInstance("sigma2 must be positive for G1")
        eta = 1 / (2 ** (d - a * (D + 2) - 1) * 9 * env.M**2)
        nu = (rho**d * eta * sigma2) ** (-1 / (a * (D + 2)))
        psi = math.ceil(nu * n ** (1 / (a * (D + 2))))
    elif kind == "G2":
        if D <= 0:
            raise InfeasibleInstance("G2 needs alpha < beta")
        eta = 0.25
        nu = (rho * eta) ** (-d / (a * D))
        psi = math.ceil(nu * n ** (1 / (a * D)))
    else:
        raise ValueError(f"unknown grid family {kind!r}")
    zeta = 1 / (2 * psi)
    k0 = -(-psi // 2)
    rad = _plateau_radius(zeta, env)
    return {"family": kind, "d": d, "n": n, "sigma2": sigma2, "D": D, "rho": rho, "eta": eta,
            "nu": nu, "psi": psi, "zeta": zeta, "kappa0": (k0,) * d,
            "c0": [(2 * k0 - 1) * zeta] * d, "plateau_radius": rad,
            "quarter_condition": bool(rad <= 0.25 + _TOL)}


def _grid_family(kind, n, env, d, sigma2=None) -> InstanceFamily:
    meta = grid_family_params(kind, n, env, d, sigma2)
    psi, zeta, rad = meta["psi"], meta["zeta"], meta["plateau_radius"]
    if psi < 4:
        raise InfeasibleInstance(f"psi = {psi} < 4")
    c0 = np.asarray(meta["c0"])
    _check_plateau(c0, zeta, env)
    k0 = meta["kappa0"][0]
    # per-axis member indices: |c_k - c0| <= rad - zeta
    axis = [k for k in range(1, psi + 1)
            if abs((2 * k - 1) * zeta - c0[0]) <= rad - zeta + _TOL]
    keys = _ProductKeys(axis, d)
    if kind == "G2" and len(keys) < 2 * n:
        raise InfeasibleInstance(f"only {len(keys)} members, need at least 2n = {2 * n}")
    bench = make_yB(c0, zeta, env, f"{kind}_benchmark")
    meta.update(members=len(keys), kappa0_axis=k0)

    def build(k):
        return make_yG(geo.grid_cell(k, psi).center, c0, zeta, env, f"{kind}{k}")

    return InstanceFamily(keys, build, lambda k: geo.grid_cell(k, psi), lambda k: bench, meta)


def family_G1(n: int, sigma2: float, env: EnvelopeParams, d: int) -> InstanceFamily:
    return _grid_family("G1", n, env, d, sigma2)


def family_G2(n: int, env: EnvelopeParams, d: int) -> InstanceFamily:
    return _grid_family("G2", n, env, d)


class _LeafKeys(Sequence):
    """Leaves of U_a_bar addressed by flat index (base-3 digits per level and axis)."""

    def __init__(self, params: HierarchyParams):
        self.params = params

    def __len__(self):
        return 3 ** (self.params.a_bar * self.params.d)

    def __getitem__(self, i):
        if not 0 <= i < len(self):
            raise IndexError(i)
        d = self.params.d
        digits = []
        for _ in range(self.params.a_bar):
            row = []
            for _ in range(d):
                i, t = divmod(i, 3)
                row.append(t)
            digits.append(row)
        return geo.selected_leaf(digits[::-1])


def family_C2(n: int, d: int, env: EnvelopeParams, a_bar: int | None = None) -> InstanceFamily:
    env.check_yC()
    params = geo.hierarchy_params(n, d) if a_bar is None else HierarchyParams(d, a_bar)
    keys = _LeafKeys(params)
    meta = {"family": "C2", "d": d, "n": n, "delta": params.delta, "a_bar": params.a_bar,
            "M_hat": env.M_hat, "members": len(keys)}

    def build(leaf):
        return make_yC(HierarchyObjectiveSpec.for_leaf(leaf, env), params, env)

    fam = InstanceFamily(keys, build, geo.hierarchy_cell,
                         lambda leaf: make_yC_benchmark(geo.parent(leaf), env), meta)
    fam.params = params
    return fam


# near-optimality profile ----------------------------------------------------

def near_opt_dimension_profile(obj: Objective, nu: float, rho_ratio: float, L: int = 2,
                               h_max: int = 10, cap: int = geo.INSTANCE_CAP) -> list[int]:
    """Counts N_h of level-h cells of the L-ary grid that are 2 nu rho^h optimal.

    Cell suprema come from a 3^d probe lattice that includes the center, so
    N_h can only be under-counted.
    """
    if not 0 < rho_ratio < 1 or L < 2:
        raise ValueError("need rho_ratio in (0, 1) and L >= 2")
    d = obj.dim
    offs = np.array(list(np.ndindex(*(3,) * d)), dtype=float) / 4 + 0.25
    counts = []
    for h in range(h_max + 1):
        m = L**h
        if (m**d) * offs.shape[0] > cap:
            raise geo.CapExceeded(f"level {h} needs {(m**d) * offs.shape[0]} probes")
        corners = np.array(list(np.ndindex(*(m,) * d)), dtype=float)
        X = ((corners[:, None, :] + offs[None, :, :]) / m).reshape(-1, d)
        sup = obj(X).reshape(corners.shape[0], -1).max(axis=1)
        counts.append(int(np.sum(sup >= obj.y_star - 2 * nu * rho_ratio**h)))
    return counts


def profile_exponent(counts: Sequence[int], rho_ratio: float, tail: float = 0.5) -> float:
    """Growth exponent d' from the tail of the profile: log N_h ~ -d' h log rho."""
    h = np.arange(len(counts))
    keep = h >= int(tail * (len(counts) - 1))
    if keep.sum() < 2:
        raise ValueError("need at least two levels in the fitted window")
    slope = np.polyfit(h[keep], np.log(np.asarray(counts, dtype=float)[keep]), 1)[0]
    return float(slope / math.log(1 / rho_ratio))
