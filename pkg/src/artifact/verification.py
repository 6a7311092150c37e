"""Monte Carlo checks on optimizer trajectories under paired problems."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats
from scipy.stats import qmc

from . import geometry as geo
from .geometry import Cell
from .objectives import EnvelopeParams, Objective
from .optimizers import OptimizerSpec, run_algorithm
from .simulation import NoiseModel, RngStream, SimulationOracle, Trajectory, hash_seed


class CertificationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ProblemPair:
    problem1: Objective
    problem2: Objective
    noise: NoiseModel
    difference_region: Cell


# primitives -----------------------------------------------------------------

def log_likelihood_ratio(traj: Trajectory, y1: Objective, y2: Objective, sigma2: float) -> float:
    if sigma2 <= 0:
        raise ValueError("log-likelihood ratio needs sigma2 > 0")
    total = 0.0
    for X, cnt in traj.blocks():
        total += float(np.sum(cnt * (y1(X) - y2(X)) ** 2))
    return total / (2 * sigma2)


def _stack(cells: Sequence[Cell]):
    lo = np.stack([c.lo for c in cells])
    hi = np.stack([c.hi for c in cells])
    return lo[:, None, :], hi[:, None, :]


def hitting_times(traj: Trajectory, cells: Sequence[Cell], n: int | None = None) -> np.ndarray:
    """First observation index (1-based) landing in each cell; n+1 if none."""
    n = len(traj) if n is None else n
    out = np.full(len(cells), n + 1, dtype=np.int64)
    if not cells or len(traj) == 0:
        return out
    P, cnt = traj.distinct_points, traj.counts
    start = np.cumsum(cnt) - cnt + 1
    lo, hi = _stack(cells)
    Q = P[None, :, :]
    upper = (Q < hi) | ((hi >= 1.0) & (Q <= 1.0))
    inside = np.all((Q >= lo) & upper, axis=2)
    hit = inside.any(axis=1)
    out[hit] = start[np.argmax(inside[hit], axis=1)]
    return out


def hitting_time(traj: Trajectory, region: Cell, n: int | None = None) -> int:
    return int(hitting_times(traj, [region], n)[0])


def certify_pair(pair: ProblemPair, n_points: int = 100_000, tol: float = 1e-12, seed: int = 0) -> float:
    """Largest |y1 - y2| outside the difference region over a quasi-random scan."""
    d = pair.problem1.dim
    X = qmc.Halton(d, scramble=True, seed=seed).random(n_points)
    X = X[~pair.difference_region.contains(X)]
    dev = float(np.max(np.abs(pair.problem1(X) - pair.problem2(X)), initial=0.0))
    if dev > tol:
        raise CertificationError(f"objectives differ by {dev:.3g} outside the region")
    return dev


def _runs(alg: OptimizerSpec, obj: Objective, noise: NoiseModel, n: int, reps: int, base: RngStream):
    for r in range(reps):
        oracle = SimulationOracle(obj, noise, n, base.fork(r, 0))
        yield run_algorithm(alg, oracle, base.fork(r, 1).generator(), n)


def _se(p: float, reps: int) -> float:
    return math.sqrt(max(p * (1 - p), 0.0) / reps)


# transport ------------------------------------------------------------------

@dataclass
class TransportReport:
    optimizer: str
    reps: int
    n: int
    sigma2: float
    p1: float
    p2: float
    mean_llr: float
    se_llr: float
    pinsker: float
    rhs: float
    combined_se: float
    margin: float
    passed: bool

    def to_dict(self):
        return asdict(self)


def transport_check(alg: OptimizerSpec, pair: ProblemPair, region: Cell, reps: int, n: int,
                    seed: int) -> TransportReport:
    sigma2 = pair.noise.sigma2
    if sigma2 <= 0:
        raise ValueError("transport check needs sigma2 > 0")
    if reps < 1000:
        raise ValueError("transport check needs at least 1000 replications")
    base = RngStream(hash_seed(seed, "transport", alg.kind, n, sigma2))
    y1, y2 = pair.problem1, pair.problem2
    hit1, llr = np.zeros(reps), np.zeros(reps)
    for r, rec in enumerate(_runs(alg, y1, pair.noise, n, reps, base.fork(1))):
        hit1[r] = region.contains(rec.x_hat)
        llr[r] = log_likelihood_ratio(rec.trajectory, y1, y2, sigma2)
    hit2 = np.array([region.contains(rec.x_hat)
                     for rec in _runs(alg, y2, pair.noise, n, reps, base.fork(2))], dtype=float)
    p1, p2 = hit1.mean(), hit2.mean()
    mean_llr, se_llr = llr.mean(), llr.std(ddof=1) / math.sqrt(reps)
    pinsker = math.sqrt(mean_llr / 2)
    se_pinsker = se_llr / (2 * math.sqrt(2 * mean_llr)) if mean_llr > 0 else 0.0
    comb = math.sqrt(_se(p1, reps) ** 2 + _se(p2, reps) ** 2 + se_pinsker**2)
    rhs = pinsker + p1
    margin = rhs + 3 * comb - p2
    return TransportReport(alg.kind, reps, n, sigma2, p1, p2, mean_llr, se_llr, pinsker, rhs,
                           comb, margin, bool(margin >= 0))


def yG_yB_sq_integral(zeta: float, env: EnvelopeParams, d: int) -> float:
    """Integral of (y_G - y_B)^2 over the cube; the difference lives on the zeta-box."""
    a = env.alpha
    # ||x - c||_inf has density d 2^d r^(d-1) on [0, zeta]
    return (env.M**2 / 4) * 2**d * d * zeta ** (2 * a + d) * (1 / d - 2 / (a + d) + 1 / (2 * a + d))


def uniform_expected_llr(zeta: float, env: EnvelopeParams, d: int, n: int, sigma2: float) -> float:
    return n * yG_yB_sq_integral(zeta, env, d) / (2 * sigma2)


# hitting-time invariance ----------------------------------------------------

@dataclass
class HittingReport:
    optimizer: str
    reps: int
    n: int
    statistic: float
    critical: float
    pvalue: float
    mean_tau1: float
    mean_tau2: float
    margin: float
    passed: bool
    certified: bool

    def to_dict(self):
        return asdict(self)


def ks_critical(n1: int, n2: int, level: float = 0.99) -> float:
    c = math.sqrt(-0.5 * math.log((1 - level) / 2))
    return c * math.sqrt((n1 + n2) / (n1 * n2))


def hitting_invariance_check(alg: OptimizerSpec, pair: ProblemPair, reps: int, n: int, seed: int,
                             certify: bool = True) -> HittingReport:
    if certify:
        certify_pair(pair)
    region = pair.difference_region
    base = RngStream(hash_seed(seed, "hitting", alg.kind, n, pair.noise.sigma2))
    taus = []
    for side, obj in ((1, pair.problem1), (2, pair.problem2)):
        taus.append(np.array([hitting_time(rec.trajectory, region, n)
                              for rec in _runs(alg, obj, pair.noise, n, reps, base.fork(side))]))
    t1, t2 = taus
    if np.array_equal(np.sort(t1), np.sort(t2)):
        stat, pval = 0.0, 1.0
    else:
        res = stats.ks_2samp(t1, t2)
        stat, pval = float(res.statistic), float(res.pvalue)
    crit = ks_critical(reps, reps)
    return HittingReport(alg.kind, reps, n, stat, crit, pval, float(t1.mean()), float(t2.mean()),
                         crit - stat, bool(stat <= crit), certify)


# pigeonhole -----------------------------------------------------------------

@dataclass
class PigeonholeReport:
    optimizer: str
    reps: int
    n: int
    n2: int
    cells: int
    survival: list[float]
    best_cell: int
    best_survival: float
    best_se: float
    margin: float
    passed: bool
    conditional: dict | None = field(default=None)

    def to_dict(self):
        return asdict(self)


def _check_disjoint(cells: Sequence[Cell]) -> None:
    lo = np.stack([c.lo for c in cells])
    hi = np.stack([c.hi for c in cells])
    sep = np.any((hi[:, None, :] <= lo[None, :, :]) | (hi[None, :, :] <= lo[:, None, :]), axis=2)
    np.fill_diagonal(sep, True)
    if not sep.all():
        i, j = np.argwhere(~sep)[0]
        raise ValueError(f"cells {i} and {j} overlap")


def _exists_half(p: np.ndarray, reps) -> tuple[int, float, float, float]:
    se = np.sqrt(np.maximum(p * (1 - p), 0) / np.maximum(reps, 1))
    score = p + 3 * se - 0.5
    k = int(np.argmax(score))
    return k, float(p[k]), float(se[k]), float(score[k])


def pigeonhole_check(alg: OptimizerSpec, problem: Objective, cells: Sequence[Cell], n2: int,
                     reps: int, seed: int, n: int | None = None, noise: NoiseModel | None = None,
                     container: Cell | None = None, delta: int | None = None) -> PigeonholeReport:
    """Some cell stays unvisited through n2 observations with probability >= 1/2.

    With ``container`` and ``delta`` the conditional variant is checked too:
    after the container is first hit, some cell waits at least delta more
    steps, and if the container is hit late some cell is never hit.
    """
    _check_disjoint(cells)
    n = n2 if n is None else n
    if n2 > min(len(cells) / 2, n):
        raise ValueError("need n2 <= min(|cells|/2, n)")
    noise = NoiseModel() if noise is None else noise
    base = RngStream(hash_seed(seed, "pigeonhole", alg.kind, n, noise.sigma2))
    region_list = list(cells) + ([container] if container is not None else [])
    taus = np.array([hitting_times(rec.trajectory, region_list, n)
                     for rec in _runs(alg, problem, noise, n, reps, base)])
    tau_cells = taus[:, : len(cells)]
    surv = (tau_cells > n2).mean(axis=0)
    k, pk, sek, margin = _exists_half(surv, reps)
    cond = None
    if container is not None and delta is not None:
        tc = taus[:, -1]
        early = tc <= n - delta
        late = ~early
        cond = {"delta": delta, "early_reps": int(early.sum()), "late_reps": int(late.sum())}
        ok = True
        if early.any():
            p_e = (tau_cells[early] >= tc[early, None] + delta).mean(axis=0)
            ke, pe, see, me = _exists_half(p_e, early.sum())
            cond.update(early_cell=ke, early_prob=pe, early_margin=me)
            ok &= me >= 0
        if late.any():
            p_l = (tau_cells[late] > n).mean(axis=0)
            kl, pl, sel, ml = _exists_half(p_l, late.sum())
            cond.update(late_cell=kl, late_prob=pl, late_margin=ml)
            ok &= ml >= 0
        cond["passed"] = bool(ok)
    passed = margin >= 0 and (cond is None or cond["passed"])
    return PigeonholeReport(alg.kind, reps, n, n2, len(cells), surv.tolist(), k, pk, sek, margin,
                            bool(passed), cond)


def grid_cells(d: int, psi: int) -> list[Cell]:
    return geo.grid_partition(d, psi)
