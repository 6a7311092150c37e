"""Lower-bound terms and the budget at which they cross."""
from __future__ import annotations

import math
from dataclasses import dataclass

REGIMES = ("alpha_lt_beta", "alpha_eq_beta")


def effective_dimension(d: int, alpha: float, beta: float) -> float:
    if not (0 < alpha <= beta) or d < 1:
        raise ValueError(f"invalid shape parameters d={d}, alpha={alpha}, beta={beta}")
    return 0.0 if alpha == beta else d * (1 / alpha - 1 / beta)


def rate_exponents(D: float) -> tuple[float, float]:
    """(variance term exponent 1/(D+2), deterministic term exponent 1/D)."""
    return 1 / (D + 2), (math.inf if D == 0 else 1 / D)


@dataclass(frozen=True)
class BoundSpec:
    regime: str
    D: float = 0.0
    b_poly: float = 1.0
    b_exp_scale: float = 1.0
    b_exp_rate: float = 1.0

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}")
        if (self.regime == "alpha_eq_beta") != (self.D == 0):
            raise ValueError("regime alpha_eq_beta holds exactly when D = 0")
        if self.D < 0 or min(self.b_poly, self.b_exp_scale, self.b_exp_rate) <= 0:
            raise ValueError("D must be nonnegative and constants positive")

    @classmethod
    def from_shape(cls, d: int, alpha: float, beta: float, **constants) -> "BoundSpec":
        D = effective_dimension(d, alpha, beta)
        return cls("alpha_eq_beta" if D == 0 else "alpha_lt_beta", D, **constants)


def bound_terms(spec: BoundSpec, n: float, sigma2: float) -> tuple[float, float]:
    """(variance-dependent term, variance-independent term), without b_poly."""
    if n < 1 or sigma2 < 0:
        raise ValueError("need n >= 1 and sigma2 >= 0")
    if spec.regime == "alpha_lt_beta":
        return (sigma2 / n) ** (1 / (spec.D + 2)), n ** (-1 / spec.D)
    return math.sqrt(sigma2 / n), spec.b_exp_scale * math.exp(-spec.b_exp_rate * n)


def lower_bound(spec: BoundSpec, n: float, sigma2: float) -> float:
    return spec.b_poly * max(bound_terms(spec, n, sigma2))


def _log_gap(spec: BoundSpec, n: float, sigma2: float) -> float:
    # log(variance term) - log(deterministic term); increasing past its minimum
    if spec.regime == "alpha_lt_beta":
        return (math.log(sigma2) - math.log(n)) / (spec.D + 2) + math.log(n) / spec.D
    return 0.5 * (math.log(sigma2) - math.log(n)) - math.log(spec.b_exp_scale) + spec.b_exp_rate * n


def switching_budget_bisect(spec: BoundSpec, sigma2: float, rtol: float = 1e-12) -> float:
    """Crossing of the two terms found by bisection on log-budget.

    The search starts where the log-ratio begins increasing; if the variance
    term already dominates there, that starting point is returned.
    """
    if sigma2 <= 0:
        raise ValueError("switching budget needs sigma2 > 0")
    lo = 1e-300 if spec.regime == "alpha_lt_beta" else 1 / (2 * spec.b_exp_rate)
    if spec.regime == "alpha_eq_beta" and _log_gap(spec, lo, sigma2) >= 0:
        return lo
    lo_log = math.log(lo)
    hi_log = max(lo_log, 0.0) + 1.0
    while _log_gap(spec, math.exp(hi_log), sigma2) < 0:
        hi_log = hi_log + max(1.0, abs(hi_log))
    if spec.regime == "alpha_lt_beta":
        while _log_gap(spec, math.exp(lo_log), sigma2) > 0:
            lo_log -= max(1.0, abs(lo_log))
    while hi_log - lo_log > rtol:
        mid = 0.5 * (lo_log + hi_log)
        if _log_gap(spec, math.exp(mid), sigma2) < 0:
            lo_log = mid
        else:
            hi_log = mid
    return math.exp(0.5 * (lo_log + hi_log))


def switching_budget(spec: BoundSpec, sigma2: float) -> float:
    if sigma2 <= 0:
        raise ValueError("switching budget needs sigma2 > 0 (it is +inf at sigma2 = 0)")
    if spec.regime == "alpha_lt_beta":
        return sigma2 ** (-spec.D / 2)
    return switching_budget_bisect(spec, sigma2, rtol=1e-10)
