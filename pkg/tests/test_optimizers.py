import math

import numpy as np
import pytest

from artifact.objectives import Objective, make_test1
from artifact.optimizers import (
    OptimizerSpec, fd_gradient, kwsa, run_algorithm, stroquool, stroquool_schedule, uniform_search,
)
from artifact.simulation import NoiseModel, RngStream, SimulationOracle

GRID = [300, 1000, 3000, 10_000, 30_000, 100_000]


def oracle(obj, n, sigma2=0.0, seed=0):
    return SimulationOracle(obj, NoiseModel.from_variance(sigma2), n, RngStream(seed, (0,)))


class FixedPoints:
    """Generator stand-in that returns preset uniform draws."""

    def __init__(self, pts):
        self.pts = np.asarray(pts, dtype=float)

    def uniform(self, size):
        return self.pts.reshape(size)


def test_uniform_search_recommends_best_point():
    y = make_test1(1)
    rec = uniform_search(oracle(y, 3), 3, FixedPoints([[0.1], [math.exp(-1)], [0.9]]))
    assert rec.x_hat[0] == math.exp(-1)
    rec = uniform_search(oracle(y, 1), 1, np.random.default_rng(0))
    assert len(rec.trajectory) == 1 and rec.trajectory.visited(rec.x_hat)


def test_uniform_search_tie_goes_to_first():
    flat = Objective(1, lambda X: np.zeros(X.shape[0]), np.array([0.5]), 0.0)
    rec = uniform_search(oracle(flat, 3), 3, FixedPoints([[0.4], [0.1], [0.2]]))
    assert rec.x_hat[0] == 0.4


def test_fd_gradient_examples():
    q = Objective(1, lambda X: 1 - (X[:, 0] - 0.3) ** 2, np.array([0.3]), 1.0)
    g = fd_gradient(oracle(q, 2), [0.5], 0.1)
    assert g[0] == pytest.approx(-0.4, abs=1e-12)
    assert fd_gradient(oracle(q, 2), [0.3], 0.1)[0] == pytest.approx(0.0, abs=1e-12)
    # one-sided near the boundary, points stay in the cube
    o = oracle(q, 2)
    assert fd_gradient(o, [0.95], 0.1)[0] == pytest.approx(-1.2, abs=1e-12)
    assert o.log.points.max() <= 1.0


def test_kwsa_budget_arithmetic():
    y = make_test1(1)
    o = oracle(y, 3)
    rec = kwsa(o, 3)
    assert rec.diagnostics["iterations"] == 1 and len(rec.trajectory) == 3
    assert rec.trajectory.visited(rec.x_hat)
    with pytest.raises(ValueError):
        kwsa(oracle(make_test1(2), 4), 4)


def test_stroquool_schedule():
    assert stroquool_schedule(10_000)[0] == 22
    assert stroquool_schedule(16)[0] == 1
    with pytest.raises(ValueError):
        stroquool(oracle(make_test1(1), 15), 15)


def test_stroquool_noiseless_accuracy():
    y = make_test1(1)
    rec = stroquool(oracle(y, 10_000), 10_000)
    assert y.gap(rec.x_hat) <= 1e-4


@pytest.mark.parametrize("d", [1, 3])
def test_budget_audit_on_grid(d):
    y = make_test1(d)
    for n in GRID:
        for kind in ("uniform", "kwsa", "stroquool"):
            o = oracle(y, n, 1e-2, seed=n)
            rec = run_algorithm(OptimizerSpec(kind), o, np.random.default_rng(n))
            assert len(rec.trajectory) <= n
            assert rec.trajectory.visited(rec.x_hat)


def test_seed_determinism():
    y = make_test1(2)
    for kind in ("uniform", "kwsa", "stroquool"):
        a = run_algorithm(OptimizerSpec(kind), oracle(y, 500, 1e-2, 4), RngStream(4, (1,)).generator())
        b = run_algorithm(OptimizerSpec(kind), oracle(y, 500, 1e-2, 4), RngStream(4, (1,)).generator())
        np.testing.assert_array_equal(a.x_hat, b.x_hat)


def test_noiseless_stroquool_gap_nonincreasing():
    y = make_test1(1)
    gaps = [y.gap(stroquool(oracle(y, n), n).x_hat) for n in GRID]
    assert all(b <= a + 1e-12 for a, b in zip(gaps, gaps[1:]))


def test_adaptivity_sanity():
    y = make_test1(3)
    n, R = 30_000, 200
    g0 = y.gap(stroquool(oracle(y, n), n).x_hat)
    noisy = np.array([y.gap(stroquool(oracle(y, n, 1e-2, seed=r), n).x_hat) for r in range(R)])
    assert g0 <= noisy.mean() + 3 * noisy.std(ddof=1) / math.sqrt(R)


def test_run_algorithm_dispatch():
    y = make_test1(1)
    a = run_algorithm(OptimizerSpec("uniform"), oracle(y, 20), np.random.default_rng(1))
    b = uniform_search(oracle(y, 20), 20, np.random.default_rng(1))
    np.testing.assert_array_equal(a.x_hat, b.x_hat)
    a = run_algorithm(OptimizerSpec("kwsa", {"a": 0.5}), oracle(y, 21), None)
    b = kwsa(oracle(y, 21), 21, None, OptimizerSpec("kwsa", {"a": 0.5}))
    np.testing.assert_array_equal(a.x_hat, b.x_hat)
    with pytest.raises(ValueError):
        OptimizerSpec("gasso")
    with pytest.raises(ValueError):
        OptimizerSpec("kwsa", {"a": -1.0})
