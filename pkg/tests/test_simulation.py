import math

import numpy as np
import pytest
from scipy import stats

from artifact.objectives import Objective, make_test1
from artifact.simulation import (
    BudgetExhausted, NoiseModel, RngStream, SimulationOracle, Trajectory, observe, spend_remaining,
)

ZERO = Objective(1, lambda X: np.zeros(X.shape[0]), np.array([0.5]), 0.0, label="zero")


def oracle(obj=ZERO, sigma=0.0, n=100, seed=0):
    return SimulationOracle(obj, NoiseModel(sigma), n, RngStream(seed))


def test_noiseless_optimum():
    o = oracle(make_test1(3))
    assert observe(o, np.full(3, math.exp(-1))) == 1.0


def test_fixed_seed_is_reproducible():
    a = oracle(sigma=0.1, seed=11).observe([0.3])
    b = oracle(sigma=0.1, seed=11).observe([0.3])
    z = RngStream(11).generator().standard_normal()
    assert a == b == 0.1 * z


def test_sample_mean_clt():
    o = oracle(sigma=0.1, n=10_000, seed=2)
    vals = o.observe_repeated([0.4], 10_000)
    assert abs(vals.mean()) <= 4 * 0.1 / 100


def test_spend_remaining():
    o = oracle(n=100)
    assert spend_remaining(o) == 100
    for _ in range(3):
        o.observe([0.5])
    assert spend_remaining(o) == 97
    o.observe_repeated([0.5], 97)
    assert spend_remaining(o) == 0
    with pytest.raises(BudgetExhausted):
        o.observe([0.5])
    assert len(o.log) == 100


def test_out_of_domain():
    with pytest.raises(ValueError):
        oracle().observe([1.2])


def test_batched_draws_match_single_draws():
    a, b = oracle(sigma=1.0, seed=5), oracle(sigma=1.0, seed=5)
    batch = a.observe_points(np.array([[0.1], [0.2], [0.3]]))
    singles = [b.observe([x]) for x in (0.1, 0.2, 0.3)]
    np.testing.assert_array_equal(batch, singles)


def test_stream_forks_are_order_independent():
    s = RngStream(123)
    x1 = s.fork(4, 1).generator().standard_normal(5)
    _ = s.fork(3, 1).generator().standard_normal(5)
    x2 = s.fork(4, 1).generator().standard_normal(5)
    np.testing.assert_array_equal(x1, x2)
    assert not np.array_equal(x1, s.fork(4, 0).generator().standard_normal(5))


def test_noise_marginals():
    o = oracle(sigma=0.3, n=100_000, seed=9)
    res = o.observe_repeated([0.5], 100_000)
    assert abs(stats.skew(res)) < 0.05
    assert abs(stats.kurtosis(res)) < 0.05
    assert abs(res.var() / 0.09 - 1) < 0.03


def test_trajectory_views():
    o = oracle(sigma=0.0, n=10)
    o.observe_repeated([0.2], 3)
    o.observe_points(np.array([[0.7], [0.9]]))
    t = o.log
    assert len(t) == 5
    np.testing.assert_array_equal(t.points[:, 0], [0.2, 0.2, 0.2, 0.7, 0.9])
    assert t.visited([0.7]) and not t.visited([0.5])
    assert Trajectory.from_points([[0.1], [0.2]]).concat(t).points.shape == (7, 1)


def test_noise_model_from_variance():
    assert NoiseModel.from_variance(1e-2).sigma == pytest.approx(0.1)
    with pytest.raises(ValueError):
        NoiseModel.from_variance(-1.0)
