import math

import numpy as np
import pytest

from artifact import geometry as geo
from artifact.objectives import (
    EnvelopeParams, HierarchyObjectiveSpec, InfeasibleInstance, Objective, envelope_check,
    family_C2, family_G1, family_G2, make_test1, make_test2, make_yB, make_yC, make_yC_benchmark,
    make_yG, near_opt_dimension_profile, profile_exponent, sample_plan,
)

ENV_12 = EnvelopeParams(1.0, 2.0, 1.0, 1 / 512)
ENV_C1 = EnvelopeParams(1.0, 1.0, 1.0, 1 / 150)


def test_rho_and_constraints():
    assert ENV_12.rho == 4.0
    ENV_12.check_yG()
    with pytest.raises(InfeasibleInstance, match="2\\^\\(4beta\\+1\\)"):
        EnvelopeParams(1, 2, 1, 1 / 256).check_yG()
    assert ENV_C1.yC_ratio_bound == pytest.approx(150.0)
    assert ENV_C1.M_hat == pytest.approx(2 / 15)
    with pytest.raises(ValueError):
        EnvelopeParams(2, 1, 1, 1)


def test_yG_examples():
    g = make_yG([0.5], [0.5], 0.01, ENV_12)
    assert g([0.5]) == pytest.approx(0.005)
    assert g.y_star == pytest.approx(0.005)
    for x in (0.52, 0.3, 0.9, 0.1):
        assert g([x]) == 0.0
    assert g([0.0]) == pytest.approx(-9 / 12800, abs=1e-15)


def test_yB_examples():
    b = make_yB([0.5], 0.01, ENV_12)
    assert b([0.5]) == 0.0
    assert b([0.9]) == pytest.approx(0.0, abs=1e-15)
    assert b([0.0]) == pytest.approx(-9 / 12800, abs=1e-15)


def test_yG_preconditions():
    with pytest.raises(InfeasibleInstance, match="zeta - zeta|rho\\*zeta"):
        make_yG([0.9], [0.5], 0.01, ENV_12)
    with pytest.raises(InfeasibleInstance, match="leaves"):
        make_yG([0.2], [0.2], 0.01, ENV_12)
    with pytest.raises(InfeasibleInstance):
        make_yG([0.5], [0.5], 0.0, ENV_12)


def test_yG_continuity_at_branches():
    g = make_yG([0.55], [0.5], 0.01, ENV_12)
    for center, r in g.shells:
        for sign in (-1, 1):
            lo = center + sign * r * (1 - 1e-12)
            hi = center + sign * r * (1 + 1e-12)
            if 0 <= hi[0] <= 1:
                assert abs(g(lo) - g(hi)) < 1e-9


def test_yC_examples():
    fam = family_C2(2, 1, ENV_C1, a_bar=2)
    leaf = fam.member(4)
    assert leaf.x_star[0] == 0.5
    assert leaf.y_star == pytest.approx(26 / 750, abs=1e-15)
    assert leaf(leaf.x_star) == pytest.approx(26 / 750, abs=1e-12)
    m_hat, g1 = 2 / 15, 0.1
    for r in (0.31, 0.4, 0.5):
        assert leaf([0.5 - r]) == pytest.approx(m_hat * 5 * g1 - m_hat * r, abs=1e-15)


def test_yC_rejects_bad_inputs():
    params = geo.HierarchyParams(1, 2)
    with pytest.raises(InfeasibleInstance):
        make_yC(HierarchyObjectiveSpec.for_leaf(geo.CellIndex((1,), 2), ENV_C1), params, ENV_C1)
    bad = EnvelopeParams(1, 1, 1, 1 / 100)
    leaf = geo.CellIndex((13,), 2)
    with pytest.raises(InfeasibleInstance):
        make_yC(HierarchyObjectiveSpec.for_leaf(leaf, bad), params, bad)


def test_yC_peak_telescopes():
    env = EnvelopeParams(2, 2, 1.0, 1 / EnvelopeParams(2, 2, 1, 1).yC_ratio_bound)
    fam = family_C2(1, 2, env, a_bar=4)
    for i in (0, 17, len(fam) - 1):
        m = fam.member(i)
        assert m(m.x_star) == pytest.approx(m.y_star, abs=1e-12)


def test_benchmark_chain_matches_leaf_outside():
    fam = family_C2(2, 1, ENV_C1, a_bar=3)
    leaf_idx = fam.key(11)
    leaf = fam.member(11)
    X = np.linspace(0, 1, 20001)[:, None]
    for anc in geo.ancestors(leaf_idx)[:-1]:
        bench = make_yC_benchmark(anc, ENV_C1)
        below = [a for a in [leaf_idx] + geo.ancestors(leaf_idx) if a.level == anc.level + 1][0]
        outside = ~geo.hierarchy_cell(below).contains(X)
        assert np.array_equal(leaf(X[outside]), bench(X[outside]))


def test_test_functions():
    c3 = np.full(3, math.exp(-1))
    assert make_test1(3)(c3) == 1.0
    assert make_test1(1)([0.0]) == pytest.approx(0.8646647167633873, abs=1e-15)
    t2 = make_test2(1, [0.25])
    assert t2([0.75]) == pytest.approx(0.5, abs=1e-12)  # r = 0.5, cos(8 pi) = 1
    assert t2([0.25]) == 1.0


def test_uniform_search_y1_values():
    y = make_test1(1)
    np.testing.assert_allclose(y(np.array([[0.1], [0.9]])), [0.928240604997676, 0.716847710871983],
                               atol=1e-14)


def test_envelope_check_examples():
    g = make_yG([0.5], [0.5], 0.01, ENV_12)
    assert envelope_check(g, ENV_12, 20_000).ok
    flat = Objective(1, lambda X: np.zeros(X.shape[0]), np.array([0.5]), 0.0, label="flat")
    rep = envelope_check(flat, ENV_12, sample_plan(1, 500))
    assert len(rep.violations) >= 100
    for d in (1, 2, 3):
        t = make_test1(d)
        assert envelope_check(t, t.envelope, 20_000).ok
    t2 = make_test2(2)
    assert envelope_check(t2, t2.envelope, 20_000).ok


def test_family_G1_parameters():
    fam = family_G1(10**5, 1.0, ENV_12, 1)
    m = fam.meta
    assert m["eta"] == pytest.approx(0.628539361054709, rel=1e-12)
    assert m["nu"] == pytest.approx(0.691580933611296, rel=1e-12)
    assert m["psi"] == 70 and m["kappa0"] == (35,)
    assert m["c0"][0] == pytest.approx(69 / 140)
    for i in range(len(fam)):
        mem = fam.member(i)
        np.testing.assert_array_equal(mem.x_star, fam.region(i).center)


def test_family_G1_infeasible():
    with pytest.raises(InfeasibleInstance):
        family_G1(20, 1.0, ENV_12, 1)
    with pytest.raises(InfeasibleInstance):
        family_G1(10**5, 0.0, ENV_12, 1)


def test_family_G2_parameters():
    fam = family_G2(10, ENV_12, 1)
    assert fam.meta["nu"] == pytest.approx(1.0)
    assert fam.meta["psi"] == 100
    assert len(fam) >= 20
    with pytest.raises(InfeasibleInstance):
        family_G2(10, EnvelopeParams(1, 1, 1, 1 / 32), 1)


def test_family_members_share_values_outside_cells():
    fam = family_G1(10**5, 1.0, ENV_12, 1)
    X = np.linspace(0, 1, 50001)[:, None]
    a, b = fam.member(3), fam.member(20)
    out = ~fam.region(3).contains(X) & ~fam.region(20).contains(X)
    assert np.array_equal(a(X[out]), b(X[out]))


def test_family_C2_examples():
    for (n, d), (delta, a_bar) in {(2, 1): (1, 14), (25, 3): (13, 10), (4, 2): (4, 7)}.items():
        env = EnvelopeParams(1, 1, 1, 1 / 150)
        fam = family_C2(n, d, env)
        assert (fam.meta["delta"], fam.meta["a_bar"]) == (delta, a_bar)
        assert len(fam) == 3 ** (a_bar * d)
    fam = family_C2(25, 3, ENV_C1)
    leaf = fam.key(len(fam) // 2)
    assert leaf.level == 10 and geo.is_selected(leaf)
    with pytest.raises(InfeasibleInstance):
        family_C2(2, 1, EnvelopeParams(1, 2, 1, 1 / 150))


def test_profile_test1_bounded():
    t = make_test1(1)
    counts = near_opt_dimension_profile(t, nu=1.0, rho_ratio=0.25, L=2, h_max=12)
    assert counts[0] == 1
    assert max(counts) <= 8
    assert abs(profile_exponent(counts, 0.25)) < 0.15


def test_profile_yG_exponent():
    g = make_yG([0.5], [0.5], 0.01, ENV_12)
    counts = near_opt_dimension_profile(g, nu=ENV_12.M, rho_ratio=0.5, L=2, h_max=14)
    assert counts[0] == 1
    assert profile_exponent(counts, 0.5) <= 0.6
