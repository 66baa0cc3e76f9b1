import numpy as np
import pytest

from grushinlab.coefficients import CoefficientField, GrusinParameters, derive_exponents
from grushinlab.discretization import assemble, build_grid, form_value
from grushinlab.multipliers import (
    MultiplierSpec,
    hardy_check,
    nash_check,
    multiplier_value,
    operator_inequality_checks,
    random_bump_ensemble,
    vf_volume,
)

CLASSICAL = GrusinParameters(1, 1, 0.0, 0.0, 1.0, 1.0)
EUCLID_2D = GrusinParameters(1, 1)


def test_multiplier_value_examples():
    spec = MultiplierSpec(CLASSICAL)
    assert multiplier_value(spec, [0.0, 0.0]) == 0.0
    # alpha = alphap = 1/2 branch: F2 = |p2|, so F(0, 4) = 4
    assert multiplier_value(spec, [0.0, 4.0]) == pytest.approx(4.0)
    # all deltas zero: the Laplacian symbol |p|^2
    assert multiplier_value(MultiplierSpec(EUCLID_2D), [3.0, 4.0]) == pytest.approx(25.0)


def test_multiplier_monotone_and_zero_at_zero():
    spec = MultiplierSpec(GrusinParameters(1, 1, 0.5, 0.25, 1.5, 0.5))
    L = np.geomspace(1e-8, 1e8, 60)
    assert np.all(np.diff(spec.f1(L)) > 0)
    assert np.all(np.diff(spec.f2(L)) > 0)
    assert spec.f1(0.0) == 0.0 and spec.f2(0.0) == 0.0


def test_multiplier_branches():
    assert MultiplierSpec(GrusinParameters(1, 0, 0.5, 0.25)).branch == "local_dominant"
    assert MultiplierSpec(GrusinParameters(1, 0, 0.25, 0.5)).branch == "global_dominant"
    # global-dominant branch is the sum of two powers
    spec = MultiplierSpec(GrusinParameters(1, 0, 0.25, 0.5))
    assert spec.f1(4.0) == pytest.approx(4.0**0.75 + 4.0**0.5)


def test_vf_volume_euclidean_balls():
    # all deltas zero: the sublevel set is the Euclidean ball of radius r
    assert vf_volume(MultiplierSpec(EUCLID_2D), 2.0) == pytest.approx(np.pi * 4.0, rel=1e-6)
    three = GrusinParameters(2, 1)
    assert vf_volume(MultiplierSpec(three), 1.0) == pytest.approx(4.0 * np.pi / 3.0, rel=1e-6)
    one = GrusinParameters(1, 0)
    assert vf_volume(MultiplierSpec(one), 3.0) == pytest.approx(6.0, rel=1e-9)


def test_vf_volume_monotone_and_scale():
    spec = MultiplierSpec(CLASSICAL)
    rs = np.geomspace(0.01, 100.0, 25)
    vols = np.array([vf_volume(spec, r) for r in rs])
    assert np.all(np.diff(vols) > 0)
    # doubling the scale constant shrinks the sublevel set
    spec2 = MultiplierSpec(CLASSICAL, scale=2.0)
    assert vf_volume(spec2, 1.0) < vf_volume(spec, 1.0)


def test_vf_volume_block_product_sandwich():
    # the sum-sublevel measure sits between the product of block balls at
    # budget r^2/2 and the full product of block balls at budget r^2
    from grushinlab.multipliers import _sublevel_radius, _unit_ball_volume

    spec = MultiplierSpec(CLASSICAL)
    n, m = CLASSICAL.n, CLASSICAL.m
    for r in (0.1, 1.0, 10.0):
        def block_product(budget):
            q1 = float(_sublevel_radius(spec.f1, budget)[0])
            q2 = float(_sublevel_radius(spec.f2, budget)[0])
            return _unit_ball_volume(n) * q1**n * _unit_ball_volume(m) * q2**m

        v = vf_volume(spec, r)
        assert block_product(r * r / 2.0) <= v * (1 + 1e-9)
        assert v <= block_product(r * r) * (1 + 1e-9)


def test_vf_volume_two_scale_slopes():
    # small-r slope -> Dp, large-r slope -> D, both within 5%
    params = GrusinParameters(1, 1, 0.0, 0.0, 1.0, 0.0)  # D = 3, Dp = 2
    e = derive_exponents(params)
    spec = MultiplierSpec(params)
    for r0, expect in [(1e-3, e.Dp), (1e3, e.D)]:
        v0, v1 = vf_volume(spec, r0), vf_volume(spec, 1.3 * r0)
        slope = np.log(v1 / v0) / np.log(1.3)
        assert slope == pytest.approx(expect, rel=0.05)


def test_parseval_identity_constant_coefficients():
    # c = 1: the discrete form h(phi) matches sum |p|^2 |phat|^2 within O(h^2)
    g = build_grid(EUCLID_2D, (2.0, 2.0), (65, 65))
    op = assemble(g, CoefficientField(EUCLID_2D))
    spec = MultiplierSpec(EUCLID_2D)
    members = random_bump_ensemble(g, 12, seed=123)
    rep = nash_check(op, spec, members, r_grid=np.geomspace(0.5, 40.0, 25))
    assert rep.parseval_gap < 1e-10
    assert np.all(np.abs(rep.ratios - 1.0) < 0.05)
    assert rep.worst_margin >= 0.0


def test_nash_classical_grusin_margin_and_stability():
    g = build_grid(CLASSICAL, (2.0, 2.0), (65, 65))
    op = assemble(g, CoefficientField(CLASSICAL))
    spec = MultiplierSpec(CLASSICAL)
    members = random_bump_ensemble(g, 40, seed=7)
    rep = nash_check(op, spec, members, r_grid=np.geomspace(0.3, 60.0, 30))
    assert rep.fitted_constant > 0
    assert rep.worst_margin >= 0.0
    # fitted constant moves by < 25% when the ensemble doubles
    members2 = members + random_bump_ensemble(g, 40, seed=8)
    rep2 = nash_check(op, spec, members2, r_grid=np.geomspace(0.3, 60.0, 30))
    assert rep2.fitted_constant <= rep.fitted_constant + 1e-12
    assert rep2.fitted_constant >= rep.fitted_constant / 1.25


def test_nash_half_line_factor_four():
    # n = 1, delta in [1/2, 1): Neumann multiplier via even reflection
    params = GrusinParameters(1, 0, 0.75, 0.75)
    g = build_grid(params, 4.0, 513)
    op = assemble(g, CoefficientField(params), "half_line_positive")
    spec = MultiplierSpec(params)
    members = random_bump_ensemble(g, 30, seed=21, positive_axis0=True)
    rep = nash_check(
        op, spec, members, r_grid=np.geomspace(0.2, 50.0, 30),
        volume_factor=4.0, reflect_axis0=True,
    )
    assert rep.fitted_constant > 0
    assert rep.worst_margin >= 0.0


def test_bump_ensemble_respects_box_and_resolution():
    g = build_grid(EUCLID_2D, (2.0, 2.0), (65, 65))
    members = random_bump_ensemble(g, 5, seed=1)
    for m in members:
        assert m.shape == g.counts
        assert m[0].max() == 0.0 and m[-1].max() == 0.0
    tiny = build_grid(EUCLID_2D, (1.0, 1.0), (5, 5))
    with pytest.raises(ValueError, match="resolution"):
        random_bump_ensemble(tiny, 1, seed=0)


def test_hardy_classical_constants():
    lam, a = hardy_check(3, 1.0, fraction=0.0, count=10)
    assert a == 0.25
    assert lam >= 0.0
    lam_half, _ = hardy_check(3, 1.0, fraction=0.5, count=12)
    assert lam_half >= -1e-8
    lam_over, _ = hardy_check(3, 1.0, fraction=4.0, count=12)
    assert lam_over < 0.0


def test_hardy_fractional_fitted_constant():
    lam, a = hardy_check(2, 0.5, fraction=0.5, extent=1.0, count=20, coarse_count=10)
    assert a > 0.0
    assert lam >= -1e-8


def test_hardy_validation():
    with pytest.raises(ValueError, match="gamma"):
        hardy_check(2, 1.0, fraction=0.5)  # n = 2, gamma = 1 not allowed
    with pytest.raises(ValueError, match="fraction"):
        hardy_check(3, 1.0, fraction=-1.0)


def test_operator_inequalities_random_pairs():
    res = operator_inequality_checks(trials=200, dim=20, gamma=0.3, seed=11)
    assert res["resolvent_power"] >= -1e-10
    assert res["root_sum"][1] >= -1e-10
    assert res["root_sum"][2] >= -1e-10


def test_operator_inequalities_equal_pair_is_zero():
    rng = np.random.default_rng(3)
    G = rng.normal(size=(8, 8))
    B = G @ G.T / 8
    from grushinlab.multipliers import _matrix_fun_psd

    phi = lambda lam: lam * (1.0 + lam) ** (-0.3)
    diff = _matrix_fun_psd(B, phi) - _matrix_fun_psd(B, phi)
    assert np.abs(diff).max() == 0.0


def test_operator_inequalities_guards():
    with pytest.raises(ValueError, match="dim"):
        operator_inequality_checks(10, 100, 0.5)
    with pytest.raises(ValueError, match="gamma"):
        operator_inequality_checks(10, 10, 1.5)
