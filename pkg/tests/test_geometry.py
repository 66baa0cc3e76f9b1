import numpy as np
import pytest
from scipy.integrate import quad

from grushinlab.coefficients import CoefficientField, GrusinParameters, derive_exponents
from grushinlab.discretization import build_grid
from grushinlab.geometry import (
    MetricGraph,
    Point,
    ball_volume,
    ball_volume_closed_form,
    ball_volume_table,
    closed_form_distance,
    delta_distance,
    doubling_exponent,
    numerical_distance,
    stencil_offsets,
)

CLASSICAL = GrusinParameters(1, 1, 0.0, 0.0, 1.0, 1.0)
EUCLID_2D = GrusinParameters(1, 1)
POWER_HALF = GrusinParameters(1, 0, 0.5, 0.5)


def test_stencil_offsets_counts():
    assert stencil_offsets(1, 2).tolist() == [[1]]
    offs2 = stencil_offsets(2, 2)
    assert len(offs2) == 8  # 16 neighbours counting both signs
    assert len(stencil_offsets(2, 1)) == 4  # 8 neighbours
    norms = np.abs(offs2).max(axis=1)
    assert norms.max() == 2
    for v in offs2:
        assert np.gcd.reduce(np.abs(v)) == 1


def test_delta_distance_zero_separation():
    assert delta_distance(CLASSICAL, [1.0, 5.0], [-2.0, 5.0]) == 0.0
    assert delta_distance(CLASSICAL, [0.0, 0.0], [0.0, 0.0]) == 0.0


def test_delta_distance_branch_agreement_on_switching_surface():
    # |x2 - y2| = (|x1| + |y1|)^(rho, rhop): both branches must agree there
    rng = np.random.default_rng(7)
    for _ in range(1000):
        params = GrusinParameters(
            1, 1,
            delta1=rng.uniform(0, 0.9), delta1p=rng.uniform(0, 0.9),
            delta2=rng.uniform(0, 2.0), delta2p=rng.uniform(0, 2.0),
        )
        e = derive_exponents(params)
        s = float(np.exp(rng.uniform(-3, 3)))
        from grushinlab.coefficients import piecewise_power

        u = piecewise_power(s, e.rho, e.rhop)
        small = u / piecewise_power(s, params.delta2, params.delta2p)
        large = piecewise_power(u, 1 - e.gamma, 1 - e.gammap)
        assert small == pytest.approx(large, rel=1e-12)


def test_delta_distance_examples():
    # rho = 2, gamma = 1/2 at the switching surface: both branches give 1
    assert delta_distance(CLASSICAL, [0.5, 0.0], [0.5, 1.0]) == pytest.approx(1.0)
    # large branch: Delta = |y2|^(1/2) = 2
    assert delta_distance(CLASSICAL, [0.0, 0.0], [0.0, 4.0]) == pytest.approx(2.0)


def test_closed_form_distance_basics():
    assert closed_form_distance(CLASSICAL, [0.3, 1.0], [0.3, 1.0]) == 0.0
    # all deltas zero: block l1 combination
    assert closed_form_distance(EUCLID_2D, [0.0, 0.0], [3.0, 4.0]) == pytest.approx(7.0)
    # removable 0/0 at x1 = y1 = 0
    assert closed_form_distance(CLASSICAL, [0.0, 0.0], [0.0, 0.0]) == 0.0
    # n=1, m=0 worked example: |x-y| / sqrt(|x|+|y|)
    got = closed_form_distance(POWER_HALF, [0.25], [1.0])
    assert got == pytest.approx(0.75 / np.sqrt(1.25), rel=1e-12)


def test_closed_form_distance_symmetry():
    rng = np.random.default_rng(3)
    for _ in range(200):
        params = GrusinParameters(
            2, 1,
            delta1=rng.uniform(0, 0.9), delta1p=rng.uniform(0, 0.9),
            delta2=rng.uniform(0, 2.0), delta2p=rng.uniform(0, 2.0),
        )
        x = rng.normal(size=3) * 3
        y = rng.normal(size=3) * 3
        assert closed_form_distance(params, x, y) == closed_form_distance(params, y, x)


def test_point_split():
    p = Point.of(CLASSICAL, [1.5, -2.0])
    assert p.x1.tolist() == [1.5] and p.x2.tolist() == [-2.0]
    assert p.coords().tolist() == [1.5, -2.0]


def test_numerical_distance_source_is_zero_and_euclidean_band():
    g = build_grid(EUCLID_2D, 2.0, 65)
    df = numerical_distance(CoefficientField(EUCLID_2D), g, [0.0, 0.0], 2)
    assert df.at([0.0, 0.0]) == 0.0
    assert df.unreachable == 0
    pts = g.coords()
    eu = np.linalg.norm(pts, axis=1)
    mask = eu > 0.25
    ratio = df.distances[mask] / eu[mask]
    # order-2 stencil metrication stays below the 9% worst case
    assert ratio.min() >= 1.0 - 1e-9
    assert ratio.max() < 1.09


def test_numerical_distance_pure_power_quadrature_oracle():
    # d(0; x) for c = |s| matches the integral of s^{-1/2}: 2 sqrt(x)
    g = build_grid(POWER_HALF, 2.0, 513)
    df = numerical_distance(CoefficientField(POWER_HALF), g, [0.0], 2)
    for x in (0.25, 0.5, 1.0, 2.0):
        oracle, _ = quad(lambda s: s**-0.5, 0, x, points=[0.0])
        assert df.at([x]) == pytest.approx(oracle, rel=0.02)


def test_numerical_distance_snaps_source():
    g = build_grid(EUCLID_2D, 1.0, 11)
    df = numerical_distance(CoefficientField(EUCLID_2D), g, [0.03, -0.07], 1)
    assert df.snap_error == pytest.approx(np.hypot(0.03, 0.07 - 0.0) - 0.0, abs=0.2)
    assert df.at(df.source) == 0.0


def test_monotone_refinement_in_stencil_order():
    g = build_grid(CLASSICAL, (2.0, 2.0), (41, 41))
    cf = CoefficientField(CLASSICAL)
    fields = [numerical_distance(cf, g, [0.0, 0.0], k) for k in (1, 2, 3)]
    d1, d2, d3 = (f.distances for f in fields)
    assert np.all(d2 <= d1 + 1e-12)
    assert np.all(d3 <= d2 + 1e-12)


def test_equivalence_band_numerical_vs_closed_form():
    g = build_grid(CLASSICAL, (3.0, 3.0), (97, 97))
    mg = MetricGraph(g, CoefficientField(CLASSICAL), 2)
    rng = np.random.default_rng(11)
    ratios = []
    for _ in range(12):
        src = rng.uniform(-1.5, 1.5, size=2)
        field = mg.field_from_point(src)
        for _ in range(9):
            tgt = rng.uniform(-1.5, 1.5, size=2)
            dn = field.at(tgt)
            dc = closed_form_distance(CLASSICAL, field.source, tgt)
            if dc > 0.05:
                ratios.append(dn / dc)
    ratios = np.asarray(ratios)
    band = max(ratios.max(), 1.0 / ratios.min())
    assert np.isfinite(band) and band < 6.0  # constants are fitted, not asserted


def test_triangle_inequality_along_edges():
    g = build_grid(CLASSICAL, (2.0, 2.0), (33, 33))
    mg = MetricGraph(g, CoefficientField(CLASSICAL), 2)
    field = mg.field_from_point([0.5, -0.5])
    d = field.distances
    coo = mg.edge_matrix.tocoo()
    lhs = d[coo.row]
    rhs = d[coo.col] + coo.data
    finite = np.isfinite(lhs) & np.isfinite(rhs)
    assert np.all(lhs[finite] <= rhs[finite] * (1 + 1e-12))
    assert np.all(d[coo.col][finite] <= d[coo.row][finite] + coo.data[finite] * (1 + 1e-12))


def test_dropped_edges_reported():
    # delta2 = 1: x2-direction edges touching the line x1 = 0 are divergent
    g = build_grid(CLASSICAL, (1.0, 1.0), (21, 21))
    mg = MetricGraph(g, CoefficientField(CLASSICAL), 1)
    assert mg.dropped_edges > 0


def test_ball_volume_counting_and_floor():
    g = build_grid(EUCLID_2D, 1.0, 41)
    df = numerical_distance(CoefficientField(EUCLID_2D), g, [0.0, 0.0], 2)
    w = g.node_weight
    assert ball_volume(df, 1e-9) == w  # single-cell floor
    # Euclidean disc area within the lattice-counting error
    assert ball_volume(df, 0.8) == pytest.approx(np.pi * 0.64, rel=0.05)
    tab = ball_volume_table(df, [0.0, 0.0], [1e-9, 0.3, 0.8])
    assert not tab.resolved[0] and tab.resolved[2]
    assert np.all(np.diff(tab.volumes) >= 0)


def test_ball_volume_closed_form_regimes():
    e = derive_exponents(CLASSICAL)
    # at the origin the crossover radius is 0: always the r^(D, Dp) regime
    assert ball_volume_closed_form(CLASSICAL, [0.0, 0.0], 0.5) == pytest.approx(0.5**e.D)
    assert ball_volume_closed_form(CLASSICAL, [0.0, 0.0], 2.0) == pytest.approx(2.0**e.Dp)
    # off the origin with r below |x1|^(1-delta1): r^(n+m) |x1|^beta
    assert ball_volume_closed_form(CLASSICAL, [2.0, 0.0], 0.5) == pytest.approx(0.5**2 * 2.0)
    # the two regimes agree at the crossover
    lo = ball_volume_closed_form(CLASSICAL, [0.5, 0.0], 0.5 - 1e-12)
    hi = ball_volume_closed_form(CLASSICAL, [0.5, 0.0], 0.5 + 1e-12)
    assert lo == pytest.approx(hi, rel=1e-9)


def test_volume_slopes_both_regimes():
    g = build_grid(CLASSICAL, (4.0, 10.0), (129, 1281))
    mg = MetricGraph(g, CoefficientField(CLASSICAL), 2)
    e = derive_exponents(CLASSICAL)
    origin = mg.field_from_point([0.0, 0.0])
    radii = np.geomspace(0.5, 5.0, 9)
    tab = ball_volume_table(origin, [0.0, 0.0], radii)
    slope = np.polyfit(np.log(radii), np.log(tab.volumes), 1)[0]
    assert slope == pytest.approx(e.D, rel=0.10)
    off = mg.field_from_point([1.0, 0.0])
    radii2 = np.geomspace(0.1, 1.0, 9)
    tab2 = ball_volume_table(off, [1.0, 0.0], radii2)
    slope2 = np.polyfit(np.log(radii2), np.log(tab2.volumes), 1)[0]
    assert slope2 == pytest.approx(2.0, rel=0.10)


def test_doubling_exponent_validation_and_euclidean():
    g = build_grid(GrusinParameters(1, 0), 30.0, 12001)
    df = numerical_distance(CoefficientField(GrusinParameters(1, 0)), g, [0.0], 2)
    radii = 0.02 * 2.0 ** np.arange(8)
    tab = ball_volume_table(df, [0.0], radii)
    assert doubling_exponent(tab) == pytest.approx(1.0, abs=0.15)
    with pytest.raises(ValueError, match="at least 8"):
        doubling_exponent(ball_volume_table(df, [0.0], radii[:4]))
    with pytest.raises(ValueError, match="factor-2"):
        doubling_exponent(ball_volume_table(df, [0.0], np.geomspace(0.02, 1.0, 8)))


def test_doubling_exponent_respects_dimension_bound():
    params = GrusinParameters(1, 0, 0.5, 0.0)
    g = build_grid(params, 24.0, 49153)
    df = numerical_distance(CoefficientField(params), g, [0.0], 2)
    radii = 0.1 * 2.0 ** np.arange(8)
    tab = ball_volume_table(df, [0.0], radii)
    e = derive_exponents(params)
    assert doubling_exponent(tab) <= e.doubling_dim + 0.3
