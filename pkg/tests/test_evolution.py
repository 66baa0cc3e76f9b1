import numpy as np
import pytest

from grushinlab.coefficients import CoefficientField, GrusinParameters
from grushinlab.discretization import assemble, build_grid
from grushinlab.evolution import (
    CapacityError,
    EvolutionMethod,
    apply_semigroup,
    conservation_report,
    fit_loglog_slope,
    gaussian_upper_check,
    heat_kernel,
    kernel_comparison,
    ondiagonal_decay,
    ondiagonal_lower_check,
    separation_check,
)
from grushinlab.geometry import MetricGraph

EXACT = EvolutionMethod("exact_eigendecomposition")
KRYLOV = EvolutionMethod("krylov_exponential", tolerance=1e-8)


def _op_1d(params=GrusinParameters(1, 0), L=8.0, count=513, boundary="neumann_truncation"):
    g = build_grid(params, L, count)
    return assemble(g, CoefficientField(params), boundary)


def test_apply_t0_identity_and_negative_time():
    op = _op_1d(count=65)
    v = np.sin(op.coords()[:, 0])
    assert np.array_equal(apply_semigroup(op, v, 0.0), v)
    with pytest.raises(ValueError):
        apply_semigroup(op, v, -0.1)


def test_constant_vector_is_invariant():
    op = _op_1d(count=129)
    one = np.ones(op.n_nodes)
    for t in (0.01, 0.5, 3.0):
        out = apply_semigroup(op, one, t, EXACT)
        assert np.abs(out - 1.0).max() < 1e-10


def test_free_space_gauss_kernel_oracle():
    # c = 1, t = 0.1, L = 8, h = 1/64: sup error below 1e-3 while the
    # boundary mass is negligible
    op = _op_1d(count=1025)
    t = 0.1
    ks = heat_kernel(op, [0.0], t, EXACT)
    x = op.coords()[:, 0]
    oracle = (4 * np.pi * t) ** -0.5 * np.exp(-(x**2) / (4 * t))
    assert np.abs(ks.values - oracle).max() < 1e-3


def test_kernel_slice_invariants():
    params = GrusinParameters(1, 1, 0.25, 0.25, 0.5, 0.5)
    g = build_grid(params, (2.0, 2.0), (21, 21))
    op = assemble(g, CoefficientField(params))
    ks = heat_kernel(op, [0.5, -0.3], 0.2, EXACT)
    assert ks.values.min() >= -1e-12
    assert ks.mass() == pytest.approx(1.0, abs=1e-10)
    # symmetry K_t(x; y) = K_t(y; x)
    other = heat_kernel(op, int(np.argmax(ks.values > ks.values.mean())), 0.2, EXACT)
    assert ks.values[other.source_index] == pytest.approx(other.values[ks.source_index], abs=1e-10)


def test_methods_agree():
    op = _op_1d(count=257)
    rng = np.random.default_rng(5)
    v = rng.normal(size=op.n_nodes)
    t = 0.4
    exact = apply_semigroup(op, v, t, EXACT)
    krylov = apply_semigroup(op, v, t, KRYLOV)
    cn = apply_semigroup(op, v, t, EvolutionMethod("crank_nicolson", tolerance=1e-6))
    assert np.abs(exact - krylov).max() < 1e-7
    assert np.abs(exact - cn).max() < 1e-4


def test_semigroup_property_and_contractivity():
    op = _op_1d(GrusinParameters(1, 0, 0.5, 0.0), count=257)
    rng = np.random.default_rng(17)
    v = rng.normal(size=op.n_nodes)
    for t1, t2 in [(0.05, 0.2), (0.3, 0.7)]:
        once = apply_semigroup(op, v, t1 + t2, EXACT)
        twice = apply_semigroup(op, apply_semigroup(op, v, t1, EXACT), t2, EXACT)
        assert np.abs(once - twice).max() < 1e-10
        assert np.linalg.norm(once) <= np.linalg.norm(v) + 1e-12


def test_submarkov_property():
    op = _op_1d(GrusinParameters(1, 0, 0.25, 0.25), count=257)
    x = op.coords()[:, 0]
    v = np.clip(1.0 - np.abs(x) / 2.0, 0.0, 1.0)
    for t in (0.1, 1.0):
        out = apply_semigroup(op, v, t, EXACT)
        assert out.min() >= -1e-10
        assert out.max() <= 1.0 + 1e-10


def test_conservation_report_exact_and_krylov():
    params = GrusinParameters(1, 1, 0.25, 0.25, 1.0, 1.0)
    g = build_grid(params, (4.0, 4.0), (41, 41))
    op = assemble(g, CoefficientField(params))
    sources = [[0.0, 0.0], [1.0, 1.0], [-2.0, 0.5]]
    times = [0.05, 0.2, 1.0]
    assert conservation_report(op, times, sources, EXACT) <= 1e-10
    assert conservation_report(op, [0.2], [[1.0, 1.0]], KRYLOV) <= 1e-6


def test_conservation_broken_by_dirichlet_origin():
    params = GrusinParameters(1, 0, 0.25, 0.25)
    g = build_grid(params, 4.0, 257)
    opd = assemble(g, CoefficientField(params), "dirichlet_origin")
    dev = conservation_report(opd, [1.0], [[0.5]], EXACT)
    assert dev > 1e-3  # mass is killed at the origin for delta1 < 1/2


def test_capacity_guard():
    op = _op_1d(count=513)
    v = np.ones(op.n_nodes)
    with pytest.raises(CapacityError):
        apply_semigroup(op, v, 0.1, EvolutionMethod("exact_eigendecomposition", max_exact_dimension=100))


def test_ondiagonal_decay_euclidean_slope():
    op = _op_1d(count=1025, L=10.0)
    res = ondiagonal_decay(op, np.geomspace(0.02, 0.2, 6), method=EXACT)
    assert res.slope == pytest.approx(-0.5, abs=0.05)


def test_ondiagonal_decay_guard_refuses_contaminated_times():
    op = _op_1d(count=129, L=4.0)
    res = ondiagonal_decay(
        op, [0.01, 0.1, 10.0, 40.0], boundary_distance=4.0, guard=1e-6, method=EXACT
    )
    assert 40.0 in res.refused_times and 10.0 in res.refused_times
    assert 0.01 not in res.refused_times


def test_ondiagonal_decay_krylov_needs_candidates():
    op = _op_1d(count=513)
    with pytest.raises(ValueError, match="candidate"):
        ondiagonal_decay(op, [0.1, 0.2], method=KRYLOV)
    j = op.node_index([0.0])
    res = ondiagonal_decay(op, np.geomspace(0.05, 0.2, 4), candidates=[j], method=KRYLOV)
    assert res.slope == pytest.approx(-0.5, abs=0.05)


def test_positive_definiteness_on_boxes():
    # K_t(X;Y)^2 <= K_t(X;X) K_t(Y;Y) with the max over node boxes
    params = GrusinParameters(1, 1, 0.25, 0.25, 0.5, 0.5)
    g = build_grid(params, (2.0, 2.0), (21, 21))
    op = assemble(g, CoefficientField(params))
    lam, Phi = op.dense_eig()
    t = 0.3
    E = (Phi * np.exp(-t * lam)) @ Phi.T / op.node_weight
    coords = op.coords()
    rng = np.random.default_rng(2)
    for _ in range(20):
        cx = rng.uniform(-1.5, 1.5, size=2)
        cy = rng.uniform(-1.5, 1.5, size=2)
        X = np.nonzero(np.abs(coords - cx).max(axis=1) < 0.25)[0]
        Y = np.nonzero(np.abs(coords - cy).max(axis=1) < 0.25)[0]
        kxy = E[np.ix_(X, Y)].max()
        kxx = E[np.ix_(X, X)].max()
        kyy = E[np.ix_(Y, Y)].max()
        assert kxy**2 <= kxx * kyy * (1 + 1e-10)


def test_dirichlet_dominated_by_neumann():
    params = GrusinParameters(1, 0, 0.25, 0.25)
    g = build_grid(params, 4.0, 257)
    opn = assemble(g, CoefficientField(params))
    opd = assemble(g, CoefficientField(params), "dirichlet_origin")
    xs_n = opn.coords()[:, 0]
    common = np.nonzero(np.abs(xs_n) > 0)[0]
    for t in (0.05, 0.5, 2.0):
        kn = heat_kernel(opn, [1.0], t, EXACT)
        kd = heat_kernel(opd, [1.0], t, EXACT)
        assert np.all(kd.values <= kn.values[common] + 1e-10)


def test_separation_strongly_degenerate():
    params = GrusinParameters(1, 0, 0.75, 0.75)
    cf = CoefficientField(params)
    ops_n, ops_d = [], []
    for count in (101, 201, 401):
        g = build_grid(params, 4.0, count)
        ops_n.append(assemble(g, cf))
        ops_d.append(assemble(g, cf, "dirichlet_origin"))
    rep = separation_check(ops_n, ops_d, 1.0, [[1.0]], EXACT)
    assert rep.strongly_degenerate
    assert rep.cross_kernel_extreme == 0.0  # exactly zero across x1 = 0
    assert max(rep.dirichlet_gaps) <= 1e-12  # Dirichlet = Neumann here
    assert all(a >= b - 1e-15 for a, b in zip(rep.dirichlet_gaps, rep.dirichlet_gaps[1:]))


def test_separation_weakly_degenerate():
    params = GrusinParameters(1, 0, 0.25, 0.25)
    cf = CoefficientField(params)
    ops_n, ops_d = [], []
    for count in (101, 201, 401):
        g = build_grid(params, 4.0, count)
        ops_n.append(assemble(g, cf))
        ops_d.append(assemble(g, cf, "dirichlet_origin"))
    rep = separation_check(ops_n, ops_d, 1.0, [[1.0]], EXACT)
    assert not rep.strongly_degenerate
    assert rep.cross_kernel_extreme > 0.0
    assert min(rep.dirichlet_gaps) > 1e-3  # gap stays bounded away from zero


def test_boundary_convention_at_half():
    params = GrusinParameters(1, 0, 0.5, 0.5)
    g = build_grid(params, 4.0, 101)
    op = assemble(g, CoefficientField(params))
    k = heat_kernel(op, [1.0], 1.0, EXACT)
    xs = op.coords()[:, 0]
    assert np.abs(k.values[xs < 0]).max() == 0.0


def test_kernel_comparison_identical_coefficients_control():
    params = GrusinParameters(1, 0)
    g = build_grid(params, 4.0, 257)
    cf = CoefficientField(params)
    op1 = assemble(g, cf)
    op2 = assemble(g, CoefficientField(params, floor_radius=0.5))  # c == 1 anyway
    rows = np.nonzero(op1.coords()[:, 0] > 1.0)[0]
    rep = kernel_comparison(op1, op2, rows, rho=1.0, times=[0.05, 0.1])
    assert rep.sup_diff.max() < 1e-10


def test_kernel_comparison_decay_slope():
    params = GrusinParameters(1, 0, 0.5, 0.0)
    g = build_grid(params, 6.0, 769)
    cf = CoefficientField(params)
    frozen = CoefficientField(params, floor_radius=0.5)
    op_true = assemble(g, cf)
    op_frozen = assemble(g, frozen)
    coords = op_true.coords()[:, 0]
    rows = np.nonzero((coords >= 1.0) & (coords <= 2.0))[0]
    mg = MetricGraph(g, frozen, 2)
    u_nodes = np.nonzero(np.abs(g.coords()[:, 0]) <= 0.5)[0]
    dfield = mg.field_from_nodes(u_nodes)
    rho = float(dfield.distances[op_true.kept][rows].min())
    times = np.geomspace(rho**2 / 64, rho**2 / 8, 6)
    rep = kernel_comparison(op_true, op_frozen, rows, rho, times)
    assert rep.slope_vs_exponent <= -0.8
    assert np.all(np.diff(rep.sup_diff) > 0)  # smaller t, smaller difference


def test_gaussian_upper_and_lower_constants_euclidean():
    op = _op_1d(count=513, L=8.0)
    g = op.grid
    mg = MetricGraph(g, op.coeffs, 2)
    sources = [op.node_index([0.0]), op.node_index([1.0])]
    fields = {j: mg.field_from_nodes([op.kept[j]]) for j in sources}
    rep = gaussian_upper_check(op, fields, [0.05, 0.2], epsilon=0.1, method=EXACT)
    # on the diagonal K_t(x;x) |B(x, sqrt t)| = (4 pi t)^{-1/2} * 2 sqrt(t) = pi^{-1/2}
    assert rep.constant == pytest.approx(np.pi**-0.5, rel=0.1)
    assert rep.argmax is not None
    b = ondiagonal_lower_check(op, fields, [0.05, 0.2], EXACT)
    assert b == pytest.approx(np.pi**-0.5, rel=0.1)
    assert b <= rep.constant * (1 + 1e-12)


def test_far_field_kernel_below_gaussian_tail():
    # at d^2/(4t) = 25 the kernel sits far below 1e-9 times the volume prefactor
    op = _op_1d(GrusinParameters(1, 0, 0.5, 0.0), count=2049, L=8.0)
    mg = MetricGraph(op.grid, op.coeffs, 2)
    j = op.node_index([-2.0])
    field = mg.field_from_nodes([op.kept[j]])
    t = 0.02
    target = np.sqrt(4 * t * 25.0)
    dists = field.distances[op.kept]
    i = int(np.argmin(np.abs(dists - target)))
    assert dists[i] ** 2 / (4 * t) == pytest.approx(25.0, rel=0.1)
    ks = heat_kernel(op, j, t, EXACT)
    from grushinlab.geometry import ball_volume

    prefactor = 1.0 / np.sqrt(
        ball_volume(field, np.sqrt(t)) * ball_volume(mg.field_from_nodes([op.kept[i]]), np.sqrt(t))
    )
    assert abs(ks.values[i]) < 1e-9 * prefactor


def test_fit_loglog_slope():
    x = np.geomspace(1, 10, 5)
    assert fit_loglog_slope(x, 3.0 * x**-1.5) == pytest.approx(-1.5)
