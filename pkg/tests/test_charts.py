import math

import numpy as np
import pytest

from projeq.charts import (
    Chart,
    ChartError,
    Diffeomorphism,
    MetricField,
    canonicalize,
    check_riemannian,
    compose_maps,
    identity_map,
    inverse_map,
    jacobian,
    jacobian_batch,
    metric_jet,
    metric_values,
    pullback_metric,
    pullback_metric_batch,
    pullback_metric_field,
    sample_points,
)
from projeq.expr import Num, Var, parse


def flat_chart(n=2, width=3.0):
    names = ("x", "y", "z", "w")[:n]
    return Chart.box(names, [(-width, width)] * n)


def flat_metric(chart):
    comps = {(i, i): Num(1.0) for i in range(chart.dim)}
    return MetricField(chart, comps, metric_id="flat")


def exp_metric():
    chart = flat_chart(2)
    return MetricField(chart, {(0, 0): Num(1.0), (1, 1): parse("exp(2*x)")}, metric_id="e2x")


# --------------------------------------------------------------------------
# chart / canonicalize


def test_chart_requires_dim_two():
    with pytest.raises(ChartError):
        Chart.torus(("x",))


def test_canonicalize_periodic():
    chart = Chart.torus(("x", "y"))
    assert canonicalize(chart, [1.25, 0.5]).coords[0] == pytest.approx(0.25)
    assert canonicalize(chart, [-0.1, 0.5]).coords[0] == pytest.approx(0.9)


def test_canonicalize_open_passthrough_and_bounds():
    chart = Chart.box(("x", "y"), [(0.0, 1.0), (0.0, 1.0)])
    assert canonicalize(chart, [0.5, 0.25]).coords == (0.5, 0.25)
    with pytest.raises(ChartError):
        canonicalize(chart, [1.5, 0.5])
    with pytest.raises(ChartError):
        canonicalize(chart, [float("nan"), 0.5])


# --------------------------------------------------------------------------
# metric fields


def test_metric_jet_flat_is_constant():
    g = flat_metric(flat_chart(3))
    G, dG = metric_jet(g, [0.3, -0.4, 1.0])
    assert np.array_equal(G, np.eye(3))
    assert np.abs(dG).max() == 0.0


def test_metric_jet_exponential_hand_values():
    # d/dx of diag(1, e^{2x}) at x = 0 is diag(0, 2)
    g = exp_metric()
    G, dG = metric_jet(g, [0.0, 0.7])
    assert np.allclose(G, np.diag([1.0, 1.0]), atol=1e-15)
    assert np.allclose(dG[0], np.diag([0.0, 2.0]), atol=1e-15)
    assert np.abs(dG[1]).max() == 0.0


def test_metric_jet_zero_partial_at_interior_max():
    chart = Chart.torus(("x", "y"))
    g = MetricField(chart, {(0, 0): parse("2 + sin(2*pi*x)"), (1, 1): Num(1.0)})
    _, dG = metric_jet(g, [0.25, 0.1])  # sin at its max
    assert abs(dG[0, 0, 0]) < 1e-12


def test_metric_symmetry_is_exact():
    chart = Chart.torus(("x", "y"))
    g = MetricField(chart, {(0, 0): Num(2.0), (0, 1): parse("0.3*sin(2*pi*x)"), (1, 1): Num(3.0)})
    G = metric_values(g, sample_points(chart, 37, seed=3))
    assert np.array_equal(G, np.swapaxes(G, 1, 2))


def test_metric_periodicity_guard():
    chart = Chart.torus(("x", "y"))
    with pytest.raises(ChartError, match="not 1-periodic"):
        MetricField(chart, {(0, 0): parse("1 + x"), (1, 1): Num(1.0)})


def test_metric_riemannian_guard():
    chart = flat_chart(2)
    with pytest.raises(ChartError, match="positive"):
        MetricField(chart, {(0, 0): Num(-1.0), (1, 1): Num(1.0)})
    MetricField(chart, {(0, 0): Num(-1.0), (1, 1): Num(1.0)}, signature="indefinite")


def test_check_riemannian_sampling():
    g = exp_metric()
    check_riemannian(g, sample_points(g.chart, 1000, seed=1))


# --------------------------------------------------------------------------
# diffeomorphisms


def test_jacobian_identity():
    chart = flat_chart(2)
    assert np.array_equal(jacobian(identity_map(chart), [0.1, 0.2]), np.eye(2))


def test_jacobian_swap_is_antidiagonal_with_det_minus_one():
    chart = Chart.torus(("x", "y", "z"))
    swap = Diffeomorphism(chart, [Var("z"), Var("y"), Var("x")], label="swap")
    J = jacobian(swap, [0.1, 0.2, 0.3])
    assert np.array_equal(J, np.eye(3)[::-1])
    assert np.linalg.det(J) == pytest.approx(-1.0)
    assert swap.orientation == "reversing"


def test_jacobian_linear_map():
    chart = flat_chart(2)
    A = np.array([[2.0, 1.0], [0.5, 3.0]])
    phi = Diffeomorphism(chart, [parse("2*x + y"), parse("0.5*x + 3*y")], label="lin")
    assert np.allclose(jacobian(phi, [0.4, -0.7]), A, atol=1e-15)


def test_jacobian_matches_finite_differences():
    chart = Chart.box(("x", "y"), [(-2.0, 2.0), (-2.0, 2.0)])
    phi = Diffeomorphism(chart, [parse("sin(x) + 0.3*y^2"), parse("exp(0.2*x*y)")], label="fd")
    p = np.array([0.37, -0.81])
    J = jacobian(phi, p)
    h = 1e-6
    from projeq.charts import apply_map

    for a in range(2):
        dp = np.zeros(2)
        dp[a] = h
        fd = (apply_map(phi, p + dp)[0] - apply_map(phi, p - dp)[0]) / (2 * h)
        assert np.abs(fd - J[:, a]).max() <= 1e-6 * max(1.0, np.abs(J).max())


def test_singular_jacobian_rejected():
    chart = flat_chart(2)
    with pytest.raises(ChartError, match="singular"):
        Diffeomorphism(chart, [parse("x + y"), parse("2*x + 2*y")], label="rank1")


def test_inverse_round_trip_guard():
    chart = flat_chart(2)
    with pytest.raises(ChartError, match="round-trip"):
        Diffeomorphism(chart, [parse("2*x"), Var("y")],
                       inverse_exprs=[parse("0.4*x"), Var("y")], label="bad-inverse")


def test_torus_map_well_defined_mod_one():
    chart = Chart.torus(("x", "y"))
    Diffeomorphism(chart, [parse("x + y"), Var("y")], label="shear")  # shifts by integers: fine
    with pytest.raises(ChartError, match="mod 1"):
        Diffeomorphism(chart, [parse("0.5*x"), Var("y")], label="half")


# --------------------------------------------------------------------------
# pullbacks


def test_pullback_identity_map():
    g = exp_metric()
    p = [0.3, 0.8]
    assert np.allclose(pullback_metric(identity_map(g.chart), g, p), metric_values(g, p)[0],
                       atol=1e-15)


def test_pullback_flat_linear_is_gram_matrix():
    chart = flat_chart(2)
    g = flat_metric(chart)
    phi = Diffeomorphism(chart, [parse("2*x + y"), parse("0.5*x + 3*y")], label="lin")
    A = np.array([[2.0, 1.0], [0.5, 3.0]])
    assert np.allclose(pullback_metric(phi, g, [0.2, 0.1]), A.T @ A, atol=1e-14)


def test_family_pullback_matches_displayed_coefficients():
    # displayed closed form of the swap pullback, evaluated independently here
    from projeq.scenarios import build_levi_civita_family

    sc = build_levi_civita_family(3)
    x, y, z = 0.1, 0.7, 0.3

    def f(t):
        return 2.0 + 0.5 * math.cos(2.0 * math.pi * t)

    u, w = f(x), f(z)
    displayed = np.diag([
        (u - 1.0 / w) * (u - 1.0) * w / u**2,
        (u - 1.0) * (1.0 - 1.0 / w) * w / u,
        (u - 1.0 / w) * (1.0 - 1.0 / w) * w**2 / u,
    ])
    direct = pullback_metric(sc.maps["swap"], sc.g, [x, y, z])
    assert np.abs(direct - displayed).max() <= 1e-12


def test_pullback_composition_contravariance():
    # (phi o psi)* g == psi* (phi* g)
    chart = Chart.box(("x", "y"), [(-2.0, 2.0), (-2.0, 2.0)])
    g = MetricField(chart, {(0, 0): parse("1 + 0.1*sin(x)"), (0, 1): parse("0.05*x*y"),
                            (1, 1): parse("2 + 0.1*cos(y)")}, metric_id="bumpy",
                    check_periodic=False)
    phi = Diffeomorphism(chart, [parse("0.5*x + 0.1*sin(y)"), parse("0.5*y")], label="phi")
    psi = Diffeomorphism(chart, [parse("0.4*x"), parse("0.4*y + 0.05*x^2")], label="psi")
    comp = compose_maps(phi, psi)
    pts = sample_points(chart, 25, seed=9)
    lhs = pullback_metric_batch(comp, g, pts)
    rhs = pullback_metric_batch(psi, pullback_metric_field(phi, g), pts)
    assert np.abs(lhs - rhs).max() <= 1e-10


def test_pullback_field_matches_pointwise():
    g = exp_metric()
    phi = Diffeomorphism(g.chart, [parse("0.5*x + 0.2*y"), parse("0.3*y - 0.1*x")], label="lin")
    pts = sample_points(g.chart, 40, seed=4)
    field = pullback_metric_field(phi, g)
    assert np.abs(metric_values(field, pts) - pullback_metric_batch(phi, g, pts)).max() <= 1e-12


def test_compose_with_inverse_is_identity():
    chart = flat_chart(2)
    phi = Diffeomorphism(chart, [parse("0.5*x + 0.25"), parse("2*y - 0.125")],
                         inverse_exprs=[parse("2*x - 0.5"), parse("0.5*y + 0.0625")],
                         label="affine")
    comp = compose_maps(phi, inverse_map(phi))
    pts = sample_points(chart, 20, seed=2)
    from projeq.charts import apply_map

    assert np.abs(apply_map(comp, pts) - pts).max() <= 1e-12


# --------------------------------------------------------------------------
# sampling


def test_sample_points_deterministic_and_in_range():
    chart = Chart.box(("x", "y"), [(0.0, 2.0), (-1.0, 1.0)])
    a = sample_points(chart, 100, seed=5)
    b = sample_points(chart, 100, seed=5)
    assert np.array_equal(a, b)
    assert (a[:, 0] >= 0.1).all() and (a[:, 0] <= 1.9).all()  # margin 0.05 of width 2
    c = sample_points(chart, 100, seed=6)
    assert not np.array_equal(a, c)


def test_sample_points_box_override():
    chart = Chart.box(("x", "y"), [(-10.0, 10.0), (-10.0, 10.0)])
    a = sample_points(chart, 50, seed=0, box=[(-1.0, 1.0), (-1.0, 1.0)])
    assert np.abs(a).max() <= 1.0
