import math

import numpy as np
import pytest

from projeq.charts import Chart, MetricField, sample_points
from projeq.expr import Num, parse
from projeq.geodesics import (
    GeodesicError,
    IntegratorConfig,
    arc_length,
    arclength_resample,
    christoffel,
    integrate_geodesic,
    trace_distance,
    unparameterized_distance,
    write_trace_csv,
)


def flat_metric(n=2, width=5.0):
    names = ("x", "y", "z")[:n]
    chart = Chart.box(names, [(-width, width)] * n)
    return MetricField(chart, {(i, i): Num(1.0) for i in range(n)}, metric_id="flat")


def exp_metric(width=5.0):
    chart = Chart.box(("x", "y"), [(-width, width)] * 2)
    return MetricField(chart, {(0, 0): Num(1.0), (1, 1): parse("exp(2*x)")}, metric_id="e2x")


def gnomonic_metric(width=10.0):
    chart = Chart.box(("u1", "u2"), [(-width, width)] * 2)
    d2 = "(1 + u1^2 + u2^2)^2"
    return MetricField(chart, {
        (0, 0): parse(f"(1 + u2^2) / {d2}"),
        (0, 1): parse(f"-(u1*u2) / {d2}"),
        (1, 1): parse(f"(1 + u1^2) / {d2}"),
    }, metric_id="round")


# --------------------------------------------------------------------------
# christoffel symbols


def test_christoffel_flat_vanishes():
    assert np.abs(christoffel(flat_metric(), [0.3, 0.4])).max() == 0.0


def test_christoffel_exponential_hand_values():
    # diag(1, e^{2x}): Gamma^1_22 = -e^{2x}, Gamma^2_12 = Gamma^2_21 = 1, rest 0
    g = exp_metric()
    x = 0.2
    Gam = christoffel(g, [x, 0.9])
    expected = np.zeros((2, 2, 2))
    expected[0, 1, 1] = -math.exp(2 * x)
    expected[1, 0, 1] = expected[1, 1, 0] = 1.0
    assert np.abs(Gam - expected).max() <= 1e-12


def test_christoffel_symmetric_in_lower_indices():
    chart = Chart.torus(("x", "y"))
    g = MetricField(chart, {(0, 0): parse("2 + cos(2*pi*x)"), (0, 1): parse("0.2*sin(2*pi*y)"),
                            (1, 1): parse("3 + sin(2*pi*x)")})
    for p in sample_points(chart, 10, seed=0):
        Gam = christoffel(g, p)
        assert np.array_equal(Gam, np.swapaxes(Gam, 1, 2))


def test_christoffel_singular_metric():
    chart = Chart.box(("x", "y"), [(-1.0, 1.0)] * 2)
    g = MetricField(chart, {(0, 0): parse("x"), (1, 1): Num(1.0)}, signature="indefinite",
                    check_periodic=False)
    with pytest.raises(GeodesicError, match="singular"):
        christoffel(g, [0.0, 0.0])


# --------------------------------------------------------------------------
# integration


def test_flat_geodesic_is_straight_line():
    g = flat_metric()
    tr = integrate_geodesic(g, [0.1, 0.2], [1.0, 0.0], IntegratorConfig(h=1e-3, steps=300))
    assert tr.status == "complete"
    assert np.allclose(tr.coords[-1], [0.4, 0.2], atol=1e-12)
    assert np.abs(tr.coords[:, 1] - 0.2).max() <= 1e-14


def test_gnomonic_geodesics_are_straight():
    g = gnomonic_metric()
    tr = integrate_geodesic(g, [0.2, -0.3], [0.7, 0.4], IntegratorConfig(h=1e-3, steps=1000))
    P = tr.coords
    d = P[-1] - P[0]
    d /= np.linalg.norm(d)
    rel = P - P[0]
    perp = rel - np.outer(rel @ d, d)
    assert np.abs(perp).max() <= 1e-6


def test_energy_conserved_along_geodesic():
    g = exp_metric()
    tr = integrate_geodesic(g, [0.1, 0.2], [0.6, 0.3], IntegratorConfig(h=1e-3, steps=2000))
    assert abs(tr.energies[-1] - tr.energies[0]) / tr.energies[0] <= 1e-6


def test_reversed_velocity_retraces_from_endpoint():
    g = exp_metric()
    cfg = IntegratorConfig(h=1e-3, steps=500)
    fwd = integrate_geodesic(g, [0.1, 0.2], [0.5, 0.4], cfg)
    back = integrate_geodesic(g, fwd.coords[-1], -fwd.velocities[-1], cfg)
    assert np.abs(back.coords - fwd.coords[::-1]).max() <= 1e-9


def test_velocity_scaling_reparameterizes_same_point_set():
    g = exp_metric()
    a = integrate_geodesic(g, [0.1, 0.2], [0.5, 0.4], IntegratorConfig(h=1e-3, steps=1000))
    b = integrate_geodesic(g, [0.1, 0.2], [1.0, 0.8], IntegratorConfig(h=1e-3, steps=500))
    assert trace_distance(g.chart, a, b) <= 1e-6


def test_rk4_fourth_order_convergence():
    # h large enough that truncation error dominates roundoff
    g = exp_metric()
    p, v = [0.1, 0.2], [0.5, 0.4]
    rtol_off = 1e9  # watchdog disabled: the coarse run is allowed to drift
    ref = integrate_geodesic(g, p, v, IntegratorConfig(h=0.02 / 64, steps=64 * 100, rtol=rtol_off))
    end_ref = ref.coords[-1]

    def end_error(h, steps):
        tr = integrate_geodesic(g, p, v, IntegratorConfig(h=h, steps=steps, rtol=rtol_off))
        return np.linalg.norm(tr.coords[-1] - end_ref)

    e1 = end_error(0.02, 100)
    e2 = end_error(0.01, 200)
    ratio = e1 / e2
    assert 12.0 <= ratio <= 22.0, f"convergence ratio {ratio}"


def test_domain_exit_reports_last_valid_index():
    g = flat_metric(width=1.0)
    tr = integrate_geodesic(g, [0.5, 0.0], [1.0, 0.0], IntegratorConfig(h=1e-2, steps=200))
    assert tr.status == "domain-exit"
    assert tr.coords[-1, 0] < 1.0
    assert len(tr) < 201


def test_periodic_trace_unwraps_with_windings():
    chart = Chart.torus(("x", "y"))
    g = MetricField(chart, {(0, 0): Num(1.0), (1, 1): Num(1.0)})
    tr = integrate_geodesic(g, [0.9, 0.5], [1.0, 0.0], IntegratorConfig(h=1e-2, steps=100))
    assert tr.coords[-1, 0] == pytest.approx(1.9, abs=1e-12)  # unwrapped
    assert tr.points[-1, 0] == pytest.approx(0.9, abs=1e-12)  # canonical
    assert tr.windings[-1, 0] == 1


# --------------------------------------------------------------------------
# trace comparison


def test_arclength_reparam_normalizes_speed():
    g = exp_metric()
    tr = integrate_geodesic(g, [0.1, 0.2], [3.0, 4.0],
                            IntegratorConfig(h=1e-3, steps=200, reparam="arclength"))
    assert tr.energies[0] == pytest.approx(1.0, rel=1e-12)
    assert arc_length(tr, g) == pytest.approx(tr.params[-1], rel=1e-6)


def test_trace_distance_identical_traces():
    g = flat_metric()
    tr = integrate_geodesic(g, [0.0, 0.0], [1.0, 0.3], IntegratorConfig(h=1e-2, steps=100))
    assert trace_distance(g.chart, tr, tr) == 0.0


def test_trace_distance_parallel_segments():
    chart = flat_metric().chart
    a = np.column_stack([np.linspace(0, 1, 50), np.zeros(50)])
    b = np.column_stack([np.linspace(0, 1, 50), 0.25 * np.ones(50)])
    assert trace_distance(chart, a, b) == pytest.approx(0.25, abs=1e-12)


def test_trace_distance_wraps_periodic_coordinates():
    chart = Chart.torus(("x", "y"))
    a = np.array([[0.05, 0.5]])
    b = np.array([[0.95, 0.5]])
    assert trace_distance(chart, a, b) == pytest.approx(0.1, abs=1e-12)


def test_trace_distance_empty_trace_rejected():
    chart = flat_metric().chart
    with pytest.raises(GeodesicError):
        trace_distance(chart, np.empty((0, 2)), np.array([[0.0, 0.0]]))


def test_arclength_resample_uniform_spacing():
    g = flat_metric()
    tr = integrate_geodesic(g, [0.0, 0.0], [1.0, 0.0], IntegratorConfig(h=1e-2, steps=100))
    r = arclength_resample(tr, g, count=11)
    assert np.allclose(np.diff(r[:, 0]), 0.1, atol=1e-9)
    assert arc_length(tr, g) == pytest.approx(1.0, rel=1e-9)


def test_unparameterized_distance_same_curve_other_speed():
    g = exp_metric()
    a = integrate_geodesic(g, [0.1, 0.2], [0.5, 0.4], IntegratorConfig(h=1e-3, steps=1000))
    b = integrate_geodesic(g, [0.1, 0.2], [1.5, 1.2], IntegratorConfig(h=1e-3, steps=500))
    assert unparameterized_distance(a, b, g) <= 1e-6


def test_write_trace_csv(tmp_path):
    import csv

    g = flat_metric()
    tr = integrate_geodesic(g, [0.0, 0.0], [1.0, 0.0], IntegratorConfig(h=1e-2, steps=10))
    path = tmp_path / "trace.csv"
    write_trace_csv(path, tr, config_hash="abc123")
    lines = path.read_text().splitlines()
    assert lines[0] == "# metric_id=flat config_hash=abc123"
    rows = list(csv.reader(lines[1:]))
    assert rows[0] == ["param", "x", "y", "v_x", "v_y", "energy"]
    assert len(rows) == 1 + 11
    assert float(rows[1][1]) == 0.0 and float(rows[-1][1]) == pytest.approx(0.1)