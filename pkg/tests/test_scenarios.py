import json
import math

import numpy as np
import pytest

from projeq.charts import apply_map, metric_values, pullback_metric, sample_points
from projeq.projective import classify_map, projective_report
from projeq.scenarios import (
    ScenarioError,
    build_flat_torus,
    build_levi_civita_family,
    build_sphere_projective,
    load_scenario,
    perturbed_companion,
    pullback_formula_residual,
    pullback_identity_grid_residual,
    save_scenario,
    scenario_from_dict,
    scenario_to_dict,
)


# --------------------------------------------------------------------------
# torus product family


@pytest.mark.parametrize("n", [2, 3, 4])
def test_family_builds_projectively_equivalent_pair(n):
    sc = build_levi_civita_family(n)
    pts = sample_points(sc.chart, 60, seed=0)
    rep = projective_report(sc.g, sc.g_bar, pts)
    assert rep.residual_max <= 1e-8
    assert sc.sol_basis is not None
    sc.sol_basis.check_independence(pts[:10])


def test_family_rejects_profile_not_above_one():
    with pytest.raises(ScenarioError, match="f <= 1"):
        build_levi_civita_family(3, f="1 + 0.1*cos(2*pi*x)")


def test_family_rejects_constant_profile():
    with pytest.raises(ScenarioError, match="max f - min f"):
        build_levi_civita_family(3, f="2 + 0*x")


def test_family_rejects_nonperiodic_profile():
    with pytest.raises(ScenarioError):
        build_levi_civita_family(3, f="x")


def test_family_n2_has_no_translations():
    sc = build_levi_civita_family(2)
    assert list(sc.maps) == ["swap"]
    assert sc.chart.names == ("x", "z")


def test_swap_is_involution(family3, family3_points):
    swap = family3.maps["swap"]
    twice = apply_map(swap, apply_map(swap, family3_points))
    assert np.abs(twice - family3_points).max() <= 1e-12


def test_translations_fix_both_metrics(family3, family3_points):
    rho = family3.maps["translate-y1"]
    for metric in (family3.g, family3.g_bar):
        mc = classify_map(rho, metric, family3_points[:40])
        assert mc.kind == "isometry"


def test_displayed_companion_equals_direct_pullback(family3, family3_points):
    for p in family3_points[:200:4]:
        direct = pullback_metric(family3.maps["swap"], family3.g, p)
        displayed = metric_values(family3.g_bar, p)[0]
        denom = np.maximum(np.maximum(np.abs(direct), np.abs(displayed)), 1.0)
        assert (np.abs(direct - displayed) / denom).max() <= 1e-12


def test_orientable_variant_n2():
    sc = build_levi_civita_family(2, orientable=True)  # default profile is even
    phi = sc.maps["swap-orientable"]
    J = np.array([[0.0, 1.0], [-1.0, 0.0]])
    from projeq.charts import jacobian

    assert np.allclose(jacobian(phi, [0.2, 0.7]), J, atol=1e-14)
    assert phi.orientation == "preserving"
    pts = sample_points(sc.chart, 40, seed=1)
    assert classify_map(phi, sc.g, pts).kind == "projective-nonaffine"


def test_orientable_variant_n2_requires_even_profile():
    with pytest.raises(ScenarioError, match="even"):
        build_levi_civita_family(2, f="2 + 0.25*cos(2*pi*x) + 0.25*sin(2*pi*x)",
                                 orientable=True)


def test_orientable_variant_n3():
    sc = build_levi_civita_family(3, orientable=True)
    phi = sc.maps["swap-orientable"]
    assert phi.orientation == "preserving"
    pts = sample_points(sc.chart, 40, seed=1)
    assert classify_map(phi, sc.g, pts).kind == "projective-nonaffine"


def test_family_custom_base_block():
    base = np.array([[2.0, 0.5], [0.5, 1.0]])
    sc = build_levi_civita_family(4, base=base)
    pts = sample_points(sc.chart, 40, seed=2)
    assert projective_report(sc.g, sc.g_bar, pts).residual_max <= 1e-8


def test_family_rejects_bad_base():
    with pytest.raises(ScenarioError, match="positive definite"):
        build_levi_civita_family(4, base=np.array([[1.0, 2.0], [2.0, 1.0]]))


# --------------------------------------------------------------------------
# displayed pullback identity


def test_pullback_formula_residual_default_profile():
    for p in [(0.1, 0.7, 0.3), (0.9, 0.2, 0.6)]:
        assert pullback_formula_residual("2 + 0.5*cos(2*pi*x)", 3, np.array(p)) <= 1e-12


def test_pullback_formula_residual_constant_profile():
    # identity-check mode accepts the constant profile a scenario build rejects:
    # coefficient (2 - 1/2)(2 - 1) = 1.5, pullback 1.5 * 0.5 = 0.75 = 1.5 * 2/4
    assert (2 - 1 / 2) * (2 - 1) == 1.5
    assert 1.5 * 0.5 == 1.5 * 2 / 4 == 0.75
    assert pullback_formula_residual("2", 3, np.array([0.3, 0.1, 0.8])) <= 1e-14


def test_pullback_identity_value_grid():
    assert pullback_identity_grid_residual(grid=50) <= 1e-12


# --------------------------------------------------------------------------
# flat torus lattice maps


def test_torus_shear_expected_affine():
    sc = build_flat_torus([[1, 1], [0, 1]])
    assert sc.expected["lattice"] == "affine-nonisometric"
    p = sample_points(sc.chart, 1, seed=0)
    pulled = pullback_metric(sc.maps["lattice"], sc.g, p[0])
    assert np.array_equal(pulled, np.array([[1.0, 1.0], [1.0, 2.0]]))


def test_torus_orthogonal_expected_isometry():
    sc = build_flat_torus([[0, -1], [1, 0]])
    assert sc.expected["lattice"] == "isometry"


def test_torus_rejects_wrong_determinant():
    with pytest.raises(ScenarioError, match="determinant 1"):
        build_flat_torus([[2, 0], [0, 1]])


def test_torus_rejects_non_integer():
    with pytest.raises(ScenarioError, match="integer"):
        build_flat_torus([[1.0, 0.5], [0.0, 1.0]])


# --------------------------------------------------------------------------
# sphere gnomonic patch


def test_sphere_identity_matrix_is_isometry():
    sc = build_sphere_projective(np.eye(3))
    assert sc.expected["projective-linear"] == "isometry"
    pts = sample_points(sc.chart, 30, seed=0, box=sc.sample_box)
    assert classify_map(sc.maps["projective-linear"], sc.g, pts).kind == "isometry"


def test_sphere_stretch_projective_nonaffine():
    sc = build_sphere_projective(np.diag([2.0, 1.0, 0.5]))
    pts = sample_points(sc.chart, 60, seed=0, box=sc.sample_box)
    mc = classify_map(sc.maps["projective-linear"], sc.g, pts)
    assert mc.kind == "projective-nonaffine"
    assert mc.projective_residual <= 1e-8


def test_sphere_vertical_rotation_is_isometry():
    th = math.radians(30)
    A = np.array([[math.cos(th), -math.sin(th), 0.0],
                  [math.sin(th), math.cos(th), 0.0],
                  [0.0, 0.0, 1.0]])
    sc = build_sphere_projective(A)
    pts = sample_points(sc.chart, 50, seed=0, box=sc.sample_box)
    from projeq.charts import pullback_metric_batch

    gap = np.abs(pullback_metric_batch(sc.maps["projective-linear"], sc.g, pts)
                 - metric_values(sc.g, pts)).max()
    assert gap <= 1e-10
    assert classify_map(sc.maps["projective-linear"], sc.g, pts).kind == "isometry"


def test_sphere_rejects_vanishing_denominator():
    A = np.array([[0.0, 0.0, -1.0], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0]])  # det 1, P3 = u1
    with pytest.raises(ScenarioError, match="denominator"):
        build_sphere_projective(A)


def test_sphere_rejects_wrong_determinant():
    with pytest.raises(ScenarioError, match="determinant"):
        build_sphere_projective(np.diag([2.0, 1.0, 1.0]))


# --------------------------------------------------------------------------
# perturbation helper


def test_perturbed_companion_is_riemannian_but_not_equivalent(family3, family3_points):
    pert = perturbed_companion(family3, eps=1e-2)
    G = metric_values(pert, family3_points)
    np.linalg.cholesky(G)
    rep = projective_report(family3.g, pert, family3_points)
    assert rep.residual_max >= 1e-4


# --------------------------------------------------------------------------
# serialization


def test_scenario_json_round_trip(tmp_path, family3, family3_points):
    path = tmp_path / "family.json"
    save_scenario(family3, path)
    loaded = load_scenario(str(path))
    assert loaded.name == family3.name
    assert loaded.chart == family3.chart
    assert set(loaded.maps) == set(family3.maps)
    assert loaded.expected == family3.expected
    pts = family3_points[:20]
    assert np.abs(metric_values(loaded.g, pts) - metric_values(family3.g, pts)).max() == 0.0
    assert np.abs(metric_values(loaded.g_bar, pts) - metric_values(family3.g_bar, pts)).max() == 0.0
    rep = compute_basis_swap_entry(loaded, pts)
    assert np.abs(rep - np.array([[0.0, 1.0], [1.0, 0.0]])).max() <= 1e-6
    # double round trip is stable
    assert scenario_to_dict(scenario_from_dict(scenario_to_dict(family3))) == scenario_to_dict(family3)


def compute_basis_swap_entry(sc, pts):
    from projeq.representation import compute_rep

    return compute_rep(sc.maps["swap"], sc.sol_basis, pts).matrix


def test_load_scenario_builtin_and_unknown():
    sc = load_scenario("flat-torus-shear")
    assert sc.name == "flat-torus"
    with pytest.raises(ScenarioError, match="unknown scenario"):
        load_scenario("no-such-scenario")


def test_scenario_file_is_valid_json(tmp_path, family3):
    path = tmp_path / "sc.json"
    save_scenario(family3, path)
    doc = json.loads(path.read_text())
    assert doc["format"] == "projeq-scenario/1"
    assert doc["g"]["components"]["0,0"].startswith("(")
