"""Projective/affine/isometric comparison of metrics and maps.

Two connections agree projectively iff their difference tensor has the pure
trace form D^i_{jk} = delta^i_j psi_k + delta^i_k psi_j for a 1-form psi;
the residual of that form, normalized by the connection scale at the point,
is the working criterion.  Classification of a diffeomorphism tests, in
order: isometry (phi*g = g), affine (D = 0 for (g, phi*g)), projective
(residual below tolerance), else not-projective.  All verdicts are at
sampled resolution; no global claim is made.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .charts import (
    Chart,
    Diffeomorphism,
    MetricField,
    _as_rows,
    metric_jet_batch,
    metric_values,
    pullback_metric_batch,
    pullback_metric_field,
    sample_directions,
    sample_points,
)
from .geodesics import (
    IntegratorConfig,
    christoffel_batch,
    integrate_geodesics,
    unparameterized_distance,
)


@dataclass(frozen=True)
class Tolerances:
    tol_iso: float = 1e-8
    tol_aff: float = 1e-8
    tol_proj: float = 1e-8


@dataclass
class ProjectiveReport:
    """Samplewise projective-equivalence test for a metric pair."""

    psi: np.ndarray  # (m, n) 1-form samples
    residual_per_point: np.ndarray  # (m,)
    residual_max: float
    verdict: str  # "equivalent" | "not-equivalent"
    tolerance: float


@dataclass
class MapClass:
    """Trichotomy verdict for a diffeomorphism, with supporting residuals."""

    kind: str  # isometry | affine-nonisometric | projective-nonaffine | not-projective
    iso_residual: float
    affine_residual: float
    projective_residual: float
    tolerances: Tolerances = field(default_factory=Tolerances)


def connection_difference(g: MetricField, g_bar: MetricField, p) -> np.ndarray:
    """D^i_{jk} = Gammabar^i_{jk} - Gamma^i_{jk} at p (symmetric in j, k)."""
    return christoffel_batch(g_bar, _as_rows(p))[0] - christoffel_batch(g, _as_rows(p))[0]


def _connection_scale(Gm: np.ndarray, Gbm: np.ndarray) -> np.ndarray:
    scale = np.maximum(np.abs(Gm).max(axis=(1, 2, 3)), np.abs(Gbm).max(axis=(1, 2, 3)))
    return np.maximum(scale, 1.0)


def _projective_parts(g: MetricField, g_bar: MetricField, pts):
    pts = _as_rows(pts)
    n = g.chart.dim
    Gm = christoffel_batch(g, pts)
    Gbm = christoffel_batch(g_bar, pts)
    D = Gbm - Gm
    psi = np.einsum("mssk->mk", D) / (n + 1)
    eye = np.eye(n)
    pure_trace = np.einsum("ij,mk->mijk", eye, psi) + np.einsum("ik,mj->mijk", eye, psi)
    resid = np.abs(D - pure_trace).max(axis=(1, 2, 3))
    scale = _connection_scale(Gm, Gbm)
    return psi, resid / scale, np.abs(D).max(axis=(1, 2, 3)) / scale


def projective_residual(g: MetricField, g_bar: MetricField, p) -> tuple[np.ndarray, float]:
    """(psi_k, residual) at one point; residual 0 characterizes projective
    equivalence of the two connections there."""
    psi, resid, _ = _projective_parts(g, g_bar, _as_rows(p))
    return psi[0], float(resid[0])


def projective_report(g: MetricField, g_bar: MetricField, pts, tol: float = 1e-8) -> ProjectiveReport:
    psi, resid, _ = _projective_parts(g, g_bar, pts)
    rmax = float(resid.max())
    return ProjectiveReport(
        psi=psi,
        residual_per_point=resid,
        residual_max=rmax,
        verdict="equivalent" if rmax <= tol else "not-equivalent",
        tolerance=tol,
    )


def affine_residual(g: MetricField, g_bar: MetricField, pts) -> float:
    """max ||D||_inf over the samples, relative to the connection scale."""
    _, _, aff = _projective_parts(g, g_bar, pts)
    return float(aff.max())


def isometry_residual(phi: Diffeomorphism, g: MetricField, pts) -> float:
    """max ||phi*g - g||_inf over the samples, relative to ||g|| there."""
    pts = _as_rows(pts)
    pulled = pullback_metric_batch(phi, g, pts)
    G = metric_values(g, pts)
    scale = np.maximum(np.abs(G).max(axis=(1, 2)), 1.0)
    return float((np.abs(pulled - G).max(axis=(1, 2)) / scale).max())


def psi_logdet_gap(g: MetricField, g_bar: MetricField, pts) -> float:
    """Deviation of psi from the log-det gradient identity.

    For projectively equivalent Levi-Civita connections,
    psi = d( ln det(g_bar)/det(g) ) / (2(n+1)); this verifies it numerically
    (the gradient of ln det comes from tr(g^{-1} d_k g) on the jets).
    """
    pts = _as_rows(pts)
    n = g.chart.dim
    psi, _, _ = _projective_parts(g, g_bar, pts)

    def grad_logdet(metric):
        G, dG = metric_jet_batch(metric, pts)
        Ginv = np.linalg.inv(G)
        return np.einsum("mij,mkji->mk", Ginv, dG)

    grad = (grad_logdet(g_bar) - grad_logdet(g)) / (2.0 * (n + 1))
    return float(np.abs(psi - grad).max())


def classify_map(phi: Diffeomorphism, g: MetricField, pts, tol: Tolerances = Tolerances()) -> MapClass:
    """Classify phi against g at the sample points.

    Tests run in the order isometry -> affine -> projective; the first test
    whose residual clears its tolerance decides.  All three residuals are
    reported regardless.
    """
    pts = _as_rows(pts)
    g_pulled = pullback_metric_field(phi, g)
    iso = isometry_residual(phi, g, pts)
    psi, proj, aff = _projective_parts(g, g_pulled, pts)
    aff_max = float(aff.max())
    proj_max = float(proj.max())
    if iso <= tol.tol_iso:
        kind = "isometry"
    elif aff_max <= tol.tol_aff:
        kind = "affine-nonisometric"
    elif proj_max <= tol.tol_proj:
        kind = "projective-nonaffine"
    else:
        kind = "not-projective"
    return MapClass(kind=kind, iso_residual=iso, affine_residual=aff_max,
                    projective_residual=proj_max, tolerances=tol)


def geodesic_crosscheck(g: MetricField, g_bar: MetricField, shots: int = 20,
                        cfg: IntegratorConfig = IntegratorConfig(), seed: int = 0,
                        box=None, margin: float = 0.05) -> np.ndarray:
    """Shoot matched geodesics of g and g_bar and compare them as curves.

    Each shot starts at the same seeded point with the same direction
    (normalized to unit speed in each metric separately); the returned
    distances are unparameterized-curve distances after arc-length
    resampling in g.
    """
    chart = g.chart
    P = sample_points(chart, shots, seed=seed + 101, margin=max(margin, 0.05), box=box)
    dirs = sample_directions(chart.dim, shots, seed=seed + 211)
    Gg = metric_values(g, P)
    Gb = metric_values(g_bar, P)
    Vg = dirs / np.sqrt(np.einsum("mij,mi,mj->m", Gg, dirs, dirs))[:, None]
    Vb = dirs / np.sqrt(np.einsum("mij,mi,mj->m", Gb, dirs, dirs))[:, None]
    traces_g = integrate_geodesics(g, P, Vg, cfg)
    traces_b = integrate_geodesics(g_bar, P, Vb, cfg)
    out = np.empty(shots)
    for i, (ta, tb) in enumerate(zip(traces_g, traces_b)):
        out[i] = unparameterized_distance(ta, tb, g)
    return out
