"""Christoffel symbols, geodesic integration, and unparameterized comparison.

Integration is fixed-step classical RK4 (reproducibility over adaptivity at
this scale) with an energy-drift watchdog.  Traces keep periodic coordinates
unwrapped so polyline comparison never jumps at a seam; canonical points are
derived on demand.  Comparison of two traces as unparameterized curves goes
through arc-length resampling in a reference metric followed by a
symmetrized point-to-polyline (Hausdorff-style) distance with wrapped
coordinate differences.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import core
from .charts import Chart, MetricField, Point, _as_rows, metric_jet, metric_jet_batch, metric_values


class GeodesicError(RuntimeError):
    pass


class EnergyDriftError(GeodesicError):
    pass


@dataclass(frozen=True)
class IntegratorConfig:
    """Fixed-step RK4 configuration."""

    h: float = 1e-3
    steps: int = 2000
    rtol: float = 1e-6
    reparam: str = "affine"  # "affine" | "arclength" (normalize v to unit g-speed)

    def __post_init__(self):
        if self.h <= 0 or self.steps < 1:
            raise ValueError("need h > 0 and steps >= 1")
        if self.reparam not in ("affine", "arclength"):
            raise ValueError(f"unknown reparameterization mode {self.reparam!r}")


_STATUS_NAMES = {
    core.RK_OK: "complete",
    core.RK_DOMAIN_EXIT: "domain-exit",
    core.RK_EXPR_ERROR: "expr-error",
    core.RK_ENERGY_REJECT: "energy-reject",
}


@dataclass
class GeodesicTrace:
    """RK4 trajectory: parameter values, unwrapped coordinates, velocities.

    ``coords`` are unwrapped (winding counters live in the integer parts of
    periodic coordinates); ``points`` canonicalizes.
    """

    chart: Chart
    metric_id: str
    params: np.ndarray  # (k,)
    coords: np.ndarray  # (k, n) unwrapped
    velocities: np.ndarray  # (k, n)
    energies: np.ndarray  # (k,)
    status: str

    def __len__(self):
        return len(self.params)

    @property
    def points(self) -> np.ndarray:
        pts = self.coords.copy()
        mask = self.chart.periodic_mask.astype(bool)
        pts[:, mask] %= 1.0
        return pts

    @property
    def windings(self) -> np.ndarray:
        w = np.zeros_like(self.coords)
        mask = self.chart.periodic_mask.astype(bool)
        w[:, mask] = np.floor(self.coords[:, mask])
        return w.astype(int)

    def energy_drift(self) -> float:
        e0 = self.energies[0]
        return float(np.abs(self.energies - e0).max() / max(abs(e0), 1e-300))


def christoffel(g: MetricField, p) -> np.ndarray:
    """Gamma^i_{jk} of the Levi-Civita connection at p, symmetric in (j, k)."""
    G, dG = metric_jet(g, p)
    return _christoffel_from_jet(G[None], dG[None])[0]


def christoffel_batch(g: MetricField, pts) -> np.ndarray:
    G, dG = metric_jet_batch(g, pts)
    return _christoffel_from_jet(G, dG)


def _christoffel_from_jet(G: np.ndarray, dG: np.ndarray) -> np.ndarray:
    # dG[m, k, i, j] = d_k g_ij
    T = dG.transpose(0, 2, 1, 3) + dG.transpose(0, 3, 2, 1) - dG
    try:
        ginv = np.linalg.inv(G)
    except np.linalg.LinAlgError:
        raise GeodesicError("singular metric") from None
    return 0.5 * np.einsum("mil,mljk->mijk", ginv, T)


def integrate_geodesic(g: MetricField, p, v, cfg: IntegratorConfig = IntegratorConfig()) -> GeodesicTrace:
    """Integrate one geodesic of g from (p, v).

    Traces truncate (status "domain-exit") when an open coordinate leaves
    the chart; an energy drift beyond 10x cfg.rtol raises
    :class:`EnergyDriftError`.
    """
    trace = integrate_geodesics(g, _as_rows(p), _as_rows(v), cfg)[0]
    if trace.status == "energy-reject":
        raise EnergyDriftError(
            f"energy drift exceeded 10x rtol after {len(trace)} recorded steps"
        )
    return trace


def integrate_geodesics(g: MetricField, P, V, cfg: IntegratorConfig = IntegratorConfig()) -> list[GeodesicTrace]:
    """Batch integration; statuses are reported on the traces, never raised."""
    if g.signature != "riemannian":
        raise GeodesicError("geodesic integration expects a riemannian metric")
    chart = g.chart
    P = np.array(_as_rows(P), dtype=float)
    V = np.array(_as_rows(V), dtype=float)
    if P.shape != V.shape or P.shape[1] != chart.dim:
        raise GeodesicError("mismatched initial points/velocities")
    if (np.linalg.norm(V, axis=1) == 0.0).any():
        raise GeodesicError("zero initial velocity")
    if cfg.reparam == "arclength":
        G0 = metric_values(g, P)
        speed = np.sqrt(np.einsum("mij,mi,mj->m", G0, V, V))
        V = V / speed[:, None]
    out = core.rk4_geodesic(g.program, P, V, cfg.h, cfg.steps, chart.periodic_mask,
                            chart.lo, chart.hi, cfg.rtol)
    traces = []
    for i in range(P.shape[0]):
        kd = int(out["ndone"][i])
        if not np.isfinite(out["XS"][i, 0]).all():
            raise GeodesicError(f"metric evaluation failed at initial point {P[i].tolist()}")
        traces.append(GeodesicTrace(
            chart=chart,
            metric_id=g.metric_id,
            params=cfg.h * np.arange(kd + 1),
            coords=out["XS"][i, : kd + 1].copy(),
            velocities=out["VS"][i, : kd + 1].copy(),
            energies=out["ES"][i, : kd + 1].copy(),
            status=_STATUS_NAMES[int(out["status"][i])],
        ))
    return traces


# --------------------------------------------------------------------------
# Unparameterized comparison


def arclength_resample(trace: GeodesicTrace, g: MetricField, count: int = 512,
                       total: float | None = None) -> np.ndarray:
    """Resample the trace polyline at equal arc length measured with g.

    ``total`` caps the arc length (used to clip two traces of the same curve
    to a common extent before comparison).  Returns (count, n) unwrapped
    coordinates.
    """
    coords = trace.coords
    if len(coords) < 2:
        raise GeodesicError("cannot resample a trace with fewer than 2 points")
    deltas = np.diff(coords, axis=0)
    seg = _segment_lengths(g, coords, deltas)
    s = np.concatenate(([0.0], np.cumsum(seg)))
    L = s[-1] if total is None else min(total, s[-1])
    targets = np.linspace(0.0, L, count)
    idx = np.clip(np.searchsorted(s, targets, side="right") - 1, 0, len(seg) - 1)
    denom = np.where(seg[idx] > 0.0, seg[idx], 1.0)
    frac = np.clip((targets - s[idx]) / denom, 0.0, 1.0)
    return coords[idx] + frac[:, None] * deltas[idx]


def _segment_lengths(g: MetricField, coords: np.ndarray, deltas: np.ndarray) -> np.ndarray:
    # trapezoid rule: endpoint bias of the one-sided rule misaligns the
    # arc-length grids of two traces of the same curve by O(h) overall
    G = metric_values(g, coords)
    a = np.sqrt(np.maximum(np.einsum("mij,mi,mj->m", G[:-1], deltas, deltas), 0.0))
    b = np.sqrt(np.maximum(np.einsum("mij,mi,mj->m", G[1:], deltas, deltas), 0.0))
    return 0.5 * (a + b)


def arc_length(trace: GeodesicTrace, g: MetricField) -> float:
    coords = trace.coords
    deltas = np.diff(coords, axis=0)
    return float(_segment_lengths(g, coords, deltas).sum())


def _coords_of(t) -> np.ndarray:
    if isinstance(t, GeodesicTrace):
        return t.coords
    return np.atleast_2d(np.asarray(t, dtype=float))


def _one_sided(chart: Chart, P: np.ndarray, Q: np.ndarray) -> float:
    """max over P of the distance to the polyline Q, wrapping periodic axes.

    Each query point is translated by the integer period offset nearest the
    candidate segment's midpoint; exact while distances stay below a quarter
    period (all tolerances of interest are orders of magnitude smaller).
    """
    mask = chart.periodic_mask.astype(bool)
    if len(Q) == 1:
        d = P - Q[0]
        d[:, mask] -= np.round(d[:, mask])
        return float(np.linalg.norm(d, axis=1).max())
    A = Q[:-1]
    D = np.diff(Q, axis=0)
    len2 = np.einsum("sn,sn->s", D, D)
    rel = P[:, None, :] - A[None, :, :]  # (p, s, n): P_eff - A
    if mask.any():
        mid = A + 0.5 * D
        rel[:, :, mask] -= np.round(P[:, None, mask] - mid[None, :, mask])
    t = np.einsum("psn,sn->ps", rel, D) / np.where(len2 > 0.0, len2, 1.0)
    t = np.clip(t, 0.0, 1.0)
    closest = rel - t[:, :, None] * D[None, :, :]
    d2 = np.einsum("psn,psn->ps", closest, closest)
    return float(np.sqrt(d2.min(axis=1)).max())


def trace_distance(chart: Chart, a, b) -> float:
    """Symmetrized max point-to-polyline distance between two traces."""
    P = _coords_of(a)
    Q = _coords_of(b)
    if len(P) == 0 or len(Q) == 0:
        raise GeodesicError("empty trace")
    return max(_one_sided(chart, P, Q), _one_sided(chart, Q, P))


def unparameterized_distance(a: GeodesicTrace, b: GeodesicTrace, g: MetricField,
                             count: int = 512) -> float:
    """Distance between two traces as unparameterized curves.

    Both traces are resampled by arc length of the reference metric g
    (clipped to the shorter extent) before the polyline comparison, removing
    the parameterization disparity between projectively equivalent metrics.
    """
    L = min(arc_length(a, g), arc_length(b, g))
    ra = arclength_resample(a, g, count=count, total=L)
    rb = arclength_resample(b, g, count=count, total=L)
    return trace_distance(a.chart, ra, rb)


def write_trace_csv(path, trace: GeodesicTrace, config_hash: str = "") -> None:
    """One row per step: parameter, coordinates, velocities, energy."""
    names = trace.chart.names
    with open(path, "w", newline="") as fh:
        fh.write(f"# metric_id={trace.metric_id} config_hash={config_hash}\n")
        writer = csv.writer(fh)
        writer.writerow(["param", *names, *[f"v_{n}" for n in names], "energy"])
        for k in range(len(trace)):
            writer.writerow(
                [repr(float(trace.params[k]))]
                + [repr(float(c)) for c in trace.coords[k]]
                + [repr(float(c)) for c in trace.velocities[k]]
                + [repr(float(trace.energies[k]))]
            )
