"""Solution space of the metrization correspondence.

Nondegenerate weighted (2,0)-tensor densities of weight 2/(n+1) correspond
to metrics with the same unparameterized geodesics; this module implements
the two directions of that correspondence, the weighted pullback, the
comparison (Benenti) tensor of a solution pair, and simultaneous
diagonalization at a point.  The solution space itself is modeled as the
span of explicitly known solutions (scenario input), not by solving a PDE.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .charts import (
    Chart,
    Diffeomorphism,
    MetricField,
    _as_rows,
    _coerce_expr,
    apply_map,
    jacobian_batch,
    metric_values,
)
from .expr import compile_program
from . import core


class MetrizationError(ValueError):
    pass


class DegenerateSolutionError(MetrizationError):
    pass


class BasisError(MetrizationError):
    pass


DEGENERACY_THRESHOLD = 1e-12


def solution_weight(n: int) -> float:
    """Density weight of solutions on an n-dimensional chart."""
    return 2.0 / (n + 1)


def metric_to_sol_matrix(G: np.ndarray) -> np.ndarray:
    """sigma^{ij} = g^{ij} |det g|^{1/(n+1)} for one or a batch of matrices."""
    G = np.asarray(G, dtype=float)
    n = G.shape[-1]
    det = np.linalg.det(G)
    if np.any(np.abs(det) < 1e-300):
        raise MetrizationError("singular metric")
    return np.linalg.inv(G) * (np.abs(det) ** (1.0 / (n + 1)))[..., None, None]


def metric_to_sol(g: MetricField, p) -> np.ndarray:
    """Solution matrix induced by the metric at p."""
    return metric_to_sol_matrix(metric_values(g, p))[0]


def sol_to_metric(sigma: np.ndarray) -> np.ndarray:
    """Inverse metric g^{ij} = |det sigma| sigma^{ij}; rejects degenerate input.

    Degeneracy is |det sigma| < 1e-12 relative to ||sigma||^n, signalling
    that the solution does not correspond to a metric near the point.
    """
    sigma = np.asarray(sigma, dtype=float)
    n = sigma.shape[-1]
    det = float(np.linalg.det(sigma))
    scale = max(float(np.abs(sigma).max()), 1e-300) ** n
    if abs(det) < DEGENERACY_THRESHOLD * scale:
        raise DegenerateSolutionError(
            f"|det sigma| = {abs(det):g} below threshold {DEGENERACY_THRESHOLD:g} * ||sigma||^n"
        )
    return abs(det) * sigma


class WeightedSolution:
    """Symmetric (2,0)-tensor-density field of weight 2/(n+1).

    Backed by a metric (via the correspondence), explicit component
    expressions, or a constant-coefficient combination of other solutions.
    """

    def __init__(self, chart: Chart, values_fn: Callable[[np.ndarray], np.ndarray], label: str):
        self.chart = chart
        self._values_fn = values_fn
        self.label = label

    @property
    def weight(self) -> float:
        return solution_weight(self.chart.dim)

    def values(self, pts) -> np.ndarray:
        out = self._values_fn(_as_rows(pts))
        return 0.5 * (out + np.swapaxes(out, -1, -2))  # exact symmetry

    def value(self, p) -> np.ndarray:
        return self.values(p)[0]

    @classmethod
    def from_metric(cls, g: MetricField, label: str | None = None) -> "WeightedSolution":
        def fn(pts):
            return metric_to_sol_matrix(metric_values(g, pts))

        sol = cls(g.chart, fn, label or f"sol({g.metric_id})")
        sol.source_metric = g
        return sol

    @classmethod
    def from_exprs(cls, chart: Chart, components, label: str = "sol") -> "WeightedSolution":
        n = chart.dim
        grid = [[_coerce_expr(components[i][j] if j >= i else components[j][i], chart.names)
                 for j in range(n)] for i in range(n)]
        upper = [grid[i][j] for i in range(n) for j in range(i, n)]
        program = compile_program(upper, chart.names)
        iu, ju = np.triu_indices(n)

        def fn(pts):
            vals, _ = core.eval_program(program, pts, want_grad=False)
            S = np.empty((pts.shape[0], n, n))
            S[:, iu, ju] = vals
            S[:, ju, iu] = vals
            return S

        sol = cls(chart, fn, label)
        sol.component_exprs = tuple(tuple(row) for row in grid)
        return sol

    @classmethod
    def linear_combination(cls, coeffs: Sequence[float], sols: Sequence["WeightedSolution"],
                           label: str | None = None) -> "WeightedSolution":
        if len(coeffs) != len(sols) or not sols:
            raise BasisError("coefficient/solution mismatch")
        chart = sols[0].chart
        coeffs = [float(c) for c in coeffs]

        def fn(pts):
            out = coeffs[0] * sols[0].values(pts)
            for c, s in zip(coeffs[1:], sols[1:]):
                out = out + c * s.values(pts)
            return out

        return cls(chart, fn, label or "combo(" + ", ".join(s.label for s in sols) + ")")

    def __repr__(self):
        return f"WeightedSolution({self.label!r}, weight {self.weight:g})"


def pullback_sol(phi: Diffeomorphism, sol: WeightedSolution, p) -> np.ndarray:
    """(phi*sigma)(p) = |det J|^{2/(n+1)} J^{-1} sigma(phi(p)) J^{-T}."""
    return pullback_sol_batch(phi, sol, _as_rows(p))[0]


def pullback_sol_batch(phi: Diffeomorphism, sol: WeightedSolution, pts) -> np.ndarray:
    pts = _as_rows(pts)
    J = jacobian_batch(phi, pts)
    det = np.linalg.det(J)
    if np.any(np.abs(det) < 1e-12):
        raise MetrizationError(f"map {phi.label!r}: singular Jacobian in pullback")
    S = sol.values(apply_map(phi, pts))
    Jinv = np.linalg.inv(J)
    w = np.abs(det) ** sol.weight
    return w[:, None, None] * np.einsum("mia,mab,mjb->mij", Jinv, S, Jinv)


@dataclass
class SolBasis:
    """Ordered solution pair spanning the modeled solution space."""

    sigma: WeightedSolution
    sigma_bar: WeightedSolution

    def independence_residual(self, pts) -> float:
        """Relative misfit of the best single constant c in sigma_bar = c*sigma."""
        a = self.sigma.values(pts).ravel()
        b = self.sigma_bar.values(pts).ravel()
        c = float(a @ b) / max(float(a @ a), 1e-300)
        return float(np.abs(b - c * a).max() / max(np.abs(b).max(), 1e-300))

    def check_independence(self, pts, tol: float = 1e-8) -> None:
        r = self.independence_residual(pts)
        if r <= tol:
            raise BasisError(f"basis solutions are pointwise dependent (residual {r:g})")


def benenti_tensor(sigma, sigma_bar, p=None) -> np.ndarray:
    """Comparison (1,1)-tensor L = sigma^{-1} sigma_bar at a point.

    Accepts either two WeightedSolutions with a point, or two plain matrices.
    """
    if isinstance(sigma, WeightedSolution):
        S = sigma.value(p)
        Sb = sigma_bar.value(p)
    else:
        S, Sb = np.asarray(sigma, dtype=float), np.asarray(sigma_bar, dtype=float)
    try:
        return np.linalg.solve(S, Sb)
    except np.linalg.LinAlgError:
        raise DegenerateSolutionError("sigma is singular at the requested point") from None


def benenti_from_metrics(g: MetricField, g_bar: MetricField, p) -> np.ndarray:
    """|det g_bar / det g|^{1/(n+1)} g_bar^{-1} g — the metric-side formula."""
    G = metric_values(g, p)[0]
    Gb = metric_values(g_bar, p)[0]
    n = G.shape[0]
    ratio = abs(np.linalg.det(Gb) / np.linalg.det(G)) ** (1.0 / (n + 1))
    return ratio * np.linalg.solve(Gb, G)


def simultaneous_diag(sigma: np.ndarray, sigma_bar: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Congruence basis B with B^T sigma B = I and B^T sigma_bar B = diag(s).

    sigma must be positive definite; computed via Cholesky sigma = L L^T and
    the symmetric eigendecomposition of L^{-1} sigma_bar L^{-T}.  The s_i
    are returned ascending.
    """
    sigma = np.asarray(sigma, dtype=float)
    sigma_bar = np.asarray(sigma_bar, dtype=float)
    try:
        L = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        raise MetrizationError("sigma is not positive definite") from None
    Linv = np.linalg.inv(L)
    M = Linv @ sigma_bar @ Linv.T
    M = 0.5 * (M + M.T)
    s, Q = np.linalg.eigh(M)  # ascending
    B = Linv.T @ Q
    return s, B
