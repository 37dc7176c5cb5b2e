"""Coordinate charts, metric fields, and diffeomorphisms.

A chart is a single global coordinate box whose coordinates are either
periodic (period 1, canonical range [0, 1)) or open intervals.  Metric
components and map components are expressions over the chart coordinates;
first-derivative jets and Jacobians come from the dual-number core, so
Christoffel symbols downstream need no finite differencing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import core
from .expr import (
    Expr,
    Num,
    Var,
    compile_program,
    derivative,
    free_vars,
    parse,
    serialize,
    substitute,
)

MAX_DIM = 8


class ChartError(ValueError):
    pass


@dataclass(frozen=True)
class Chart:
    """Coordinate box: names plus per-coordinate kind.

    kinds[i] is "periodic" (period 1) or "open"; bounds[i] is (lo, hi) for
    open coordinates and (0.0, 1.0) for periodic ones.
    """

    names: tuple[str, ...]
    kinds: tuple[str, ...]
    bounds: tuple[tuple[float, float], ...]

    def __post_init__(self):
        n = len(self.names)
        if n < 2:
            raise ChartError("charts need dimension >= 2")
        if n > MAX_DIM:
            raise ChartError(f"charts support dimension <= {MAX_DIM}")
        if len(set(self.names)) != n or len(self.kinds) != n or len(self.bounds) != n:
            raise ChartError("names/kinds/bounds mismatch")
        for kind, (lo, hi) in zip(self.kinds, self.bounds):
            if kind not in ("periodic", "open"):
                raise ChartError(f"unknown coordinate kind {kind!r}")
            if kind == "open" and not lo < hi:
                raise ChartError(f"empty open interval ({lo}, {hi})")

    @property
    def dim(self) -> int:
        return len(self.names)

    @property
    def periodic_mask(self) -> np.ndarray:
        return np.array([k == "periodic" for k in self.kinds], dtype=np.uint8)

    @property
    def lo(self) -> np.ndarray:
        return np.array([b[0] for b in self.bounds])

    @property
    def hi(self) -> np.ndarray:
        return np.array([b[1] for b in self.bounds])

    @classmethod
    def torus(cls, names: Sequence[str]) -> "Chart":
        names = tuple(names)
        return cls(names, ("periodic",) * len(names), ((0.0, 1.0),) * len(names))

    @classmethod
    def box(cls, names: Sequence[str], bounds: Sequence[tuple[float, float]]) -> "Chart":
        names = tuple(names)
        return cls(names, ("open",) * len(names), tuple((float(a), float(b)) for a, b in bounds))


@dataclass(frozen=True)
class Point:
    """Chart point with canonical coordinates."""

    coords: tuple[float, ...]

    @property
    def array(self) -> np.ndarray:
        return np.array(self.coords)


def canonicalize(chart: Chart, raw) -> Point:
    """Reduce periodic entries mod 1 into [0, 1); validate open entries."""
    raw = np.asarray(raw, dtype=float)
    if raw.shape != (chart.dim,):
        raise ChartError(f"expected {chart.dim} coordinates, got shape {raw.shape}")
    if not np.isfinite(raw).all():
        raise ChartError(f"non-finite coordinates {raw.tolist()}")
    out = []
    for value, kind, (lo, hi) in zip(raw, chart.kinds, chart.bounds):
        if kind == "periodic":
            out.append(float(value % 1.0))
        else:
            if not lo < value < hi:
                raise ChartError(f"open coordinate {value} outside ({lo}, {hi})")
            out.append(float(value))
    return Point(tuple(out))


def wrap_rows(chart: Chart, pts: np.ndarray) -> np.ndarray:
    """Canonicalize a batch of coordinate rows (no open-interval validation)."""
    pts = np.array(pts, dtype=float)
    mask = chart.periodic_mask.astype(bool)
    pts[:, mask] %= 1.0
    return pts


def _as_rows(p) -> np.ndarray:
    if isinstance(p, Point):
        return p.array[None, :]
    a = np.asarray(p, dtype=float)
    return a[None, :] if a.ndim == 1 else a


def _coerce_expr(e, names) -> Expr:
    if isinstance(e, str):
        return parse(e, variables=names)
    extra = free_vars(e) - set(names)
    if extra:
        raise ChartError(f"expression uses unknown coordinates {sorted(extra)}")
    return e


def _periodicity_probes(chart: Chart, coord: int) -> list[tuple[np.ndarray, np.ndarray]]:
    # three deterministic probe pairs differing by one period in `coord`
    probes = []
    for t in (0.15, 0.45, 0.85):
        base = np.empty(chart.dim)
        for j, (kind, (lo, hi)) in enumerate(zip(chart.kinds, chart.bounds)):
            base[j] = t if kind == "periodic" else lo + t * (hi - lo)
        shifted = base.copy()
        base[coord] = 0.0
        shifted[coord] = 1.0
        probes.append((base, shifted))
    return probes


class MetricField:
    """Expression-defined symmetric (0,2)-tensor field on a chart.

    The upper triangle is authoritative; the evaluated matrix mirrors it, so
    symmetry is exact.  metric_id names the field in traces and reports.
    """

    def __init__(self, chart: Chart, components, signature: str = "riemannian",
                 metric_id: str = "g", check_periodic: bool = True):
        if signature not in ("riemannian", "indefinite"):
            raise ChartError(f"unknown signature tag {signature!r}")
        self.chart = chart
        self.signature = signature
        self.metric_id = metric_id
        n = chart.dim
        grid = [[None] * n for _ in range(n)]
        if isinstance(components, Mapping):
            for (i, j), e in components.items():
                if not 0 <= i <= j < n:
                    raise ChartError(f"component index ({i}, {j}) is not upper-triangular")
                grid[i][j] = _coerce_expr(e, chart.names)
            for i in range(n):
                for j in range(i, n):
                    if grid[i][j] is None:
                        grid[i][j] = Num(0.0)
        else:
            rows = list(components)
            if len(rows) != n:
                raise ChartError(f"expected {n} rows of components")
            for i in range(n):
                for j in range(i, n):
                    grid[i][j] = _coerce_expr(rows[i][j], chart.names)
        self.components: tuple[tuple[Expr, ...], ...] = tuple(
            tuple(grid[i][j] if i <= j else grid[j][i] for j in range(n)) for i in range(n)
        )
        upper = [self.components[i][j] for i in range(n) for j in range(i, n)]
        self.program = compile_program(upper, chart.names)
        if check_periodic:
            self._check_periodicity()
        if signature == "riemannian":
            self._check_spd_probes()

    def _check_periodicity(self, tol: float = 1e-9):
        for c, kind in enumerate(self.chart.kinds):
            if kind != "periodic":
                continue
            for base, shifted in _periodicity_probes(self.chart, c):
                a, _ = core.eval_program(self.program, base[None, :], want_grad=False)
                b, _ = core.eval_program(self.program, shifted[None, :], want_grad=False)
                gap = np.abs(a - b).max()
                if gap > tol:
                    raise ChartError(
                        f"metric {self.metric_id!r} is not 1-periodic in "
                        f"{self.chart.names[c]!r} (component gap {gap:g})"
                    )

    def _check_spd_probes(self):
        pts = sample_points(self.chart, 8, seed=7)
        G = metric_values(self, pts)
        for i, M in enumerate(G):
            try:
                np.linalg.cholesky(M)
            except np.linalg.LinAlgError:
                raise ChartError(
                    f"metric {self.metric_id!r} tagged riemannian but not positive "
                    f"definite at {pts[i].tolist()}"
                ) from None

    def __repr__(self):
        return f"MetricField({self.metric_id!r}, dim {self.chart.dim}, {self.signature})"


def _mirror(vals: np.ndarray, n: int) -> np.ndarray:
    iu, ju = np.triu_indices(n)
    G = np.empty(vals.shape[:-1] + (n, n))
    G[..., iu, ju] = vals
    G[..., ju, iu] = vals
    return G


def metric_values(g: MetricField, pts) -> np.ndarray:
    """Evaluate g at rows of pts; returns (m, n, n), exactly symmetric."""
    pts = _as_rows(pts)
    vals, _ = core.eval_program(g.program, pts, want_grad=False)
    if not np.isfinite(vals).all():
        raise ChartError(f"metric {g.metric_id!r} evaluated to a non-finite component")
    return _mirror(vals, g.chart.dim)


def metric_jet(g: MetricField, p) -> tuple[np.ndarray, np.ndarray]:
    """Metric matrix and its coordinate derivatives at one point.

    Returns (G (n,n), dG (n,n,n)) with dG[k] = d g / d x^k; one dual-number
    evaluation per component supplies all partials at once.
    """
    G, dG = metric_jet_batch(g, _as_rows(p))
    return G[0], dG[0]


def metric_jet_batch(g: MetricField, pts) -> tuple[np.ndarray, np.ndarray]:
    pts = _as_rows(pts)
    n = g.chart.dim
    vals, grads = core.eval_program(g.program, pts, want_grad=True)
    if not (np.isfinite(vals).all() and np.isfinite(grads).all()):
        raise ChartError(f"metric {g.metric_id!r} jet has a non-finite entry")
    G = _mirror(vals, n)
    dG = _mirror(np.moveaxis(grads, 2, 1), n)  # (m, k, i, j)
    return G, dG


class Diffeomorphism:
    """Point map on a chart, defined by n component expressions.

    The Jacobian comes from dual evaluation of the components.  For
    expression-level pullbacks the symbolic Jacobian (first derivatives of
    the components) is built on demand.  On periodic charts a component may
    shift by an integer over one period (a torus map must only be
    well-defined mod 1).
    """

    def __init__(self, chart: Chart, exprs, inverse_exprs=None, label: str = "map",
                 check: bool = True):
        self.chart = chart
        self.label = label
        n = chart.dim
        exprs = list(exprs)
        if len(exprs) != n:
            raise ChartError(f"expected {n} component maps")
        self.exprs: tuple[Expr, ...] = tuple(_coerce_expr(e, chart.names) for e in exprs)
        self.program = compile_program(self.exprs, chart.names)
        self.inverse_exprs: tuple[Expr, ...] | None = None
        if inverse_exprs is not None:
            inverse_exprs = list(inverse_exprs)
            if len(inverse_exprs) != n:
                raise ChartError(f"expected {n} inverse component maps")
            self.inverse_exprs = tuple(_coerce_expr(e, chart.names) for e in inverse_exprs)
            self.inverse_program = compile_program(self.inverse_exprs, chart.names)
        self._jac_exprs: tuple[tuple[Expr, ...], ...] | None = None
        self.orientation = "unknown"
        if check:
            self._check()

    def _check(self, tol_inv: float = 1e-10, tol_det: float = 1e-12):
        chart = self.chart
        pts = sample_points(chart, 8, seed=11)
        J = jacobian_batch(self, pts)
        dets = np.linalg.det(J)
        if np.abs(dets).min() < tol_det:
            raise ChartError(f"map {self.label!r} has a singular Jacobian on probe points")
        self.orientation = "preserving" if dets.min() > 0 else ("reversing" if dets.max() < 0 else "mixed")
        for c, kind in enumerate(chart.kinds):
            if kind != "periodic":
                continue
            for base, shifted in _periodicity_probes(chart, c):
                a, _ = core.eval_program(self.program, base[None, :], want_grad=False)
                b, _ = core.eval_program(self.program, shifted[None, :], want_grad=False)
                gap = b - a
                if np.abs(gap - np.round(gap)).max() > 1e-9:
                    raise ChartError(
                        f"map {self.label!r} is not well-defined mod 1 in {chart.names[c]!r}"
                    )
        if self.inverse_exprs is not None:
            img = apply_map(self, pts)
            back = np.empty_like(img)
            vals, _ = core.eval_program(self.inverse_program, img, want_grad=False)
            back[:] = vals
            diff = back - pts
            mask = chart.periodic_mask.astype(bool)
            diff[:, mask] -= np.round(diff[:, mask])
            if np.abs(diff).max() > tol_inv:
                raise ChartError(
                    f"map {self.label!r}: inverse round-trip off by {np.abs(diff).max():g}"
                )

    @property
    def jacobian_exprs(self) -> tuple[tuple[Expr, ...], ...]:
        if self._jac_exprs is None:
            names = self.chart.names
            self._jac_exprs = tuple(
                tuple(derivative(e, v) for v in names) for e in self.exprs
            )
        return self._jac_exprs

    def __repr__(self):
        comps = ", ".join(serialize(e) for e in self.exprs)
        return f"Diffeomorphism({self.label!r}: {comps})"


def identity_map(chart: Chart, label: str = "identity") -> Diffeomorphism:
    names = [Var(n) for n in chart.names]
    return Diffeomorphism(chart, names, inverse_exprs=names, label=label)


def apply_map(phi: Diffeomorphism, pts) -> np.ndarray:
    """Image coordinates (not canonicalized) at rows of pts."""
    pts = _as_rows(pts)
    vals, _ = core.eval_program(phi.program, pts, want_grad=False)
    return vals


def jacobian(phi: Diffeomorphism, p) -> np.ndarray:
    """J[i, a] = d phi^i / d x^a at p; raises on |det J| < 1e-12."""
    J = jacobian_batch(phi, _as_rows(p))[0]
    if abs(np.linalg.det(J)) < 1e-12:
        raise ChartError(f"map {phi.label!r}: singular Jacobian at {p}")
    return J


def jacobian_batch(phi: Diffeomorphism, pts) -> np.ndarray:
    pts = _as_rows(pts)
    _, grads = core.eval_program(phi.program, pts, want_grad=True)
    return grads  # (m, i, a)


def pullback_metric(phi: Diffeomorphism, g: MetricField, p) -> np.ndarray:
    """(phi*g)_ab(p) = J^i_a J^j_b g_ij(phi(p)) for a single point."""
    return pullback_metric_batch(phi, g, _as_rows(p))[0]


def pullback_metric_batch(phi: Diffeomorphism, g: MetricField, pts) -> np.ndarray:
    pts = _as_rows(pts)
    J = jacobian_batch(phi, pts)
    G = metric_values(g, apply_map(phi, pts))
    return np.einsum("mia,mij,mjb->mab", J, G, J)


def pullback_metric_field(phi: Diffeomorphism, g: MetricField, metric_id: str | None = None) -> MetricField:
    """phi*g as an expression-defined metric field.

    Components are built from the symbolic Jacobian and composed metric
    components, so downstream jets (hence Christoffel symbols of the
    pullback) are dual-exact.
    """
    n = g.chart.dim
    mapping = dict(zip(g.chart.names, phi.exprs))
    Jx = phi.jacobian_exprs
    comps = {}
    for a in range(n):
        for b in range(a, n):
            terms = []
            for i in range(n):
                for j in range(n):
                    gij = g.components[i][j]
                    if isinstance(gij, Num) and gij.value == 0.0:
                        continue
                    factor = _expr_mul(Jx[i][a], Jx[j][b])
                    if factor is None:
                        continue
                    composed = substitute(gij, mapping)
                    term = _expr_mul(factor, composed)
                    if term is not None:
                        terms.append(term)
            comps[(a, b)] = _expr_sum(terms)
    return MetricField(g.chart, comps, signature=g.signature,
                       metric_id=metric_id or f"{phi.label}*{g.metric_id}",
                       check_periodic=False)


def _expr_mul(a: Expr, b: Expr) -> Expr | None:
    # None encodes a structural zero
    for e in (a, b):
        if isinstance(e, Num) and e.value == 0.0:
            return None
    if isinstance(a, Num) and a.value == 1.0:
        return b
    if isinstance(b, Num) and b.value == 1.0:
        return a
    from .expr import BinOp

    return BinOp("*", a, b)


def _expr_sum(terms: list[Expr]) -> Expr:
    if not terms:
        return Num(0.0)
    from .expr import BinOp

    out = terms[0]
    for t in terms[1:]:
        out = BinOp("+", out, t)
    return out


def compose_maps(outer: Diffeomorphism, inner: Diffeomorphism, label: str | None = None) -> Diffeomorphism:
    """outer after inner: (outer . inner)(x) = outer(inner(x))."""
    if outer.chart is not inner.chart and outer.chart != inner.chart:
        raise ChartError("maps live on different charts")
    names = outer.chart.names
    inner_map = dict(zip(names, inner.exprs))
    exprs = [substitute(e, inner_map) for e in outer.exprs]
    inverse = None
    if outer.inverse_exprs is not None and inner.inverse_exprs is not None:
        outer_inv_map = dict(zip(names, outer.inverse_exprs))
        inverse = [substitute(e, outer_inv_map) for e in inner.inverse_exprs]
    return Diffeomorphism(outer.chart, exprs, inverse_exprs=inverse,
                          label=label or f"{outer.label}.{inner.label}")


def inverse_map(phi: Diffeomorphism, label: str | None = None) -> Diffeomorphism:
    if phi.inverse_exprs is None:
        raise ChartError(f"map {phi.label!r} carries no inverse")
    return Diffeomorphism(phi.chart, phi.inverse_exprs, inverse_exprs=phi.exprs,
                          label=label or f"{phi.label}^-1")


# --------------------------------------------------------------------------
# Deterministic sampling

_PRIMES = (2, 3, 5, 7, 11, 13, 17, 19)
_GOLDEN = 0.6180339887498949


def sample_points(chart: Chart, count: int, seed: int = 0, margin: float = 0.05,
                  box: Sequence[tuple[float, float]] | None = None) -> np.ndarray:
    """Low-discrepancy deterministic sample of chart points.

    Additive (Kronecker) sequence with per-coordinate irrational strides and
    a seed-derived offset: identical inputs give identical points bit for
    bit.  Open coordinates keep ``margin`` (fraction of width) away from the
    boundary; ``box`` overrides the per-coordinate sampling ranges.
    """
    n = chart.dim
    k = np.arange(1, count + 1)[:, None]
    alpha = np.array([math.sqrt(p) % 1.0 for p in _PRIMES[:n]])
    offset = np.array([(seed + 1) * ((j + 1) * _GOLDEN) % 1.0 for j in range(n)])
    u = (offset[None, :] + k * alpha[None, :]) % 1.0
    pts = np.empty((count, n))
    for j, (kind, (lo, hi)) in enumerate(zip(chart.kinds, chart.bounds)):
        if box is not None:
            blo, bhi = box[j]
            pts[:, j] = blo + u[:, j] * (bhi - blo)
        elif kind == "periodic":
            pts[:, j] = u[:, j]
        else:
            pad = margin * (hi - lo)
            pts[:, j] = lo + pad + u[:, j] * (hi - lo - 2 * pad)
    return pts


def sample_directions(n: int, count: int, seed: int = 0) -> np.ndarray:
    """Deterministic unit directions (euclidean norm 1) in R^n."""
    k = np.arange(1, count + 1)[:, None]
    alpha = np.array([math.sqrt(p) % 1.0 for p in _PRIMES[:n]])
    offset = np.array([(seed + 3) * ((j + 2) * _GOLDEN) % 1.0 for j in range(n)])
    u = (offset[None, :] + k * alpha[None, :]) % 1.0
    v = 2.0 * u - 1.0
    norms = np.linalg.norm(v, axis=1)
    # the sequence never lands at the origin for these strides; guard anyway
    norms[norms < 1e-9] = 1.0
    return v / norms[:, None]


def check_riemannian(g: MetricField, pts) -> None:
    """Cholesky at every row of pts; raises ChartError on failure."""
    G = metric_values(g, pts)
    for i, M in enumerate(G):
        try:
            np.linalg.cholesky(M)
        except np.linalg.LinAlgError:
            raise ChartError(
                f"metric {g.metric_id!r} not positive definite at {np.asarray(pts)[i].tolist()}"
            ) from None
