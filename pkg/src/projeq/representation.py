"""The 2x2 action of projective maps on a solution-space basis.

A map phi acts on a solution basis (sigma, sigma_bar) by pullback; when the
pullbacks stay in the span, the action is a 2x2 matrix A_phi, fitted here by
one joint least squares over all flattened solution components at all sample
points.  Row convention: the rows of A are the coefficients of phi*sigma and
phi*sigma_bar in the basis (sigma, sigma_bar), so composition reverses
order: A_{psi o phi} = A_phi A_psi.  Classification of A is by determinant
sign and scaled normal form (planar rotation for det > 0, planar reflection
for det < 0); the positivity search over powers of a rotation-type action
and the determinant-sign counting live here as well.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .charts import Diffeomorphism, _as_rows, compose_maps
from .metrization import BasisError, SolBasis, pullback_sol_batch

ROW_CONVENTION = (
    "rows of A are coefficients of (phi*sigma, phi*sigma_bar) in the basis "
    "(sigma, sigma_bar); composition reverses order: A_[psi o phi] = A_phi A_psi"
)


class RepresentationError(ValueError):
    pass


@dataclass
class RepMatrix:
    """Fitted 2x2 action with its least-squares fit residual.

    A small residual certifies that both pullbacks stay in the basis span at
    sampled resolution (the operative content of the action being a single
    constant matrix).
    """

    matrix: np.ndarray  # (2, 2)
    fit_residual: float
    det: float
    n_samples: int


@dataclass
class RepClass:
    """Normal-form classification of a 2x2 action.

    kind: identity | rotation-type | reflection-type | real-diagonalizable.
    C is the positive scale sqrt(|det|); alpha the normal-form angle in
    (-pi, pi].  rotation-type: C*[[cos a, sin a], [-sin a, cos a]] (det > 0);
    reflection-type: C*[[cos a, sin a], [sin a, -cos a]] (det < 0,
    eigenvalues +-C).
    """

    kind: str
    C: float
    alpha: float
    det: float
    eigenvalues: tuple[complex, complex]


def compute_rep(phi: Diffeomorphism, basis: SolBasis, pts) -> RepMatrix:
    """Fit A_phi over the sample points by joint linear least squares."""
    pts = _as_rows(pts)
    if pts.shape[0] < 3:
        raise RepresentationError("need at least 3 sample points")
    n = basis.sigma.chart.dim
    iu, ju = np.triu_indices(n)

    def flat(values):
        return values[:, iu, ju].ravel()

    col_s = flat(basis.sigma.values(pts))
    col_b = flat(basis.sigma_bar.values(pts))
    design = np.column_stack([col_s, col_b])
    sv = np.linalg.svd(design, compute_uv=False)
    if sv[-1] <= 1e-10 * sv[0]:
        raise BasisError("rank-deficient design matrix: basis solutions dependent at samples")
    y_s = flat(pullback_sol_batch(phi, basis.sigma, pts))
    y_b = flat(pullback_sol_batch(phi, basis.sigma_bar, pts))
    A = np.empty((2, 2))
    resid = 0.0
    for row, y in enumerate((y_s, y_b)):
        coef, *_ = np.linalg.lstsq(design, y, rcond=None)
        A[row] = coef
        scale = max(float(np.abs(y).max()), 1e-300)
        resid = max(resid, float(np.abs(design @ coef - y).max()) / scale)
    return RepMatrix(matrix=A, fit_residual=resid, det=float(np.linalg.det(A)),
                     n_samples=pts.shape[0])


def rep_compose_check(phi: Diffeomorphism, psi: Diffeomorphism, basis: SolBasis, pts) -> float:
    """||A_{psi o phi} - A_phi A_psi||_max over the fitted actions."""
    A_phi = compute_rep(phi, basis, pts).matrix
    A_psi = compute_rep(psi, basis, pts).matrix
    A_comp = compute_rep(compose_maps(psi, phi), basis, pts).matrix
    return float(np.abs(A_comp - A_phi @ A_psi).max())


def classify_rep(A, tol: float = 1e-8) -> RepClass:
    """Classify a 2x2 action by determinant sign and scaled normal form.

    The tests use conjugation invariants (determinant, trace, discriminant)
    so the reported kind is stable under a change of solution basis; the
    angle alpha is read from the matrix itself and is basis-dependent.
    """
    if isinstance(A, RepMatrix):
        A = A.matrix
    A = np.asarray(A, dtype=float)
    det = float(np.linalg.det(A))
    scale = max(float(np.abs(A).max()), 1.0)
    if abs(det) <= tol * scale * scale:
        raise RepresentationError(f"degenerate action matrix (det {det:g})")
    C = math.sqrt(abs(det))
    tr = float(A[0, 0] + A[1, 1])
    eig = tuple(np.linalg.eigvals(A))
    if det > 0.0:
        if np.abs(A - np.eye(2)).max() <= tol:
            return RepClass("identity", 1.0, 0.0, det, eig)
        disc = tr * tr - 4.0 * det
        if disc < tol * scale * scale:
            # nonreal eigenvalues C e^{+-i alpha}, or A ~ (tr/2) I when disc ~ 0
            if disc > -tol * scale * scale and np.abs(A - (tr / 2.0) * np.eye(2)).max() > tol * scale:
                return RepClass("real-diagonalizable", C, 0.0, det, eig)
            cosa = min(1.0, max(-1.0, tr / (2.0 * C)))
            alpha = math.acos(cosa)
            if A[0, 1] - A[1, 0] < 0.0:
                alpha = -alpha
            return RepClass("rotation-type", C, alpha, det, eig)
        return RepClass("real-diagonalizable", C, 0.0, det, eig)
    # det < 0: real eigenvalues of opposite sign; the reflection normal form
    # C*[[cos a, sin a],[sin a, -cos a]] requires them to be +-C (trace 0)
    if abs(tr) <= tol * scale:
        alpha = math.atan2(A[0, 1] + A[1, 0], A[0, 0] - A[1, 1])
        return RepClass("reflection-type", C, alpha, det, eig)
    return RepClass("real-diagonalizable", C, 0.0, det, eig)


def eigen_sequence(C: float, alpha: float, s: Sequence[float], k: int) -> np.ndarray:
    """Eigenvalues C^k (cos k*alpha + s_i sin k*alpha) of the k-th pullback
    iterate against the simultaneous-diagonalization spectrum s."""
    if C <= 0.0:
        raise RepresentationError("C must be positive")
    if k < 0 or k != int(k):
        raise RepresentationError("k must be a nonnegative integer")
    s = np.asarray(s, dtype=float)
    return (C ** k) * (math.cos(k * alpha) + s * math.sin(k * alpha))


def pullback_iterate_eigenvalues(A, s: Sequence[float], k: int) -> np.ndarray:
    """Eigenvalues of sigma^{-1} ((phi^k)* sigma) from the action matrix.

    In the basis where sigma = I and sigma_bar = diag(s), the k-th iterate's
    eigenvalues are (A^k)_00 + s_i (A^k)_01; matches eigen_sequence at k = 1
    for both normal forms.
    """
    if isinstance(A, RepMatrix):
        A = A.matrix
    Ak = np.linalg.matrix_power(np.asarray(A, dtype=float), int(k))
    s = np.asarray(s, dtype=float)
    return Ak[0, 0] + s * Ak[0, 1]


def reduced_angle(alpha: float) -> float:
    """Fold alpha into [0, pi] using the (alpha, s) -> (2 pi - alpha, -s) symmetry."""
    a = math.fmod(alpha, 2.0 * math.pi)
    if a < 0.0:
        a += 2.0 * math.pi
    if a > math.pi:
        a = 2.0 * math.pi - a
    return a


def violation_bound(alpha: float) -> int:
    """Search bound ceil(2 pi / alpha_red) + 1: consecutive angles step by
    alpha_red <= pi while the nonpositive arc of the first coordinate has
    length pi, so a violating power occurs within one full turn."""
    a = reduced_angle(alpha)
    if a == 0.0:
        raise RepresentationError("no violation bound for the identity rotation")
    return int(math.ceil(2.0 * math.pi / a)) + 1


def find_violating_k(alpha: float, s: float, k_max: int = 10**6,
                     tol_angle: float = 1e-12) -> int | None:
    """Smallest k in [1, k_max] with cos(k alpha) + s sin(k alpha) <= 0.

    Returns None for (near-)identity rotations (alpha_red < tol_angle),
    where every term equals 1.  For alpha_red > 0 a violation exists within
    violation_bound(alpha), so the scan never needs to run past it.
    """
    if k_max < 1:
        raise RepresentationError("k_max must be >= 1")
    a = reduced_angle(alpha)
    if a < tol_angle:
        return None
    limit = min(int(k_max), violation_bound(alpha))
    ks = np.arange(1, limit + 1)
    vals = np.cos(ks * alpha) + s * np.sin(ks * alpha)
    hits = np.flatnonzero(vals <= 0.0)
    if hits.size == 0:
        return None
    return int(ks[hits[0]])


@dataclass
class QuotientEntry:
    """One classified map feeding the counting conclusion."""

    label: str
    rep: RepClass
    s_spectrum: np.ndarray | None = None


def quotient_conclusion(entries: Sequence[QuotientEntry], k_max: int = 10**6) -> dict:
    """Determinant-sign counting and positivity analysis over classified maps.

    Emits: pairwise products of reflection-type determinants (all positive,
    so nonisometric classes merge and the two-class bound is consistent);
    positivity contradictions for nonidentity rotation-type entries with an
    attached spectrum (via find_violating_k); and homothety-impossible flags
    for rotation-type entries with C != 1.
    """
    report: dict = {
        "row_convention": ROW_CONVENTION,
        "entries": [],
        "reflection_pairs": [],
        "positivity_contradictions": [],
        "homothety_impossible": [],
    }
    reflections = []
    contradictions = []
    for e in entries:
        report["entries"].append({
            "label": e.label,
            "kind": e.rep.kind,
            "det": e.rep.det,
            "C": e.rep.C,
            "alpha": e.rep.alpha,
        })
        if e.rep.kind == "reflection-type":
            reflections.append(e)
        if e.rep.kind == "rotation-type":
            if abs(e.rep.C - 1.0) > 1e-8:
                report["homothety_impossible"].append({
                    "label": e.label,
                    "C": e.rep.C,
                    "note": "nontrivial homothety impossible on a closed manifold",
                })
            if e.s_spectrum is not None and reduced_angle(e.rep.alpha) > 1e-10:
                found = None
                for s in np.asarray(e.s_spectrum, dtype=float):
                    k = find_violating_k(e.rep.alpha, float(s), k_max=k_max)
                    if k is not None and (found is None or k < found[0]):
                        found = (k, float(s))
                if found is not None:
                    k, s = found
                    value = float(eigen_sequence(e.rep.C, e.rep.alpha, [s], k)[0])
                    entry = {
                        "label": e.label,
                        "k": k,
                        "s": s,
                        "value": value,
                        "note": "pullback iterate acquires a nonpositive eigenvalue, "
                                "contradicting positive definiteness",
                    }
                    report["positivity_contradictions"].append(entry)
                    contradictions.append(entry)
    for i in range(len(reflections)):
        for j in range(i, len(reflections)):
            a, b = reflections[i], reflections[j]
            prod = a.rep.det * b.rep.det
            report["reflection_pairs"].append({
                "pair": [a.label, b.label],
                "product_det": prod,
                "composition_is_isometry_candidate": bool(prod > 0),
            })
    if contradictions:
        report["verdict"] = "positivity contradiction"
    elif reflections:
        consistent = all(p["product_det"] > 0 for p in report["reflection_pairs"])
        report["verdict"] = "bound <= 2 consistent" if consistent else "inconsistent"
        report["bound"] = 2
    elif all(x["kind"] == "identity" for x in report["entries"]):
        report["verdict"] = "all maps isometries at rep level"
    else:
        report["verdict"] = "no determinant-sign counting applicable"
    return report
