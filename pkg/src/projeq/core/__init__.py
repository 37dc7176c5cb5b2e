"""Numeric core with a compiled implementation and a pure-Python fallback.

The compiled extension (``_fastcore``, Cython) is preferred; if it is not
importable, or ``PROJEQ_PURE_PYTHON=1`` is set, the numpy implementation in
``purecore`` is used.  Both expose the same two entry points and identical
semantics; ``benchmarks/bench_cores.py`` compares them.
"""

from __future__ import annotations

import os

import numpy as np

from ..expr import STATUS_MESSAGES, Program, DomainError
from . import purecore
from .purecore import RK_DOMAIN_EXIT, RK_ENERGY_REJECT, RK_EXPR_ERROR, RK_OK

__all__ = [
    "BACKEND",
    "RK_OK",
    "RK_DOMAIN_EXIT",
    "RK_EXPR_ERROR",
    "RK_ENERGY_REJECT",
    "available_backends",
    "eval_program",
    "get_backend",
    "rk4_geodesic",
]


def _load_compiled():
    from . import _fastcore  # noqa: PLC0415

    return _fastcore


if os.environ.get("PROJEQ_PURE_PYTHON", "") not in ("", "0"):
    _impl = purecore
    BACKEND = "pure"
else:
    try:
        _impl = _load_compiled()
        BACKEND = "compiled"
    except ImportError:
        _impl = purecore
        BACKEND = "pure"


def available_backends() -> tuple[str, ...]:
    try:
        _load_compiled()
    except ImportError:
        return ("pure",)
    return ("compiled", "pure")


def get_backend(name: str):
    if name == "pure":
        return purecore
    if name == "compiled":
        return _load_compiled()
    raise ValueError(f"unknown backend {name!r}")


def eval_program(prog: Program, X, want_grad: bool = True, impl=None):
    """Evaluate a compiled tape at each row of X.

    Returns (vals (m, n_out), grads (m, n_out, n_var) or None).  Raises
    :class:`DomainError` naming the first offending point on any domain
    fault; callers that need per-point statuses use the impl directly.
    """
    impl = impl or _impl
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != prog.n_var:
        raise ValueError(f"expected points of shape (m, {prog.n_var})")
    m = X.shape[0]
    vals = np.empty((m, prog.n_out))
    grads = np.empty((m, prog.n_out, prog.n_var))
    status = np.zeros(m, dtype=np.int32)
    errpc = np.full(m, -1, dtype=np.int32)
    impl.eval_program_batch(prog.ops, prog.iargs, prog.fargs, prog.max_stack, X, vals, grads,
                            status, errpc, want_grad)
    if status.any():
        i = int(np.flatnonzero(status)[0])
        msg = STATUS_MESSAGES.get(int(status[i]), "evaluation error")
        raise DomainError(f"{msg} at point {X[i].tolist()} (tape pc {int(errpc[i])})")
    return vals, (grads if want_grad else None)


def rk4_geodesic(prog: Program, X0, V0, h: float, steps: int, periodic, lo, hi,
                 rtol: float, impl=None):
    """Integrate geodesic shots; see purecore.rk4_geodesic_batch for semantics.

    Returns dict with XS (m, steps+1, n), VS, ES, status (m,), ndone (m,).
    """
    impl = impl or _impl
    X0 = np.ascontiguousarray(np.atleast_2d(X0), dtype=np.float64)
    V0 = np.ascontiguousarray(np.atleast_2d(V0), dtype=np.float64)
    m, n = X0.shape
    if prog.n_var != n or prog.n_out != n * (n + 1) // 2:
        raise ValueError("program is not a metric-component tape for this chart")
    XS = np.full((m, steps + 1, n), np.nan)
    VS = np.full((m, steps + 1, n), np.nan)
    ES = np.full((m, steps + 1), np.nan)
    status = np.zeros(m, dtype=np.int32)
    ndone = np.zeros(m, dtype=np.int32)
    impl.rk4_geodesic_batch(prog.ops, prog.iargs, prog.fargs, prog.max_stack, n, X0, V0,
                            float(h), int(steps), np.ascontiguousarray(periodic, dtype=np.uint8),
                            np.ascontiguousarray(lo, dtype=np.float64),
                            np.ascontiguousarray(hi, dtype=np.float64),
                            float(rtol), XS, VS, ES, status, ndone)
    return {"XS": XS, "VS": VS, "ES": ES, "status": status, "ndone": ndone}
