"""Pure-Python (numpy) core: tape evaluation and geodesic RK4.

Semantics are kept instruction-for-instruction identical to the compiled
core in ``_fastcore.pyx``; both are exercised by the same tests and the
benchmark in ``benchmarks/``.  Batching is over evaluation points (or
geodesic shots), with each tape instruction applied vectorized.
"""

from __future__ import annotations

import numpy as np

from ..expr import (
    OP_ABS,
    OP_ADD,
    OP_CONST,
    OP_COS,
    OP_DIV,
    OP_EXP,
    OP_LOG,
    OP_MUL,
    OP_NEG,
    OP_OUT,
    OP_POW,
    OP_SIN,
    OP_SQRT,
    OP_SUB,
    OP_VAR,
    STATUS_DIV_ZERO,
    STATUS_LOG_DOMAIN,
    STATUS_POW_DOMAIN,
    STATUS_SQRT_DOMAIN,
)

# geodesic integration statuses
RK_OK = 0
RK_DOMAIN_EXIT = 1
RK_EXPR_ERROR = 2
RK_ENERGY_REJECT = 3


def eval_program_batch(ops, iargs, fargs, max_stack, X, vals, grads, status, errpc, want_grad):
    """Evaluate a tape at each row of ``X``.

    ``vals`` (m, n_out), ``grads`` (m, n_out, n_var), ``status``/``errpc``
    (m,) are filled in place.  On a domain error the offending element keeps
    computing with a sanitized operand so the rest of the batch is unharmed;
    its outputs are NaN and ``status``/``errpc`` identify the first fault.
    """
    m, n_var = X.shape
    sv = np.empty((max_stack, m))
    sg = np.zeros((max_stack, m, n_var)) if want_grad else None
    status[:] = 0
    errpc[:] = -1
    sp = 0

    def flag(mask, code, pc):
        fresh = mask & (status == 0)
        status[fresh] = code
        errpc[fresh] = pc

    for pc in range(len(ops)):
        op = ops[pc]
        if op == OP_CONST:
            sv[sp] = fargs[pc]
            if want_grad:
                sg[sp] = 0.0
            sp += 1
        elif op == OP_VAR:
            k = iargs[pc]
            sv[sp] = X[:, k]
            if want_grad:
                sg[sp] = 0.0
                sg[sp, :, k] = 1.0
            sp += 1
        elif op == OP_ADD:
            sp -= 1
            sv[sp - 1] += sv[sp]
            if want_grad:
                sg[sp - 1] += sg[sp]
        elif op == OP_SUB:
            sp -= 1
            sv[sp - 1] -= sv[sp]
            if want_grad:
                sg[sp - 1] -= sg[sp]
        elif op == OP_MUL:
            sp -= 1
            a = sv[sp - 1].copy()
            sv[sp - 1] *= sv[sp]
            if want_grad:
                sg[sp - 1] *= sv[sp][:, None]
                sg[sp - 1] += a[:, None] * sg[sp]
        elif op == OP_DIV:
            sp -= 1
            b = sv[sp]
            flag(b == 0.0, STATUS_DIV_ZERO, pc)
            b = np.where(b == 0.0, 1.0, b)
            sv[sp - 1] /= b
            if want_grad:
                sg[sp - 1] = (sg[sp - 1] - sv[sp - 1][:, None] * sg[sp]) / b[:, None]
        elif op == OP_NEG:
            sv[sp - 1] = -sv[sp - 1]
            if want_grad:
                sg[sp - 1] = -sg[sp - 1]
        elif op == OP_POW:
            c = fargs[pc]
            v = sv[sp - 1]
            if c == round(c):
                bad = (v == 0.0) & (c < 0.0)
            else:
                bad = (v < 0.0) | ((v == 0.0) & (c <= 1.0))
            flag(bad, STATUS_POW_DOMAIN, pc)
            v = np.where(bad, 1.0, v)
            if c == 0.0:
                sv[sp - 1] = 1.0
                if want_grad:
                    sg[sp - 1] = 0.0
            elif c == 1.0:
                sv[sp - 1] = v
            else:
                sv[sp - 1] = v**c
                if want_grad:
                    with np.errstate(divide="ignore", invalid="ignore"):
                        coef = c * v ** (c - 1.0)
                    coef = np.where(v == 0.0, 0.0, coef)  # only reachable for c > 1
                    sg[sp - 1] *= coef[:, None]
        elif op == OP_SIN:
            if want_grad:
                sg[sp - 1] *= np.cos(sv[sp - 1])[:, None]
            sv[sp - 1] = np.sin(sv[sp - 1])
        elif op == OP_COS:
            if want_grad:
                sg[sp - 1] *= -np.sin(sv[sp - 1])[:, None]
            sv[sp - 1] = np.cos(sv[sp - 1])
        elif op == OP_EXP:
            sv[sp - 1] = np.exp(sv[sp - 1])
            if want_grad:
                sg[sp - 1] *= sv[sp - 1][:, None]
        elif op == OP_LOG:
            v = sv[sp - 1]
            flag(v <= 0.0, STATUS_LOG_DOMAIN, pc)
            v = np.where(v <= 0.0, 1.0, v)
            sv[sp - 1] = np.log(v)
            if want_grad:
                sg[sp - 1] /= v[:, None]
        elif op == OP_SQRT:
            v = sv[sp - 1]
            flag(v <= 0.0, STATUS_SQRT_DOMAIN, pc)
            v = np.where(v <= 0.0, 1.0, v)
            sv[sp - 1] = np.sqrt(v)
            if want_grad:
                sg[sp - 1] /= (2.0 * sv[sp - 1])[:, None]
        elif op == OP_ABS:
            if want_grad:
                sg[sp - 1] *= np.sign(sv[sp - 1])[:, None]
            sv[sp - 1] = np.abs(sv[sp - 1])
        elif op == OP_OUT:
            sp -= 1
            vals[:, iargs[pc]] = sv[sp]
            if want_grad:
                grads[:, iargs[pc]] = sg[sp]
        else:
            raise AssertionError(f"unknown opcode {op}")

    bad = status != 0
    if bad.any():
        vals[bad] = np.nan
        if want_grad:
            grads[bad] = np.nan


def _metric_jet(ops, iargs, fargs, max_stack, n, X):
    """Symmetric metric matrices and their coordinate derivatives at X.

    Returns (G (m,n,n), dG (m,n,n,n) with dG[:,k,i,j] = d_k g_ij, ok (m,)).
    """
    m = X.shape[0]
    ncomp = n * (n + 1) // 2
    vals = np.empty((m, ncomp))
    grads = np.empty((m, ncomp, n))
    status = np.empty(m, dtype=np.int32)
    errpc = np.empty(m, dtype=np.int32)
    eval_program_batch(ops, iargs, fargs, max_stack, X, vals, grads, status, errpc, True)
    iu, ju = np.triu_indices(n)
    G = np.empty((m, n, n))
    G[:, iu, ju] = vals
    G[:, ju, iu] = vals
    dG = np.empty((m, n, n, n))
    gt = np.moveaxis(grads, 2, 1)  # (m, n_var, ncomp)
    dG[:, :, iu, ju] = gt
    dG[:, :, ju, iu] = gt
    ok = (status == 0) & np.isfinite(vals).all(axis=1) & np.isfinite(grads).all(axis=(1, 2))
    return G, dG, ok


def _accel(G, dG, V):
    """Geodesic acceleration -Gamma^i_{jk} v^j v^k from the metric jet."""
    u = np.einsum("mjlk,mj,mk->ml", dG, V, V)
    s = np.einsum("mljk,mj,mk->ml", dG, V, V)
    rhs = u - 0.5 * s
    try:
        sol = np.linalg.solve(G, rhs[..., None])[..., 0]
        ok = np.isfinite(sol).all(axis=1)
    except np.linalg.LinAlgError:
        m = G.shape[0]
        sol = np.full_like(rhs, np.nan)
        ok = np.zeros(m, dtype=bool)
        for i in range(m):
            try:
                sol[i] = np.linalg.solve(G[i], rhs[i])
                ok[i] = np.isfinite(sol[i]).all()
            except np.linalg.LinAlgError:
                pass
    return -sol, ok


def rk4_geodesic_batch(ops, iargs, fargs, max_stack, n, X0, V0, h, steps, periodic, lo, hi, rtol, XS, VS, ES, status, ndone):
    """Classical RK4 for ``x'' = -Gamma(x)(x', x')`` over a batch of shots.

    Periodic coordinates integrate unwrapped; open coordinates truncate the
    trace on exit.  Energy g(v,v) is recorded per step and a drift beyond
    10x ``rtol`` rejects the offending step and stops the shot.
    """
    m = X0.shape[0]
    x = np.array(X0, dtype=float)
    v = np.array(V0, dtype=float)
    status[:] = RK_OK
    ndone[:] = 0
    XS[:] = np.nan
    VS[:] = np.nan
    ES[:] = np.nan
    E0 = np.empty(m)
    active = np.ones(m, dtype=bool)
    open_mask = periodic == 0

    def jet(pts):
        return _metric_jet(ops, iargs, fargs, max_stack, n, pts)

    for k in range(steps + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        xa, va = x[idx], v[idx]
        G, dG, ok = jet(xa)
        if not ok.all():
            bad = idx[~ok]
            status[bad] = RK_EXPR_ERROR
            active[bad] = False
            idx, xa, va, G, dG = idx[ok], xa[ok], va[ok], G[ok], dG[ok]
            if idx.size == 0:
                continue
        E = np.einsum("mij,mi,mj->m", G, va, va)
        if k == 0:
            E0[idx] = E
        else:
            drift = np.abs(E - E0[idx]) / np.maximum(np.abs(E0[idx]), 1e-300)
            rej = drift > 10.0 * rtol
            if rej.any():
                bad = idx[rej]
                status[bad] = RK_ENERGY_REJECT
                active[bad] = False
                keep = ~rej
                idx, xa, va, G, dG, E = idx[keep], xa[keep], va[keep], G[keep], dG[keep], E[keep]
                if idx.size == 0:
                    continue
        XS[idx, k] = xa
        VS[idx, k] = va
        ES[idx, k] = E
        ndone[idx] = k
        if k == steps:
            break

        a1, ok1 = _accel(G, dG, va)
        k1x, k1v = va, a1
        G2, dG2, ok2 = jet(xa + 0.5 * h * k1x)
        a2, ok2b = _accel(G2, dG2, va + 0.5 * h * k1v)
        k2x, k2v = va + 0.5 * h * k1v, a2
        G3, dG3, ok3 = jet(xa + 0.5 * h * k2x)
        a3, ok3b = _accel(G3, dG3, va + 0.5 * h * k2v)
        k3x, k3v = va + 0.5 * h * k2v, a3
        G4, dG4, ok4 = jet(xa + h * k3x)
        a4, ok4b = _accel(G4, dG4, va + h * k3v)
        k4x, k4v = va + h * k3v, a4
        ok_all = ok1 & ok2 & ok2b & ok3 & ok3b & ok4 & ok4b
        x_new = xa + (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        v_new = va + (h / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        ok_all &= np.isfinite(x_new).all(axis=1) & np.isfinite(v_new).all(axis=1)
        if not ok_all.all():
            bad = idx[~ok_all]
            status[bad] = RK_EXPR_ERROR
            active[bad] = False
        if open_mask.any():
            inside = ((x_new[:, open_mask] > lo[open_mask]) & (x_new[:, open_mask] < hi[open_mask])).all(axis=1)
            exited = ok_all & ~inside
            if exited.any():
                bad = idx[exited]
                status[bad] = RK_DOMAIN_EXIT
                active[bad] = False
            ok_all &= inside
        upd = idx[ok_all]
        x[upd] = x_new[ok_all]
        v[upd] = v_new[ok_all]
