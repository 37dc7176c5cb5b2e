# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled core: tape evaluation and geodesic RK4.

Mirrors ``purecore.py`` instruction for instruction; see that module for the
semantics.  Limits: chart dimension <= 8, tape stack depth <= 128.
"""

from libc.math cimport NAN, cos, exp, fabs, floor, isfinite, log, pow, sin, sqrt

cdef enum:
    OP_CONST = 0
    OP_VAR = 1
    OP_ADD = 2
    OP_SUB = 3
    OP_MUL = 4
    OP_DIV = 5
    OP_NEG = 6
    OP_POW = 7
    OP_SIN = 8
    OP_COS = 9
    OP_EXP = 10
    OP_LOG = 11
    OP_SQRT = 12
    OP_ABS = 13
    OP_OUT = 14

cdef enum:
    STATUS_OK = 0
    STATUS_DIV_ZERO = 1
    STATUS_LOG_DOMAIN = 2
    STATUS_SQRT_DOMAIN = 3
    STATUS_POW_DOMAIN = 4

cdef enum:
    RK_OK = 0
    RK_DOMAIN_EXIT = 1
    RK_EXPR_ERROR = 2
    RK_ENERGY_REJECT = 3

DEF MAXN = 8
DEF MAXSTACK = 128
DEF MAXCOMP = 36  # n*(n+1)/2 for n = 8


cdef int _eval_tape(const int* ops, const int* iargs, const double* fargs, int n_ops,
                    const double* x, int n_var, double* outv, double* outg,
                    bint want_grad, int* err_pc) noexcept nogil:
    cdef double stack[MAXSTACK][MAXN + 1]
    cdef int sp = 0
    cdef int w = n_var + 1 if want_grad else 1
    cdef int pc, k, op, ia
    cdef double fa, a, b, c, val, coef, sgn
    for pc in range(n_ops):
        op = ops[pc]
        ia = iargs[pc]
        fa = fargs[pc]
        if op == OP_CONST:
            stack[sp][0] = fa
            for k in range(1, w):
                stack[sp][k] = 0.0
            sp += 1
        elif op == OP_VAR:
            stack[sp][0] = x[ia]
            for k in range(1, w):
                stack[sp][k] = 0.0
            if want_grad:
                stack[sp][ia + 1] = 1.0
            sp += 1
        elif op == OP_ADD:
            sp -= 1
            for k in range(w):
                stack[sp - 1][k] += stack[sp][k]
        elif op == OP_SUB:
            sp -= 1
            for k in range(w):
                stack[sp - 1][k] -= stack[sp][k]
        elif op == OP_MUL:
            sp -= 1
            a = stack[sp - 1][0]
            b = stack[sp][0]
            stack[sp - 1][0] = a * b
            for k in range(1, w):
                stack[sp - 1][k] = stack[sp - 1][k] * b + a * stack[sp][k]
        elif op == OP_DIV:
            sp -= 1
            b = stack[sp][0]
            if b == 0.0:
                err_pc[0] = pc
                return STATUS_DIV_ZERO
            val = stack[sp - 1][0] / b
            stack[sp - 1][0] = val
            for k in range(1, w):
                stack[sp - 1][k] = (stack[sp - 1][k] - val * stack[sp][k]) / b
        elif op == OP_NEG:
            for k in range(w):
                stack[sp - 1][k] = -stack[sp - 1][k]
        elif op == OP_POW:
            c = fa
            a = stack[sp - 1][0]
            if c == floor(c):
                if a == 0.0 and c < 0.0:
                    err_pc[0] = pc
                    return STATUS_POW_DOMAIN
            else:
                if a < 0.0 or (a == 0.0 and c <= 1.0):
                    err_pc[0] = pc
                    return STATUS_POW_DOMAIN
            if c == 0.0:
                stack[sp - 1][0] = 1.0
                for k in range(1, w):
                    stack[sp - 1][k] = 0.0
            elif c != 1.0:
                stack[sp - 1][0] = pow(a, c)
                if want_grad:
                    coef = 0.0 if a == 0.0 else c * pow(a, c - 1.0)
                    for k in range(1, w):
                        stack[sp - 1][k] *= coef
        elif op == OP_SIN:
            a = stack[sp - 1][0]
            stack[sp - 1][0] = sin(a)
            if want_grad:
                coef = cos(a)
                for k in range(1, w):
                    stack[sp - 1][k] *= coef
        elif op == OP_COS:
            a = stack[sp - 1][0]
            stack[sp - 1][0] = cos(a)
            if want_grad:
                coef = -sin(a)
                for k in range(1, w):
                    stack[sp - 1][k] *= coef
        elif op == OP_EXP:
            val = exp(stack[sp - 1][0])
            stack[sp - 1][0] = val
            for k in range(1, w):
                stack[sp - 1][k] *= val
        elif op == OP_LOG:
            a = stack[sp - 1][0]
            if a <= 0.0:
                err_pc[0] = pc
                return STATUS_LOG_DOMAIN
            stack[sp - 1][0] = log(a)
            for k in range(1, w):
                stack[sp - 1][k] /= a
        elif op == OP_SQRT:
            a = stack[sp - 1][0]
            if a <= 0.0:
                err_pc[0] = pc
                return STATUS_SQRT_DOMAIN
            val = sqrt(a)
            stack[sp - 1][0] = val
            for k in range(1, w):
                stack[sp - 1][k] /= 2.0 * val
        elif op == OP_ABS:
            a = stack[sp - 1][0]
            stack[sp - 1][0] = fabs(a)
            if want_grad:
                sgn = 1.0 if a > 0.0 else (-1.0 if a < 0.0 else 0.0)
                for k in range(1, w):
                    stack[sp - 1][k] *= sgn
        else:  # OP_OUT
            sp -= 1
            outv[ia] = stack[sp][0]
            if want_grad:
                for k in range(n_var):
                    outg[ia * n_var + k] = stack[sp][k + 1]
    return STATUS_OK


def eval_program_batch(int[::1] ops, int[::1] iargs, double[::1] fargs, int max_stack,
                       double[:, ::1] X, double[:, ::1] vals, double[:, :, ::1] grads,
                       int[::1] status, int[::1] errpc, bint want_grad):
    cdef Py_ssize_t m = X.shape[0]
    cdef int n_var = <int> X.shape[1]
    cdef int n_out = <int> vals.shape[1]
    cdef int n_ops = <int> ops.shape[0]
    cdef Py_ssize_t i, j
    cdef int k, st, epc
    if m == 0:
        return
    with nogil:
        for i in range(m):
            epc = -1
            st = _eval_tape(&ops[0], &iargs[0], &fargs[0], n_ops, &X[i, 0], n_var,
                            &vals[i, 0], &grads[i, 0, 0], want_grad, &epc)
            status[i] = st
            errpc[i] = epc
            if st != STATUS_OK:
                for j in range(n_out):
                    vals[i, j] = NAN
                    if want_grad:
                        for k in range(n_var):
                            grads[i, j, k] = NAN


cdef int _metric_jet_pt(const int* ops, const int* iargs, const double* fargs, int n_ops,
                        int n, const double* x, double G[MAXN][MAXN],
                        double dG[MAXN][MAXN][MAXN], int* err_pc) noexcept nogil:
    cdef double compv[MAXCOMP]
    cdef double compg[MAXCOMP * MAXN]
    cdef int st, i, j, k, c
    st = _eval_tape(ops, iargs, fargs, n_ops, x, n, compv, compg, True, err_pc)
    if st != STATUS_OK:
        return st
    c = 0
    for i in range(n):
        for j in range(i, n):
            if not isfinite(compv[c]):
                return STATUS_POW_DOMAIN
            G[i][j] = compv[c]
            G[j][i] = compv[c]
            for k in range(n):
                if not isfinite(compg[c * n + k]):
                    return STATUS_POW_DOMAIN
                dG[k][i][j] = compg[c * n + k]
                dG[k][j][i] = compg[c * n + k]
            c += 1
    return STATUS_OK


cdef int _accel(int n, double G[MAXN][MAXN], double dG[MAXN][MAXN][MAXN],
                const double* v, double* acc) noexcept nogil:
    cdef double rhs[MAXN]
    cdef double A[MAXN][MAXN]
    cdef int l, j, k, col, r, piv, cc
    cdef double u, s, best, f, inv, acc_l
    for l in range(n):
        u = 0.0
        s = 0.0
        for j in range(n):
            for k in range(n):
                u += dG[j][l][k] * v[j] * v[k]
                s += dG[l][j][k] * v[j] * v[k]
        rhs[l] = u - 0.5 * s
    for l in range(n):
        for j in range(n):
            A[l][j] = G[l][j]
    # Gaussian elimination with partial pivoting (n <= 8)
    for col in range(n):
        piv = col
        best = fabs(A[col][col])
        for r in range(col + 1, n):
            if fabs(A[r][col]) > best:
                best = fabs(A[r][col])
                piv = r
        if best == 0.0 or not isfinite(best):
            return 1
        if piv != col:
            for cc in range(n):
                f = A[col][cc]
                A[col][cc] = A[piv][cc]
                A[piv][cc] = f
            f = rhs[col]
            rhs[col] = rhs[piv]
            rhs[piv] = f
        inv = 1.0 / A[col][col]
        for r in range(col + 1, n):
            f = A[r][col] * inv
            for cc in range(col, n):
                A[r][cc] -= f * A[col][cc]
            rhs[r] -= f * rhs[col]
    for col in range(n - 1, -1, -1):
        acc_l = rhs[col]
        for cc in range(col + 1, n):
            acc_l -= A[col][cc] * acc[cc]
        acc[col] = acc_l / A[col][col]
    for col in range(n):
        if not isfinite(acc[col]):
            return 1
        acc[col] = -acc[col]
    return 0


cdef double _energy(int n, double G[MAXN][MAXN], const double* v) noexcept nogil:
    cdef double e = 0.0
    cdef int i, j
    for i in range(n):
        for j in range(n):
            e += G[i][j] * v[i] * v[j]
    return e


cdef void _rk4_one(const int* ops, const int* iargs, const double* fargs, int n_ops, int n,
                   const double* x0, const double* v0, double h, int steps,
                   const unsigned char* periodic, const double* lo, const double* hi,
                   double rtol, double* XS, double* VS, double* ES,
                   int* status_out, int* ndone_out) noexcept nogil:
    cdef double x[MAXN]
    cdef double v[MAXN]
    cdef double xs[MAXN]
    cdef double vs[MAXN]
    cdef double xn[MAXN]
    cdef double vn[MAXN]
    cdef double k1v[MAXN]
    cdef double k2x[MAXN]
    cdef double k2v[MAXN]
    cdef double k3x[MAXN]
    cdef double k3v[MAXN]
    cdef double k4x[MAXN]
    cdef double k4v[MAXN]
    cdef double G[MAXN][MAXN]
    cdef double dG[MAXN][MAXN][MAXN]
    cdef double E0 = 0.0
    cdef double E, drift
    cdef int k, i, st, epc
    cdef bint ok
    for i in range(n):
        x[i] = x0[i]
        v[i] = v0[i]
    status_out[0] = RK_OK
    ndone_out[0] = 0
    for k in range(steps + 1):
        st = _metric_jet_pt(ops, iargs, fargs, n_ops, n, x, G, dG, &epc)
        if st != STATUS_OK:
            status_out[0] = RK_EXPR_ERROR
            return
        E = _energy(n, G, v)
        if k == 0:
            E0 = E
        else:
            drift = fabs(E - E0) / max(fabs(E0), 1e-300)
            if drift > 10.0 * rtol:
                status_out[0] = RK_ENERGY_REJECT
                return
        for i in range(n):
            XS[k * n + i] = x[i]
            VS[k * n + i] = v[i]
        ES[k] = E
        ndone_out[0] = k
        if k == steps:
            return
        # stage 1 reuses the jet at x
        if _accel(n, G, dG, v, k1v):
            status_out[0] = RK_EXPR_ERROR
            return
        for i in range(n):
            xs[i] = x[i] + 0.5 * h * v[i]
            vs[i] = v[i] + 0.5 * h * k1v[i]
            k2x[i] = vs[i]
        if _metric_jet_pt(ops, iargs, fargs, n_ops, n, xs, G, dG, &epc) or _accel(n, G, dG, vs, k2v):
            status_out[0] = RK_EXPR_ERROR
            return
        for i in range(n):
            xs[i] = x[i] + 0.5 * h * k2x[i]
            vs[i] = v[i] + 0.5 * h * k2v[i]
            k3x[i] = vs[i]
        if _metric_jet_pt(ops, iargs, fargs, n_ops, n, xs, G, dG, &epc) or _accel(n, G, dG, vs, k3v):
            status_out[0] = RK_EXPR_ERROR
            return
        for i in range(n):
            xs[i] = x[i] + h * k3x[i]
            vs[i] = v[i] + h * k3v[i]
            k4x[i] = vs[i]
        if _metric_jet_pt(ops, iargs, fargs, n_ops, n, xs, G, dG, &epc) or _accel(n, G, dG, vs, k4v):
            status_out[0] = RK_EXPR_ERROR
            return
        ok = True
        for i in range(n):
            xn[i] = x[i] + (h / 6.0) * (v[i] + 2.0 * k2x[i] + 2.0 * k3x[i] + k4x[i])
            vn[i] = v[i] + (h / 6.0) * (k1v[i] + 2.0 * k2v[i] + 2.0 * k3v[i] + k4v[i])
            if not (isfinite(xn[i]) and isfinite(vn[i])):
                ok = False
        if not ok:
            status_out[0] = RK_EXPR_ERROR
            return
        for i in range(n):
            if periodic[i] == 0 and not (lo[i] < xn[i] < hi[i]):
                status_out[0] = RK_DOMAIN_EXIT
                return
        for i in range(n):
            x[i] = xn[i]
            v[i] = vn[i]


def rk4_geodesic_batch(int[::1] ops, int[::1] iargs, double[::1] fargs, int max_stack, int n,
                       double[:, ::1] X0, double[:, ::1] V0, double h, int steps,
                       const unsigned char[::1] periodic, double[::1] lo, double[::1] hi,
                       double rtol, double[:, :, ::1] XS, double[:, :, ::1] VS,
                       double[:, ::1] ES, int[::1] status, int[::1] ndone):
    cdef Py_ssize_t m = X0.shape[0]
    cdef int n_ops = <int> ops.shape[0]
    cdef Py_ssize_t s
    if m == 0:
        return
    with nogil:
        for s in range(m):
            _rk4_one(&ops[0], &iargs[0], &fargs[0], n_ops, n, &X0[s, 0], &V0[s, 0], h, steps,
                     &periodic[0], &lo[0], &hi[0], rtol,
                     &XS[s, 0, 0], &VS[s, 0, 0], &ES[s, 0], &status[s], &ndone[s])
