# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: expression VM, adaptive Simpson, primitive inversion, CG.

Every routine here has a line-for-line twin in ``_pykernels.py``; both must
perform the same floating-point operations in the same order.
"""

from libc.math cimport sin, cos, exp, log, sqrt, fabs, atan, pow, floor, isfinite, NAN, INFINITY
from libc.stdlib cimport malloc, free

import numpy as np

BACKEND = "compiled"

# status codes shared with _pykernels
cdef enum:
    ST_OK = 0
    ST_NONFINITE = 1
    ST_BRACKET = 2
    ST_NOCONV = 3
    MAX_DEPTH = 50
    MAX_NEWTON = 200


cdef struct VM:
    const int* ops
    const int* args
    const double* consts
    int n
    double* stack


cdef double vm_eval(VM* vm, const double* env) noexcept nogil:
    cdef int sp = 0
    cdef int i, op
    cdef double a, b
    cdef double* st = vm.stack
    for i in range(vm.n):
        op = vm.ops[i]
        if op == 0:
            st[sp] = vm.consts[vm.args[i]]
            sp += 1
        elif op == 1:
            st[sp] = env[vm.args[i]]
            sp += 1
        elif op == 2:
            st[sp - 1] = -st[sp - 1]
        elif op <= 7 or op >= 15:
            b = st[sp - 1]
            a = st[sp - 2]
            sp -= 1
            if op == 3:
                st[sp - 1] = a + b
            elif op == 4:
                st[sp - 1] = a - b
            elif op == 5:
                st[sp - 1] = a * b
            elif op == 6:
                st[sp - 1] = a / b if b != 0.0 else NAN
            elif op == 7:
                if (a < 0.0 and b != floor(b)) or (a == 0.0 and b < 0.0):
                    st[sp - 1] = NAN
                else:
                    st[sp - 1] = pow(a, b)
            elif a != a or b != b:
                st[sp - 1] = NAN
            elif op == 15:
                st[sp - 1] = b if b < a else a
            else:
                st[sp - 1] = b if b > a else a
        else:
            a = st[sp - 1]
            if op == 8:
                a = sin(a)
            elif op == 9:
                a = cos(a)
            elif op == 10:
                a = exp(a)
            elif op == 11:
                a = log(a) if a > 0.0 else NAN
            elif op == 12:
                a = sqrt(a) if a >= 0.0 else NAN
            elif op == 13:
                a = fabs(a)
            else:
                a = atan(a)
            st[sp - 1] = a
    return st[0]


cdef struct Ctx:
    VM vm
    double env[2]
    int status
    double bad_t


cdef inline double mval(Ctx* c, double t) noexcept nogil:
    c.env[0] = t
    cdef double v = vm_eval(&c.vm, c.env)
    if not isfinite(v):
        if c.status == ST_OK:
            c.status = ST_NONFINITE
            c.bad_t = t
        return 0.0
    return v


cdef double asr(Ctx* c, double a, double fa, double b, double fb, double m, double fm,
                double whole, double eps, int depth) noexcept nogil:
    cdef double lm = 0.5 * (a + m)
    cdef double rm = 0.5 * (m + b)
    cdef double flm = mval(c, lm)
    cdef double frm = mval(c, rm)
    cdef double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    cdef double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    cdef double delta = left + right - whole
    if depth <= 0 or fabs(delta) <= 15.0 * eps or c.status != ST_OK:
        return left + right + delta / 15.0
    return (asr(c, a, fa, m, fm, lm, flm, left, 0.5 * eps, depth - 1)
            + asr(c, m, fm, b, fb, rm, frm, right, 0.5 * eps, depth - 1))


cdef double simpson_c(Ctx* c, double a, double b, double tol) noexcept nogil:
    if a == b:
        return 0.0
    cdef double fa = mval(c, a)
    cdef double fb = mval(c, b)
    cdef double m = 0.5 * (a + b)
    cdef double fm = mval(c, m)
    cdef double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    cdef double scale = fabs(whole)
    if scale < 1.0:
        scale = 1.0
    return asr(c, a, fa, b, fb, m, fm, whole, tol * scale, MAX_DEPTH)


cdef int ctx_init(Ctx* c, prog, double r, int[::1] ops, int[::1] args, double[::1] consts) except -1:
    c.vm.ops = &ops[0]
    c.vm.args = &args[0]
    c.vm.consts = &consts[0]
    c.vm.n = ops.shape[0]
    c.vm.stack = <double*> malloc((prog.stack_size + 1) * sizeof(double))
    if c.vm.stack == NULL:
        raise MemoryError()
    c.env[0] = 0.0
    c.env[1] = r
    c.status = ST_OK
    c.bad_t = 0.0
    return 0


def eval_program(prog, const double[::1] env):
    """Evaluate a compiled program once (NaN/inf on failure)."""
    cdef int[::1] ops = prog.ops
    cdef int[::1] args = prog.args
    cdef double[::1] consts = prog.consts
    cdef VM vm
    vm.ops = &ops[0]
    vm.args = &args[0]
    vm.consts = &consts[0]
    vm.n = ops.shape[0]
    vm.stack = <double*> malloc((prog.stack_size + 1) * sizeof(double))
    try:
        return vm_eval(&vm, &env[0])
    finally:
        free(vm.stack)


def simpson(prog, double r, double a, double b, double tol):
    """Adaptive Simpson integral of m(., r) over [a, b]; returns (value, status, bad_t)."""
    cdef Ctx c
    ctx_init(&c, prog, r, prog.ops, prog.args, prog.consts)
    cdef double v
    try:
        with nogil:
            v = simpson_c(&c, a, b, tol)
        return v, c.status, c.bad_t
    finally:
        free(c.vm.stack)


cdef inline int find_segment(const double* kt, int nk, double at) noexcept nogil:
    # largest k with |kt[k]| <= at; kt is increasing in magnitude
    cdef int lo = 0, hi = nk - 1, mid
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if fabs(kt[mid]) <= at:
            lo = mid
        else:
            hi = mid - 1
    return lo


def primitive_many(prog, double r, const double[::1] t, const double[::1] pos_t, const double[::1] pos_m,
                   const double[::1] neg_t, const double[::1] neg_m, double tol):
    """M_r(t_i) = M_r(knot) + int_knot^t_i m, knot the nearest cached knot toward zero."""
    cdef Py_ssize_t n = t.shape[0], i
    cdef int k
    cdef double ti
    out = np.empty(n)
    cdef double[::1] o = out
    cdef Ctx c
    ctx_init(&c, prog, r, prog.ops, prog.args, prog.consts)
    try:
        with nogil:
            for i in range(n):
                ti = t[i]
                if ti >= 0.0:
                    k = find_segment(&pos_t[0], pos_t.shape[0], ti)
                    o[i] = pos_m[k] + simpson_c(&c, pos_t[k], ti, tol)
                else:
                    k = find_segment(&neg_t[0], neg_t.shape[0], -ti)
                    o[i] = neg_m[k] + simpson_c(&c, neg_t[k], ti, tol)
                if c.status != ST_OK:
                    break
        return out, c.status, c.bad_t
    finally:
        free(c.vm.stack)


cdef int invert_one(Ctx* c, double s, const double* kt, const double* km, int nk,
                    double tol, double ftol_rel, double* out) noexcept nogil:
    # kt/km: knots on the side of s, magnitudes increasing; km monotone in |.|
    cdef int lo_k = 0, hi_k = nk - 1, mid, it
    cdef double sa = fabs(s)
    if sa == 0.0:
        out[0] = 0.0
        return ST_OK
    if fabs(km[nk - 1]) < sa:
        return ST_BRACKET
    while lo_k < hi_k:
        mid = (lo_k + hi_k + 1) // 2
        if fabs(km[mid]) <= sa:
            lo_k = mid
        else:
            hi_k = mid - 1
    cdef int k = lo_k
    cdef double a = kt[k], ma = km[k]
    if ma == s:
        out[0] = a
        return ST_OK
    cdef double b = kt[k + 1], mb = km[k + 1]
    cdef double lo, hi
    if a < b:
        lo = a
        hi = b
    else:
        lo = b
        hi = a
    cdef double ftol = ftol_rel * (sa if sa > 1.0 else 1.0)
    cdef double t = a + (s - ma) / (mb - ma) * (b - a)
    cdef double f, mt, tn, best_t = t, best_f = INFINITY
    if not (t > lo and t < hi):
        t = 0.5 * (lo + hi)
    for it in range(MAX_NEWTON):
        f = ma + simpson_c(c, a, t, tol) - s
        mt = mval(c, t)
        if c.status != ST_OK:
            return c.status
        if fabs(f) < best_f:
            best_f = fabs(f)
            best_t = t
        if fabs(f) <= ftol:
            out[0] = t
            return ST_OK
        if f > 0.0:
            hi = t
        else:
            lo = t
        tn = t - f / mt
        if not (tn > lo and tn < hi):
            tn = 0.5 * (lo + hi)
        if tn == t or not (hi > lo) or tn == lo or tn == hi:
            break
        t = tn
    out[0] = best_t
    if best_f <= tol * (sa if sa > 1.0 else 1.0):
        return ST_OK
    return ST_NOCONV


def invert_many(prog, double r, const double[::1] s, const double[::1] pos_t, const double[::1] pos_m,
                const double[::1] neg_t, const double[::1] neg_m, double tol, double ftol_rel):
    """Solve M_r(t_i) = s_i node by node; returns (t, status, bad_index, bad_t)."""
    cdef Py_ssize_t n = s.shape[0], i
    cdef int st = ST_OK
    out = np.empty(n)
    cdef double[::1] o = out
    cdef Ctx c
    ctx_init(&c, prog, r, prog.ops, prog.args, prog.consts)
    try:
        with nogil:
            for i in range(n):
                if s[i] >= 0.0:
                    st = invert_one(&c, s[i], &pos_t[0], &pos_m[0], pos_t.shape[0], tol, ftol_rel, &o[i])
                else:
                    st = invert_one(&c, s[i], &neg_t[0], &neg_m[0], neg_t.shape[0], tol, ftol_rel, &o[i])
                if st != ST_OK:
                    break
        return out, st, (i if st != ST_OK else -1), c.bad_t
    finally:
        free(c.vm.stack)


cdef void csr_matvec(const int* indptr, const int* indices, const double* data,
                     const double* x, double* y, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double acc
    for i in range(n):
        acc = 0.0
        for j in range(indptr[i], indptr[i + 1]):
            acc = acc + data[j] * x[indices[j]]
        y[i] = acc


cdef double dot(const double* a, const double* b, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i
    cdef double acc = 0.0
    for i in range(n):
        acc = acc + a[i] * b[i]
    return acc


def cg(const int[::1] indptr, const int[::1] indices, const double[::1] data, const double[::1] b, x0,
       double tol, int maxit, callback=None):
    """Plain conjugate gradients on a CSR matrix.

    Returns (x, iterations, relative residual, status) with status 0 converged,
    3 iteration budget exhausted, 4 non-positive curvature.
    """
    cdef Py_ssize_t n = b.shape[0], i
    x_arr = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64, copy=True)
    r_arr = np.empty(n)
    p_arr = np.empty(n)
    ap_arr = np.empty(n)
    cdef double[::1] x = x_arr
    cdef double[::1] r = r_arr
    cdef double[::1] p = p_arr
    cdef double[::1] ap = ap_arr
    cdef double bnorm = sqrt(dot(&b[0], &b[0], n))
    cdef double rs, rs_new, pap, alpha, beta, thresh
    cdef int k = 0, status = 3
    if bnorm == 0.0:
        return np.zeros(n), 0, 0.0, 0
    thresh = tol * bnorm
    while k < maxit:
        # (re)start from the true residual
        csr_matvec(&indptr[0], &indices[0], &data[0], &x[0], &ap[0], n)
        for i in range(n):
            r[i] = b[i] - ap[i]
            p[i] = r[i]
        rs = dot(&r[0], &r[0], n)
        if sqrt(rs) <= thresh:
            status = 0
            break
        while k < maxit:
            csr_matvec(&indptr[0], &indices[0], &data[0], &p[0], &ap[0], n)
            pap = dot(&p[0], &ap[0], n)
            if not (pap > 0.0):
                return x_arr, k, sqrt(rs) / bnorm, 4
            alpha = rs / pap
            for i in range(n):
                x[i] = x[i] + alpha * p[i]
                r[i] = r[i] - alpha * ap[i]
            rs_new = dot(&r[0], &r[0], n)
            k += 1
            if callback is not None:
                callback(k, x_arr.copy())
            if sqrt(rs_new) <= thresh:
                break
            beta = rs_new / rs
            rs = rs_new
            for i in range(n):
                p[i] = r[i] + beta * p[i]
    csr_matvec(&indptr[0], &indices[0], &data[0], &x[0], &ap[0], n)
    for i in range(n):
        r[i] = b[i] - ap[i]
    rs = sqrt(dot(&r[0], &r[0], n))
    if rs <= thresh:
        status = 0
    return x_arr, k, rs / bnorm, status
