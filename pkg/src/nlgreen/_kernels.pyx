# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: Dormand-Prince 5(4) for companion systems, dense output.

Coefficients arrive as postfix programs (see ``nlgreen.expr``) so the whole
step loop runs without touching Python objects.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, sin, cos, pow, fabs, sqrt, isfinite, NAN
from libc.stdlib cimport malloc, free

cnp.import_array()

cdef double C2 = 1.0 / 5, C3 = 3.0 / 10, C4 = 4.0 / 5, C5 = 8.0 / 9
cdef double A21 = 1.0 / 5
cdef double A31 = 3.0 / 40, A32 = 9.0 / 40
cdef double A41 = 44.0 / 45, A42 = -56.0 / 15, A43 = 32.0 / 9
cdef double A51 = 19372.0 / 6561, A52 = -25360.0 / 2187, A53 = 64448.0 / 6561, A54 = -212.0 / 729
cdef double A61 = 9017.0 / 3168, A62 = -355.0 / 33, A63 = 46732.0 / 5247, A64 = 49.0 / 176, A65 = -5103.0 / 18656
cdef double A71 = 35.0 / 384, A73 = 500.0 / 1113, A74 = 125.0 / 192, A75 = -2187.0 / 6784, A76 = 11.0 / 84
cdef double E1 = 71.0 / 57600, E3 = -71.0 / 16695, E4 = 71.0 / 1920, E5 = -17253.0 / 339200, E6 = 22.0 / 525, E7 = -1.0 / 40
cdef double D1 = -12715105075.0 / 11282082432
cdef double D3 = 87487479700.0 / 32700410799
cdef double D4 = -10690763975.0 / 1880347072
cdef double D5 = 701980252875.0 / 199316789632
cdef double D6 = -1453857185.0 / 822651844
cdef double D7 = 69997945.0 / 29380423

cdef enum:
    MAX_STACK = 64

cdef enum:
    OP_CONST = 0
    OP_T = 1
    OP_ADD = 2
    OP_SUB = 3
    OP_MUL = 4
    OP_DIV = 5
    OP_POW = 6
    OP_NEG = 7
    OP_EXP = 8
    OP_SIN = 9
    OP_COS = 10

STATUS_OK = 0
STATUS_UNDERFLOW = 1
STATUS_NONFINITE = 2
STATUS_MAXSTEPS = 3


cdef double run_program(const cnp.int64_t[:] ops, const double[:] consts,
                        Py_ssize_t o0, Py_ssize_t o1, Py_ssize_t c0, double t) noexcept nogil:
    cdef double stack[MAX_STACK]
    cdef int sp = 0
    cdef Py_ssize_t i, ci = c0
    cdef cnp.int64_t op
    cdef double y
    for i in range(o0, o1):
        op = ops[i]
        if op == OP_CONST:
            stack[sp] = consts[ci]
            ci += 1
            sp += 1
        elif op == OP_T:
            stack[sp] = t
            sp += 1
        elif op == OP_NEG:
            stack[sp - 1] = -stack[sp - 1]
        elif op == OP_EXP:
            stack[sp - 1] = exp(stack[sp - 1])
        elif op == OP_SIN:
            stack[sp - 1] = sin(stack[sp - 1])
        elif op == OP_COS:
            stack[sp - 1] = cos(stack[sp - 1])
        else:
            sp -= 1
            y = stack[sp]
            if op == OP_ADD:
                stack[sp - 1] = stack[sp - 1] + y
            elif op == OP_SUB:
                stack[sp - 1] = stack[sp - 1] - y
            elif op == OP_MUL:
                stack[sp - 1] = stack[sp - 1] * y
            elif op == OP_DIV:
                stack[sp - 1] = stack[sp - 1] / y
            else:
                stack[sp - 1] = pow(stack[sp - 1], y)
    return stack[0]


cdef void rhs(const cnp.int64_t[:] ops, const double[:] consts,
              const cnp.int64_t[:] op_off, const cnp.int64_t[:] c_off,
              int n, int m, double shift, double t, const double* x, double* out,
              double* coef) noexcept nogil:
    # state layout: x[j*m + c] is u^(j) of column c
    cdef int j, c, k
    cdef double top
    for k in range(n):
        coef[k] = run_program(ops, consts, op_off[k], op_off[k + 1], c_off[k], t)
    for c in range(m):
        for j in range(n - 1):
            out[j * m + c] = x[(j + 1) * m + c]
        top = shift * x[c]
        for k in range(1, n + 1):
            top += coef[k - 1] * x[(n - k) * m + c]
        out[(n - 1) * m + c] = -top


def integrate_rpn(const cnp.int64_t[:] ops, const double[:] consts,
                  const cnp.int64_t[:] op_off, const cnp.int64_t[:] c_off,
                  int n, double shift, double t0, double t1, x0,
                  double rtol, double atol, double h_max, long max_steps=200000):
    """Integrate ``x' = Comp(t) x`` from ``t0`` to ``t1 > t0``.

    Returns ``(status, t_fail, ts, cont)`` with ``cont`` of shape
    ``(K, 5, n, m)``, matching the pure-Python kernel.
    """
    cdef cnp.ndarray[double, ndim=2] X0 = np.ascontiguousarray(np.asarray(x0, dtype=float).reshape(n, -1))
    cdef int m = X0.shape[1]
    cdef int N = n * m
    cdef Py_ssize_t cap = 64, K = 0
    ts_arr = np.empty(cap + 1)
    cont_arr = np.empty((cap, 5, N))
    cdef double[:] ts = ts_arr
    cdef double[:, :, :] cont = cont_arr
    cdef double* work = <double*> malloc(sizeof(double) * (11 * N + n))
    if work == NULL:
        raise MemoryError()
    cdef double* x = work
    cdef double* xn = work + N
    cdef double* tmp = work + 2 * N
    cdef double* k1 = work + 3 * N
    cdef double* k2 = work + 4 * N
    cdef double* k3 = work + 5 * N
    cdef double* k4 = work + 6 * N
    cdef double* k5 = work + 7 * N
    cdef double* k6 = work + 8 * N
    cdef double* k7 = work + 9 * N
    cdef double* err = work + 10 * N
    cdef double* coef = work + 11 * N
    cdef double* swap
    cdef Py_ssize_t i
    cdef double t = t0, h, tnew, errnorm, sc, fac, r2, r3, a, b
    cdef bint last
    cdef long steps = 0
    cdef int status = STATUS_OK
    try:
        for i in range(N):
            x[i] = X0[i // m, i % m]
        ts[0] = t0
        h = min(h_max, 0.01 * (t1 - t0))
        rhs(ops, consts, op_off, c_off, n, m, shift, t, x, k1, coef)
        for i in range(N):
            if not isfinite(k1[i]):
                status = STATUS_NONFINITE
        while status == STATUS_OK and t1 - t > 1e-14 * max(1.0, fabs(t1)):
            if steps >= max_steps:
                status = STATUS_MAXSTEPS
                break
            last = t + h >= t1 or t1 - (t + h) < 1e-12 * max(1.0, fabs(t1))
            if last:
                h = t1 - t
            with nogil:
                for i in range(N):
                    tmp[i] = x[i] + h * (A21 * k1[i])
                rhs(ops, consts, op_off, c_off, n, m, shift, t + C2 * h, tmp, k2, coef)
                for i in range(N):
                    tmp[i] = x[i] + h * (A31 * k1[i] + A32 * k2[i])
                rhs(ops, consts, op_off, c_off, n, m, shift, t + C3 * h, tmp, k3, coef)
                for i in range(N):
                    tmp[i] = x[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i])
                rhs(ops, consts, op_off, c_off, n, m, shift, t + C4 * h, tmp, k4, coef)
                for i in range(N):
                    tmp[i] = x[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i])
                rhs(ops, consts, op_off, c_off, n, m, shift, t + C5 * h, tmp, k5, coef)
                for i in range(N):
                    tmp[i] = x[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i])
                rhs(ops, consts, op_off, c_off, n, m, shift, t + h, tmp, k6, coef)
                for i in range(N):
                    xn[i] = x[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i])
                tnew = t1 if last else t + h
                rhs(ops, consts, op_off, c_off, n, m, shift, tnew, xn, k7, coef)
                errnorm = 0.0
                for i in range(N):
                    err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i])
                    a = fabs(x[i])
                    b = fabs(xn[i])
                    sc = atol + rtol * (a if a > b else b)
                    errnorm += (err[i] / sc) * (err[i] / sc)
                errnorm = sqrt(errnorm / N)
            if not isfinite(errnorm):
                status = STATUS_NONFINITE
                break
            steps += 1
            if errnorm <= 1.0:
                if K == cap:
                    cap *= 2
                    ts_arr = np.resize(ts_arr, cap + 1)
                    cont_arr = np.concatenate([cont_arr, np.empty_like(cont_arr)])
                    ts = ts_arr
                    cont = cont_arr
                for i in range(N):
                    r2 = xn[i] - x[i]
                    r3 = h * k1[i] - r2
                    cont[K, 0, i] = x[i]
                    cont[K, 1, i] = r2
                    cont[K, 2, i] = r3
                    cont[K, 3, i] = r2 - h * k7[i] - r3
                    cont[K, 4, i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i])
                K += 1
                t = tnew
                ts[K] = t
                swap = x
                x = xn
                xn = swap
                swap = k1
                k1 = k7
                k7 = swap
                if errnorm == 0.0:
                    fac = 5.0
                else:
                    fac = min(5.0, max(0.2, 0.9 * pow(errnorm, -0.2)))
                h = min(h * fac, h_max)
            else:
                h = h * max(0.2, 0.9 * pow(errnorm, -0.2))
                if h < 1e-14 * max(1.0, fabs(t)):
                    status = STATUS_UNDERFLOW
    finally:
        free(work)
    return (status, t, np.array(ts_arr[:K + 1]),
            np.array(cont_arr[:K]).reshape(K, 5, n, m))


def dense_eval(const double[:] ts, cont, tq, bint derivative=False):
    """Evaluate the dense output (or its t-derivative); returns ``(len(tq), N)``."""
    cdef Py_ssize_t K = ts.shape[0] - 1
    cdef cnp.ndarray[double, ndim=3] c3 = np.ascontiguousarray(np.asarray(cont, dtype=float).reshape(K, 5, -1))
    cdef double[:, :, :] c = c3
    cdef cnp.ndarray[double, ndim=1] q = np.ascontiguousarray(np.asarray(tq, dtype=float).ravel())
    cdef Py_ssize_t Q = q.shape[0], N = c3.shape[2]
    out_arr = np.empty((Q, N))
    cdef double[:, :] out = out_arr
    cdef double[:] qv = q
    cdef Py_ssize_t p, i, lo, hi, mid
    cdef double h, th, th1, tv
    with nogil:
        for p in range(Q):
            tv = qv[p]
            lo = 0
            hi = K
            # largest lo with ts[lo] <= tv, clipped to [0, K-1]
            while hi - lo > 1:
                mid = (lo + hi) // 2
                if ts[mid] <= tv:
                    lo = mid
                else:
                    hi = mid
            h = ts[lo + 1] - ts[lo]
            th = (tv - ts[lo]) / h
            th1 = 1.0 - th
            if derivative:
                for i in range(N):
                    out[p, i] = (c[lo, 1, i] + (1 - 2 * th) * c[lo, 2, i]
                                 + th * (2 - 3 * th) * c[lo, 3, i]
                                 + 2 * th * th1 * (1 - 2 * th) * c[lo, 4, i]) / h
            else:
                for i in range(N):
                    out[p, i] = c[lo, 0, i] + th * (c[lo, 1, i] + th1 * (c[lo, 2, i] + th * (c[lo, 3, i] + th1 * c[lo, 4, i])))
    return out_arr
