"""Pure-Python kernels: Dormand-Prince 5(4) for companion systems, dense output.

Mirrors ``_kernels.pyx`` line for line; used when the extension is not built
and for coefficient callables that cannot be compiled to postfix programs.
"""
import math

import numpy as np

from .expr import run_program

# Dormand-Prince 5(4)
C2, C3, C4, C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
A21 = 1 / 5
A31, A32 = 3 / 40, 9 / 40
A41, A42, A43 = 44 / 45, -56 / 15, 32 / 9
A51, A52, A53, A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
A61, A62, A63, A64, A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
A71, A73, A74, A75, A76 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
E1, E3, E4, E5, E6, E7 = 71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40
# Hairer's continuous extension of order 4
D1 = -12715105075 / 11282082432
D3 = 87487479700 / 32700410799
D4 = -10690763975 / 1880347072
D5 = 701980252875 / 199316789632
D6 = -1453857185 / 822651844
D7 = 69997945 / 29380423

STATUS_OK = 0
STATUS_UNDERFLOW = 1
STATUS_NONFINITE = 2
STATUS_MAXSTEPS = 3


def _companion_rhs(coef, shift, x):
    # x has shape (n, m); coef[k-1] multiplies u^(n-k)
    n = x.shape[0]
    out = np.empty_like(x)
    out[:-1] = x[1:]
    top = shift * x[0]
    for k in range(1, n + 1):
        top = top + coef[k - 1] * x[n - k]
    out[-1] = -top
    return out


def integrate(coef_fn, n, shift, t0, t1, x0, rtol, atol, h_max, max_steps=200000):
    """Integrate ``x' = Comp(t) x`` from ``t0`` to ``t1 > t0``.

    ``coef_fn(t)`` returns the n coefficient values ``a_1(t)..a_n(t)``.
    Returns ``(status, t_fail, ts, cont)`` where ``cont[k]`` holds the five
    dense-output vectors of step ``k`` (state flattened column-major free).
    """
    x = np.array(x0, dtype=float).reshape(n, -1)
    shape = x.shape

    def f(t, y):
        return _companion_rhs(coef_fn(t), shift, y)

    ts = [t0]
    cont = []
    t = t0
    span = t1 - t0
    h = min(h_max, 0.01 * span) if span > 0 else 0.0
    k1 = f(t, x)
    if not np.all(np.isfinite(k1)):
        return STATUS_NONFINITE, t, np.array(ts), np.zeros((0, 5) + shape)
    steps = 0
    while t1 - t > 1e-14 * max(1.0, abs(t1)):
        if steps >= max_steps:
            return STATUS_MAXSTEPS, t, np.array(ts), np.array(cont).reshape((-1, 5) + shape)
        last = t + h >= t1 or t1 - (t + h) < 1e-12 * max(1.0, abs(t1))
        if last:
            h = t1 - t
        k2 = f(t + C2 * h, x + h * (A21 * k1))
        k3 = f(t + C3 * h, x + h * (A31 * k1 + A32 * k2))
        k4 = f(t + C4 * h, x + h * (A41 * k1 + A42 * k2 + A43 * k3))
        k5 = f(t + C5 * h, x + h * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4))
        k6 = f(t + h, x + h * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4 + A65 * k5))
        xnew = x + h * (A71 * k1 + A73 * k3 + A74 * k4 + A75 * k5 + A76 * k6)
        tnew = t1 if last else t + h
        k7 = f(tnew, xnew)
        err = h * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6 + E7 * k7)
        scale = atol + rtol * np.maximum(np.abs(x), np.abs(xnew))
        errnorm = math.sqrt(float(np.mean((err / scale) ** 2)))
        if not math.isfinite(errnorm):
            return STATUS_NONFINITE, t, np.array(ts), np.array(cont).reshape((-1, 5) + shape)
        steps += 1
        if errnorm <= 1.0:
            r2 = xnew - x
            r3 = h * k1 - r2
            r4 = r2 - h * k7 - r3
            r5 = h * (D1 * k1 + D3 * k3 + D4 * k4 + D5 * k5 + D6 * k6 + D7 * k7)
            cont.append(np.stack([x, r2, r3, r4, r5]))
            t = tnew
            ts.append(t)
            x = xnew
            k1 = k7
            fac = 5.0 if errnorm == 0.0 else min(5.0, max(0.2, 0.9 * errnorm ** -0.2))
            h = min(h * fac, h_max)
        else:
            h = h * max(0.2, 0.9 * errnorm ** -0.2)
            if h < 1e-14 * max(1.0, abs(t)):
                return STATUS_UNDERFLOW, t, np.array(ts), np.array(cont).reshape((-1, 5) + shape)
    return STATUS_OK, t, np.array(ts), np.array(cont).reshape((-1, 5) + shape)


def integrate_rpn(ops, consts, op_off, c_off, n, shift, t0, t1, x0, rtol, atol, h_max,
                  max_steps=200000):
    """Same as :func:`integrate` with coefficients given as postfix programs."""
    progs = [(ops[op_off[k]:op_off[k + 1]], consts[c_off[k]:c_off[k + 1]]) for k in range(n)]

    def coef_fn(t):
        return [run_program(o, c, t) for o, c in progs]

    return integrate(coef_fn, n, shift, t0, t1, x0, rtol, atol, h_max, max_steps)


def dense_eval(ts, cont, tq, derivative=False):
    """Evaluate the piecewise dense output (or its t-derivative) at ``tq``.

    ``cont`` has shape ``(K, 5, N)``; returns shape ``(len(tq), N)``.
    """
    tq = np.asarray(tq, dtype=float)
    k = np.clip(np.searchsorted(ts, tq, side="right") - 1, 0, len(ts) - 2)
    h = ts[k + 1] - ts[k]
    th = ((tq - ts[k]) / h)[:, None]
    c = cont[k]
    r1, r2, r3, r4, r5 = c[:, 0], c[:, 1], c[:, 2], c[:, 3], c[:, 4]
    th1 = 1.0 - th
    if not derivative:
        return r1 + th * (r2 + th1 * (r3 + th * (r4 + th1 * r5)))
    dp = r2 + (1 - 2 * th) * r3 + th * (2 - 3 * th) * r4 + 2 * th * th1 * (1 - 2 * th) * r5
    return dp / h[:, None]
