"""Linear operators ``T_n[M] u = u^(n) + a_1 u^(n-1) + ... + a_n u + M u``.

Fundamental systems and Cauchy functions come from an adaptive
Dormand-Prince integrator with dense output; everything downstream queries
the dense output rather than integrating again.
"""
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .errors import IntegrationError
from .expr import Expression, as_expression

DEFAULT_TOL = 1e-10

_STATUS_TEXT = {
    1: "step size underflow",
    2: "non-finite values in the right-hand side",
    3: "maximum number of steps exceeded",
}


@dataclass(frozen=True)
class LinearODEProblem:
    """``T_n[M] u = u^(n) + a_1(t) u^(n-1) + ... + a_n(t) u + M u`` on ``[a, b]``.

    ``coefficients`` lists ``a_1 .. a_n``; each entry may be a number, an
    expression string, an :class:`~nlgreen.expr.Expression` or any
    vectorized callable of ``t``.
    """

    order: int
    interval: tuple
    coefficients: tuple = None
    shift: float = 0.0

    def __post_init__(self):
        if int(self.order) != self.order or self.order < 1:
            raise ValueError(f"order must be a positive integer, got {self.order!r}")
        a, b = (float(v) for v in self.interval)
        if not a < b:
            raise ValueError(f"interval must satisfy a < b, got ({a}, {b})")
        coefs = self.coefficients
        if coefs is None:
            coefs = (0.0,) * self.order
        coefs = tuple(as_expression(c) for c in coefs)
        if len(coefs) != self.order:
            raise ValueError(f"expected {self.order} coefficients, got {len(coefs)}")
        for c in coefs:
            if not callable(c):
                raise ValueError(f"coefficient {c!r} is not evaluable")
        object.__setattr__(self, "order", int(self.order))
        object.__setattr__(self, "interval", (a, b))
        object.__setattr__(self, "coefficients", coefs)
        object.__setattr__(self, "shift", float(self.shift))

    @property
    def a(self):
        return self.interval[0]

    @property
    def b(self):
        return self.interval[1]

    def with_shift(self, shift):
        return LinearODEProblem(self.order, self.interval, self.coefficients, shift)

    @property
    def compilable(self):
        return all(isinstance(c, Expression) for c in self.coefficients)

    def coefficient_values(self, t):
        """Array of shape ``(n, len(t))`` with ``a_k(t)`` in row ``k-1``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.stack([np.broadcast_to(np.asarray(c(t), dtype=float), t.shape)
                         for c in self.coefficients])

    def apply(self, t, derivs):
        """``T_n[M] u`` from ``derivs`` of shape ``(n + 1, len(t))`` (u .. u^(n))."""
        n = self.order
        coef = self.coefficient_values(t)
        out = derivs[n] + self.shift * derivs[0]
        for k in range(1, n + 1):
            out = out + coef[k - 1] * derivs[n - k]
        return out

    def _programs(self):
        ops, consts, op_off, c_off = [], [], [0], [0]
        for c in self.coefficients:
            ops.extend(c.ops.tolist())
            consts.extend(c.consts.tolist())
            op_off.append(len(ops))
            c_off.append(len(consts))
        return (np.asarray(ops, dtype=np.int64), np.asarray(consts, dtype=np.float64),
                np.asarray(op_off, dtype=np.int64), np.asarray(c_off, dtype=np.int64))


class DenseOutput:
    """Piecewise quartic interpolant of an ``(n, m)`` matrix-valued solution."""

    def __init__(self, ts, cont):
        self.ts = np.ascontiguousarray(ts, dtype=float)
        self.shape = cont.shape[2:]
        self.cont = np.ascontiguousarray(cont.reshape(cont.shape[0], 5, -1))

    @property
    def domain(self):
        return self.ts[0], self.ts[-1]

    @property
    def nsteps(self):
        return len(self.ts) - 1

    def _check(self, t):
        lo, hi = self.domain
        span = hi - lo
        if np.any(t < lo - 1e-12 * span) or np.any(t > hi + 1e-12 * span):
            raise ValueError(f"evaluation point outside [{lo}, {hi}]")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        flat = t.ravel()
        self._check(flat)
        out = _backend.dense_eval(self.ts, self.cont, flat, False)
        return out.reshape(t.shape + self.shape)

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        flat = t.ravel()
        self._check(flat)
        out = _backend.dense_eval(self.ts, self.cont, flat, True)
        return out.reshape(t.shape + self.shape)


def integrate_linear(problem, t0, x0, tol=DEFAULT_TOL, t1=None, h_max=None):
    """Integrate the companion system of ``problem`` from ``t0`` with data ``x0``.

    ``x0`` has shape ``(n, m)``: column ``c`` holds ``(u, u', ..., u^(n-1))``
    of the ``c``-th solution at ``t0``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    t1 = problem.b if t1 is None else float(t1)
    t0 = float(t0)
    n = problem.order
    x0 = np.asarray(x0, dtype=float).reshape(n, -1)
    if h_max is None:
        # keeps the differentiated dense output near tol as well
        h_max = (problem.b - problem.a) * min(1.0 / 16.0, 0.4 * tol ** 0.2)
    if t1 <= t0:
        # zero-length span (Cauchy function seeded at b): constant interpolant
        cont = np.zeros((1, 5) + x0.shape)
        cont[0, 0] = x0
        return DenseOutput(np.array([t0, np.nextafter(t0, np.inf)]), cont)
    if problem.compilable:
        status, t_fail, ts, cont = _backend.integrate_rpn(
            *problem._programs(), n, problem.shift, t0, t1, x0, tol, tol, h_max)
    else:
        def coef_fn(t):
            return [float(np.asarray(c(t))) for c in problem.coefficients]
        status, t_fail, ts, cont = _backend.integrate_callable(
            coef_fn, n, problem.shift, t0, t1, x0, tol, tol, h_max)
    if status != 0:
        raise IntegrationError(f"integration failed at t={t_fail:.17g}: {_STATUS_TEXT[status]}",
                               t=t_fail)
    return DenseOutput(ts, cont)


class SolutionTrajectory:
    """A solution ``u = Y(t) c`` read from a matrix dense output.

    ``states(t)`` returns shape ``(n,) + t.shape`` holding ``u .. u^(n-1)``.
    """

    def __init__(self, dense, coef, domain=None):
        self.dense = dense
        self.coef = np.asarray(coef, dtype=float)
        self.order = dense.shape[0]
        self.domain = tuple(domain) if domain is not None else dense.domain
        self.kinks = ()

    def states(self, t):
        t = np.asarray(t, dtype=float)
        y = self.dense(t)
        return np.moveaxis(y @ self.coef, -1, 0)

    def __call__(self, t):
        return self.states(t)[0]

    def top_derivative(self, t):
        """``u^(n)`` from differentiating the interpolated ``u^(n-1)`` channel."""
        dy = self.dense.derivative(np.asarray(t, dtype=float))
        return (dy @ self.coef)[..., -1]


@dataclass
class FundamentalSystem:
    """Solutions ``y_1 .. y_n`` with ``y_k^(j)(a) = [j == k-1]``."""

    problem: LinearODEProblem
    dense: DenseOutput
    tol: float = DEFAULT_TOL
    basis: list = field(init=False)

    def __post_init__(self):
        n = self.problem.order
        self.basis = [SolutionTrajectory(self.dense, np.eye(n)[k]) for k in range(n)]

    def matrix(self, t):
        """Fundamental matrix ``Y(t)``, entry ``[j, k] = y_k^(j)(t)``."""
        return self.dense(t)

    def wronskian(self, t):
        return np.linalg.det(self.dense(t))


def integrate_fundamental_system(problem, tol=DEFAULT_TOL):
    """Integrate the canonical fundamental system over the whole interval."""
    dense = integrate_linear(problem, problem.a, np.eye(problem.order), tol)
    return FundamentalSystem(problem, dense, tol)


def cauchy_function(problem, s, tol=DEFAULT_TOL):
    """Solution on ``[s, b]`` seeded with ``u^(j)(s) = 0`` (j < n-1), ``u^(n-1)(s) = 1``."""
    s = float(s)
    if not problem.a <= s <= problem.b:
        raise ValueError(f"s={s} outside [{problem.a}, {problem.b}]")
    x0 = np.zeros((problem.order, 1))
    x0[-1, 0] = 1.0
    dense = integrate_linear(problem, s, x0, tol)
    return SolutionTrajectory(dense, [1.0], domain=(s, problem.b))


def residual(problem, traj, t, sigma=None):
    """``T_n[M] u(t) - sigma(t)`` using the derivative of the dense output."""
    t = np.asarray(t, dtype=float)
    lo, hi = traj.domain
    if np.any(t < lo) or np.any(t > hi):
        raise ValueError(f"t outside [{lo}, {hi}]")
    tt = np.atleast_1d(t)
    derivs = np.concatenate([traj.states(tt), traj.top_derivative(tt)[None]])
    r = problem.apply(tt, derivs)
    if sigma is not None:
        r = r - np.broadcast_to(np.asarray(sigma(tt), dtype=float), tt.shape)
    return float(r[0]) if t.ndim == 0 else r.reshape(t.shape)
