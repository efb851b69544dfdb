"""Green's function of ``T_n[M] u = sigma``, ``B_i(u) = delta_i C_i(u)``.

With ``a_ij = delta_j C_i(omega_j)`` and ``B = (I - A)^{-1}``::

    G(t, s) = g(t, s) + sum_i sum_j delta_i b_ij omega_i(t) C_j(g(., s))

When every ``C_i`` is the same functional ``C`` the resolvent is scalar::

    G(t, s) = g(t, s) + sum_i delta_i omega_i(t) / (1 - sum_j delta_j C(omega_j)) * C(g(., s))
"""
import threading
from dataclasses import dataclass, field

import numpy as np

from .errors import SpectralObstruction
from .functionals import QUAD_TOL, check_support, eval_functional, functional_of_green_slice
from .ode_core import DEFAULT_TOL, integrate_fundamental_system
from .quadrature import gauss_legendre_nodes
from .twopoint import RESONANCE_TOL, build_green, omegas as build_omegas

SPECTRAL_TOL = 1e-9


@dataclass
class NonlocalSpec:
    """Problem data; ``functionals`` may be a single shared functional."""

    problem: object
    boundary: object
    deltas: tuple
    functionals: object
    shared: bool = False

    def __post_init__(self):
        n = self.problem.order
        if self.boundary.order != n:
            raise ValueError(f"{self.boundary.order} boundary operators for order {n}")
        deltas = tuple(float(d) for d in np.atleast_1d(self.deltas))
        if len(deltas) != n:
            raise ValueError(f"expected {n} deltas, got {len(deltas)}")
        funcs = self.functionals
        if not isinstance(funcs, (list, tuple)):
            funcs = [funcs] * n
            self.shared = True
        funcs = tuple(funcs)
        if self.shared and len(funcs) == 1:
            funcs = funcs * n
        if len(funcs) != n:
            raise ValueError(f"expected {n} functionals, got {len(funcs)}")
        if self.shared and any(f != funcs[0] for f in funcs):
            raise ValueError("shared=True but the functionals differ")
        for f in funcs:
            check_support(f, self.problem.interval)
        self.deltas = deltas
        self.functionals = funcs

    @property
    def order(self):
        return self.problem.order

    def with_parameters(self, shift=None, deltas=None):
        problem = self.problem if shift is None else self.problem.with_shift(shift)
        return NonlocalSpec(problem, self.boundary, self.deltas if deltas is None else deltas,
                            self.functionals, self.shared)


class SliceFunctionals:
    """Cache of ``C_j(g(., s))`` keyed on the exact bits of ``s``.

    Distinct functionals are evaluated once even if listed several times.
    """

    def __init__(self, g, functionals, tol=QUAD_TOL):
        self.g = g
        self.functionals = tuple(functionals)
        self.tol = tol
        unique = []
        self._column = []
        for f in self.functionals:
            for k, u in enumerate(unique):
                if u is f or u == f:
                    self._column.append(k)
                    break
            else:
                self._column.append(len(unique))
                unique.append(f)
        self._unique = unique
        self._cache = {}
        self._lock = threading.Lock()

    def __call__(self, s):
        """Array of shape ``s.shape + (n,)``."""
        s = np.asarray(s, dtype=float)
        flat = s.ravel().tolist()
        rows = []
        for v in flat:
            with self._lock:
                row = self._cache.get(v)
            if row is None:
                vals = [functional_of_green_slice(f, self.g, v, self.tol) for f in self._unique]
                row = np.array([vals[k] for k in self._column])
                with self._lock:
                    row = self._cache.setdefault(v, row)
            rows.append(row)
        out = np.array(rows).reshape(s.shape + (len(self.functionals),))
        return out


class NonlocalContext:
    """Everything that does not depend on ``delta``: g, omega_i, C_i(omega_j), slice cache."""

    def __init__(self, spec, tol=DEFAULT_TOL, quad_tol=QUAD_TOL, resonance_tol=RESONANCE_TOL,
                 branch="upper"):
        self.spec = spec
        self.tol = tol
        self.quad_tol = quad_tol
        problem, boundary = spec.problem, spec.boundary
        self.fsys = integrate_fundamental_system(problem, tol)
        self.g = build_green(problem, boundary, self.fsys, branch, resonance_tol)
        self.omegas = build_omegas(problem, boundary, self.fsys, resonance_tol)
        self.functionals = spec.functionals
        self.C_omega = functional_matrix(self.omegas, self.functionals, quad_tol)
        self.slices = SliceFunctionals(self.g, self.functionals, quad_tol)
        # omega_i = Y(t) @ _omega_coef[:, i]
        self._omega_coef = np.stack([w.trajectory.coef for w in self.omegas], axis=1)

    def omega_states(self, t):
        """``omega_i^(j)(t)``; shape ``t.shape + (n, n)`` indexed ``[..., j, i]``."""
        return self.fsys.matrix(np.asarray(t, dtype=float)) @ self._omega_coef

    def omega_values(self, t):
        return self.omega_states(t)[..., 0, :]

    def assemble(self, deltas, spectral_tol=SPECTRAL_TOL, single=None):
        """Build the kernel for the given ``deltas``.

        ``single`` selects the scalar-resolvent path; by default it is used
        exactly when the spec declares a shared functional.
        """
        deltas = np.asarray(deltas, dtype=float).reshape(-1)
        if single is None:
            single = self.spec.shared
        if single:
            return SingleFunctionalGreen(self, deltas, spectral_tol)
        return NonlocalGreen(self, deltas, spectral_tol)


def functional_matrix(omegas, functionals, tol=QUAD_TOL):
    """``[C_i(omega_j)]`` with repeated functionals evaluated once."""
    n = len(omegas)
    out = np.empty((n, n))
    done = {}
    for i, f in enumerate(functionals):
        key = next((k for k in done if functionals[k] is f or functionals[k] == f), None)
        if key is not None:
            out[i] = out[key]
            continue
        done[i] = True
        for j, w in enumerate(omegas):
            out[i, j] = eval_functional(f, w.trajectory, tol)
    return out


def build_A(spec, omegas, functionals, tol=QUAD_TOL):
    """``a_ij = delta_j C_i(omega_j)``."""
    C = functional_matrix(omegas, functionals, tol)
    return C * np.asarray(spec.deltas, dtype=float)[None, :]


def _spectral_scale(A):
    return float(np.prod(1.0 + np.abs(A).sum(axis=1)))


def spectrum_check(A, tol=SPECTRAL_TOL):
    """``(det(I - A), ok)``; ``ok`` is false when the determinant is negligible."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    det = float(np.linalg.det(np.eye(len(A)) - A))
    return det, abs(det) > tol * _spectral_scale(A)


@dataclass
class NonlocalGreen:
    """Kernel ``G`` for fixed parameters; evaluation broadcasts over ``t`` and ``s``."""

    context: NonlocalContext
    deltas: np.ndarray
    spectral_tol: float = SPECTRAL_TOL
    A: np.ndarray = field(init=False)
    det_IA: float = field(init=False)
    resolvent: np.ndarray = field(init=False)

    def __post_init__(self):
        n = self.context.spec.order
        if self.deltas.shape != (n,):
            raise ValueError(f"expected {n} deltas")
        self.A = self.context.C_omega * self.deltas[None, :]
        self.det_IA, ok = spectrum_check(self.A, self.spectral_tol)
        if not ok:
            raise SpectralObstruction(
                f"det(I - A) = {self.det_IA:.3e}: the non-local problem has no unique solution",
                determinant=self.det_IA)
        self._validate()

    def _validate(self):
        self.resolvent = np.linalg.inv(np.eye(len(self.A)) - self.A)
        # G = g + omega(t)^T coupling C(g(., s))
        self.coupling = self.deltas[:, None] * self.resolvent

    @property
    def g(self):
        return self.context.g

    @property
    def omegas(self):
        return self.context.omegas

    @property
    def order(self):
        return self.context.spec.order

    @property
    def domain(self):
        return self.context.spec.problem.interval

    @property
    def trivial(self):
        return not np.any(self.deltas)

    def slice_functionals(self, s):
        return self.context.slices(s)

    def _correction(self, omega_t, s):
        cg = self.slice_functionals(s)
        return np.einsum("...i,ij,...j->...", omega_t, self.coupling, cg)

    def evaluate(self, t, s, branch=None):
        """``G(t, s)``; with all ``delta_i = 0`` this is exactly ``g(t, s)``."""
        gv = self.g.evaluate(t, s, branch)
        if self.trivial:
            return gv
        t, s = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(s, dtype=float))
        out = gv + self._correction(self.context.omega_values(t), s)
        return float(out) if np.ndim(out) == 0 else out

    __call__ = evaluate

    def states(self, t, s, branch=None):
        """t-derivatives ``0 .. n-1`` of ``G``; shape ``(n,) + broadcast shape``."""
        gs = self.g.states(t, s, branch)
        if self.trivial:
            return gs
        t, s = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(s, dtype=float))
        ws = self.context.omega_states(t)  # [..., j, i]
        cg = self.slice_functionals(s)
        corr = np.einsum("...ji,ik,...k->...j", ws, self.coupling, cg)
        return gs + np.moveaxis(corr, -1, 0)

    def top_derivative(self, t, s, branch=None):
        gd = self.g.top_derivative(t, s, branch)
        if self.trivial:
            return gd
        t, s = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(s, dtype=float))
        dws = self.context.fsys.dense.derivative(t)[..., -1, :] @ self.context._omega_coef
        return gd + np.einsum("...i,ij,...j->...", dws, self.coupling, self.slice_functionals(s))

    def slice(self, s, branch=None):
        return _KernelSlice(self, s, branch)


class SingleFunctionalGreen(NonlocalGreen):
    """Shared-functional kernel assembled through the scalar resolvent."""

    def _validate(self):
        C = self.context.C_omega
        if not np.array_equal(C, np.broadcast_to(C[0], C.shape)):
            raise ValueError("scalar resolvent requires identical functionals")
        self.c_omega = C[0]
        self.denominator = 1.0 - float(self.deltas @ self.c_omega)
        self.resolvent = np.linalg.inv(np.eye(len(self.A)) - self.A)
        self.coupling = self.deltas[:, None] * self.resolvent

    def _correction(self, omega_t, s):
        cg = self.slice_functionals(s)[..., 0]
        return (omega_t @ self.deltas) / self.denominator * cg

    def derivative_delta(self, k, t, s, branch=None):
        """Closed-form ``dG/d delta_k`` (``k`` 0-based)."""
        t, s = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(s, dtype=float))
        w = self.context.omega_values(t)
        S = 1.0 - float(self.deltas @ self.c_omega)
        num = w[..., k] * S + self.c_omega[k] * (w @ self.deltas)
        out = num / S ** 2 * self.slice_functionals(s)[..., 0]
        return float(out) if np.ndim(out) == 0 else out


class _KernelSlice:
    def __init__(self, G, s, branch=None):
        self.G = G
        self.s = float(s)
        self.branch = branch
        self.order = G.order
        self.domain = G.domain
        self.kinks = (self.s,)

    def __call__(self, t):
        return self.G.evaluate(t, self.s, self.branch)

    def states(self, t):
        return self.G.states(t, self.s, self.branch)

    def top_derivative(self, t):
        return self.G.top_derivative(t, self.s, self.branch)


def build_nonlocal_green(spec, tol=DEFAULT_TOL, quad_tol=QUAD_TOL, resonance_tol=RESONANCE_TOL,
                         spectral_tol=SPECTRAL_TOL, branch="upper"):
    """General assembly through ``(I - A)^{-1}``.

    Raises :class:`ResonantProblem` when ``g_M`` does not exist and
    :class:`SpectralObstruction` when ``det(I - A)`` vanishes.
    """
    ctx = NonlocalContext(spec, tol, quad_tol, resonance_tol, branch)
    return ctx.assemble(spec.deltas, spectral_tol, single=False)


def single_functional_green(spec, tol=DEFAULT_TOL, quad_tol=QUAD_TOL, resonance_tol=RESONANCE_TOL,
                            spectral_tol=SPECTRAL_TOL, branch="upper"):
    """Assembly through the scalar resolvent; all ``C_i`` must coincide."""
    if not spec.shared and any(f != spec.functionals[0] for f in spec.functionals):
        raise ValueError("single_functional_green needs one shared functional")
    ctx = NonlocalContext(spec, tol, quad_tol, resonance_tol, branch)
    return ctx.assemble(spec.deltas, spectral_tol, single=True)


def dG_ddelta(G, k, t, s, branch=None):
    """Partial derivative of the shared-functional kernel in ``delta_k``."""
    if not isinstance(G, SingleFunctionalGreen):
        raise TypeError("dG_ddelta needs a kernel built by single_functional_green")
    return G.derivative_delta(k, t, s, branch)


class NonlocalSolution:
    """``u(t) = int G(t, s) sigma(s) ds``.

    By linearity the integral splits into ``v(t) = int g(t, s) sigma(s) ds``
    (kink at ``s = t``) plus ``omega(t)`` times the fixed vector
    ``diag(delta) B [int C_j(g(., s)) sigma(s) ds]``; the latter uses fixed
    nodes so every ``C_j(g(., s))`` comes from the slice cache.
    """

    def __init__(self, G, sigma, panels=8, order=20):
        self.G = G
        self.sigma = sigma
        self.order = G.order
        self.domain = G.domain
        self.kinks = ()
        self._panels = panels
        self._gl = order
        ctx = G.context
        a, b = self.domain
        g = G.g
        nodes, weights = gauss_legendre_nodes(a, b, (), panels, order)
        sig = self._sigma(nodes)
        d, _ = g.coefficients(nodes)
        self._d_integral = (weights * sig) @ d
        breaks = sorted({p for f in ctx.functionals for p in f.breakpoints})
        nodes, weights = gauss_legendre_nodes(a, b, breaks, panels, order)
        cg = G.slice_functionals(nodes)
        self.C_v = (weights * self._sigma(nodes)) @ cg
        self.C_u = G.resolvent @ self.C_v
        self._omega_weights = G.deltas * self.C_u

    def _sigma(self, s):
        return np.broadcast_to(np.asarray(self.sigma(s), dtype=float), np.shape(s))

    def _w_integral(self, t):
        a = self.domain[0]
        if t <= a:
            return np.zeros(self.order)
        nodes, weights = gauss_legendre_nodes(a, t, (), self._panels, self._gl)
        ys = self.G.g.fsys.matrix(nodes)
        e = np.zeros((len(nodes), self.order, 1))
        e[:, -1, 0] = 1.0
        w = np.linalg.solve(ys, e)[..., 0]
        return (weights * self._sigma(nodes)) @ w

    def _v_vectors(self, t):
        flat = np.atleast_1d(np.asarray(t, dtype=float)).ravel()
        a, b = self.domain
        if np.any(flat < a) or np.any(flat > b):
            raise ValueError(f"t outside [{a}, {b}]")
        return flat, np.array([self._d_integral + self._w_integral(v) for v in flat])

    def states(self, t):
        t = np.asarray(t, dtype=float)
        flat, vecs = self._v_vectors(t)
        y = self.G.g.fsys.matrix(flat)
        v = np.einsum("pjk,pk->pj", y, vecs)
        w = self.G.context.omega_states(flat) @ self._omega_weights
        out = (v + w).T
        return out.reshape((self.order,) + t.shape)

    def __call__(self, t):
        out = self.states(t)[0]
        return float(out) if np.ndim(out) == 0 else out

    def top_derivative(self, t):
        t = np.asarray(t, dtype=float)
        flat, vecs = self._v_vectors(t)
        dy = self.G.g.fsys.dense.derivative(flat)[:, -1, :]
        # d/dt of int_a^t w sigma contributes Y(t) w(t) sigma(t) = e_n sigma(t)
        top = np.einsum("pk,pk->p", dy, vecs) + self._sigma(flat)
        top = top + (dy @ self.G.context._omega_coef) @ self._omega_weights
        return top.reshape(t.shape)

    def functional_values(self, tol=QUAD_TOL):
        """``[C_i(u)]`` evaluated on the solution itself."""
        return np.array([eval_functional(f, self, tol) for f in self.G.context.functionals])


def solve(G, sigma, panels=8, order=20):
    """Solution of the non-local problem for forcing ``sigma``."""
    return NonlocalSolution(G, sigma, panels, order)
