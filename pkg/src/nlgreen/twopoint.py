"""Two-point Green's function ``g_M`` and the unit-boundary solutions ``omega_i``.

For ``s`` fixed, ``g(., s) = H(t - s) c(t, s) + sum_j d_j(s) y_j(t)`` where
``c`` is the Cauchy function seeded at ``s``. With the canonical fundamental
matrix ``Y`` the Cauchy state is ``Y(t) w(s)``, ``w(s) = Y(s)^{-1} e_n``, and
the boundary conditions give ``d(s) = -U^{-1} beta Y(b) w(s)`` with
``U = alpha Y(a) + beta Y(b)``, the matrix of ``B_i(y_j)``.
"""
import threading
from dataclasses import dataclass

import numpy as np

from .errors import ResonantProblem
from .ode_core import SolutionTrajectory

RESONANCE_TOL = 1e-9
BRANCHES = ("upper", "lower")


@dataclass(frozen=True)
class BoundaryOperatorSet:
    """``B_i(u) = sum_j alpha[i, j] u^(j)(a) + beta[i, j] u^(j)(b)``."""

    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        alpha = np.atleast_2d(np.asarray(self.alpha, dtype=float))
        beta = np.atleast_2d(np.asarray(self.beta, dtype=float))
        if alpha.shape != beta.shape or alpha.shape[0] != alpha.shape[1]:
            raise ValueError(f"alpha and beta must be equal square matrices, got "
                             f"{alpha.shape} and {beta.shape}")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)

    @property
    def order(self):
        return self.alpha.shape[0]

    @classmethod
    def periodic(cls, n=1):
        """``u^(j)(a) - u^(j)(b) = 0`` for ``j < n``."""
        return cls(np.eye(n), -np.eye(n))

    def values(self, traj):
        """All ``B_i(traj)`` at once."""
        a, b = traj.domain
        x = traj.states(np.array([a, b]))
        return self.alpha @ x[:, 0] + self.beta @ x[:, 1]


def boundary_apply(boundary, i, traj):
    """``B_i(u)`` for the trajectory ``traj`` (``i`` is 0-based)."""
    if traj.order != boundary.order:
        raise ValueError(f"trajectory of order {traj.order} for {boundary.order} conditions")
    return float(boundary.values(traj)[i])


def rank_precheck(boundary, tol=1e-12):
    """Necessary condition for uniqueness: ``rank [alpha | beta] == n``."""
    block = np.hstack([boundary.alpha, boundary.beta])
    scale = max(1.0, float(np.abs(block).max()))
    return int(np.linalg.matrix_rank(block, tol=tol * scale)) == boundary.order


def boundary_matrix(boundary, fsys):
    """``U[i, j] = B_i(y_j)`` for the fundamental system ``fsys``."""
    ya, yb = fsys.matrix(np.array([fsys.problem.a, fsys.problem.b]))
    return boundary.alpha @ ya + boundary.beta @ yb


def _determinant_scale(boundary, fsys):
    # magnitude of the terms before cancellation, row by row
    ya, yb = fsys.matrix(np.array([fsys.problem.a, fsys.problem.b]))
    rows = np.abs(boundary.alpha) @ np.abs(ya) + np.abs(boundary.beta) @ np.abs(yb)
    return float(np.prod(np.maximum(rows.sum(axis=1), np.finfo(float).tiny)))


def uniqueness_determinant(problem, boundary, fsys):
    """``det [B_i(y_j)]``; nonzero iff ``T_n[M] u = sigma, B_i(u) = h_i`` is uniquely solvable."""
    if problem.order != boundary.order:
        raise ValueError("boundary operators do not match the problem order")
    return float(np.linalg.det(boundary_matrix(boundary, fsys)))


def is_resonant(problem, boundary, fsys, resonance_tol=RESONANCE_TOL):
    det = uniqueness_determinant(problem, boundary, fsys)
    return abs(det) < resonance_tol * _determinant_scale(boundary, fsys), det


def _require_nonresonant(problem, boundary, fsys, resonance_tol):
    resonant, det = is_resonant(problem, boundary, fsys, resonance_tol)
    if resonant:
        raise ResonantProblem(
            f"M={problem.shift:g} is an eigenvalue of the two-point problem "
            f"(det={det:.3e}); g_M and omega_i do not exist", determinant=det)
    return det


class TwoPointGreen:
    """Lazily evaluated two-point Green's function.

    ``branch`` picks the value on the diagonal: ``"upper"`` takes the
    ``t >= s`` side, ``"lower"`` the ``t < s`` side. Off the diagonal the
    two agree.
    """

    def __init__(self, problem, boundary, fsys, branch="upper", resonance_tol=RESONANCE_TOL):
        if branch not in BRANCHES:
            raise ValueError(f"branch must be one of {BRANCHES}")
        self.problem = problem
        self.boundary = boundary
        self.fsys = fsys
        self.branch = branch
        self.determinant = _require_nonresonant(problem, boundary, fsys, resonance_tol)
        self.U = boundary_matrix(boundary, fsys)
        yb = fsys.matrix(problem.b)
        self._K = np.linalg.solve(self.U, -boundary.beta @ yb)
        self._memo = {}
        self._lock = threading.Lock()

    @property
    def order(self):
        return self.problem.order

    @property
    def domain(self):
        return self.problem.interval

    def coefficients(self, s):
        """``(d(s), w(s))`` for an array of ``s``, each of shape ``s.shape + (n,)``."""
        s = np.asarray(s, dtype=float)
        flat = s.ravel()
        uniq, inverse = np.unique(flat, return_inverse=True)
        with self._lock:
            missing = [v for v in uniq.tolist() if v not in self._memo]
        if missing:
            n = self.order
            ys = self.fsys.matrix(np.asarray(missing))
            e = np.zeros((len(missing), n, 1))
            e[:, -1, 0] = 1.0
            w = np.linalg.solve(ys, e)[..., 0]
            d = w @ self._K.T
            with self._lock:
                for v, dv, wv in zip(missing, d, w):
                    self._memo[v] = (dv, wv)
        with self._lock:
            pairs = [self._memo[v] for v in uniq.tolist()]
        d = np.array([p[0] for p in pairs])[inverse]
        w = np.array([p[1] for p in pairs])[inverse]
        return d.reshape(s.shape + (-1,)), w.reshape(s.shape + (-1,))

    def _check_domain(self, x):
        a, b = self.domain
        if np.any(x < a) or np.any(x > b):
            raise ValueError(f"point outside [{a}, {b}]")

    def _combination(self, t, s, branch):
        branch = branch or self.branch
        if branch not in BRANCHES:
            raise ValueError(f"branch must be one of {BRANCHES}")
        t, s = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(s, dtype=float))
        self._check_domain(t)
        self._check_domain(s)
        d, w = self.coefficients(s)
        step = (t > s) | ((t == s) & (branch == "upper"))
        return t, d + step[..., None] * w

    def states(self, t, s, branch=None):
        """``d^j g / dt^j (t, s)`` for ``j < n``; shape ``(n,) + broadcast shape``."""
        t, vec = self._combination(t, s, branch)
        y = self.fsys.matrix(t)
        return np.moveaxis(np.einsum("...jk,...k->...j", y, vec), -1, 0)

    def top_derivative(self, t, s, branch=None):
        t, vec = self._combination(t, s, branch)
        dy = self.fsys.dense.derivative(t)
        return np.einsum("...k,...k->...", dy[..., -1, :], vec)

    def evaluate(self, t, s, branch=None):
        """``g(t, s)``; broadcasts over ``t`` and ``s``."""
        out = self.states(t, s, branch)[0]
        return float(out) if out.ndim == 0 else out

    __call__ = evaluate

    def slice(self, s, branch=None):
        return GreenSlice(self, s, branch)


class GreenSlice:
    """``t -> g(t, s)`` for fixed ``s`` as a trajectory (kink at ``s``)."""

    def __init__(self, green, s, branch=None):
        self.green = green
        self.s = float(s)
        self.branch = branch
        self.order = green.order
        self.domain = green.domain
        self.kinks = (self.s,)

    def states(self, t):
        return self.green.states(t, self.s, self.branch)

    def __call__(self, t):
        return self.green.evaluate(t, self.s, self.branch)

    def top_derivative(self, t):
        return self.green.top_derivative(t, self.s, self.branch)


def build_green(problem, boundary, fsys, branch="upper", resonance_tol=RESONANCE_TOL):
    """Assemble ``g_M``; raises :class:`ResonantProblem` when ``det U`` vanishes."""
    if problem.order != boundary.order:
        raise ValueError("boundary operators do not match the problem order")
    return TwoPointGreen(problem, boundary, fsys, branch, resonance_tol)


def eval_green(g, t, s, branch=None):
    return g.evaluate(t, s, branch)


@dataclass(frozen=True)
class OmegaSolution:
    """Solution of the homogeneous equation with ``B_j(omega_i) = [i == j]``."""

    index: int
    trajectory: SolutionTrajectory

    def __call__(self, t):
        return self.trajectory(t)

    def states(self, t):
        return self.trajectory.states(t)


def omega(problem, boundary, fsys, i, resonance_tol=RESONANCE_TOL):
    """``omega_i`` (``i`` is 0-based) as a combination of the fundamental system."""
    _require_nonresonant(problem, boundary, fsys, resonance_tol)
    U = boundary_matrix(boundary, fsys)
    rhs = np.zeros(problem.order)
    rhs[i] = 1.0
    return OmegaSolution(i, SolutionTrajectory(fsys.dense, np.linalg.solve(U, rhs)))


def omegas(problem, boundary, fsys, resonance_tol=RESONANCE_TOL):
    return [omega(problem, boundary, fsys, i, resonance_tol) for i in range(problem.order)]
