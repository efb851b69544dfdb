"""Non-local linear functionals ``C(u)`` acting on values of ``u``.

Two variants plus their finite sums:

* :class:`WeightedIntegral`: ``int_c^d v(t) u(t) dt``
* :class:`MultiPoint`: ``sum_k eps_k u(nu_k)``
"""
from dataclasses import dataclass

import numpy as np

from .expr import as_expression
from .quadrature import integrate

QUAD_TOL = 1e-10


@dataclass(frozen=True)
class WeightedIntegral:
    weight: object
    lo: float
    hi: float

    def __post_init__(self):
        weight = as_expression(self.weight)
        if not callable(weight):
            raise ValueError(f"weight {self.weight!r} is not evaluable")
        lo, hi = float(self.lo), float(self.hi)
        if not lo < hi:
            raise ValueError(f"integration interval must satisfy c < d, got [{lo}, {hi}]")
        object.__setattr__(self, "weight", weight)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def support(self):
        return self.lo, self.hi

    @property
    def breakpoints(self):
        return (self.lo, self.hi)

    def _weight(self, t):
        return np.broadcast_to(np.asarray(self.weight(t), dtype=float), np.shape(t))

    def apply(self, u, kinks=(), tol=QUAD_TOL):
        def integrand(t):
            return self._weight(t) * np.asarray(u(t), dtype=float)
        return integrate(integrand, self.lo, self.hi, atol=tol, points=kinks).value

    def nonnegative(self, samples=257):
        """Whether the weight is ``>= 0`` on a uniform sample of the support."""
        t = np.linspace(self.lo, self.hi, samples)
        return bool(np.all(self._weight(t) >= 0.0))


@dataclass(frozen=True)
class MultiPoint:
    points: tuple
    weights: tuple

    def __post_init__(self):
        points = tuple(float(p) for p in np.atleast_1d(self.points))
        weights = tuple(float(w) for w in np.atleast_1d(self.weights))
        if len(points) != len(weights) or not points:
            raise ValueError("multipoint functional needs matching, non-empty points and weights")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "weights", weights)

    @property
    def support(self):
        return min(self.points), max(self.points)

    @property
    def breakpoints(self):
        return self.points

    def apply(self, u, kinks=(), tol=QUAD_TOL):
        values = np.asarray(u(np.asarray(self.points)), dtype=float)
        return float(np.dot(self.weights, values))

    def nonnegative(self, samples=None):
        return all(w >= 0.0 for w in self.weights)


@dataclass(frozen=True)
class CompositeFunctional:
    """Finite sum of functionals; linear by construction."""

    terms: tuple

    def __post_init__(self):
        terms = tuple(self.terms)
        if not terms:
            raise ValueError("composite functional needs at least one term")
        object.__setattr__(self, "terms", terms)

    @property
    def support(self):
        lows, highs = zip(*(t.support for t in self.terms))
        return min(lows), max(highs)

    @property
    def breakpoints(self):
        return tuple(sorted({p for t in self.terms for p in t.breakpoints}))

    def apply(self, u, kinks=(), tol=QUAD_TOL):
        return sum(t.apply(u, kinks, tol / len(self.terms)) for t in self.terms)

    def nonnegative(self, samples=257):
        return all(t.nonnegative(samples) for t in self.terms)


def check_support(C, interval):
    """Raise ``ValueError`` unless the functional lives inside ``interval``."""
    a, b = interval
    lo, hi = C.support
    if lo < a or hi > b:
        raise ValueError(f"functional support [{lo}, {hi}] is not contained in [{a}, {b}]")


def eval_functional(C, u, tol=QUAD_TOL):
    """``C(u)`` for a vectorized callable ``u``."""
    return C.apply(u, getattr(u, "kinks", ()), tol)


def functional_of_green_slice(C, g, s, tol=QUAD_TOL, branch=None):
    """``C(g(., s))`` with quadrature split at the kink ``t = s``."""
    s = float(s)
    return C.apply(lambda t: g.evaluate(t, s, branch), (s,), tol)


def positivity_class(C, samples=257):
    """Sufficient check that ``u >= 0`` implies ``C(u) >= 0``."""
    return C.nonnegative(samples)
