"""Closed forms for ``u' + M u = sigma`` on ``[0, 1]``, ``u(0) - u(1) = delta int_0^1 u``.

Every function here is pure and vectorized. ``branch`` selects the diagonal
value as in :class:`~nlgreen.twopoint.TwoPointGreen`.
"""
from dataclasses import dataclass

import numpy as np

from .errors import ResonantProblem, SpectralObstruction
from .functionals import WeightedIntegral
from .nonlocal_green import NonlocalSpec
from .ode_core import LinearODEProblem
from .twopoint import BoundaryOperatorSet

SPECTRUM_GUARD = 1e-12
ZERO_SHIFT = 1e-8


@dataclass(frozen=True)
class PeriodicParams:
    M: float
    delta: float

    @property
    def on_spectrum(self):
        return abs(self.delta - self.M) < SPECTRUM_GUARD


def _inv_one_minus_exp(M):
    # 1 / (1 - e^{-M}) without cancellation for small |M|
    return -1.0 / np.expm1(-M)


def _step(t, s, branch):
    if branch not in ("upper", "lower"):
        raise ValueError("branch must be 'upper' or 'lower'")
    return (t > s) | ((t == s) & (branch == "upper"))


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def oracle_g(t, s, M, branch="upper"):
    """Two-point periodic Green's function; undefined at the eigenvalue ``M = 0``."""
    if M == 0:
        raise ResonantProblem("M = 0 is the eigenvalue of the periodic problem", determinant=0.0)
    t, s = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(s, dtype=float))
    upper = _step(t, s, branch)
    expo = np.where(upper, -M * (t - s), -M * (t - s + 1.0))
    return _out(np.exp(expo) * _inv_one_minus_exp(M))


def oracle_omega1(t, M):
    """``omega_1(t) = g_M(t, 0) = e^{-Mt} / (1 - e^{-M})``."""
    if M == 0:
        raise ResonantProblem("omega_1 does not exist for M = 0", determinant=0.0)
    return _out(np.exp(-M * np.asarray(t, dtype=float)) * _inv_one_minus_exp(M))


def _guard(M, delta):
    if abs(M) < ZERO_SHIFT:
        if abs(delta) < SPECTRUM_GUARD:
            raise SpectralObstruction("(M, delta) = (0, 0) lies on the spectrum", determinant=0.0)
    elif abs(delta - M) < SPECTRUM_GUARD:
        raise SpectralObstruction(f"delta = M = {M:g} lies on the spectrum",
                                  determinant=1.0 - delta / M)


def oracle_G(t, s, M, delta, branch="upper"):
    """Non-local periodic Green's function, including the resonant ``M = 0`` case."""
    M, delta = float(M), float(delta)
    _guard(M, delta)
    t, s = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(s, dtype=float))
    if abs(M) < ZERO_SHIFT:
        upper = _step(t, s, branch)
        return _out(np.where(upper, s - 1.0 / delta, s - 1.0 / delta - 1.0))
    g = oracle_g(t, s, M, branch)
    return _out(delta / (M - delta) * oracle_omega1(t, M) + g)


def oracle_dG_ddelta(t, s, M, delta):
    """``dG/d delta = M / (M - delta)^2 * e^{-Mt} / (1 - e^{-M})`` (independent of ``s``)."""
    _guard(M, delta)
    t, s = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(s, dtype=float))
    return _out(M / (M - delta) ** 2 * oracle_omega1(t, M))


def slice_integral(s, M, delta):
    """``int_0^1 G(t, s) dt`` integrated exactly from the exponential pieces."""
    _guard(M, delta)
    s = np.asarray(s, dtype=float)
    if abs(M) < ZERO_SHIFT:
        return _out((s - 1.0 / delta) - s)
    c = _inv_one_minus_exp(M)
    # int_0^1 e^{-Mt} dt = (1 - e^{-M}) / M
    part_omega = delta / (M - delta) / M
    lower = c * np.exp(M * (s - 1.0)) * (-np.expm1(-M * s)) / M
    upper = c * (-np.expm1(-M * (1.0 - s))) / M
    return _out(part_omega + lower + upper)


def sign_boundaries(M):
    """``(delta_min, M, delta_max)`` framing the constant-sign intervals.

    ``G > 0`` on the square iff ``delta_min < delta < M``; ``G < 0`` iff
    ``M < delta < delta_max``. The same expressions hold for either sign of
    ``M`` and tend to ``(-1, 0, 1)`` as ``M -> 0``.
    """
    M = float(M)
    if M == 0.0:
        return -1.0, 0.0, 1.0
    lo = -M / np.expm1(M)        # M / (1 - e^M)
    hi = -M / np.expm1(-M)       # M e^M / (e^M - 1)
    return float(lo), M, float(hi)


def predicted_label(M, delta):
    """Analytic sign class of ``G`` on the closed square."""
    lo, mid, hi = sign_boundaries(M)
    if lo < delta < mid:
        return "positive"
    if mid < delta < hi:
        return "negative"
    if delta == mid:
        return "spectral-obstruction"
    return "mixed"


def symmetry_residual(t, s, M, delta, mirror=True, branch="upper"):
    """``G(t, s, delta, M) + G(1 - t, 1 - s, -delta, -M)``.

    With ``mirror`` the reflected kernel uses the opposite diagonal branch,
    which is how the identity reads on ``t = s``.
    """
    other = {"upper": "lower", "lower": "upper"}[branch] if mirror else branch
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    return _out(oracle_G(t, s, M, delta, branch) + oracle_G(1.0 - t, 1.0 - s, -M, -delta, other))


def periodic_problem(M):
    return LinearODEProblem(1, (0.0, 1.0), ("0",), M)


def periodic_spec(M, delta):
    """The same family as a generic :class:`NonlocalSpec` for the numeric pipeline."""
    return NonlocalSpec(periodic_problem(M), BoundaryOperatorSet.periodic(1), (delta,),
                        WeightedIntegral("1", 0.0, 1.0), shared=True)


class OracleKernel:
    """Adapter exposing :func:`oracle_G` through the kernel ``evaluate`` protocol."""

    def __init__(self, M, delta):
        _guard(float(M), float(delta))
        self.M = float(M)
        self.delta = float(delta)
        self.domain = (0.0, 1.0)

    def evaluate(self, t, s, branch="upper"):
        return oracle_G(t, s, self.M, self.delta, branch or "upper")

    __call__ = evaluate
