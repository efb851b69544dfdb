import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from conftest import G_periodic, g_periodic
from nlgreen import periodic as P
from nlgreen.errors import ResonantProblem, SpectralObstruction
from nlgreen.quadrature import integrate

unit = st.floats(0, 1)
shift = st.floats(-3, 3).filter(lambda m: abs(m) > 1e-3)


def test_g_values_and_jump():
    assert P.oracle_g(0.5, 0.25, 1.0) == pytest.approx(g_periodic(0.5, 0.25, 1.0), rel=1e-15)
    assert P.oracle_g(0.25, 0.5, 1.0) == pytest.approx(g_periodic(0.25, 0.5, 1.0), rel=1e-15)
    s = np.linspace(0.05, 0.95, 10)
    jump = P.oracle_g(s, s, 1.3, "upper") - P.oracle_g(s, s, 1.3, "lower")
    assert np.allclose(jump, 1.0, atol=1e-14)
    with pytest.raises(ResonantProblem):
        P.oracle_g(0.1, 0.2, 0.0)
    with pytest.raises(ValueError):
        P.oracle_g(0.1, 0.2, 1.0, "sideways")


def test_omega1():
    assert P.oracle_omega1(0.0, 1.0) == pytest.approx(1 / (1 - math.exp(-1)), rel=1e-15)
    for M in (-2.0, 0.1, 3.0):
        assert P.oracle_omega1(0.0, M) - P.oracle_omega1(1.0, M) == pytest.approx(1.0, abs=1e-13)
    assert integrate(lambda t: P.oracle_omega1(t, 2.0), 0, 1).value == pytest.approx(0.5, abs=1e-13)
    with pytest.raises(ResonantProblem):
        P.oracle_omega1(0.5, 0.0)


def test_G_values():
    assert P.oracle_G(0.5, 0.25, 1.0, 0.5) == pytest.approx(G_periodic(0.5, 0.25, 1.0, 0.5), rel=1e-14)
    assert P.oracle_G(0.7, 0.4, 0.0, 0.5) == pytest.approx(-1.6, abs=1e-15)
    assert P.oracle_G(0.5, 0.25, 1.0, 0.0) == P.oracle_g(0.5, 0.25, 1.0)
    assert P.oracle_G(0.2, 0.4, 0.0, 0.5) == pytest.approx(0.4 - 2 - 1, abs=1e-15)


@pytest.mark.parametrize("M, delta", [(1.0, 1.0), (0.0, 0.0), (-2.0, -2.0 + 1e-13), (1e-9, 0.0)])
def test_spectrum_is_refused(M, delta):
    with pytest.raises(SpectralObstruction):
        P.oracle_G(0.2, 0.3, M, delta)
    with pytest.raises(SpectralObstruction):
        P.OracleKernel(M, delta)


def test_sign_boundaries():
    lo, mid, hi = P.sign_boundaries(1.0)
    assert lo == pytest.approx(1 / (1 - math.e), rel=1e-15)
    assert mid == 1.0
    assert hi == pytest.approx(math.e / (math.e - 1), rel=1e-15)
    assert P.sign_boundaries(0.0) == (-1.0, 0.0, 1.0)
    lo, mid, hi = P.sign_boundaries(-1.0)
    assert (lo, mid) == (pytest.approx(-1 / (1 - math.exp(-1))), -1.0)
    # continuous through M = 0
    assert np.allclose(P.sign_boundaries(1e-9), (-1, 0, 1), atol=1e-9)
    assert np.allclose(P.sign_boundaries(-1e-9), (-1, 0, 1), atol=1e-9)


@pytest.mark.parametrize("M, delta, label", [
    (1.0, 0.0, "positive"), (1.0, 1.3, "negative"), (1.0, -1.0, "mixed"),
    (1.0, 1.0, "spectral-obstruction"), (0.0, -0.5, "positive"), (0.0, 0.5, "negative"),
    (-1.0, -1.2, "positive"), (-1.0, -0.8, "negative"), (2.0, 10.0, "mixed"),
])
def test_predicted_label(M, delta, label):
    assert P.predicted_label(M, delta) == label


def test_symmetry_examples():
    assert abs(P.symmetry_residual(0.3, 0.7, 1.0, 0.5)) <= 1e-12
    s = np.linspace(0.1, 0.9, 5)
    assert np.allclose(P.symmetry_residual(s, s, 1.0, 0.5), 0.0, atol=1e-12)
    same = P.symmetry_residual(s, s, 1.0, 0.5, mirror=False)
    assert np.allclose(np.abs(same), 1.0, atol=1e-12)
    assert abs(P.symmetry_residual(0.2, 0.6, 0.0, 0.5)) <= 1e-15


@settings(max_examples=200)
@given(unit, unit, shift, st.floats(-4, 4))
def test_symmetry_property(t, s, M, delta):
    # the mirrored points must stay off the diagonal after rounding
    assume(t != s and 1.0 - t != 1.0 - s and abs(delta - M) > 1e-3)
    scale = max(1.0, abs(P.oracle_G(t, s, M, delta)))
    assert abs(P.symmetry_residual(t, s, M, delta)) <= 1e-12 * scale


@settings(max_examples=100)
@given(unit, shift, st.floats(-4, 4))
def test_exponential_slice_structure(s, M, delta):
    assume(abs(delta - M) > 1e-3 and 0.01 < s < 0.99)
    lower = np.linspace(0, s, 10, endpoint=False)
    upper = np.linspace(s, 1, 10)
    for t in (lower, upper):
        k = P.oracle_G(t, s, M, delta) * np.exp(M * t)
        assert np.allclose(k, k[0], rtol=1e-10, atol=1e-10)


@settings(max_examples=100)
@given(unit, shift, st.floats(-4, 4))
def test_boundary_identity(s, M, delta):
    assume(abs(delta - M) > 1e-2)
    # t = 0 sits below s and t = 1 above it, also at the end points
    lhs = P.oracle_G(0.0, s, M, delta, "lower") - P.oracle_G(1.0, s, M, delta, "upper")
    rhs = delta * P.slice_integral(s, M, delta)
    assert lhs == pytest.approx(rhs, abs=1e-10 * max(1.0, abs(rhs)))


def test_slice_integral_against_quadrature():
    for M, delta, s in [(1.0, 0.5, 0.3), (-2.0, 1.0, 0.8), (0.0, 0.5, 0.4)]:
        num = integrate(lambda t: P.oracle_G(t, s, M, delta), 0, 1, points=(s,)).value
        assert P.slice_integral(s, M, delta) == pytest.approx(num, abs=1e-12)


def test_ode_property():
    h = 1e-6
    for t, s in [(0.2, 0.6), (0.8, 0.3), (0.5, 0.1)]:
        G = lambda x: P.oracle_G(x, s, 1.7, 0.4)
        assert (G(t + h) - G(t - h)) / (2 * h) + 1.7 * G(t) == pytest.approx(0.0, abs=1e-6)


def test_slice_functional_is_inverse_shift():
    for M in (-2.0, 0.5, 3.0):
        for s in (0.0, 0.4, 1.0):
            # C(g(., s)) with delta = 0 is int_0^1 g
            assert P.slice_integral(s, M, 0.0) == pytest.approx(1 / M, rel=1e-13)


@pytest.mark.parametrize("M", [0.5, 1.0, 3.0])
def test_touching_at_lower_bound(M):
    # at delta = M / (1 - e^M) the kernel stays >= 0 and vanishes only in
    # the lower-branch limit at the corner (0, 0)
    lo, _, hi = P.sign_boundaries(M)
    t = np.linspace(0, 1, 41)
    T, S = np.meshgrid(t, t, indexing="ij")
    G = P.oracle_G(T, S, M, lo)
    assert G.min() > 0
    assert P.oracle_G(0.0, 0.0, M, lo, "lower") == pytest.approx(0.0, abs=1e-14)
    G = P.oracle_G(T, S, M, hi)
    assert G.max() < 1e-14
    assert P.oracle_G(1.0, 1.0, M, hi) == pytest.approx(0.0, abs=1e-13)


@settings(max_examples=50)
@given(unit, unit, st.floats(-3, 3).filter(lambda d: abs(d) > 0.1))
def test_small_shift_limit(t, s, delta):
    assume(t != s)
    assert P.oracle_G(t, s, 1e-6, delta) == pytest.approx(P.oracle_G(t, s, 0.0, delta), abs=1e-4)
    assert P.oracle_G(t, s, 1e-9, delta) == pytest.approx(P.oracle_G(t, s, 0.0, delta), abs=1e-12)


def test_derivative_in_delta():
    for t, s in [(0.1, 0.9), (0.7, 0.2)]:
        h = 1e-6
        fd = (P.oracle_G(t, s, 1.0, 0.3 + h) - P.oracle_G(t, s, 1.0, 0.3 - h)) / (2 * h)
        assert P.oracle_dG_ddelta(t, s, 1.0, 0.3) == pytest.approx(fd, rel=1e-7)


def test_generic_spec_of_the_family():
    spec = P.periodic_spec(2.0, 0.5)
    assert spec.order == 1 and spec.shared and spec.deltas == (0.5,)
    assert spec.problem.shift == 2.0
