import numpy as np
import pytest

from nlgreen import _backend, _pykernels
from nlgreen.errors import QuadratureError
from nlgreen.ode_core import LinearODEProblem, integrate_fundamental_system
from nlgreen.quadrature import GAUSS_WEIGHTS, KRONROD_WEIGHTS, NODES, gauss_legendre_nodes, integrate


def test_kronrod_rule_exactness():
    # 15-point Kronrod integrates degree 22 exactly, embedded 7-point Gauss degree 13
    for k in range(23):
        exact = (1 - (-1) ** (k + 1)) / (k + 1)
        assert KRONROD_WEIGHTS @ NODES ** k == pytest.approx(exact, abs=1e-14)
    for k in range(14):
        exact = (1 - (-1) ** (k + 1)) / (k + 1)
        assert GAUSS_WEIGHTS @ NODES ** k == pytest.approx(exact, abs=1e-14)


def test_adaptive_quadrature():
    r = integrate(np.exp, 0.0, 1.0)
    assert r.value == pytest.approx(np.e - 1, abs=1e-14)
    r = integrate(np.abs, -1.0, 2.0, points=(0.0,))
    assert r.value == pytest.approx(2.5, abs=1e-14)
    assert integrate(np.sin, 1.0, 0.0).value == pytest.approx(np.cos(1.0) - 1.0, abs=1e-14)
    r = integrate(lambda x: np.sqrt(np.abs(x - 0.3)), 0.0, 1.0, atol=1e-10)
    exact = (2 / 3) * (0.3 ** 1.5 + 0.7 ** 1.5)
    assert r.value == pytest.approx(exact, abs=1e-9)


def test_quadrature_failure_reports_estimate():
    with pytest.raises(QuadratureError) as info:
        integrate(lambda x: 1 / np.abs(x - 0.3) ** 0.99, 0.0, 1.0, max_intervals=50)
    assert info.value.estimate is not None
    with pytest.raises(QuadratureError):
        integrate(lambda x: np.where(x > 0.5, np.nan, x), 0.0, 1.0)


def test_gauss_legendre_nodes_split_at_points():
    x, w = gauss_legendre_nodes(0.0, 1.0, (0.4,), panels=2, order=5)
    assert w.sum() == pytest.approx(1.0)
    assert np.all((x > 0) & (x < 1))
    f = np.where(x < 0.4, x, 2 * x)
    assert w @ f == pytest.approx(0.08 + (1 - 0.16), abs=1e-14)


def _system(M):
    return LinearODEProblem(2, (0.0, 2.0), ("sin(t)", "1 + t^2"), M)


@pytest.mark.skipif(len(_backend.available()) < 2, reason="compiled kernels not built")
def test_backends_agree():
    prob = _system(0.7)
    runs = {}
    for name in ("compiled", "python"):
        prev = _backend.use(name)
        try:
            fs = integrate_fundamental_system(prob, 1e-10)
            t = np.linspace(0, 2, 37)
            runs[name] = (fs.dense.ts, fs.matrix(t), fs.dense.derivative(t))
        finally:
            _backend.use(prev)
    a, b = runs["compiled"], runs["python"]
    assert np.array_equal(a[0], b[0])
    assert np.allclose(a[1], b[1], rtol=0, atol=1e-14)
    assert np.allclose(a[2], b[2], rtol=0, atol=1e-13)


def test_use_rejects_unknown_backend():
    with pytest.raises(ValueError):
        _backend.use("fortran")


def test_dense_eval_reproduces_nodes(backend):
    prob = LinearODEProblem(1, (0.0, 1.0), ("0",), 2.0)
    fs = integrate_fundamental_system(prob, 1e-10)
    ts = fs.dense.ts
    vals = fs.matrix(ts)[:, 0, 0]
    assert np.allclose(vals, np.exp(-2 * ts), rtol=1e-10, atol=0)


def test_python_integrator_status_codes():
    # explosive growth overflows: status must be non-ok with a failing t
    status, t_fail, _, _ = _pykernels.integrate(
        lambda t: [0.0], 1, -1e6, 0.0, 1.0, np.ones((1, 1)), 1e-8, 1e-8, 0.1, max_steps=50)
    assert status != 0
    assert 0.0 <= t_fail < 1.0


def test_fallback_when_extension_missing(monkeypatch):
    import importlib
    import sys

    import nlgreen

    monkeypatch.setitem(sys.modules, "nlgreen._kernels", None)  # import now fails
    monkeypatch.delattr(nlgreen, "_kernels", raising=False)
    try:
        importlib.reload(_backend)
        assert _backend.available() == ["python"]
        assert _backend.name() == "python"
        with pytest.raises(RuntimeError):
            _backend.use("compiled")
        fs = integrate_fundamental_system(LinearODEProblem(1, (0, 1), ("0",), 1.0))
        assert fs.matrix(1.0)[0, 0] == pytest.approx(np.exp(-1.0), abs=1e-10)
    finally:
        monkeypatch.undo()
        importlib.reload(_backend)
