import math

import numpy as np
import pytest

from nlgreen import _backend


@pytest.fixture(params=_backend.available())
def backend(request):
    previous = _backend.use(request.param)
    yield request.param
    _backend.use(previous)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def g_periodic(t, s, M):
    """Independent scalar evaluation of the periodic two-point kernel."""
    c = 1.0 / (1.0 - math.exp(-M))
    if t >= s:
        return math.exp(-M * (t - s)) * c
    return math.exp(-M * (t - s + 1.0)) * c


def G_periodic(t, s, M, delta):
    if M == 0.0:
        return s - 1.0 / delta - (0.0 if t >= s else 1.0)
    return delta / (M - delta) * math.exp(-M * t) / (1.0 - math.exp(-M)) + g_periodic(t, s, M)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
