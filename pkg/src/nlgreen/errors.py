"""Exception hierarchy shared by every module of the package."""


class NlGreenError(Exception):
    """Base class for all errors raised by :mod:`nlgreen`."""


class ResonantProblem(NlGreenError):
    """The two-point problem is resonant: the shift is an eigenvalue.

    Neither the two-point Green's function nor the unit-boundary solutions
    exist, so nothing downstream can be assembled.
    """

    def __init__(self, message, determinant=None):
        super().__init__(message)
        self.determinant = determinant


class SpectralObstruction(NlGreenError):
    """``det(I - A)`` vanishes; the non-local problem is not uniquely solvable."""

    def __init__(self, message, determinant=None):
        super().__init__(message)
        self.determinant = determinant


class IntegrationError(NlGreenError):
    """The adaptive integrator could not advance (step size underflow)."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class QuadratureError(NlGreenError):
    """Adaptive quadrature failed to reach the requested tolerance."""

    def __init__(self, message, estimate=None, error=None):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


class SpecError(NlGreenError):
    """Malformed or semantically invalid problem description.

    ``line`` is 1-based when known.
    """

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
