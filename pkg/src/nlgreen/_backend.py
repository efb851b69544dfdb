"""Kernel selection: the compiled extension when importable, else pure Python."""
from . import _pykernels

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

_active = _compiled if _compiled is not None else _pykernels


def available():
    """Names of the backends that can be selected in this interpreter."""
    return ["compiled", "python"] if _compiled is not None else ["python"]


def name():
    return "compiled" if _active is _compiled and _compiled is not None else "python"


def use(backend):
    """Select ``"compiled"`` or ``"python"``; returns the previous name."""
    global _active
    previous = name()
    if backend == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not built; run `pip install -e .`")
        _active = _compiled
    elif backend == "python":
        _active = _pykernels
    else:
        raise ValueError(f"unknown backend {backend!r}")
    return previous


def integrate_rpn(*args, **kwargs):
    return _active.integrate_rpn(*args, **kwargs)


def integrate_callable(*args, **kwargs):
    return _pykernels.integrate(*args, **kwargs)


def dense_eval(ts, cont, tq, derivative=False):
    return _active.dense_eval(ts, cont, tq, derivative)
