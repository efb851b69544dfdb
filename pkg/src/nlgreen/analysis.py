"""Sign analysis of Green's functions: comparison checks and (M, delta) scans."""
import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ResonantProblem, SpectralObstruction
from .functionals import positivity_class
from .nonlocal_green import NonlocalContext, SingleFunctionalGreen, single_functional_green

POSITIVE = "positive"
NEGATIVE = "negative"
NONNEGATIVE = "nonnegative"  # sign of the nonzero part, touches zero
NONPOSITIVE = "nonpositive"
MIXED = "mixed"
RESONANT = "resonant"
OBSTRUCTED = "spectral-obstruction"
LABELS = (POSITIVE, NEGATIVE, NONNEGATIVE, NONPOSITIVE, MIXED, RESONANT, OBSTRUCTED)

SIGN_TOL = 1e-10
DEFAULT_GRID = 41
CSV_COLUMNS = ("M", "delta", "label", "min", "max", "argmin_t", "argmin_s")


@dataclass(frozen=True)
class SignSummary:
    label: str
    min: float
    max: float
    argmin: tuple
    argmax: tuple

    @property
    def touches_zero(self):
        return self.label in (NONNEGATIVE, NONPOSITIVE)


def _grid(spec_grid, domain):
    if np.ndim(spec_grid) == 0:
        return np.linspace(domain[0], domain[1], int(spec_grid))
    return np.asarray(spec_grid, dtype=float)


def _kernel_points(kernel, t_grid, s_grid, both_branches):
    T, S = np.meshgrid(t_grid, s_grid, indexing="ij")
    evaluate = getattr(kernel, "evaluate", None)
    if evaluate is None:
        values = np.asarray(kernel(T, S), dtype=float)
        return values.ravel(), T.ravel(), S.ravel()
    values = np.asarray(evaluate(T, S, "upper"), dtype=float).ravel()
    T, S = T.ravel(), S.ravel()
    if both_branches:
        diag = T == S
        if diag.any():
            lower = np.asarray(evaluate(T[diag], S[diag], "lower"), dtype=float)
            values = np.concatenate([values, lower])
            T = np.concatenate([T, T[diag]])
            S = np.concatenate([S, S[diag]])
    return values, T, S


def constant_sign_on_grid(kernel, t_grid, s_grid, tol=SIGN_TOL, both_branches=True):
    """Classify the sign of ``kernel`` on a ``t x s`` grid.

    Diagonal points are probed on both sides of the jump when the kernel
    exposes ``evaluate(t, s, branch)``, so the closure of each branch is
    covered.
    """
    values, T, S = _kernel_points(kernel, np.asarray(t_grid, float), np.asarray(s_grid, float),
                                  both_branches)
    if not np.all(np.isfinite(values)):
        raise FloatingPointError("kernel produced non-finite values")
    i_min, i_max = int(np.argmin(values)), int(np.argmax(values))
    vmin, vmax = float(values[i_min]), float(values[i_max])
    if vmin > tol:
        label = POSITIVE
    elif vmax < -tol:
        label = NEGATIVE
    elif vmin >= -tol and vmax > tol:
        label = NONNEGATIVE
    elif vmax <= tol and vmin < -tol:
        label = NONPOSITIVE
    else:
        label = MIXED
    return SignSummary(label, vmin, vmax, (float(T[i_min]), float(S[i_min])),
                       (float(T[i_max]), float(S[i_max])))


@dataclass
class ComparisonReport:
    hypothesis_a: bool
    hypothesis_b: bool
    hypothesis_c: bool
    conclusion: str
    verified: bool = None
    witness: tuple = None
    delta_C_omega: float = None
    g_label: str = None
    G_label: str = None


def comparison_check(green, grid=DEFAULT_GRID, tol=SIGN_TOL):
    """Check the comparison principle for a shared-functional kernel on a grid.

    ``green`` is a :class:`SingleFunctionalGreen` or a spec with a shared
    functional. The conclusion is ``"G >= g >= 0"``, ``"G <= g <= 0"`` or
    ``"not-applicable"``; ``verified`` records whether it held pointwise.
    """
    if not isinstance(green, SingleFunctionalGreen):
        green = single_functional_green(green)
    ctx = green.context
    t_grid = _grid(grid, green.domain)
    s_grid = t_grid
    total = float(green.deltas @ green.c_omega)
    hyp_a = total < 1.0
    weighted = ctx.omega_values(t_grid) * green.deltas[None, :]
    bad = np.argwhere(weighted < 0.0)
    hyp_b = bad.size == 0
    witness = None
    if not hyp_b:
        k, i = bad[0]
        witness = ("b", int(i), float(t_grid[k]), float(weighted[k, i]))
    hyp_c = positivity_class(ctx.functionals[0])
    g_sign = constant_sign_on_grid(green.g, t_grid, s_grid, tol)
    G_sign = constant_sign_on_grid(green, t_grid, s_grid, tol)
    report = ComparisonReport(hyp_a, hyp_b, hyp_c, "not-applicable", None, witness, total,
                              g_sign.label, G_sign.label)
    if not (hyp_a and hyp_b and hyp_c):
        return report
    gv, T, S = _kernel_points(green.g, t_grid, s_grid, True)
    Gv, _, _ = _kernel_points(green, t_grid, s_grid, True)
    if g_sign.min >= -tol:
        report.conclusion = "G >= g >= 0"
        fail = (Gv < gv - tol) | (gv < -tol)
    elif g_sign.max <= tol:
        report.conclusion = "G <= g <= 0"
        fail = (Gv > gv + tol) | (gv > tol)
    else:
        return report
    report.verified = not fail.any()
    if fail.any():
        k = int(np.argmax(fail))
        report.witness = ("conclusion", float(T[k]), float(S[k]), float(Gv[k]), float(gv[k]))
    return report


class NonlocalFamily:
    """``(M, delta) -> G`` for a spec with ``deltas = delta * direction``.

    The delta-independent part is built once per ``M``. ``fallback(M, delta)``
    supplies a kernel where the generic builder refuses (resonant ``M``).
    """

    def __init__(self, spec, direction=None, fallback=None, tol=1e-10, quad_tol=1e-10,
                 resonance_tol=1e-9, spectral_tol=1e-9):
        self.spec = spec
        n = spec.order
        self.direction = np.ones(n) if direction is None else np.asarray(direction, float)
        self.fallback = fallback
        self.tol = tol
        self.quad_tol = quad_tol
        self.resonance_tol = resonance_tol
        self.spectral_tol = spectral_tol
        self._cache = {}

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_cache"] = {}
        return state

    def context(self, M):
        M = float(M)
        if M not in self._cache:
            if len(self._cache) > 4:
                self._cache.clear()
            try:
                self._cache[M] = NonlocalContext(self.spec.with_parameters(shift=M), self.tol,
                                                 self.quad_tol, self.resonance_tol)
            except ResonantProblem as exc:
                self._cache[M] = exc
        return self._cache[M]

    def kernel(self, M, delta):
        ctx = self.context(M)
        if isinstance(ctx, ResonantProblem):
            if self.fallback is None:
                raise ctx
            return self.fallback(M, delta)
        return ctx.assemble(delta * self.direction, self.spectral_tol)


class OracleFamily:
    """Periodic family evaluated purely from closed forms."""

    def kernel(self, M, delta):
        from .periodic import OracleKernel
        return OracleKernel(M, delta)


def periodic_family(**kwargs):
    """Numeric periodic family with the closed form covering ``M = 0``."""
    from .periodic import OracleKernel, periodic_spec
    return NonlocalFamily(periodic_spec(1.0, 0.0), fallback=OracleKernel, **kwargs)


@dataclass(frozen=True)
class CellResult:
    M: float
    delta: float
    label: str
    min: float = math.nan
    max: float = math.nan
    argmin_t: float = math.nan
    argmin_s: float = math.nan


@dataclass(frozen=True)
class BoundaryEstimate:
    M: float
    kind: str
    delta: float
    bracket: tuple


def classify(family, M, delta, grid=DEFAULT_GRID, tol=SIGN_TOL):
    """Label of a single ``(M, delta)`` cell; build failures become labels."""
    try:
        kernel = family.kernel(M, delta)
    except ResonantProblem:
        return CellResult(M, delta, RESONANT)
    except SpectralObstruction:
        return CellResult(M, delta, OBSTRUCTED)
    domain = getattr(kernel, "domain", (0.0, 1.0))
    t_grid = _grid(grid, domain)
    summary = constant_sign_on_grid(kernel, t_grid, t_grid, tol)
    return CellResult(M, delta, summary.label, summary.min, summary.max, *summary.argmin)


def _bisect(family, M, inside, outside, label, grid, tol, bisect_tol):
    while abs(inside - outside) > bisect_tol:
        mid = float(0.5 * (inside + outside))
        if classify(family, M, mid, grid, tol).label == label:
            inside = mid
        else:
            outside = mid
    return 0.5 * (inside + outside), (float(min(inside, outside)), float(max(inside, outside)))


def scan_column(family, M, deltas, grid=DEFAULT_GRID, tol=SIGN_TOL, bisect_tol=1e-6):
    """Classify one ``M`` column and bisect every strict-sign edge inside it."""
    cells = [classify(family, M, d, grid, tol) for d in deltas]
    bounds = []
    for k in range(len(cells) - 1):
        left, right = cells[k], cells[k + 1]
        for label in (POSITIVE, NEGATIVE):
            if (left.label == label) == (right.label == label):
                continue
            if OBSTRUCTED in (left.label, right.label) or RESONANT in (left.label, right.label):
                continue
            if left.label == label:
                est, bracket = _bisect(family, M, left.delta, right.delta, label, grid, tol,
                                       bisect_tol)
                kind = f"{label}-upper"
            else:
                est, bracket = _bisect(family, M, right.delta, left.delta, label, grid, tol,
                                       bisect_tol)
                kind = f"{label}-lower"
            bounds.append(BoundaryEstimate(M, kind, est, bracket))
    return cells, bounds


def _scan_column_task(args):
    return scan_column(*args)


@dataclass
class SignRegionReport:
    M_axis: np.ndarray
    delta_axis: np.ndarray
    cells: list
    boundaries: list = field(default_factory=list)

    def labels(self):
        """``(len(M_axis), len(delta_axis))`` array of labels."""
        return np.array([[c.label for c in row] for row in self.cells], dtype=object)

    def boundary(self, M, kind):
        for b in self.boundaries:
            if b.M == M and b.kind == kind:
                return b.delta
        return None

    def write_csv(self, fh):
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in self.cells:
            for c in row:
                writer.writerow([_fmt(c.M), _fmt(c.delta), c.label, _fmt(c.min), _fmt(c.max),
                                 _fmt(c.argmin_t), _fmt(c.argmin_s)])

    def summary(self):
        labels = self.labels()
        counts = {lab: int((labels == lab).sum()) for lab in LABELS}
        curves = {}
        for b in self.boundaries:
            curves.setdefault(b.kind, []).append({"M": b.M, "delta": b.delta,
                                                  "bracket": list(b.bracket)})
        return {
            "M_axis": [float(m) for m in self.M_axis],
            "delta_axis": [float(d) for d in self.delta_axis],
            "counts": counts,
            "boundaries": curves,
        }

    def write_json(self, fh):
        json.dump(self.summary(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _fmt(x):
    return "nan" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.17g}"


def sign_region_scan(family, M_values, delta_values, grid=DEFAULT_GRID, tol=SIGN_TOL,
                     bisect_tol=1e-6, workers=1):
    """Classify every ``(M, delta)`` cell and estimate the sign-change curves.

    Columns are independent; with ``workers > 1`` they run in a process pool
    and are merged back in ``M`` order.
    """
    M_values = np.asarray(M_values, dtype=float)
    delta_values = np.asarray(delta_values, dtype=float)
    tasks = [(family, float(M), delta_values, grid, tol, bisect_tol) for M in M_values]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_scan_column_task, tasks))
    else:
        results = [_scan_column_task(task) for task in tasks]
    cells = [r[0] for r in results]
    bounds = [b for r in results for b in r[1]]
    return SignRegionReport(M_values, delta_values, cells, bounds)


def column_is_interval(labels, label):
    """Whether the cells carrying ``label`` form one contiguous run."""
    idx = np.flatnonzero(np.asarray(labels) == label)
    return idx.size == 0 or idx[-1] - idx[0] + 1 == idx.size


def as_dict(obj):
    return asdict(obj)
