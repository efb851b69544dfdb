"""Command line front end: ``nlgreen <command> --spec FILE [options]``.

Exit codes::

    0  success
    1  numerical failure (integrator or quadrature did not converge)
    2  resonant two-point problem
    3  spectral obstruction, det(I - A) = 0
    4  spec file unreadable, malformed or inconsistent
    5  verify-oracle tolerance not met
    6  command line usage error
"""
import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np
import yaml

from . import analysis, periodic
from .errors import (IntegrationError, QuadratureError, ResonantProblem, SpecError,
                     SpectralObstruction)
from .expr import Expression
from .functionals import CompositeFunctional, MultiPoint, WeightedIntegral
from .nonlocal_green import NonlocalContext, NonlocalSpec, solve
from .ode_core import DEFAULT_TOL, LinearODEProblem, residual
from .twopoint import BoundaryOperatorSet, is_resonant, rank_precheck, uniqueness_determinant

EXIT_OK = 0
EXIT_NUMERIC = 1
EXIT_RESONANT = 2
EXIT_SPECTRAL = 3
EXIT_SPEC = 4
EXIT_TOLERANCE = 5
EXIT_USAGE = 6

OUT_ENV = "NLGREEN_OUT"
ORACLE_CASES = ((1.0, 0.5), (1.0, -0.3), (2.0, 3.0), (-1.0, -0.5), (0.5, -0.3))


# ---------------------------------------------------------------- spec files

def _fail(node, msg):
    mark = node.start_mark
    raise SpecError(msg, line=mark.line + 1, column=mark.column + 1)


def _mapping(node, what):
    if not isinstance(node, yaml.MappingNode):
        _fail(node, f"{what} must be a mapping")
    out = {}
    for key, value in node.value:
        if not isinstance(key, yaml.ScalarNode):
            _fail(key, "mapping keys must be plain names")
        if key.value in out:
            _fail(key, f"duplicate key {key.value!r}")
        out[key.value] = value
    return out


def _sequence(node, what):
    if not isinstance(node, yaml.SequenceNode):
        _fail(node, f"{what} must be a list")
    return node.value


def _number(node, what):
    if not isinstance(node, yaml.ScalarNode):
        _fail(node, f"{what} must be a number")
    try:
        # YAML 1.1 reads "1e-10" as a string; accept it anyway
        value = float(node.value)
    except ValueError:
        _fail(node, f"{what} must be a number, got {node.value!r}")
    if not math.isfinite(value):
        _fail(node, f"{what} must be finite")
    return value


def _integer(node, what, minimum=1):
    value = _number(node, what)
    if value != int(value) or value < minimum:
        _fail(node, f"{what} must be an integer >= {minimum}")
    return int(value)


def _numbers(node, what):
    if isinstance(node, yaml.ScalarNode):
        return [_number(node, what)]
    return [_number(v, what) for v in _sequence(node, what)]


def _matrix(node, what, n):
    rows = _sequence(node, what)
    if len(rows) != n:
        _fail(node, f"{what} must have {n} rows, got {len(rows)}")
    out = []
    for row in rows:
        vals = _numbers(row, what)
        if len(vals) != n:
            _fail(row, f"{what} rows must have {n} entries, got {len(vals)}")
        out.append(vals)
    return np.array(out)


def _expression(node, what):
    if not isinstance(node, yaml.ScalarNode):
        _fail(node, f"{what} must be an expression")
    try:
        return Expression(node.value)
    except SpecError as exc:
        _fail(node, f"{what}: {exc}")


def _pair(node, what):
    vals = _numbers(node, what)
    if len(vals) != 2:
        _fail(node, f"{what} must be [lo, hi]")
    return vals


def _axis(node, what):
    """A list of values or ``{from, to, num}``."""
    if isinstance(node, yaml.SequenceNode):
        vals = np.array(_numbers(node, what))
        if vals.size == 0:
            _fail(node, f"{what} is empty")
        return vals
    keys = _mapping(node, what)
    for k in keys:
        if k not in ("from", "to", "num"):
            _fail(node, f"unknown key {k!r} in {what}")
    missing = {"from", "to", "num"} - set(keys)
    if missing:
        _fail(node, f"{what} needs keys from, to, num")
    return np.linspace(_number(keys["from"], what), _number(keys["to"], what),
                       _integer(keys["num"], what))


def _functional(node, interval):
    keys = _mapping(node, "functional")
    if len(keys) != 1:
        _fail(node, "functional must have exactly one of: integral, multipoint, sum")
    kind, body = next(iter(keys.items()))
    if kind == "integral":
        fields = _mapping(body, "integral")
        weight = _expression(fields["weight"], "weight") if "weight" in fields else Expression("1")
        lo, hi = _pair(fields["interval"], "integral interval") if "interval" in fields else interval
        if not lo < hi:
            _fail(body, "integral interval must satisfy lo < hi")
        func = WeightedIntegral(weight, lo, hi)
    elif kind == "multipoint":
        fields = _mapping(body, "multipoint")
        if "points" not in fields or "weights" not in fields:
            _fail(body, "multipoint needs points and weights")
        pts = _numbers(fields["points"], "points")
        wts = _numbers(fields["weights"], "weights")
        if len(pts) != len(wts) or not pts:
            _fail(body, "points and weights must be non-empty and of equal length")
        func = MultiPoint(pts, wts)
    elif kind == "sum":
        func = CompositeFunctional(tuple(_functional(t, interval) for t in _sequence(body, "sum")))
    else:
        _fail(node, f"unknown functional kind {kind!r}")
    lo, hi = func.support
    if lo < interval[0] or hi > interval[1]:
        _fail(node, f"functional support [{lo:g}, {hi:g}] is not inside "
                    f"[{interval[0]:g}, {interval[1]:g}]")
    return func


@dataclass
class ScanOptions:
    M: np.ndarray
    delta: np.ndarray
    exclude_M: float = 0.0
    direction: np.ndarray = None
    fallback: str = None
    bisect_tol: float = 1e-6


@dataclass
class RunOptions:
    tol: float = DEFAULT_TOL
    quad_tol: float = 1e-10
    sign_tol: float = analysis.SIGN_TOL
    grid: tuple = (21, 21)
    branch: str = "upper"
    forcing: Expression = None
    points: list = field(default_factory=list)
    scan: ScanOptions = None
    oracle_cases: tuple = ORACLE_CASES
    oracle_threshold: float = 1e-6


TOP_KEYS = {"order", "interval", "coefficients", "M", "boundary", "deltas", "functionals",
            "functional", "forcing", "options", "scan", "eval", "verify"}


def parse_spec_text(text, source="<spec>"):
    """Parse a YAML problem description into ``(NonlocalSpec, RunOptions)``."""
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise SpecError(f"{source}: {getattr(exc, 'problem', exc)}", line=line) from None
    if root is None:
        raise SpecError(f"{source}: empty spec file")
    top = _mapping(root, "spec")
    for key, _ in root.value:
        if key.value not in TOP_KEYS:
            _fail(key, f"unknown key {key.value!r}")
    for key in ("order", "interval"):
        if key not in top:
            _fail(root, f"missing required key {key!r}")
    n = _integer(top["order"], "order")
    interval = _pair(top["interval"], "interval")
    if not interval[0] < interval[1]:
        _fail(top["interval"], "interval must satisfy a < b")
    if "coefficients" in top:
        coefs = [_expression(c, "coefficient") for c in _sequence(top["coefficients"], "coefficients")]
        if len(coefs) != n:
            _fail(top["coefficients"], f"expected {n} coefficients a_1..a_n, got {len(coefs)}")
    else:
        coefs = [Expression("0")] * n
    M = _number(top["M"], "M") if "M" in top else 0.0
    problem = LinearODEProblem(n, tuple(interval), tuple(coefs), M)

    if "boundary" not in top:
        _fail(root, "missing required key 'boundary'")
    bnode = top["boundary"]
    if isinstance(bnode, yaml.ScalarNode):
        if bnode.value != "periodic":
            _fail(bnode, "boundary must be 'periodic' or a mapping with alpha and beta")
        boundary = BoundaryOperatorSet.periodic(n)
    else:
        bkeys = _mapping(bnode, "boundary")
        if "alpha" not in bkeys or "beta" not in bkeys:
            _fail(bnode, "boundary needs alpha and beta")
        boundary = BoundaryOperatorSet(_matrix(bkeys["alpha"], "alpha", n),
                                       _matrix(bkeys["beta"], "beta", n))

    deltas = _numbers(top["deltas"], "deltas") if "deltas" in top else [0.0] * n
    if len(deltas) != n:
        _fail(top["deltas"], f"expected {n} deltas, got {len(deltas)}")

    if "functional" in top and "functionals" in top:
        _fail(root, "give either 'functional' (shared) or 'functionals', not both")
    if "functional" in top:
        funcs = _functional(top["functional"], interval)
        shared = True
    elif "functionals" in top:
        items = _sequence(top["functionals"], "functionals")
        if len(items) != n:
            _fail(top["functionals"], f"expected {n} functionals, got {len(items)}")
        funcs = [_functional(f, interval) for f in items]
        shared = all(f == funcs[0] for f in funcs)
    else:
        _fail(root, "missing 'functional' or 'functionals'")
    spec = NonlocalSpec(problem, boundary, deltas, funcs, shared)

    opts = RunOptions()
    if "forcing" in top:
        opts.forcing = _expression(top["forcing"], "forcing")
    if "options" in top:
        o = _mapping(top["options"], "options")
        for key, node in o.items():
            if key in ("tol", "quad_tol", "sign_tol"):
                value = _number(node, key)
                if value <= 0:
                    _fail(node, f"{key} must be positive")
                setattr(opts, key, value)
            elif key == "grid":
                dims = _sequence(node, "grid")
                if len(dims) != 2:
                    _fail(node, "grid must be [nt, ns]")
                opts.grid = tuple(_integer(d, "grid", 2) for d in dims)
            elif key == "branch":
                if node.value not in ("upper", "lower"):
                    _fail(node, "branch must be upper or lower")
                opts.branch = node.value
            else:
                _fail(node, f"unknown option {key!r}")
    if "eval" in top:
        e = _mapping(top["eval"], "eval")
        if "points" in e:
            for p in _sequence(e["points"], "points"):
                ts = _pair(p, "point")
                opts.points.append(tuple(ts))
    if "scan" in top:
        s = _mapping(top["scan"], "scan")
        for key in s:
            if key not in ("M", "delta", "exclude_M", "direction", "fallback", "bisect_tol"):
                _fail(s[key], f"unknown scan key {key!r}")
        for key in ("M", "delta"):
            if key not in s:
                _fail(top["scan"], f"scan needs {key!r}")
        scan = ScanOptions(_axis(s["M"], "scan M"), _axis(s["delta"], "scan delta"))
        if "exclude_M" in s:
            scan.exclude_M = _number(s["exclude_M"], "exclude_M")
        if "bisect_tol" in s:
            scan.bisect_tol = _number(s["bisect_tol"], "bisect_tol")
        if "direction" in s:
            scan.direction = np.array(_numbers(s["direction"], "direction"))
            if scan.direction.size != n:
                _fail(s["direction"], f"direction must have {n} entries")
        if "fallback" in s:
            if s["fallback"].value != "periodic-oracle":
                _fail(s["fallback"], "the only fallback is 'periodic-oracle'")
            if not _is_periodic_family(spec):
                _fail(s["fallback"], "periodic-oracle fallback needs the first-order periodic "
                                     "problem on [0, 1] with C(u) = int_0^1 u")
            scan.fallback = "periodic-oracle"
        opts.scan = scan
    if "verify" in top:
        v = _mapping(top["verify"], "verify")
        if "threshold" in v:
            opts.oracle_threshold = _number(v["threshold"], "threshold")
        if "cases" in v:
            opts.oracle_cases = tuple(tuple(_pair(c, "case")) for c in _sequence(v["cases"], "cases"))
    return spec, opts


def parse_spec(path):
    """Read and validate a spec file; returns ``(NonlocalSpec, RunOptions)``."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise SpecError(f"cannot read {path}: {exc.strerror}") from None
    return parse_spec_text(text, str(path))


def _is_periodic_family(spec):
    p = spec.problem
    f = spec.functionals[0]
    return (p.order == 1 and p.interval == (0.0, 1.0)
            and p.coefficients[0] == Expression("0")
            and np.array_equal(spec.boundary.alpha, [[1.0]])
            and np.array_equal(spec.boundary.beta, [[-1.0]])
            and f == WeightedIntegral("1", 0.0, 1.0))


# ---------------------------------------------------------------- commands

def _fmt(x):
    return f"{float(x):.17g}"


def _out_dir(args):
    path = args.out or os.environ.get(OUT_ENV) or "."
    os.makedirs(path, exist_ok=True)
    return path


def _grid(args, opts):
    if args.grid:
        return args.grid
    return opts.grid


def _context(spec, opts, args):
    tol = args.tol or opts.tol
    return NonlocalContext(spec, tol, opts.quad_tol, branch=opts.branch)


def cmd_check(spec, opts, args, out):
    ok = rank_precheck(spec.boundary)
    print(f"rank_precheck: {'ok' if ok else 'failed'}", file=out)
    tol = args.tol or opts.tol
    from .ode_core import integrate_fundamental_system
    fsys = integrate_fundamental_system(spec.problem, tol)
    det = uniqueness_determinant(spec.problem, spec.boundary, fsys)
    print(f"uniqueness_determinant: {_fmt(det)}", file=out)
    if not ok or is_resonant(spec.problem, spec.boundary, fsys)[0]:
        raise ResonantProblem(f"the two-point problem is resonant (det={det:.3e})", det)
    ctx = NonlocalContext(spec, tol, opts.quad_tol, branch=opts.branch)
    G = ctx.assemble(spec.deltas)
    print(f"det(I-A): {_fmt(G.det_IA)}", file=out)
    print(f"shared_functional: {str(spec.shared).lower()}", file=out)
    print("status: ok", file=out)
    return EXIT_OK


def _green_csv(G, t, s, fh, g_too=True):
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["t", "s", "G", "g"] if g_too else ["t", "s", "G"])
    Gv = np.atleast_1d(G.evaluate(t, s))
    gv = np.atleast_1d(G.g.evaluate(t, s))
    for row in zip(np.atleast_1d(t), np.atleast_1d(s), Gv, gv):
        writer.writerow([_fmt(v) for v in (row if g_too else row[:3])])


def _tensor_grid(domain, dims):
    a, b = domain
    T, S = np.meshgrid(np.linspace(a, b, dims[0]), np.linspace(a, b, dims[1]), indexing="ij")
    return T.ravel(), S.ravel()


def cmd_build(spec, opts, args, out):
    ctx = _context(spec, opts, args)
    G = ctx.assemble(spec.deltas)
    t, s = _tensor_grid(spec.problem.interval, _grid(args, opts))
    path = os.path.join(_out_dir(args), "green.csv")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        _green_csv(G, t, s, fh)
    summary = {
        "order": spec.order,
        "M": spec.problem.shift,
        "deltas": list(spec.deltas),
        "uniqueness_determinant": ctx.g.determinant,
        "C_omega": ctx.C_omega.tolist(),
        "A": G.A.tolist(),
        "det_I_minus_A": G.det_IA,
        "grid": list(_grid(args, opts)),
    }
    with open(os.path.join(_out_dir(args), "build.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {path}", file=out)
    return EXIT_OK


def cmd_eval(spec, opts, args, out):
    ctx = _context(spec, opts, args)
    G = ctx.assemble(spec.deltas)
    if opts.points and not args.grid:
        t, s = (np.array(v) for v in zip(*opts.points))
    else:
        t, s = _tensor_grid(spec.problem.interval, _grid(args, opts))
    buf = io.StringIO()
    _green_csv(G, t, s, buf, g_too=False)
    out.write(buf.getvalue())
    if args.out or os.environ.get(OUT_ENV):
        with open(os.path.join(_out_dir(args), "eval.csv"), "w", encoding="utf-8",
                  newline="") as fh:
            fh.write(buf.getvalue())
    return EXIT_OK


def cmd_solve(spec, opts, args, out):
    if opts.forcing is None:
        raise SpecError("solve needs a 'forcing' expression")
    ctx = _context(spec, opts, args)
    G = ctx.assemble(spec.deltas)
    u = solve(G, opts.forcing)
    nt = _grid(args, opts)[0]
    t = np.linspace(*spec.problem.interval, nt)
    states = u.states(t)
    res = residual(spec.problem, u, t, opts.forcing)
    path = os.path.join(_out_dir(args), "solution.csv")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t"] + [f"u{j}" for j in range(spec.order)] + ["residual"])
        for k in range(nt):
            writer.writerow([_fmt(t[k])] + [_fmt(v) for v in states[:, k]] + [_fmt(res[k])])
    bvals = spec.boundary.values(u)
    cvals = u.functional_values()
    bc = bvals - np.asarray(spec.deltas) * cvals
    scale = max(1.0, float(np.abs(states).max()))
    print(f"wrote {path}", file=out)
    print(f"max_ode_residual: {float(np.abs(res).max()):.3e}", file=out)
    print(f"relative_ode_residual: {float(np.abs(res).max()) / scale:.3e}", file=out)
    print(f"max_boundary_residual: {float(np.abs(bc).max()):.3e}", file=out)
    return EXIT_OK


def _scan_family(spec, opts, args):
    scan = opts.scan
    fallback = periodic.OracleKernel if scan.fallback else None
    tol = args.tol or opts.tol
    return analysis.NonlocalFamily(spec, scan.direction, fallback, tol=tol, quad_tol=opts.quad_tol)


def cmd_scan(spec, opts, args, out):
    if opts.scan is None:
        raise SpecError("scan needs a 'scan' section")
    scan = opts.scan
    M_axis, d_axis = scan.M, scan.delta
    if args.grid:
        M_axis = np.linspace(M_axis[0], M_axis[-1], args.grid[0])
        d_axis = np.linspace(d_axis[0], d_axis[-1], args.grid[1])
    M_axis = M_axis[np.abs(M_axis) >= scan.exclude_M] if scan.exclude_M > 0 else M_axis
    report = analysis.sign_region_scan(_scan_family(spec, opts, args), M_axis, d_axis,
                                       grid=analysis.DEFAULT_GRID, tol=opts.sign_tol,
                                       bisect_tol=scan.bisect_tol, workers=args.workers)
    outdir = _out_dir(args)
    with open(os.path.join(outdir, "scan.csv"), "w", encoding="utf-8", newline="") as fh:
        report.write_csv(fh)
    with open(os.path.join(outdir, "scan.json"), "w", encoding="utf-8") as fh:
        report.write_json(fh)
    counts = report.summary()["counts"]
    print(" ".join(f"{k}={v}" for k, v in counts.items() if v), file=out)
    print(f"wrote {os.path.join(outdir, 'scan.csv')}", file=out)
    return EXIT_OK


def oracle_errors(cases=ORACLE_CASES, dims=(21, 21), tol=DEFAULT_TOL, quad_tol=1e-10):
    """Max ``|G_numeric - G_oracle|`` on a ``t x s`` grid for each ``(M, delta)``."""
    base = periodic.periodic_spec(1.0, 0.0)
    t, s = _tensor_grid((0.0, 1.0), dims)
    errs = []
    for M, delta in cases:
        ctx = NonlocalContext(base.with_parameters(shift=M), tol, quad_tol)
        G = ctx.assemble([delta])
        errs.append(float(np.max(np.abs(G.evaluate(t, s) - periodic.oracle_G(t, s, M, delta)))))
    return errs


def cmd_verify_oracle(spec, opts, args, out):
    tol = args.tol or opts.tol
    errs = oracle_errors(opts.oracle_cases, _grid(args, opts), tol, opts.quad_tol)
    worst = 0.0
    for (M, delta), err in zip(opts.oracle_cases, errs):
        print(f"M={M:g} delta={delta:g} max_abs_error={err:.3e}", file=out)
        worst = max(worst, err)
    passed = worst <= opts.oracle_threshold
    print(f"{'PASS' if passed else 'FAIL'} worst={worst:.3e} threshold={opts.oracle_threshold:.1e}",
          file=out)
    return EXIT_OK if passed else EXIT_TOLERANCE


COMMANDS = {
    "check": cmd_check,
    "build": cmd_build,
    "eval": cmd_eval,
    "solve": cmd_solve,
    "scan": cmd_scan,
    "verify-oracle": cmd_verify_oracle,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _grid_arg(text):
    try:
        a, b = text.lower().split("x")
        dims = int(a), int(b)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected NxM, got {text!r}") from None
    if min(dims) < 2:
        raise argparse.ArgumentTypeError("grid sizes must be at least 2")
    return dims


def _positive(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not value > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return value


def _workers(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return value


def build_parser():
    parser = _Parser(prog="nlgreen", description=__doc__.split("\n")[0],
                     epilog="Exit codes: 0 ok, 1 numerical failure, 2 resonant, "
                            "3 spectral obstruction, 4 spec error, 5 oracle tolerance, 6 usage.")
    parser.add_argument("command", choices=list(COMMANDS))
    parser.add_argument("--spec", metavar="PATH", help="YAML problem description")
    parser.add_argument("--out", metavar="DIR",
                        help=f"output directory (default ${OUT_ENV} or the current directory)")
    parser.add_argument("--grid", metavar="NxM", type=_grid_arg,
                        help="t x s grid for build/eval/verify-oracle, M x delta for scan")
    parser.add_argument("--tol", metavar="X", type=_positive, help="integrator tolerance")
    parser.add_argument("--workers", metavar="K", type=_workers, default=1,
                        help="worker processes for scan")
    return parser


def main(argv=None, out=None):
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    try:
        if args.spec is None:
            if args.command != "verify-oracle":
                print(f"nlgreen: error: {args.command} needs --spec", file=sys.stderr)
                return EXIT_USAGE
            spec, opts = periodic.periodic_spec(1.0, 0.5), RunOptions()
        else:
            spec, opts = parse_spec(args.spec)
        return COMMANDS[args.command](spec, opts, args, out)
    except SpecError as exc:
        print(f"nlgreen: spec error: {exc}", file=sys.stderr)
        return EXIT_SPEC
    except ResonantProblem as exc:
        print(f"nlgreen: resonant: {exc}", file=sys.stderr)
        return EXIT_RESONANT
    except SpectralObstruction as exc:
        print(f"nlgreen: spectral obstruction: {exc}", file=sys.stderr)
        return EXIT_SPECTRAL
    except (IntegrationError, QuadratureError, FloatingPointError) as exc:
        print(f"nlgreen: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        # semantic checks raised below the parser (e.g. unsupported data)
        print(f"nlgreen: spec error: {exc}", file=sys.stderr)
        return EXIT_SPEC
    except OSError as exc:
        print(f"nlgreen: cannot write output: {exc}", file=sys.stderr)
        return EXIT_SPEC


if __name__ == "__main__":
    sys.exit(main())
