"""Command-line front end: single runs, convergence studies and stability sweeps.

Config files are ``key = value`` lines; ``#`` starts a comment. Builtin
problems are chosen with ``problem = name``; a custom problem instead gives
``hamiltonian``, ``initial``, ``domain`` and one line per side, for example::

    hamiltonian = u
    initial = sin(x)
    domain = -pi, pi
    left = dirichlet: sin(-pi - t)
    right = outflow
    exact = sin(x - t)
    N = 40, 80, 160
    T = 1
"""

from __future__ import annotations

import argparse
import io
import math
import sys
import time
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .boundary import BoundaryError
from .grid import Field, Grid2D, GridError, make_perturbed_grid, make_uniform_grid
from .operators import OperatorError
from .problem import (
    BOUNDARY_KINDS,
    SIDES_1D,
    SIDES_2D,
    Problem,
    ProblemError,
    builtin_problem,
    expression_problem,
    parse_expression,
)
from .quadrature import LinePlan
from .scheme import SchemeConfig, SolverAbort, StabilityWarning, beta_max, run_solver

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ABORT = 3

FORMATS = ("csv", "svg-lines")
MESHES = ("uniform", "perturbed")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class CustomProblem:
    """Expression strings for a problem defined in a config file."""

    name: str
    hamiltonian: str
    initial: str
    domain: tuple
    boundary: dict
    exact: str | None = None
    needs_weno: bool = False

    def build(self, T: float) -> Problem:
        return expression_problem(
            self.name, self.hamiltonian, self.initial, self.domain, self.boundary, self.exact, T, self.needs_weno
        )


@dataclass(frozen=True)
class RunSpec:
    """Everything needed to reproduce one run or study.

    ``quadrature`` and ``filtered`` left as None follow the problem: WENO
    with the filter for problems flagged as needing it, linear otherwise.
    """

    problem: str | None = None
    custom: CustomProblem | None = None
    k: int = 3
    beta: float | None = None
    cfl: float = 0.5
    sizes: tuple = (40,)
    mesh: str = "uniform"
    rho: float = 0.2
    seed: int = 0
    T: float | None = None
    quadrature: str | None = None
    filtered: bool | None = None
    out: str | None = None
    format: str = "csv"
    config_path: str | None = None

    def __post_init__(self):
        if (self.problem is None) == (self.custom is None):
            raise ConfigError("give exactly one of a builtin problem name or a custom problem")
        if not self.sizes:
            raise ConfigError("mesh list is empty")
        if self.mesh not in MESHES:
            raise ConfigError(f"mesh must be one of {', '.join(MESHES)}, got {self.mesh!r}")
        if self.format not in FORMATS:
            raise ConfigError(f"format must be one of {', '.join(FORMATS)}, got {self.format!r}")
        if self.quadrature not in (None, "linear", "weno"):
            raise ConfigError(f"quadrature must be 'linear' or 'weno', got {self.quadrature!r}")
        if self.k not in (1, 2, 3):
            raise ConfigError(f"k must be 1, 2 or 3, got {self.k}")
        if not (self.cfl > 0 and math.isfinite(self.cfl)):
            raise ConfigError(f"CFL must be positive, got {self.cfl}")
        if self.beta is not None and not (self.beta > 0 and math.isfinite(self.beta)):
            raise ConfigError(f"beta must be positive, got {self.beta}")
        if self.T is not None and not (self.T >= 0 and math.isfinite(self.T)):
            raise ConfigError(f"final time must be >= 0, got {self.T}")
        for n in self.sizes:
            try:
                make_uniform_grid(0.0, 1.0, n)
            except GridError as exc:
                raise ConfigError(str(exc)) from None

    def build_problem(self) -> Problem:
        if self.custom is not None:
            return self.custom.build(1.0 if self.T is None else self.T)
        return builtin_problem(self.problem)

    def final_time(self, problem: Problem) -> float:
        return problem.T if self.T is None else self.T

    def scheme_config(self, problem: Problem) -> SchemeConfig:
        quad = self.quadrature or ("weno" if problem.needs_weno else "linear")
        filt = problem.needs_weno if self.filtered is None else self.filtered
        return SchemeConfig(k=self.k, beta=self.beta, cfl=self.cfl, quadrature=quad, filtered=filt, dim=problem.dim)

    def grid(self, problem: Problem, n: int):
        if problem.dim == 1:
            return self._axis(problem.domain, n, self.seed)
        (ax, ay) = problem.domain
        return Grid2D(self._axis(ax, n, self.seed), self._axis(ay, n, self.seed + 1))

    def _axis(self, interval, n, seed):
        a, b = interval
        if self.mesh == "perturbed":
            return make_perturbed_grid(a, b, n, self.rho, seed)
        return make_uniform_grid(a, b, n)


@dataclass(frozen=True)
class ConvergenceRow:
    n: int | tuple
    error: float
    order: float | None
    wall_time: float


# --- config parsing ----------------------------------------------------------

_BOOL = {"on": True, "true": True, "yes": True, "1": True, "off": False, "false": False, "no": False, "0": False}
_ALIASES = {"n": "N", "tfinal": "T", "t": "T", "perturb-rho": "perturb_rho", "rho": "perturb_rho"}
_KEYS = {
    "problem", "k", "beta", "cfl", "N", "mesh", "perturb_rho", "seed", "T", "quadrature", "filter", "out",
    "format", "name", "hamiltonian", "initial", "domain", "exact", "needs_weno", *SIDES_2D,
}
_CUSTOM_KEYS = {"name", "hamiltonian", "initial", "domain", "exact", "needs_weno", *SIDES_2D}


def _number(text):
    return float(parse_expression(text, ()).evalf())


def _sizes(text):
    out = []
    for part in text.split(","):
        part = part.strip()
        n = int(part)
        out.append(n)
    return tuple(out)


def _side(text):
    kind, _, expr = text.partition(":")
    kind = kind.strip().lower()
    if kind not in BOUNDARY_KINDS:
        raise ValueError(f"unknown boundary kind {kind!r}")
    return kind, (expr.strip() or None)


def _domain(text):
    vals = [_number(v) for v in text.split(",")]
    if len(vals) == 2:
        return tuple(vals)
    if len(vals) == 4:
        return ((vals[0], vals[1]), (vals[2], vals[3]))
    raise ValueError("domain needs 2 (1D) or 4 (2D) numbers")


_CONVERT = {
    "k": int,
    "beta": _number,
    "cfl": _number,
    "N": _sizes,
    "perturb_rho": _number,
    "seed": int,
    "T": _number,
    "domain": _domain,
    **{s: _side for s in SIDES_2D},
}


def parse_config_text(text: str, path: str = "<config>") -> RunSpec:
    """Parse config text into a RunSpec; errors cite ``path:line``."""
    raw = {}
    lines = {}
    for lineno, line in enumerate(io.StringIO(text), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        key, eq, value = body.partition("=")
        key, value = key.strip(), value.strip()
        key = _ALIASES.get(key.lower(), key) if key not in _KEYS else key
        if not eq or not key or not value:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line.strip()!r}")
        if key not in _KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        if key in raw:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        try:
            if key in ("filter", "needs_weno"):
                if value.lower() not in _BOOL:
                    raise ValueError(f"expected on/off, got {value!r}")
                raw[key] = _BOOL[value.lower()]
            else:
                raw[key] = _CONVERT.get(key, str)(value)
        except (ValueError, ProblemError) as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key!r}: {exc}") from None
        lines[key] = lineno
    custom = None
    if _CUSTOM_KEYS & set(raw):
        if "problem" in raw:
            raise ConfigError(f"{path}:{lines['problem']}: 'problem' cannot be combined with a custom problem")
        for need in ("hamiltonian", "initial", "domain"):
            if need not in raw:
                raise ConfigError(f"{path}: custom problem needs {need!r}")
        sides = SIDES_1D if np.ndim(raw["domain"][0]) == 0 else SIDES_2D
        extra = [s for s in SIDES_2D if s in raw and s not in sides]
        if extra:
            raise ConfigError(f"{path}:{lines[extra[0]]}: side {extra[0]!r} does not exist in this dimension")
        boundary = {s: raw.get(s, ("periodic", None)) for s in sides}
        custom = CustomProblem(
            name=raw.get("name", "custom"),
            hamiltonian=raw["hamiltonian"],
            initial=raw["initial"],
            domain=raw["domain"],
            boundary=boundary,
            exact=raw.get("exact"),
            needs_weno=raw.get("needs_weno", False),
        )
        try:
            custom.build(1.0)
        except ProblemError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    elif "problem" not in raw:
        raise ConfigError(f"{path}: no problem given")
    kwargs = dict(
        problem=raw.get("problem"),
        custom=custom,
        k=raw.get("k", 3),
        beta=raw.get("beta"),
        cfl=raw.get("cfl", 0.5),
        sizes=raw.get("N", (40,)),
        mesh=raw.get("mesh", "uniform"),
        rho=raw.get("perturb_rho", 0.2),
        seed=raw.get("seed", 0),
        T=raw.get("T"),
        quadrature=raw.get("quadrature"),
        filtered=raw.get("filter"),
        out=raw.get("out"),
        format=raw.get("format", "csv"),
        config_path=path,
    )
    if kwargs["problem"] is not None:
        try:
            builtin_problem(kwargs["problem"])
        except ProblemError as exc:
            raise ConfigError(f"{path}:{lines['problem']}: {exc}") from None
    spec = RunSpec(**kwargs)
    _warn_beta(spec)
    return spec


def parse_config(path) -> RunSpec:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config_text(text, str(path))


def _warn_beta(spec: RunSpec):
    if spec.beta is None:
        return
    dim = spec.build_problem().dim
    bmax = beta_max(spec.k, dim)
    if spec.beta > bmax:
        warnings.warn(
            f"beta={spec.beta} exceeds the stability limit {bmax} for k={spec.k} in {dim}D", StabilityWarning, stacklevel=2
        )


# --- studies -----------------------------------------------------------------


def observed_orders(sizes, errors):
    """Orders ``log(e_prev / e) / log(N / N_prev)``; the first entry is None."""
    out = [None]
    for (n0, e0), (n1, e1) in zip(zip(sizes, errors), zip(sizes[1:], errors[1:])):
        if e0 > 0 and e1 > 0 and n1 != n0:
            out.append(math.log(e0 / e1) / math.log(n1 / n0))
        else:
            out.append(float("nan"))
    return out


def solve(spec: RunSpec, n: int):
    """One run at mesh size ``n``; returns ``(problem, Field, diagnostics)``."""
    problem = spec.build_problem()
    grid = spec.grid(problem, n)
    with warnings.catch_warnings():
        # the warning was already issued when the run configuration was parsed
        warnings.simplefilter("ignore", StabilityWarning)
        cfg = spec.scheme_config(problem)
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            fld, diags = run_solver(problem, grid, cfg, T=spec.final_time(problem))
    except (SolverAbort, BoundaryError, OperatorError) as exc:
        raise SolverAbort(f"N={n}: {exc}") from exc
    return problem, fld, diags


def run_convergence_study(spec: RunSpec) -> list:
    problem = spec.build_problem()
    if problem.exact is None:
        raise ProblemError(f"problem {problem.name!r} has no exact solution; a convergence study needs one")
    errors, times = [], []
    for n in spec.sizes:
        start = time.perf_counter()
        _, fld, _ = solve(spec, n)
        times.append(time.perf_counter() - start)
        errors.append(float(np.max(np.abs(fld.values - problem.exact_field(fld.grid, fld.t)))))
    orders = observed_orders(spec.sizes, errors)
    label = (lambda n: (n, n)) if problem.dim == 2 else (lambda n: n)
    return [ConvergenceRow(label(n), e, o, w) for n, e, o, w in zip(spec.sizes, errors, orders, times)]


# far-away final time for step-limited runs
_HORIZON = 1e300


def stability_sweep(problem: Problem, n: int, k: int, cfls, beta=None, steps=500, quadrature=None, filtered=None):
    """Run ``steps`` steps per CFL; yields ``(cfl, steps_done, growth, finite)``.

    ``growth`` is ``max_n max|phi^n| / max|phi^0| - 1``.
    """
    spec = RunSpec(problem=problem.name, k=k, sizes=(n,), quadrature=quadrature, filtered=filtered)
    grid = spec.grid(problem, n)
    base = float(np.max(np.abs(problem.initial_field(grid))))
    beta = beta_max(k, problem.dim) if beta is None else beta
    for cfl in cfls:
        peak = [base]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", StabilityWarning)
            cfg = replace(spec, cfl=cfl, beta=beta).scheme_config(problem)
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                _, diags = run_solver(
                    problem, grid, cfg, T=_HORIZON, max_steps=steps, callback=lambda phi, t, d: peak.append(np.abs(phi).max())
                )
            done, finite = len(diags), True
        except (SolverAbort, BoundaryError, OperatorError):
            done, finite = len(peak) - 1, False
        yield cfl, done, (max(peak) / base - 1.0 if finite else math.inf), finite


# --- output ------------------------------------------------------------------


def _fmt(v):
    return "%.17g" % v


def solution_csv(fld: Field) -> str:
    """CSV text ``x,phi`` or ``x,y,phi``; 2D rows run over y fastest (row-major in x)."""
    buf = io.StringIO()
    if isinstance(fld.grid, Grid2D):
        buf.write("x,y,phi\n")
        X, Y = fld.grid.mesh()
        for x, y, p in zip(X.ravel(), Y.ravel(), np.asarray(fld.values).ravel()):
            buf.write(f"{_fmt(x)},{_fmt(y)},{_fmt(p)}\n")
    else:
        buf.write("x,phi\n")
        for x, p in zip(fld.grid.nodes, fld.values):
            buf.write(f"{_fmt(x)},{_fmt(p)}\n")
    return buf.getvalue()


def solution_svg(fld: Field, levels: int = 15, size: int = 480) -> str:
    """A 1D curve or a set of 2D contour polylines as standalone SVG."""
    vals = np.asarray(fld.values, dtype=float)
    pad = 0.05 * size

    def scaler(lo, hi, flip):
        span = hi - lo if hi > lo else 1.0
        if flip:
            return lambda v: pad + (hi - np.asarray(v)) / span * (size - 2 * pad)
        return lambda v: pad + (np.asarray(v) - lo) / span * (size - 2 * pad)

    def poly(xs, ys):
        pts = " ".join(f"{a:.3f},{b:.3f}" for a, b in zip(xs, ys))
        return f'<polyline fill="none" stroke="black" stroke-width="1" points="{pts}"/>'

    lines = []
    if isinstance(fld.grid, Grid2D):
        import contourpy

        x, y = fld.grid.x.nodes, fld.grid.y.nodes
        sx, sy = scaler(x[0], x[-1], False), scaler(y[0], y[-1], True)
        gen = contourpy.contour_generator(x, y, vals.T)
        lo, hi = vals.min(), vals.max()
        for level in np.linspace(lo, hi, levels + 2)[1:-1] if hi > lo else []:
            for seg in gen.lines(level):
                lines.append(poly(sx(seg[:, 0]), sy(seg[:, 1])))
    else:
        x = fld.grid.nodes
        sx, sy = scaler(x[0], x[-1], False), scaler(vals.min(), vals.max(), True)
        lines.append(poly(sx(x), sy(vals)))
    head = f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">'
    return "\n".join([head, *lines, "</svg>"]) + "\n"


def export_solution(fld: Field, path, fmt: str = "csv") -> None:
    if fmt not in FORMATS:
        raise ConfigError(f"format must be one of {', '.join(FORMATS)}, got {fmt!r}")
    if not np.all(np.isfinite(fld.values)):
        raise ValueError("cannot export a non-finite field")
    text = solution_csv(fld) if fmt == "csv" else solution_svg(fld)
    _write(path, text)


def _write(path, text):
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc.strerror}") from None


def diagnostics_csv(fld: Field, problem: Problem, gamma) -> str:
    """Per-cell WENO smoothness data (beta_r, omega_r, xi) of the final field.

    In 2D the x-lines are dumped; ``line`` is the y index.
    """
    lines_ = np.atleast_2d(np.asarray(fld.values, dtype=float).T if problem.dim == 2 else fld.values)
    grid = fld.grid.x if problem.dim == 2 else fld.grid
    g = gamma[0] if np.ndim(gamma) else gamma
    plan = LinePlan(grid, problem.boundary.periodic(0))
    _, diag = plan.weno_integrals(lines_, float(g))
    buf = io.StringIO()
    buf.write("line,cell,beta0,beta1,beta2,omega0,omega1,omega2,xi\n")
    for m in range(lines_.shape[0]):
        for c in range(diag.beta.shape[1]):
            row = [*diag.beta[m, c], *diag.omega[m, c], diag.xi[m, c + 1]]
            buf.write(f"{m},{c + 1}," + ",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


def rows_csv(rows) -> str:
    buf = io.StringIO()
    buf.write("N,error,order,wall_time\n")
    for r in rows:
        n = "x".join(map(str, r.n)) if isinstance(r.n, tuple) else str(r.n)
        order = "" if r.order is None else _fmt(r.order)
        buf.write(f"{n},{_fmt(r.error)},{order},{r.wall_time:.3f}\n")
    return buf.getvalue()


# --- argument handling -------------------------------------------------------


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--problem", help="builtin problem name")
    common.add_argument("--config", help="key = value config file")
    common.add_argument("--k", type=int, help="order 1, 2 or 3")
    common.add_argument("--beta", type=float, help="kernel parameter (default from the order)")
    common.add_argument("--cfl", help="CFL number; a comma list for the stability sweep")
    common.add_argument("--n", help="cells per axis, comma list")
    common.add_argument("--mesh", choices=MESHES)
    common.add_argument("--perturb-rho", type=float)
    common.add_argument("--seed", type=int)
    common.add_argument("--tfinal", type=float)
    common.add_argument("--quadrature", choices=("linear", "weno"))
    common.add_argument("--filter", choices=("on", "off"))
    common.add_argument("--out", help="output path (stdout when omitted)")
    common.add_argument("--format", choices=FORMATS)
    common.add_argument("--diagnostics", metavar="PATH", help="write per-cell WENO data of the final field")
    parser = argparse.ArgumentParser(prog="kernel-hj", description="Kernel-based Hamilton-Jacobi solver")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="solve once and export the final field")
    sub.add_parser("convergence", parents=[common], help="error and order table over a mesh list")
    stab = sub.add_parser("stability", parents=[common], help="long runs at large CFL")
    stab.add_argument("--steps", type=int, default=500)
    return parser


def spec_from_args(args) -> RunSpec:
    if args.config and args.problem:
        raise ConfigError("give either --problem or --config, not both")
    if args.config:
        spec = parse_config(args.config)
    elif args.problem:
        try:
            builtin_problem(args.problem)
        except ProblemError as exc:
            raise ConfigError(str(exc)) from None
        spec = RunSpec(problem=args.problem)
    else:
        raise ConfigError("one of --problem or --config is required")
    over = {}
    if args.k is not None:
        over["k"] = args.k
    if args.beta is not None:
        over["beta"] = args.beta
    if args.cfl is not None and args.command != "stability":
        over["cfl"] = _cli_float(args.cfl, "--cfl")
    if args.n is not None:
        try:
            over["sizes"] = _sizes(args.n)
        except ValueError:
            raise ConfigError(f"--n expects a comma list of integers, got {args.n!r}") from None
    for name, key in (("mesh", "mesh"), ("perturb_rho", "rho"), ("seed", "seed"), ("tfinal", "T")):
        if getattr(args, name) is not None:
            over[key] = getattr(args, name)
    if args.quadrature is not None:
        over["quadrature"] = args.quadrature
    if args.filter is not None:
        over["filtered"] = args.filter == "on"
    if args.out is not None:
        over["out"] = args.out
    if args.format is not None:
        over["format"] = args.format
    spec = replace(spec, **over)
    if "beta" in over or "k" in over:
        _warn_beta(spec)
    return spec


def _cli_float(text, flag):
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"{flag} expects a number, got {text!r}") from None


def _cmd_run(spec, args):
    if len(spec.sizes) != 1:
        raise ConfigError("run takes a single mesh size")
    problem, fld, diags = solve(spec, spec.sizes[0])
    export_solution(fld, spec.out, spec.format)
    if args.diagnostics:
        _write(args.diagnostics, diagnostics_csv(fld, problem, diags[-1].gamma if diags else 1.0))
    err = ""
    if problem.exact is not None:
        e = float(np.nanmax(np.abs(fld.values - problem.exact_field(fld.grid, fld.t))))
        err = f", max error {e:.3e}"
    print(f"{problem.name}: {len(diags)} steps to t={fld.t:.6g}{err}", file=sys.stderr)


def _cmd_convergence(spec, args):
    rows = run_convergence_study(spec)
    _write(spec.out, rows_csv(rows))


def _cmd_stability(spec, args):
    problem = spec.build_problem()
    cfls = [_cli_float(c, "--cfl") for c in (args.cfl or "2,10,50").split(",")]
    buf = io.StringIO()
    buf.write("k,beta,cfl,N,steps,growth,finite\n")
    beta = spec.beta if spec.beta is not None else beta_max(spec.k, problem.dim)
    for n in spec.sizes:
        for cfl, done, growth, finite in stability_sweep(
            problem, n, spec.k, cfls, beta, args.steps, spec.quadrature, spec.filtered
        ):
            buf.write(f"{spec.k},{_fmt(beta)},{_fmt(cfl)},{n},{done},{_fmt(growth)},{int(finite)}\n")
    _write(spec.out, buf.getvalue())


_COMMANDS = {"run": _cmd_run, "convergence": _cmd_convergence, "stability": _cmd_stability}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        spec = spec_from_args(args)
        _COMMANDS[args.command](spec, args)
    except (ConfigError, ProblemError, GridError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverAbort, BoundaryError, OperatorError) as exc:
        print(f"solver aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
