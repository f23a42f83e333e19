"""Hamilton-Jacobi problem definitions and the built-in benchmark set."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import sympy as sp

Array = np.ndarray

PERIODIC = "periodic"
DIRICHLET = "dirichlet"
NEUMANN = "neumann"
OUTFLOW = "outflow"
BOUNDARY_KINDS = (PERIODIC, DIRICHLET, NEUMANN, OUTFLOW)

SIDES_1D = ("left", "right")
SIDES_2D = ("left", "right", "bottom", "top")


class ProblemError(ValueError):
    pass


@dataclass(frozen=True)
class Hamiltonian1D:
    """``H(u, x, t)`` with its derivatives in ``u``.

    ``speed_bound(lo, hi)`` returns ``max |H'(u)|`` for ``u`` in ``[lo, hi]``
    (elementwise); when absent the bound is estimated by dense sampling.
    """

    H: Callable
    dH: Callable
    d2H: Callable | None = None
    speed_bound: Callable | None = None
    convexity: str | None = None  # "convex", "concave" or None


@dataclass(frozen=True)
class Hamiltonian2D:
    """``H(u, v, x, y, t)``; ``H1``/``H2`` are the partials in ``u`` and ``v``.

    ``bound1(ulo, uhi, vlo, vhi, x, y, t)`` bounds ``|H1|`` over the box
    ``[ulo, uhi] x [vlo, vhi]`` (``bound2`` likewise for ``|H2|``). ``hessian``
    returns ``(H11, H12, H22)`` and is only needed by third-order boundary
    cascades; finite differences of ``H1``/``H2`` are used otherwise.
    """

    H: Callable
    H1: Callable
    H2: Callable
    bound1: Callable | None = None
    bound2: Callable | None = None
    hessian: Callable | None = None


@dataclass(frozen=True)
class SideCondition:
    """Boundary condition on one side.

    1D ``data(t)`` returns the tuple ``(f, f', f'', f''')`` for Dirichlet or
    ``(g, g', g'')`` for Neumann. 2D ``data(s, t)`` takes the tangential
    coordinate ``s`` and returns a dict of partial derivatives keyed
    ``f, f_t, f_y, f_yy, f_ty, f_tt, f_tyy, f_tty, f_ttt`` (Dirichlet) or
    ``g, g_y, g_yy, g_t, g_ty, g_tt`` (Neumann), ``y`` meaning tangential.
    """

    kind: str
    data: Callable | None = None

    def __post_init__(self):
        if self.kind not in BOUNDARY_KINDS:
            raise ProblemError(f"unknown boundary kind {self.kind!r}")
        if self.kind in (DIRICHLET, NEUMANN) and self.data is None:
            raise ProblemError(f"{self.kind} boundary needs boundary data")


@dataclass(frozen=True)
class BoundarySpec:
    sides: dict

    def __post_init__(self):
        names = set(self.sides)
        if names not in (set(SIDES_1D), set(SIDES_2D)):
            raise ProblemError(f"boundary sides must be {SIDES_1D} or {SIDES_2D}, got {sorted(names)}")
        for lo, hi in (("left", "right"), ("bottom", "top")):
            if lo in self.sides:
                per = [self.sides[s].kind == PERIODIC for s in (lo, hi)]
                if any(per) and not all(per):
                    raise ProblemError(f"periodic must be set on both {lo} and {hi}")

    def __getitem__(self, side) -> SideCondition:
        return self.sides[side]

    def periodic(self, axis: int = 0) -> bool:
        side = ("left", "bottom")[axis]
        return self.sides[side].kind == PERIODIC

    @classmethod
    def periodic_1d(cls):
        return cls({s: SideCondition(PERIODIC) for s in SIDES_1D})

    @classmethod
    def periodic_2d(cls):
        return cls({s: SideCondition(PERIODIC) for s in SIDES_2D})


@dataclass(frozen=True)
class Problem:
    name: str
    dim: int
    hamiltonian: Hamiltonian1D | Hamiltonian2D
    initial: Callable
    domain: tuple  # (a, b) or ((ax, bx), (ay, by))
    boundary: BoundarySpec
    exact: Callable | None = None
    T: float = 1.0
    needs_weno: bool = False
    description: str = ""
    # smoothness lost after this time; exact solutions are only trusted before it
    smooth_until: float | None = None

    def initial_field(self, grid):
        if self.dim == 1:
            return np.asarray(self.initial(grid.nodes), dtype=float)
        X, Y = grid.mesh()
        return np.asarray(self.initial(X, Y), dtype=float) * np.ones_like(X)

    def exact_field(self, grid, t):
        if self.exact is None:
            raise ProblemError(f"problem {self.name!r} has no exact solution")
        if self.dim == 1:
            return np.asarray(self.exact(grid.nodes, t), dtype=float)
        X, Y = grid.mesh()
        return np.asarray(self.exact(X, Y, t), dtype=float) * np.ones_like(X)


# --- wave speeds -------------------------------------------------------------

SPEED_SAMPLES = 64


def wave_speed_1d(ham, u_lo, u_hi, x=None, t=0.0):
    """Upper bound of ``max |H'(u)|`` over ``[u_lo, u_hi]`` (elementwise)."""
    if isinstance(ham, Problem):
        ham = ham.hamiltonian
    lo = np.asarray(u_lo, dtype=float)
    hi = np.asarray(u_hi, dtype=float)
    if np.any(lo > hi):
        raise ProblemError("wave_speed_1d needs u_lo <= u_hi")
    if ham.speed_bound is not None:
        return np.asarray(ham.speed_bound(lo, hi), dtype=float)
    s = np.linspace(0.0, 1.0, SPEED_SAMPLES + 1)
    u = lo[..., None] + (hi - lo)[..., None] * s
    xs = None if x is None else np.asarray(x)[..., None]
    return np.abs(ham.dH(u, xs, t)).max(axis=-1)


def _interval_hits(lo, hi, offset, period):
    """True where ``[lo, hi]`` contains ``offset + n*period`` for some integer n."""
    return np.floor((hi - offset) / period) >= np.ceil((lo - offset) / period)


def _critical_bound(f, crit):
    """``max |f|`` over ``[lo, hi]`` given the interior critical points of ``f``."""

    def bound(lo, hi):
        lo, hi = np.broadcast_arrays(np.asarray(lo, float), np.asarray(hi, float))
        out = np.maximum(np.abs(f(lo)), np.abs(f(hi)))
        for c in crit:
            inside = (lo <= c) & (c <= hi)
            out = np.where(inside, np.maximum(out, abs(f(c))), out)
        return out

    return bound


def _trig_bound(f, peak_offset):
    """Bound for ``|sin|``/``|cos|``-type speeds peaking at ``peak_offset + n*pi``."""

    def bound(lo, hi):
        lo, hi = np.broadcast_arrays(np.asarray(lo, float), np.asarray(hi, float))
        out = np.maximum(np.abs(f(lo)), np.abs(f(hi)))
        return np.where(_interval_hits(lo, hi, peak_offset, math.pi), 1.0, out)

    return bound


# --- exact solutions by characteristics --------------------------------------


def characteristic_solution(G, dG, phi0, dphi0, speed_max, convexity=None, samples=64):
    """Exact solution of ``psi_t + G(psi_w) = 0`` from the method of characteristics.

    Solves ``w = xi + t G'(phi0'(xi))`` for the foot point ``xi`` by bracketing
    and bisection. Where several characteristics arrive, the minimum (convex
    ``G``) or maximum (concave ``G``) value is the viscosity solution; for
    other ``G`` such points are returned as NaN.
    """

    def solution(w, t):
        w = np.asarray(w, dtype=float)
        flat = w.ravel()
        if t == 0:
            return np.asarray(phi0(w), dtype=float)
        reach = abs(t) * speed_max * 1.01 + 1e-12
        s = np.linspace(-reach, reach, samples + 1)
        xi = flat[:, None] + s[None, :]
        f = xi + t * dG(dphi0(xi)) - flat[:, None]
        change = np.signbit(f[:, :-1]) != np.signbit(f[:, 1:])
        pt, seg = np.nonzero(change)
        lo = xi[pt, seg].copy()
        hi = xi[pt, seg + 1].copy()
        flo = f[pt, seg]
        target = flat[pt]
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            fm = mid + t * dG(dphi0(mid)) - target
            left = np.signbit(fm) == np.signbit(flo)
            lo = np.where(left, mid, lo)
            flo = np.where(left, fm, flo)
            hi = np.where(left, hi, mid)
            if np.all(hi - lo <= 4e-16 * np.maximum(1.0, np.abs(mid))):
                break
        root = 0.5 * (lo + hi)
        p = dphi0(root)
        val = phi0(root) + t * (p * dG(p) - G(p))
        out = np.full(flat.size, np.nan)
        count = np.bincount(pt, minlength=flat.size)
        if convexity == "convex":
            out[:] = np.inf
            np.minimum.at(out, pt, val)
        elif convexity == "concave":
            out[:] = -np.inf
            np.maximum.at(out, pt, val)
        else:
            single = count[pt] == 1
            out[pt[single]] = val[single]
        out[count == 0] = np.nan
        return out.reshape(w.shape)

    return solution


# --- built-in benchmarks -----------------------------------------------------


def _linear_advection():
    ham = Hamiltonian1D(
        H=lambda u, x=None, t=0.0: u,
        dH=lambda u, x=None, t=0.0: np.ones_like(u),
        d2H=lambda u, x=None, t=0.0: np.zeros_like(u),
        speed_bound=lambda lo, hi: np.ones_like(np.asarray(lo, float)),
    )
    a = -math.pi

    def f(t):
        s = a - t
        return (math.sin(s), -math.cos(s), -math.sin(s), math.cos(s))

    bc = BoundarySpec({"left": SideCondition(DIRICHLET, f), "right": SideCondition(OUTFLOW)})
    return Problem(
        name="linear_advection",
        dim=1,
        hamiltonian=ham,
        initial=np.sin,
        domain=(-math.pi, math.pi),
        boundary=bc,
        exact=lambda x, t: np.sin(x - t),
        T=20.0,
        description="phi_t + phi_x = 0, Dirichlet inflow at x = -pi",
    )


def _burgers_G():
    G = lambda p: 0.5 * (p + 1.0) ** 2
    dG = lambda p: p + 1.0
    return G, dG


def _burgers_1d():
    G, dG = _burgers_G()
    ham = Hamiltonian1D(
        H=lambda u, x=None, t=0.0: G(u),
        dH=lambda u, x=None, t=0.0: dG(u),
        d2H=lambda u, x=None, t=0.0: np.ones_like(u),
        speed_bound=_critical_bound(dG, []),
        convexity="convex",
    )
    phi0 = lambda x: -np.cos(np.pi * x)
    dphi0 = lambda x: np.pi * np.sin(np.pi * x)
    return Problem(
        name="burgers_1d",
        dim=1,
        hamiltonian=ham,
        initial=phi0,
        domain=(-1.0, 1.0),
        boundary=BoundarySpec.periodic_1d(),
        exact=characteristic_solution(G, dG, phi0, dphi0, math.pi + 1.0, "convex"),
        T=0.5 / math.pi**2,
        smooth_until=1.0 / math.pi**2,
        description="phi_t + (phi_x + 1)^2 / 2 = 0, 2-periodic",
    )


def _nonconvex_1d():
    G = lambda p: -np.cos(p + 1.0)
    dG = lambda p: np.sin(p + 1.0)
    ham = Hamiltonian1D(
        H=lambda u, x=None, t=0.0: G(u),
        dH=lambda u, x=None, t=0.0: dG(u),
        d2H=lambda u, x=None, t=0.0: np.cos(u + 1.0),
        speed_bound=_trig_bound(dG, math.pi / 2 - 1.0),
    )
    phi0 = lambda x: -np.cos(np.pi * x)
    dphi0 = lambda x: np.pi * np.sin(np.pi * x)
    return Problem(
        name="nonconvex_1d",
        dim=1,
        hamiltonian=ham,
        initial=phi0,
        domain=(-1.0, 1.0),
        boundary=BoundarySpec.periodic_1d(),
        exact=characteristic_solution(G, dG, phi0, dphi0, 1.0, None),
        T=0.5 / math.pi**2,
        smooth_until=1.0 / math.pi**2,
        description="phi_t - cos(phi_x + 1) = 0, 2-periodic",
    )


def _quartic():
    H = lambda u: 0.25 * (u * u - 1.0) * (u * u - 4.0)
    dH = lambda u: u**3 - 2.5 * u
    d2H = lambda u: 3.0 * u * u - 2.5
    crit = [-math.sqrt(2.5 / 3.0), math.sqrt(2.5 / 3.0)]
    return H, dH, d2H, crit


def _riemann_nonconvex_1d():
    H, dH, d2H, crit = _quartic()
    ham = Hamiltonian1D(
        H=lambda u, x=None, t=0.0: H(u),
        dH=lambda u, x=None, t=0.0: dH(u),
        d2H=lambda u, x=None, t=0.0: d2H(u),
        speed_bound=_critical_bound(dH, crit),
    )
    f = lambda t: (-2.0, 0.0, 0.0, 0.0)
    bc = BoundarySpec({"left": SideCondition(DIRICHLET, f), "right": SideCondition(DIRICHLET, f)})
    return Problem(
        name="riemann_nonconvex_1d",
        dim=1,
        hamiltonian=ham,
        initial=lambda x: -2.0 * np.abs(x),
        domain=(-1.0, 1.0),
        boundary=bc,
        T=1.0,
        needs_weno=True,
        description="phi_t + (phi_x^2 - 1)(phi_x^2 - 4)/4 = 0, phi(+-1, t) = -2",
    )


def _sum_hamiltonian(G, dG, d2G, bound):
    """2D Hamiltonian ``G(u + v)``; both partials equal ``G'(u + v)``."""

    def b(ulo, uhi, vlo, vhi, x=None, y=None, t=0.0):
        return bound(np.asarray(ulo) + vlo, np.asarray(uhi) + vhi)

    return Hamiltonian2D(
        H=lambda u, v, x=None, y=None, t=0.0: G(u + v),
        H1=lambda u, v, x=None, y=None, t=0.0: dG(u + v),
        H2=lambda u, v, x=None, y=None, t=0.0: dG(u + v),
        bound1=b,
        bound2=b,
        hessian=lambda u, v, x=None, y=None, t=0.0: (d2G(u + v),) * 3,
    )


def _diagonal_exact(G, dG, speed_max, convexity):
    # phi(x, y, t) = psi(x + y, t) with psi_t + G2(psi_w) = 0, G2(q) = G(2q)
    psi0 = lambda w: -np.cos(np.pi * w / 2.0)
    dpsi0 = lambda w: 0.5 * np.pi * np.sin(np.pi * w / 2.0)
    sol = characteristic_solution(
        lambda q: G(2.0 * q), lambda q: 2.0 * dG(2.0 * q), psi0, dpsi0, 2.0 * speed_max, convexity
    )
    return lambda x, y, t: sol(np.asarray(x) + np.asarray(y), t)


def _burgers_2d():
    G, dG = _burgers_G()
    ham = _sum_hamiltonian(G, dG, lambda p: np.ones_like(p), _critical_bound(dG, []))
    return Problem(
        name="burgers_2d",
        dim=2,
        hamiltonian=ham,
        initial=lambda x, y: -np.cos(np.pi * (x + y) / 2.0),
        domain=((-2.0, 2.0), (-2.0, 2.0)),
        boundary=BoundarySpec.periodic_2d(),
        exact=_diagonal_exact(G, dG, math.pi + 1.0, "convex"),
        T=0.5 / math.pi**2,
        smooth_until=1.0 / math.pi**2,
        description="phi_t + (phi_x + phi_y + 1)^2 / 2 = 0, 4-periodic",
    )


def _nonconvex_2d():
    G = lambda p: -np.cos(p + 1.0)
    dG = lambda p: np.sin(p + 1.0)
    ham = _sum_hamiltonian(G, dG, lambda p: np.cos(p + 1.0), _trig_bound(dG, math.pi / 2 - 1.0))
    return Problem(
        name="nonconvex_2d",
        dim=2,
        hamiltonian=ham,
        initial=lambda x, y: -np.cos(np.pi * (x + y) / 2.0),
        domain=((-2.0, 2.0), (-2.0, 2.0)),
        boundary=BoundarySpec.periodic_2d(),
        exact=_diagonal_exact(G, dG, 1.0, None),
        T=0.5 / math.pi**2,
        smooth_until=1.0 / math.pi**2,
        description="phi_t - cos(phi_x + phi_y + 1) = 0, 4-periodic",
    )


def _riemann_nonconvex_2d():
    ham = _sum_hamiltonian(np.sin, np.cos, lambda p: -np.sin(p), _trig_bound(np.cos, 0.0))
    bc = BoundarySpec({s: SideCondition(OUTFLOW) for s in SIDES_2D})
    return Problem(
        name="riemann_nonconvex_2d",
        dim=2,
        hamiltonian=ham,
        initial=lambda x, y: np.pi * (np.abs(y) - np.abs(x)),
        domain=((-1.0, 1.0), (-1.0, 1.0)),
        boundary=bc,
        T=1.0,
        needs_weno=True,
        description="phi_t + sin(phi_x + phi_y) = 0, outflow boundaries",
    )


def _control_2d():
    def H(u, v, x, y, t=0.0):
        return np.sin(y) * u + np.sin(x) * v + np.abs(v) - 0.5 * np.sin(y) ** 2 - (1.0 - np.cos(x))

    def H1(u, v, x, y, t=0.0):
        return np.sin(y) * np.ones_like(u)

    def H2(u, v, x, y, t=0.0):
        return np.sin(x) + np.sign(v)

    def bound1(ulo, uhi, vlo, vhi, x, y, t=0.0):
        return np.abs(np.sin(y)) * np.ones_like(np.asarray(ulo, float))

    def bound2(ulo, uhi, vlo, vhi, x, y, t=0.0):
        # the kink of |v| makes sampling unreliable; |sin x| + 1 bounds |H2| everywhere
        return (np.abs(np.sin(x)) + 1.0) * np.ones_like(np.asarray(vlo, float))

    ham = Hamiltonian2D(H=H, H1=H1, H2=H2, bound1=bound1, bound2=bound2)
    return Problem(
        name="control_2d",
        dim=2,
        hamiltonian=ham,
        initial=lambda x, y: np.zeros_like(x),
        domain=((-math.pi, math.pi), (-math.pi, math.pi)),
        boundary=BoundarySpec.periodic_2d(),
        T=1.0,
        description="optimal control: phi_t + sin(y) phi_x + (sin x + sign(phi_y)) phi_y - sin(y)^2/2 - (1 - cos x) = 0",
    )


def _surface_flat():
    def H(u, v, x=None, y=None, t=0.0):
        return -np.sqrt(u * u + v * v + 1.0)

    def H1(u, v, x=None, y=None, t=0.0):
        return -u / np.sqrt(u * u + v * v + 1.0)

    def H2(u, v, x=None, y=None, t=0.0):
        return -v / np.sqrt(u * u + v * v + 1.0)

    def _abs_range(lo, hi):
        lo = np.asarray(lo, float)
        hi = np.asarray(hi, float)
        big = np.maximum(np.abs(lo), np.abs(hi))
        small = np.where((lo <= 0) & (hi >= 0), 0.0, np.minimum(np.abs(lo), np.abs(hi)))
        return small, big

    def bound1(ulo, uhi, vlo, vhi, x=None, y=None, t=0.0):
        # |u| / sqrt(u^2 + v^2 + 1) grows with |u| and shrinks with |v|
        _, U = _abs_range(ulo, uhi)
        V, _ = _abs_range(vlo, vhi)
        return U / np.sqrt(U * U + V * V + 1.0)

    def bound2(ulo, uhi, vlo, vhi, x=None, y=None, t=0.0):
        return bound1(vlo, vhi, ulo, uhi)

    def hessian(u, v, x=None, y=None, t=0.0):
        r = np.sqrt(u * u + v * v + 1.0) ** 3
        return (-(v * v + 1.0) / r, u * v / r, -(u * u + 1.0) / r)

    ham = Hamiltonian2D(H=H, H1=H1, H2=H2, bound1=bound1, bound2=bound2, hessian=hessian)
    return Problem(
        name="surface_flat",
        dim=2,
        hamiltonian=ham,
        initial=lambda x, y: 1.0 - 0.25 * (np.cos(2 * np.pi * x) - 1.0) * (np.cos(2 * np.pi * y) - 1.0),
        domain=((0.0, 1.0), (0.0, 1.0)),
        boundary=BoundarySpec.periodic_2d(),
        T=0.9,
        description="propagating surface phi_t - sqrt(phi_x^2 + phi_y^2 + 1) = 0, periodic",
    )


_BUILTINS = {
    "linear_advection": _linear_advection,
    "burgers_1d": _burgers_1d,
    "nonconvex_1d": _nonconvex_1d,
    "riemann_nonconvex_1d": _riemann_nonconvex_1d,
    "burgers_2d": _burgers_2d,
    "nonconvex_2d": _nonconvex_2d,
    "riemann_nonconvex_2d": _riemann_nonconvex_2d,
    "control_2d": _control_2d,
    "surface_flat": _surface_flat,
}

BUILTIN_NAMES = tuple(_BUILTINS)


def builtin_problem(name: str) -> Problem:
    try:
        return _BUILTINS[name]()
    except KeyError:
        raise ProblemError(f"unknown problem {name!r}; choose from {', '.join(BUILTIN_NAMES)}") from None


# --- custom problems from expression strings ---------------------------------

_TOKEN = re.compile(
    r"\s+|(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?|[A-Za-z_][A-Za-z_0-9]*|\*\*|[-+*/^(),]"
)
_FUNCTIONS = {
    "sin": sp.sin,
    "cos": sp.cos,
    "tan": sp.tan,
    "exp": sp.exp,
    "sqrt": sp.sqrt,
    "abs": sp.Abs,
    "Abs": sp.Abs,
    "sign": sp.sign,
}
_CONSTANTS = {"pi": sp.pi, "E": sp.E}
_SYMBOLS = {n: sp.Symbol(n, real=True) for n in ("u", "v", "x", "y", "t")}


def parse_expression(text: str, variables) -> sp.Expr:
    """Parse a restricted arithmetic expression into sympy.

    Allowed are numbers, ``+ - * / ^ **``, parentheses, the names in
    ``variables``, ``pi``, ``E`` and the functions sin, cos, tan, exp, sqrt,
    abs and sign. Anything else is rejected before evaluation.
    """
    if not isinstance(text, str) or not text.strip():
        raise ProblemError("empty expression")
    allowed = set(variables) | set(_FUNCTIONS) | set(_CONSTANTS)
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ProblemError(f"unexpected character {text[pos]!r} in expression {text!r}")
        tok = m.group(0)
        if (tok[0].isalpha() or tok[0] == "_") and tok not in allowed:
            raise ProblemError(f"name {tok!r} not allowed in expression {text!r}")
        pos = m.end()
    names = {n: _SYMBOLS[n] for n in variables}
    names.update(_FUNCTIONS)
    names.update(_CONSTANTS)
    try:
        expr = sp.sympify(text.replace("^", "**"), locals=names, convert_xor=False)
    except (sp.SympifyError, SyntaxError, TypeError) as exc:
        raise ProblemError(f"cannot parse expression {text!r}: {exc}") from None
    if not isinstance(expr, sp.Expr):
        raise ProblemError(f"expression {text!r} is not scalar")
    return expr


def _d(expr, *syms):
    # d|v|/dv = sign(v) and d sign(v)/dv is taken as 0 away from the kink
    out = sp.diff(expr, *syms) if syms else expr
    return out.replace(sp.DiracDelta, lambda *a: sp.Integer(0))


def _compile(expr, names):
    """Vectorised numpy callable of ``expr`` with positional ``names``."""
    syms = [_SYMBOLS[n] for n in names]
    f = sp.lambdify(syms, expr, modules="numpy")

    def call(*args):
        args = [np.asarray(a, dtype=float) for a in args]
        shape = np.broadcast_shapes(*(a.shape for a in args)) if args else ()
        return np.broadcast_to(np.asarray(f(*args), dtype=float), shape).copy() if shape else float(f(*args))

    return call


def _depends(expr, names):
    return any(_SYMBOLS[n] in expr.free_symbols for n in names)


def _ham_1d(text, needs_autonomous):
    expr = parse_expression(text, ("u", "x", "t"))
    if needs_autonomous and _depends(expr, ("x", "t")):
        raise ProblemError("boundary reconstruction needs H to depend on phi_x only")
    fs = [_compile(_d(expr, *(_SYMBOLS["u"],) * m), ("u", "x", "t")) for m in range(3)]

    def wrap(f):
        def g(u, x=None, t=0.0):
            return f(u, 0.0 if x is None else x, t)

        return g

    c = sp.simplify(_d(expr, _SYMBOLS["u"], _SYMBOLS["u"]))
    convexity = None
    if c.is_number:
        convexity = "convex" if c >= 0 else "concave"
    return Hamiltonian1D(H=wrap(fs[0]), dH=wrap(fs[1]), d2H=wrap(fs[2]), convexity=convexity)


def _ham_2d(text, needs_autonomous):
    expr = parse_expression(text, ("u", "v", "x", "y", "t"))
    if needs_autonomous and _depends(expr, ("x", "y", "t")):
        raise ProblemError("boundary reconstruction needs H to depend on phi_x and phi_y only")
    u, v = _SYMBOLS["u"], _SYMBOLS["v"]
    names = ("u", "v", "x", "y", "t")
    H, H1, H2 = (_compile(e, names) for e in (expr, _d(expr, u), _d(expr, v)))
    h11, h12, h22 = (_compile(e, names) for e in (_d(expr, u, u), _d(expr, u, v), _d(expr, v, v)))

    def wrap(f):
        def g(a, b, x=None, y=None, t=0.0):
            return f(a, b, 0.0 if x is None else x, 0.0 if y is None else y, t)

        return g

    return Hamiltonian2D(
        H=wrap(H),
        H1=wrap(H1),
        H2=wrap(H2),
        hessian=lambda *a, **kw: (wrap(h11)(*a, **kw), wrap(h12)(*a, **kw), wrap(h22)(*a, **kw)),
    )


def _side_1d(kind, text):
    if kind in (PERIODIC, OUTFLOW):
        return SideCondition(kind)
    expr = parse_expression(text, ("t",))
    n = 4 if kind == DIRICHLET else 3
    fs = [_compile(_d(expr, *(_SYMBOLS["t"],) * m), ("t",)) for m in range(n)]
    return SideCondition(kind, lambda t: tuple(float(f(t)) for f in fs))


# partial-derivative keys of 2D boundary data: (key, tangential order, time order)
_DIRICHLET_KEYS = (
    ("f", 0, 0), ("f_t", 0, 1), ("f_y", 1, 0), ("f_yy", 2, 0), ("f_ty", 1, 1), ("f_tt", 0, 2),
    ("f_yyy", 3, 0), ("f_tyy", 2, 1), ("f_tty", 1, 2), ("f_ttt", 0, 3),
)
_NEUMANN_KEYS = (("g", 0, 0), ("g_y", 1, 0), ("g_yy", 2, 0), ("g_t", 0, 1), ("g_ty", 1, 1), ("g_tt", 0, 2))


def _side_2d(kind, text, side, domain):
    if kind in (PERIODIC, OUTFLOW):
        return SideCondition(kind)
    (ax, bx), (ay, by) = domain
    expr = parse_expression(text, ("x", "y", "t"))
    # the edge coordinate is fixed; s runs along the edge
    fixed, tang = {"left": ("x", ax), "right": ("x", bx), "bottom": ("y", ay), "top": ("y", by)}[side]
    tname = "y" if fixed == "x" else "x"
    expr = expr.subs(_SYMBOLS[fixed], tang)
    s_sym, t_sym = _SYMBOLS[tname], _SYMBOLS["t"]
    keys = _DIRICHLET_KEYS if kind == DIRICHLET else _NEUMANN_KEYS
    fs = {k: _compile(_d(expr, *((s_sym,) * a + (t_sym,) * b)), (tname, "t")) for k, a, b in keys}

    def data(s, t):
        s = np.asarray(s, dtype=float)
        return {k: np.broadcast_to(f(s, t), s.shape).astype(float) for k, f in fs.items()}

    return SideCondition(kind, data)


def expression_problem(
    name: str,
    hamiltonian: str,
    initial: str,
    domain,
    boundary: dict | None = None,
    exact: str | None = None,
    T: float = 1.0,
    needs_weno: bool = False,
) -> Problem:
    """Build a problem from expression strings.

    ``hamiltonian`` uses ``u`` (and ``v`` in 2D) for the gradient components
    and may use ``x``, ``y``, ``t`` for periodic or outflow runs. ``initial``
    is a function of ``x`` (and ``y``). ``boundary`` maps each side to
    ``(kind, expression)``; Dirichlet and Neumann data are written in ``t``
    in 1D and in ``x``, ``y``, ``t`` in 2D. Derivatives needed by the
    boundary reconstruction are taken symbolically.
    """
    dom = tuple(domain)
    dim = 2 if len(dom) == 2 and np.ndim(dom[0]) == 1 else 1
    if dim == 1:
        dom = (float(dom[0]), float(dom[1]))
        if not dom[0] < dom[1]:
            raise ProblemError(f"domain must satisfy a < b, got {dom}")
        sides = SIDES_1D
    else:
        dom = tuple((float(a), float(b)) for a, b in dom)
        if not all(a < b for a, b in dom):
            raise ProblemError(f"domain intervals must satisfy a < b, got {dom}")
        sides = SIDES_2D
    boundary = dict(boundary or {s: (PERIODIC, None) for s in sides})
    if set(boundary) != set(sides):
        raise ProblemError(f"boundary must name the sides {', '.join(sides)}")
    for s, (kind, text) in boundary.items():
        if kind not in BOUNDARY_KINDS:
            raise ProblemError(f"unknown boundary kind {kind!r} on the {s} side")
        if kind in (DIRICHLET, NEUMANN) and not text:
            raise ProblemError(f"{kind} boundary on the {s} side needs an expression")
    ilw = any(kind in (DIRICHLET, NEUMANN) for kind, _ in boundary.values())
    if dim == 1:
        ham = _ham_1d(hamiltonian, ilw)
        bc = BoundarySpec({s: _side_1d(k, e) for s, (k, e) in boundary.items()})
        phi0 = _compile(parse_expression(initial, ("x",)), ("x",))
        ex = None if exact is None else _compile(parse_expression(exact, ("x", "t")), ("x", "t"))
    else:
        ham = _ham_2d(hamiltonian, ilw)
        bc = BoundarySpec({s: _side_2d(k, e, s, dom) for s, (k, e) in boundary.items()})
        phi0 = _compile(parse_expression(initial, ("x", "y")), ("x", "y"))
        ex = None if exact is None else _compile(parse_expression(exact, ("x", "y", "t")), ("x", "y", "t"))
    return Problem(
        name=name,
        dim=dim,
        hamiltonian=ham,
        initial=phi0,
        domain=dom,
        boundary=bc,
        exact=ex,
        T=float(T),
        needs_weno=needs_weno,
        description=f"phi_t + {hamiltonian} = 0",
    )
