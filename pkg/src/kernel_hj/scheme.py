"""Semi-discrete kernel scheme: LLF fluxes, time step selection, SSP-RK driver."""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .boundary import extrapolate_derivatives, ilw_dirichlet_1d, ilw_dirichlet_2d, ilw_neumann_1d, ilw_neumann_2d
from .grid import Field, Grid1D, Grid2D
from .operators import FilterOptions, OperatorContext, OperatorError, reconstruct_bounded, reconstruct_periodic
from .problem import DIRICHLET, NEUMANN, OUTFLOW, PERIODIC, Hamiltonian1D, Hamiltonian2D, Problem, wave_speed_1d

BETA_MAX_1D = (2.0, 1.0, 1.243)
BETA_DEFAULT_1D = (2.0, 1.0, 1.2)
BOX_WIDEN = 0.1
ALPHA_FLOOR = 1e-8
FILTER_ACTIVE = 0.99


class StabilityWarning(UserWarning):
    pass


class SolverAbort(RuntimeError):
    pass


def beta_max(k: int, dim: int = 1) -> float:
    return BETA_MAX_1D[k - 1] / (1 if dim == 1 else 2)


def default_beta(k: int, dim: int = 1) -> float:
    return BETA_DEFAULT_1D[k - 1] / (1 if dim == 1 else 2)


@dataclass(frozen=True)
class SchemeConfig:
    k: int = 3
    beta: float | None = None
    cfl: float = 0.5
    quadrature: str = "linear"
    filtered: bool = False
    dim: int = 1
    filter_options: FilterOptions = FilterOptions()
    # 2D step rule: "sum" uses CFL / (ax/dx + ay/dy), "max" uses CFL / max(ax/dx, ay/dy)
    step_rule: str = "sum"

    def __post_init__(self):
        if self.k not in (1, 2, 3):
            raise ValueError(f"order k must be 1, 2 or 3, got {self.k}")
        if self.dim not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.dim}")
        if self.quadrature not in ("linear", "weno"):
            raise ValueError(f"quadrature must be 'linear' or 'weno', got {self.quadrature!r}")
        if self.step_rule not in ("sum", "max"):
            raise ValueError(f"step rule must be 'sum' or 'max', got {self.step_rule!r}")
        if self.beta is None:
            object.__setattr__(self, "beta", default_beta(self.k, self.dim))
        if not (self.beta > 0 and math.isfinite(self.beta)):
            raise ValueError(f"beta must be positive, got {self.beta}")
        if not (self.cfl > 0 and math.isfinite(self.cfl)):
            raise ValueError(f"CFL must be positive, got {self.cfl}")
        bmax = beta_max(self.k, self.dim)
        if self.beta > bmax:
            warnings.warn(
                f"beta={self.beta} exceeds the stability limit {bmax} for k={self.k} in {self.dim}D",
                StabilityWarning,
                stacklevel=3,
            )

    @property
    def weno(self) -> bool:
        return self.quadrature == "weno"


@dataclass
class StepDiagnostics:
    step: int
    t: float
    dt: float
    gamma: tuple
    alpha: tuple
    box: tuple
    max_change: float
    filter_activations: int
    wall_time: float


# --- fluxes ------------------------------------------------------------------


def llf_flux_1d(ham: Hamiltonian1D, u_minus, u_plus, x=None, t=0.0):
    """Local Lax-Friedrichs numerical Hamiltonian."""
    um = np.asarray(u_minus, dtype=float)
    up = np.asarray(u_plus, dtype=float)
    alpha = wave_speed_1d(ham, np.minimum(um, up), np.maximum(um, up), x, t)
    return ham.H(0.5 * (um + up), x, t) - 0.5 * alpha * (up - um)


def _sampled_bound(fn, ulo, uhi, vlo, vhi, x, y, t, n=16):
    s = np.linspace(0.0, 1.0, n + 1)
    shape = np.broadcast(ulo, uhi, vlo, vhi).shape
    best = np.zeros(shape)
    for a in s:
        u = ulo + a * (np.asarray(uhi) - ulo)
        for b in s:
            v = vlo + b * (np.asarray(vhi) - vlo)
            best = np.maximum(best, np.abs(fn(u, v, x, y, t)))
    return best


def box_bounds(ham: Hamiltonian2D, ulo, uhi, vlo, vhi, x=None, y=None, t=0.0):
    """``(max |H1|, max |H2|)`` over ``[ulo, uhi] x [vlo, vhi]`` (elementwise)."""
    b1 = ham.bound1 if ham.bound1 is not None else lambda *a: _sampled_bound(ham.H1, *a)
    b2 = ham.bound2 if ham.bound2 is not None else lambda *a: _sampled_bound(ham.H2, *a)
    return (
        np.asarray(b1(ulo, uhi, vlo, vhi, x, y, t), dtype=float),
        np.asarray(b2(ulo, uhi, vlo, vhi, x, y, t), dtype=float),
    )


def llf_flux_2d(ham: Hamiltonian2D, u_minus, u_plus, v_minus, v_plus, x=None, y=None, t=0.0, ranges=None):
    """2D local Lax-Friedrichs numerical Hamiltonian.

    ``alpha_x`` is bounded over ``I(u-, u+) x [C, D]`` and ``alpha_y`` over
    ``[A, B] x I(v-, v+)`` where ``ranges = (A, B, C, D)`` defaults to the
    global extent of the supplied one-sided derivatives.
    """
    um, up, vm, vp = (np.asarray(a, dtype=float) for a in (u_minus, u_plus, v_minus, v_plus))
    if ranges is None:
        ranges = (min(um.min(), up.min()), max(um.max(), up.max()), min(vm.min(), vp.min()), max(vm.max(), vp.max()))
    A, B, C, D = ranges
    ax, _ = box_bounds(ham, np.minimum(um, up), np.maximum(um, up), C, D, x, y, t)
    _, ay = box_bounds(ham, A, B, np.minimum(vm, vp), np.maximum(vm, vp), x, y, t)
    return ham.H(0.5 * (um + up), 0.5 * (vm + vp), x, y, t) - 0.5 * ax * (up - um) - 0.5 * ay * (vp - vm)


# --- time step ---------------------------------------------------------------


def select_timestep(cfg: SchemeConfig, grid, alpha, remaining=math.inf):
    """``(dt, gammas)`` from the CFL rule; ``dt`` never overshoots ``remaining``.

    ``alpha`` is a scalar in 1D and ``(alpha_x, alpha_y)`` in 2D. A zero wave
    speed is replaced by 1 (the solution then only drifts by ``H`` at a
    constant gradient, and any ``gamma`` is admissible).
    """
    if isinstance(grid, Grid1D):
        a = float(alpha) if alpha > 0 else 1.0
        dt = cfg.cfl * grid.min_width / a
        dt = min(dt, remaining)
        return dt, (cfg.beta / (a * dt),)
    ax, ay = (float(v) for v in alpha)
    top = max(ax, ay)
    if top <= 0:
        ax = ay = 1.0
    else:
        ax, ay = max(ax, ALPHA_FLOOR * top), max(ay, ALPHA_FLOOR * top)
    rates = (ax / grid.x.min_width, ay / grid.y.min_width)
    dt = cfg.cfl / (sum(rates) if cfg.step_rule == "sum" else max(rates))
    dt = min(dt, remaining)
    return dt, (cfg.beta / (ax * dt), cfg.beta / (ay * dt))


# --- SSP Runge-Kutta ---------------------------------------------------------


def ssp_rk_step(phi, t, dt, k, rhs: Callable, enforce: Callable | None = None):
    """One SSP-RK step of order ``k``; ``enforce(phi, t)`` fixes boundary values per stage."""
    fix = enforce if enforce is not None else (lambda v, s: v)
    p1 = fix(phi + dt * rhs(phi, t), t + dt)
    if k == 1:
        return p1
    if k == 2:
        return fix(0.5 * phi + 0.5 * (p1 + dt * rhs(p1, t + dt)), t + dt)
    if k == 3:
        p2 = fix(0.75 * phi + 0.25 * (p1 + dt * rhs(p1, t + dt)), t + 0.5 * dt)
        return fix(phi / 3.0 + 2.0 / 3.0 * (p2 + dt * rhs(p2, t + 0.5 * dt)), t + dt)
    raise ValueError(f"order k must be 1, 2 or 3, got {k}")


# --- solver context ----------------------------------------------------------


@dataclass
class SolverContext:
    """Per-run state shared by the right-hand side evaluations of one solve."""

    problem: Problem
    grid: Grid1D | Grid2D
    cfg: SchemeConfig
    ops: tuple
    gamma: tuple = ()
    box: tuple = ()
    # running record of one-sided derivative ranges and filter activity for the current step
    seen: list = field(default_factory=list)
    filter_hits: int = 0

    @classmethod
    def build(cls, problem: Problem, grid, cfg: SchemeConfig):
        if problem.dim != cfg.dim:
            raise ValueError(f"problem is {problem.dim}D but the scheme is configured for {cfg.dim}D")
        if problem.dim == 1:
            if not isinstance(grid, Grid1D):
                raise ValueError("a 1D problem needs a Grid1D")
            ops = (OperatorContext(grid, problem.boundary.periodic(0)),)
        else:
            if not isinstance(grid, Grid2D):
                raise ValueError("a 2D problem needs a Grid2D")
            ops = (
                OperatorContext(grid.x, problem.boundary.periodic(0)),
                OperatorContext(grid.y, problem.boundary.periodic(1)),
            )
        return cls(problem, grid, cfg, ops)

    def record(self, *arrays):
        self.seen.append(tuple((float(np.min(a)), float(np.max(a))) for a in arrays))


def _reconstruct(phi, ctx: SolverContext, axis, bd_left, bd_right):
    op = ctx.ops[axis]
    cfg = ctx.cfg
    gamma = ctx.gamma[axis]
    kw = dict(weno=cfg.weno, filtered=cfg.filtered, fopts=cfg.filter_options)
    if op.periodic:
        pair = reconstruct_periodic(phi, op, gamma, cfg.k, **kw)
    else:
        pair = reconstruct_bounded(phi, op, gamma, cfg.k, bd_left, bd_right, **kw)
    if pair.xi_left is not None:
        ctx.filter_hits += int(np.count_nonzero(node_xi(pair) < FILTER_ACTIVE))
    return pair


def node_xi(pair):
    return np.minimum(np.asarray(pair.xi_left), np.asarray(pair.xi_right))


def _guess(phi, grid, side):
    return extrapolate_derivatives(phi, grid, side, 2).values[0]


def _boundary_1d(phi, t, ctx: SolverContext):
    p, grid, k = ctx.problem, ctx.grid, ctx.cfg.k
    out = []
    for side in ("left", "right"):
        kind = p.boundary[side].kind
        if kind == DIRICHLET:
            bd, _ = ilw_dirichlet_1d(p, side, t, float(_guess(phi, grid, side)[0]), k)
        elif kind == NEUMANN:
            bd = ilw_neumann_1d(p, side, t, k)
        else:
            bd = extrapolate_derivatives(phi, grid, side, k)
        out.append(bd)
    return out


def rhs_1d(phi, t, ctx: SolverContext):
    """Nodal ``d phi / dt = -H_hat(phi_x^-, phi_x^+)``."""
    bds = (None, None) if ctx.ops[0].periodic else _boundary_1d(phi, t, ctx)
    pair = _reconstruct(phi, ctx, 0, *bds)
    ctx.record(np.concatenate([pair.minus, pair.plus]))
    out = -llf_flux_1d(ctx.problem.hamiltonian, pair.minus, pair.plus, ctx.grid.nodes, t)
    # Dirichlet nodes follow phi_t = f'(t), keeping RK stage values consistent with the interior
    for side, idx in (("left", 0), ("right", -1)):
        if ctx.problem.boundary[side].kind == DIRICHLET:
            out[idx] = ctx.problem.boundary[side].data(t)[1]
    return out


_EDGES = {0: ("left", "right"), 1: ("bottom", "top")}


def _boundary_2d(lines, t, ctx: SolverContext, axis):
    """Boundary derivatives for the lines along ``axis`` (``lines[j]`` is one line)."""
    p, k = ctx.problem, ctx.cfg.k
    g_n = ctx.grid.x if axis == 0 else ctx.grid.y
    g_t = ctx.grid.y if axis == 0 else ctx.grid.x
    out = []
    for side in _EDGES[axis]:
        kind = p.boundary[side].kind
        end = 0 if side in ("left", "bottom") else -1
        s = g_t.nodes
        xb = np.full_like(s, g_n.nodes[end])
        xy = (xb, s) if axis == 0 else (s, xb)
        if kind == DIRICHLET:
            guesses = _guess(lines, g_n, "left" if end == 0 else "right")
            bd, _ = ilw_dirichlet_2d(p, side, s, xy, t, guesses, k)
        elif kind == NEUMANN:
            tan_periodic = ctx.ops[1 - axis].periodic
            bd = ilw_neumann_2d(p, side, s, xy, t, lines[:, end], k, tan_periodic, g_t.length)
        else:
            bd = extrapolate_derivatives(lines, g_n, "left" if end == 0 else "right", k)
        out.append(bd)
    return out


def rhs_2d(phi, t, ctx: SolverContext):
    """Dimension-by-dimension reconstruction feeding the 2D LLF flux."""
    xlines = phi.T  # one line per y_j
    bx = (None, None) if ctx.ops[0].periodic else _boundary_2d(xlines, t, ctx, 0)
    px = _reconstruct(xlines, ctx, 0, *bx)
    by = (None, None) if ctx.ops[1].periodic else _boundary_2d(phi, t, ctx, 1)
    py = _reconstruct(phi, ctx, 1, *by)
    um, up = px.minus.T, px.plus.T
    vm, vp = py.minus, py.plus
    ctx.record(np.concatenate([um, up]), np.concatenate([vm, vp]))
    X, Y = ctx.grid.mesh()
    out = -llf_flux_2d(ctx.problem.hamiltonian, um, up, vm, vp, X, Y, t)
    for side, sl, s in _edge_slices(ctx.grid):
        if ctx.problem.boundary[side].kind == DIRICHLET:
            out[sl] = np.broadcast_to(np.asarray(ctx.problem.boundary[side].data(s, t)["f_t"], dtype=float), s.shape)
    return out


def _edge_slices(grid: Grid2D):
    return (
        ("left", np.s_[0, :], grid.y.nodes),
        ("right", np.s_[-1, :], grid.y.nodes),
        ("bottom", np.s_[:, 0], grid.x.nodes),
        ("top", np.s_[:, -1], grid.x.nodes),
    )


def _enforcer(ctx: SolverContext):
    """Keep periodic duplicate nodes equal after every stage."""
    periodic = [op.periodic for op in ctx.ops]

    def fix(phi, t):
        if not any(periodic):
            return phi
        phi = np.array(phi, copy=True)
        if periodic[0]:
            phi[-1, ...] = phi[0, ...]
        if len(periodic) > 1 and periodic[1]:
            phi[:, -1] = phi[:, 0]
        return phi

    return fix


def _set_dirichlet(phi, ctx: SolverContext, t: float):
    """Exact Dirichlet values at the end of a step; stages integrate ``f'`` instead."""
    p = ctx.problem
    phi = np.array(phi, copy=True)
    if p.dim == 1:
        for side, idx in (("left", 0), ("right", -1)):
            if p.boundary[side].kind == DIRICHLET:
                phi[idx] = p.boundary[side].data(t)[0]
        return phi
    for side, sl, s in _edge_slices(ctx.grid):
        if p.boundary[side].kind == DIRICHLET:
            phi[sl] = np.broadcast_to(np.asarray(p.boundary[side].data(s, t)["f"], dtype=float), s.shape)
    return phi


# --- derivative box and wave speeds ------------------------------------------


def _widen(lo, hi):
    c, r = 0.5 * (lo + hi), 0.5 * (hi - lo)
    return c - (1.0 + BOX_WIDEN) * r, c + (1.0 + BOX_WIDEN) * r


def _initial_box(phi, grid):
    if isinstance(grid, Grid1D):
        d = np.diff(phi) / grid.widths
        return (_widen(d.min(), d.max()),)
    dx = np.diff(phi, axis=0) / grid.x.widths[:, None]
    dy = np.diff(phi, axis=1) / grid.y.widths[None, :]
    return (_widen(dx.min(), dx.max()), _widen(dy.min(), dy.max()))


def _box_from_seen(seen, previous):
    """Widened range of the step's one-sided derivatives, never shrinking below ``previous``.

    A box that follows a transient dip would lower alpha, enlarge the next step
    and push the effective beta past its stability limit once the range recovers.
    """
    dims = len(seen[0])
    box = [_widen(min(s[d][0] for s in seen), max(s[d][1] for s in seen)) for d in range(dims)]
    return tuple((min(lo, p[0]), max(hi, p[1])) for (lo, hi), p in zip(box, previous))


def _alpha(ctx: SolverContext, t):
    p = ctx.problem
    if p.dim == 1:
        (A, B), = ctx.box
        return float(np.max(wave_speed_1d(p.hamiltonian, np.array([A]), np.array([B]), ctx.grid.nodes, t)))
    (A, B), (C, D) = ctx.box
    X, Y = ctx.grid.mesh()
    ax, ay = box_bounds(p.hamiltonian, A, B, C, D, X, Y, t)
    return float(np.max(ax)), float(np.max(ay))


# --- driver ------------------------------------------------------------------


def run_solver(
    problem: Problem, grid, cfg: SchemeConfig, T: float | None = None, callback=None, max_steps: int | None = None
):
    """Advance ``phi0`` to time ``T``; returns ``(Field, [StepDiagnostics])``.

    ``max_steps`` stops the run early after that many steps (the returned
    field then carries the time actually reached).

    Raises :class:`SolverAbort` if the state becomes non-finite.
    """
    T = problem.T if T is None else float(T)
    if not (T >= 0 and math.isfinite(T)):
        raise ValueError(f"final time must be finite and >= 0, got {T}")
    ctx = SolverContext.build(problem, grid, cfg)
    phi = problem.initial_field(grid)
    fix = _enforcer(ctx)
    phi = fix(_set_dirichlet(phi, ctx, 0.0), 0.0)
    rhs = rhs_1d if problem.dim == 1 else rhs_2d
    ctx.box = _initial_box(phi, grid)
    diags = []
    t = 0.0
    n = 0
    while t < T and (max_steps is None or n < max_steps):
        start = time.perf_counter()
        alpha = _alpha(ctx, t)
        remaining = T - t
        dt, gammas = select_timestep(cfg, grid, alpha, remaining)
        last = dt >= remaining * (1.0 - 1e-12)
        if last:
            dt, gammas = select_timestep(cfg, grid, alpha, remaining)
            dt = remaining
        ctx.gamma = gammas
        ctx.seen = []
        ctx.filter_hits = 0
        n += 1
        try:
            new = ssp_rk_step(phi, t, dt, cfg.k, lambda v, s: rhs(v, s, ctx), fix)
        except OperatorError as exc:
            # a stage that overflowed reaches the operators before the step check
            if "non-finite" not in str(exc):
                raise
            raise SolverAbort(f"non-finite solution at step {n} (t={t:.6g}, dt={dt:.3g}): {exc}") from exc
        new = _set_dirichlet(new, ctx, T if last else t + dt)
        if not np.all(np.isfinite(new)):
            raise SolverAbort(f"non-finite solution at step {n} (t={t:.6g}, dt={dt:.3g})")
        change = float(np.max(np.abs(new - phi)))
        phi = new
        t = T if last else t + dt
        ctx.box = _box_from_seen(ctx.seen, ctx.box)
        alphas = alpha if isinstance(alpha, tuple) else (alpha,)
        diags.append(
            StepDiagnostics(n, t, dt, gammas, alphas, ctx.box, change, ctx.filter_hits, time.perf_counter() - start)
        )
        if callback is not None:
            callback(phi, t, diags[-1])
    return Field(grid, phi, t, {"problem": problem.name, "steps": n}), diags
