"""Convolution derivative operators and the partial-sum reconstructions.

All functions act on a batch of lines: ``v`` has shape ``(M, N+1)`` and every
row is one grid line. Right-biased quantities are computed by mirroring the
line (``x -> -x``), which maps ``I^R``/``D_R`` onto ``I^L``/``D_L`` and the right
boundary onto the left one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import Grid1D
from .quadrature import LinePlan, WenoDiagnostics, compose_I0


class OperatorError(ValueError):
    pass


@dataclass
class BoundaryDerivatives:
    """``values[m-1]`` holds ``d^m phi / dx^m`` at the boundary, one entry per line."""

    side: str
    values: list
    provenance: str = "given"

    def __post_init__(self):
        if self.side not in ("left", "right"):
            raise OperatorError(f"side must be 'left' or 'right', got {self.side!r}")
        self.values = [np.atleast_1d(np.asarray(v, dtype=float)) for v in self.values]
        for v in self.values:
            if not np.all(np.isfinite(v)):
                raise OperatorError(f"non-finite boundary derivative on the {self.side} side")

    def order(self) -> int:
        return len(self.values)


@dataclass
class DerivativePair:
    minus: np.ndarray
    plus: np.ndarray
    xi_left: np.ndarray | None = None
    xi_right: np.ndarray | None = None
    weno: tuple | None = None  # (left, right) WenoDiagnostics when WENO quadrature ran


class _Orientation:
    """One reading direction of a line: ``fwd`` integrates from the left end."""

    def __init__(self, fwd: LinePlan, bwd: LinePlan):
        self.fwd = fwd
        self.bwd = bwd

    @property
    def periodic(self):
        return self.fwd.periodic

    def IL(self, v, gamma):
        return self.fwd.sweep_linear(v, gamma)

    def IR(self, v, gamma):
        return self.bwd.sweep_linear(v[:, ::-1], gamma)[:, ::-1]

    def DL(self, v, gamma, C_a=0.0, weno=False):
        lw = self.fwd.weights(gamma)
        diag = None
        if weno:
            J, diag = self.fwd.weno_integrals(v, gamma)
            I = self.fwd.sweep(J, gamma)
        else:
            I = self.IL(v, gamma)
        if self.periodic:
            A = I[:, -1] / (1.0 - lw.mu)
        else:
            A = v[:, 0] - C_a
        out = v - I - np.multiply.outer(A, lw.expo)
        return (out, diag) if weno else out

    def D0(self, v, gamma, C_a=0.0, C_b=0.0):
        lw = self.fwd.weights(gamma)
        I0 = compose_I0(self.IL(v, gamma), self.IR(v, gamma))
        mu = lw.mu
        if self.periodic:
            A = I0[:, -1] / (1.0 - mu)
            B = I0[:, 0] / (1.0 - mu)
        else:
            ga = I0[:, 0] - v[:, 0] + C_a
            gb = I0[:, -1] - v[:, -1] + C_b
            A = (mu * gb - ga) / (1.0 - mu * mu)
            B = (mu * ga - gb) / (1.0 - mu * mu)
        # e^{-gamma (b - x)} comes from the mirrored plan; reversing expo is only right on symmetric node sets
        expo_b = self.bwd.weights(gamma).expo[::-1]
        return v - I0 - np.multiply.outer(A, lw.expo) - np.multiply.outer(B, expo_b)


class OperatorContext:
    """Quadrature plans for one grid axis with a periodic or prescribed-value closure.

    Plans cache their weights per ``gamma``, so a context should live as long
    as the grid.
    """

    def __init__(self, grid: Grid1D, periodic: bool):
        self.grid = grid
        self.periodic = periodic
        left = LinePlan(grid, periodic)
        right = LinePlan(grid.mirrored(), periodic)
        self.forward = _Orientation(left, right)
        self.backward = _Orientation(right, left)

    def weights(self, gamma):
        return self.forward.fwd.weights(gamma)


def _lines(v):
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise OperatorError("non-finite input to a convolution operator")
    return (v[None, :], True) if v.ndim == 1 else (v, False)


def _ret(out, squeeze):
    return out[0] if squeeze else out


def apply_IL(v, ctx: OperatorContext, gamma: float):
    v, sq = _lines(v)
    return _ret(ctx.forward.IL(v, gamma), sq)


def apply_IR(v, ctx: OperatorContext, gamma: float):
    v, sq = _lines(v)
    return _ret(ctx.forward.IR(v, gamma), sq)


def apply_DL(v, ctx: OperatorContext, gamma: float, C_a=0.0, weno: bool = False):
    """``v - I^L - A_L e^{-gamma (x - a)}``; ``C_a`` is ``D_L(a)`` for bounded closures."""
    v, sq = _lines(v)
    if weno:
        out, _ = ctx.forward.DL(v, gamma, C_a, weno=True)
    else:
        out = ctx.forward.DL(v, gamma, C_a)
    return _ret(out, sq)


def apply_DR(v, ctx: OperatorContext, gamma: float, C_b=0.0, weno: bool = False):
    v, sq = _lines(v)
    if weno:
        out, _ = ctx.backward.DL(v[:, ::-1], gamma, C_b, weno=True)
    else:
        out = ctx.backward.DL(v[:, ::-1], gamma, C_b)
    return _ret(out[:, ::-1], sq)


def apply_D0(v, ctx: OperatorContext, gamma: float, C_a=0.0, C_b=0.0):
    v, sq = _lines(v)
    return _ret(ctx.forward.D0(v, gamma, C_a, C_b), sq)


@dataclass(frozen=True)
class FilterOptions:
    """How the smoothness filter enters the partial sums.

    The ``p``-th operator power is scaled by ``sigma**(p - offset)``; with the
    default offset 2 the ``p = 2`` term is never damped. ``filter_d0`` scales
    the third-order ``D_0`` correction like the ``p = 3`` term; otherwise it is
    left unfiltered.
    """

    offset: int = 2
    filter_d0: bool = True

    def exponent(self, p: int) -> int:
        return max(p - self.offset, 0)


def node_filter(xi_cells: np.ndarray, periodic: bool) -> np.ndarray:
    """``sigma_i = min(xi_{i-1}, xi_i)`` from per-cell ``xi`` (column ``c`` is cell ``c``)."""
    xi = np.array(xi_cells, dtype=float, copy=True)
    if periodic:
        xi[:, 0] = xi[:, -1]
        prev = np.concatenate([xi[:, -2:-1], xi[:, :-1]], axis=1)
    else:
        xi[:, 0] = 1.0
        prev = np.concatenate([np.ones((xi.shape[0], 1)), xi[:, :-1]], axis=1)
    return np.minimum(prev, xi)


def _one_sided(
    orient: _Orientation,
    phi,
    gamma,
    k,
    derivs,
    weno,
    filtered,
    xi,
    fopts: FilterOptions,
):
    """Left-biased (modified) partial sum for one orientation.

    ``derivs`` is None for periodic lines, else a list of arrays with the
    boundary values of d^m phi/dx^m, m = 1..k, at the left end.
    """
    bounded = derivs is not None
    lw = orient.fwd.weights(gamma)
    expo = lw.expo
    C1 = derivs[0] / gamma if bounded else 0.0

    t1 = orient.DL(phi, gamma, C1)
    diag = None
    if weno:
        d1, diag = orient.DL(phi, gamma, C1, weno=True)
    else:
        d1 = t1

    if filtered:
        if xi is None:
            if diag is None:
                J, diag = orient.fwd.weno_integrals(phi, gamma)
            xi = diag.xi
        sigma = node_filter(xi, orient.periodic)
    else:
        sigma = None

    def scale(p):
        if sigma is None:
            return 1.0
        e = fopts.exponent(p)
        return sigma**e if e else 1.0

    total = d1.copy()
    if k >= 2:
        if bounded:
            corr = sum((-1.0 / gamma) ** m * derivs[m - 1] for m in range(2, k + 1))
            phi2 = t1 - np.multiply.outer(corr, expo)
        else:
            phi2 = t1
        t2 = orient.DL(phi2, gamma, 0.0)
        total = total + scale(2) * t2
    if k == 3:
        if bounded:
            corr = sum((m - 1) * (-1.0 / gamma) ** m * derivs[m - 1] for m in range(2, k + 1))
            phi3 = t2 + np.multiply.outer(corr, expo)
            d0 = orient.D0(phi3, gamma, 0.0, 0.0)
        else:
            phi3 = t2
            d0 = orient.D0(t2, gamma)
        t3 = orient.DL(phi3, gamma, 0.0)
        d0_scale = scale(3) if fopts.filter_d0 else 1.0
        total = total + scale(3) * t3 - d0_scale * d0
    return gamma * total, (diag.xi if diag is not None else xi), diag


def _check_order(k):
    if k not in (1, 2, 3):
        raise OperatorError(f"order k must be 1, 2 or 3, got {k}")


def reconstruct_periodic(
    phi,
    ctx: OperatorContext,
    gamma: float,
    k: int,
    weno: bool = False,
    filtered: bool = False,
    xi=None,
    fopts: FilterOptions = FilterOptions(),
) -> DerivativePair:
    """Left/right-biased derivative approximations on periodic lines.

    ``xi`` optionally supplies per-cell smoothness ratios ``(xi_left, xi_right)``
    in natural node order: ``xi_left[:, c]`` belongs to the cell ending at node
    ``c`` and ``xi_right[:, i]`` to the cell starting at node ``i``. Without it
    they come from the WENO smoothness indicators.
    """
    _check_order(k)
    if not ctx.periodic:
        raise OperatorError("reconstruct_periodic needs a periodic context")
    return _reconstruct(phi, ctx, gamma, k, None, None, weno, filtered, xi, fopts)


def reconstruct_bounded(
    phi,
    ctx: OperatorContext,
    gamma: float,
    k: int,
    bd_left: BoundaryDerivatives,
    bd_right: BoundaryDerivatives,
    weno: bool = False,
    filtered: bool = False,
    xi=None,
    fopts: FilterOptions = FilterOptions(),
) -> DerivativePair:
    """Modified partial sums that collocate the supplied boundary derivatives."""
    _check_order(k)
    if ctx.periodic:
        raise OperatorError("reconstruct_bounded needs a non-periodic context")
    for bd in (bd_left, bd_right):
        if bd is None or bd.order() < k:
            raise OperatorError(f"missing boundary derivatives: need orders 1..{k}")
    return _reconstruct(phi, ctx, gamma, k, bd_left, bd_right, weno, filtered, xi, fopts)


def _reconstruct(phi, ctx, gamma, k, bd_left, bd_right, weno, filtered, xi, fopts):
    phi, sq = _lines(phi)
    M = phi.shape[0]
    if bd_left is not None:
        dl = [np.broadcast_to(v, (M,)) for v in bd_left.values[:k]]
        # mirrored line: d^m/dx'^m = (-1)^m d^m/dx^m
        dr = [(-1.0) ** m * np.broadcast_to(v, (M,)) for m, v in enumerate(bd_right.values[:k], start=1)]
    else:
        dl = dr = None
    xl = xr = None
    if xi is not None:
        xl = np.atleast_2d(xi[0])
        # natural column i (cell [x_i, x_{i+1}]) is column N-i of the mirrored line
        xr = np.atleast_2d(xi[1])[:, ::-1]
    minus, xil, diag_l = _one_sided(ctx.forward, phi, gamma, k, dl, weno, filtered, xl, fopts)
    mplus, xir, diag_r = _one_sided(ctx.backward, phi[:, ::-1].copy(), gamma, k, dr, weno, filtered, xr, fopts)
    plus = -mplus[:, ::-1]
    if xir is not None:
        xir = xir[:, ::-1]
    pair = DerivativePair(
        minus=_ret(minus, sq),
        plus=_ret(plus, sq),
        xi_left=None if xil is None else _ret(xil, sq),
        xi_right=None if xir is None else _ret(xir, sq),
        weno=(diag_l, diag_r) if weno else None,
    )
    return pair
