"""Boundary derivatives for bounded reconstructions.

Inflow sides use the inverse Lax-Wendroff procedure: the boundary data and
the PDE are differentiated in time and tangentially to recover normal
derivatives. Outflow sides use one-sided polynomial extrapolation.

The cascades assume ``H`` has no explicit dependence on ``x``, ``y`` or ``t``.
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass

import numpy as np

from scipy.optimize import brentq

from .grid import Grid1D
from .operators import BoundaryDerivatives
from .problem import Hamiltonian1D, Hamiltonian2D, Problem

log = logging.getLogger(__name__)

ROOT_SAMPLES = 512
ROOT_RADIUS = 10.0
ROOT_TOL = 1e-13
DEGENERATE_TOL = 1e-10

UNIQUE = "unique"
SIGN = "sign-of-H'"
NEAREST = "nearest-to-extrapolation"


class BoundaryError(RuntimeError):
    pass


@dataclass(frozen=True)
class RootSelection:
    candidates: tuple
    root: float
    reason: str


def _side_sign(side):
    if side in ("left", "bottom"):
        return 1.0
    if side in ("right", "top"):
        return -1.0
    raise BoundaryError(f"unknown side {side!r}")


# --- extrapolation -----------------------------------------------------------


def _derivative_weights(h, m_max):
    """Rows ``m = 1..m_max`` of weights giving ``d^m p(0)`` of the interpolant through offsets ``h``."""
    n = len(h)
    scale = np.max(np.abs(h))
    V = np.vander(h / scale, n, increasing=True)
    Vinv = np.linalg.inv(V)
    return np.array([math.factorial(m) * Vinv[m] / scale**m for m in range(1, m_max + 1)])


@functools.lru_cache(maxsize=64)
def _edge_weights(grid: Grid1D, side: str, k: int):
    n = k + 2
    if side == "left":
        h = grid.nodes[:n] - grid.nodes[0]
    else:
        h = grid.nodes[-n:] - grid.nodes[-1]
    return _derivative_weights(h, k)


def extrapolate_derivatives(phi, grid: Grid1D, side: str, k: int) -> BoundaryDerivatives:
    """Derivatives ``1..k`` at a boundary from the degree-``k+1`` interpolant of the ``k+2`` nearest nodes."""
    phi = np.asarray(phi, dtype=float)
    n = k + 2
    if grid.nodes.size < n:
        raise BoundaryError(f"extrapolation of order {k} needs {n} nodes, grid has {grid.nodes.size}")
    if side == "left":
        idx = np.arange(n)
    elif side == "right":
        idx = np.arange(grid.nodes.size - n, grid.nodes.size)
    else:
        raise BoundaryError(f"unknown side {side!r}")
    W = _edge_weights(grid, side, k)
    vals = phi[..., idx] @ W.T
    return BoundaryDerivatives(side, [vals[..., m] for m in range(k)], "extrapolation")


# --- root selection ----------------------------------------------------------


def _roots(F, guess):
    """All roots of ``F`` bracketed on ``guess +- R`` for each node (``guess`` 1D)."""
    guess = np.asarray(guess, dtype=float)
    R = ROOT_RADIUS * (1.0 + np.abs(guess))
    s = np.linspace(-1.0, 1.0, ROOT_SAMPLES + 1)
    # a fixed window about zero keeps small roots visible when the guess is far off
    u = np.sort(np.concatenate([guess[:, None] + R[:, None] * s, np.broadcast_to(ROOT_RADIUS * s, (guess.size, s.size))], axis=1), axis=1)
    f = F(u, np.arange(guess.size)[:, None])
    change = np.signbit(f[:, :-1]) != np.signbit(f[:, 1:])
    node, seg = np.nonzero(change)
    roots = []
    for i, c in zip(node, seg):
        lo, hi = u[i, c], u[i, c + 1]
        if f[i, c] == 0.0:
            roots.append(lo)
            continue
        roots.append(brentq(lambda z: float(F(np.array([z]), np.array([i]))[0]), lo, hi, xtol=ROOT_TOL, rtol=1e-15))
    out = [[] for _ in range(guess.size)]
    for i, r in zip(node, roots):
        if not out[i] or abs(r - out[i][-1]) > 1e-10 * (1.0 + abs(r)):
            out[i].append(float(r))
    return out


def _select(cands, slopes, sign, guess, where):
    ok = [(r, d) for r, d in zip(cands, slopes) if sign * d > DEGENERATE_TOL]
    if not ok:
        if any(abs(d) <= DEGENERATE_TOL for d in slopes):
            raise BoundaryError(f"degenerate characteristic at {where}: |H'| below {DEGENERATE_TOL}")
        raise BoundaryError(f"no inflow root at {where} (candidates {cands}); side is not an inflow boundary")
    if len(cands) == 1:
        return RootSelection(tuple(cands), ok[0][0], UNIQUE)
    if len(ok) == 1:
        return RootSelection(tuple(cands), ok[0][0], SIGN)
    root = min((r for r, _ in ok), key=lambda r: abs(r - guess))
    log.debug("root tie-break at %s: candidates %s, guess %.6g, chose %.6g", where, cands, guess, root)
    return RootSelection(tuple(cands), root, NEAREST)


def select_inflow_root(G, dG, rhs, side, guess, where="boundary"):
    """Solve ``G(u) = rhs`` for the root whose slope has the inflow sign of ``side``.

    ``G``, ``dG`` act elementwise; ``rhs`` and ``guess`` are per-node arrays.
    Returns a list of :class:`RootSelection`, one per node.
    """
    rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
    guess = np.broadcast_to(np.asarray(guess, dtype=float), rhs.shape).copy()
    cands = _roots(lambda u, i: G(u, i) - rhs[i], guess)
    sign = _side_sign(side)
    out = []
    for i, c in enumerate(cands):
        slopes = [float(dG(np.array([r]), np.array([i]))[0]) for r in c]
        tag = where if rhs.size == 1 else f"{where}, node {i}"
        out.append(_select(c, slopes, sign, guess[i], tag))
    return out


# --- 1D cascades -------------------------------------------------------------


def _second(ham: Hamiltonian1D, u):
    if ham.d2H is not None:
        return float(ham.d2H(np.asarray(u, dtype=float)))
    h = 1e-5 * (1.0 + abs(u))
    return float((ham.dH(u + h) - ham.dH(u - h)) / (2 * h))


def ilw_dirichlet_1d(p: Problem, side: str, t: float, guess: float, k: int):
    """Normal derivatives at a Dirichlet inflow point ``phi(x_b, t) = f(t)``.

    Returns ``(BoundaryDerivatives, RootSelection)``.
    """
    ham = p.hamiltonian
    f = p.boundary[side].data(t)
    if len(f) < k + 1:
        raise BoundaryError(f"{side} Dirichlet data supplies {len(f) - 1} time derivatives, order {k} needs {k}")
    sel = select_inflow_root(
        lambda u, i: ham.H(u), lambda u, i: ham.dH(u), -f[1], side, guess, f"{side} boundary, t={t:.6g}"
    )[0]
    u = sel.root
    d1 = float(ham.dH(np.asarray(u)))
    vals = [u]
    if k >= 2:
        vals.append(f[2] / d1**2)
    if k >= 3:
        vals.append(-(f[3] + 3.0 * _second(ham, u) * d1**2 * vals[1] ** 2) / d1**3)
    return BoundaryDerivatives(side, vals, "ilw-dirichlet"), sel


def ilw_neumann_1d(p: Problem, side: str, t: float, k: int) -> BoundaryDerivatives:
    """Normal derivatives at a Neumann inflow point ``phi_x(x_b, t) = g(t)``."""
    ham = p.hamiltonian
    g = p.boundary[side].data(t)
    if len(g) < k:
        raise BoundaryError(f"{side} Neumann data supplies {len(g) - 1} time derivatives, order {k} needs {k - 1}")
    d1 = float(ham.dH(np.asarray(g[0], dtype=float)))
    if abs(d1) < DEGENERATE_TOL:
        raise BoundaryError(f"degenerate characteristic at {side} boundary, t={t:.6g}: |H'(g)| below {DEGENERATE_TOL}")
    vals = [g[0]]
    if k >= 2:
        vals.append(-g[1] / d1)
    if k >= 3:
        vals.append((g[2] - 2.0 * d1 * _second(ham, g[0]) * vals[1] ** 2) / d1**2)
    return BoundaryDerivatives(side, vals, "ilw-neumann")


# --- 2D cascades -------------------------------------------------------------


class _EdgeHamiltonian:
    """``H`` written as a function of (normal, tangential) derivatives of an edge."""

    def __init__(self, ham: Hamiltonian2D, side: str):
        self.ham = ham
        self.swap = side in ("bottom", "top")

    def _args(self, n, s):
        return (s, n) if self.swap else (n, s)

    def H(self, n, s, x, y):
        return self.ham.H(*self._args(n, s), x, y)

    def grads(self, n, s, x, y):
        a = self._args(n, s)
        h1, h2 = self.ham.H1(*a, x, y), self.ham.H2(*a, x, y)
        return (h2, h1) if self.swap else (h1, h2)

    def hessian(self, n, s, x, y):
        a = self._args(n, s)
        if self.ham.hessian is not None:
            h11, h12, h22 = (np.asarray(v, dtype=float) for v in self.ham.hessian(*a, x, y))
        else:
            u, v = a
            hu = 1e-5 * (1.0 + np.abs(u))
            hv = 1e-5 * (1.0 + np.abs(v))
            h11 = (self.ham.H1(u + hu, v, x, y) - self.ham.H1(u - hu, v, x, y)) / (2 * hu)
            h22 = (self.ham.H2(u, v + hv, x, y) - self.ham.H2(u, v - hv, x, y)) / (2 * hv)
            h12 = 0.5 * (
                (self.ham.H1(u, v + hv, x, y) - self.ham.H1(u, v - hv, x, y)) / (2 * hv)
                + (self.ham.H2(u + hu, v, x, y) - self.ham.H2(u - hu, v, x, y)) / (2 * hu)
            )
        return (h22, h12, h11) if self.swap else (h11, h12, h22)


def _edge_side(side):
    # BoundaryDerivatives are stored per reconstruction line: left/right of x-lines, left/right of y-lines
    return "left" if side in ("left", "bottom") else "right"


def _check_keys(data, keys, side):
    missing = [key for key in keys if key not in data]
    if missing:
        raise BoundaryError(f"{side} edge data is missing {', '.join(missing)}")
    return {key: np.asarray(data[key], dtype=float) for key in keys}


def ilw_dirichlet_2d(p: Problem, side: str, s, xy, t: float, guesses, k: int):
    """Normal derivatives along a Dirichlet inflow edge.

    ``s`` holds the tangential node coordinates, ``xy`` the physical ``(x, y)``
    of the edge nodes and ``guesses`` the extrapolated normal slopes used to
    break ties between admissible roots. Returns ``(BoundaryDerivatives,
    [RootSelection])``.
    """
    keys = ["f_t", "f_y", "f_ty", "f_yy", "f_tt"]
    if k >= 3:
        keys += ["f_yyy", "f_tyy", "f_tty", "f_ttt"]
    d = _check_keys(p.boundary[side].data(np.asarray(s, dtype=float), t), keys[: 2 if k == 1 else len(keys)], side)
    d = {key: np.broadcast_to(val, np.shape(s)) for key, val in d.items()}
    E = _EdgeHamiltonian(p.hamiltonian, side)
    x, y = (np.asarray(c, dtype=float) for c in xy)
    q = d["f_y"]
    sels = select_inflow_root(
        lambda u, i: E.H(u, q[i], x[i], y[i]),
        lambda u, i: E.grads(u, q[i], x[i], y[i])[0],
        -d["f_t"],
        side,
        guesses,
        f"{side} edge, t={t:.6g}",
    )
    px = np.array([sel.root for sel in sels])
    vals = [px]
    if k >= 2:
        H1, H2 = (np.asarray(v, dtype=float) for v in E.grads(px, q, x, y))
        pxy = -(d["f_ty"] + H2 * d["f_yy"]) / H1
        pxx = (d["f_tt"] - 2.0 * H1 * H2 * pxy - H2**2 * d["f_yy"]) / H1**2
        vals.append(pxx)
    if k >= 3:
        H11, H12, H22 = E.hessian(px, q, x, y)
        fyy, fty = d["f_yy"], d["f_ty"]
        pxt = -(H1 * pxx + H2 * pxy)
        # tangential, normal and time derivatives of H1 and H2 along the edge
        H1y, H2y = H11 * pxy + H12 * fyy, H12 * pxy + H22 * fyy
        H1x, H2x = H11 * pxx + H12 * pxy, H12 * pxx + H22 * pxy
        H1t, H2t = H11 * pxt + H12 * fty, H12 * pxt + H22 * fty
        pxyy = -(d["f_tyy"] + H11 * pxy**2 + 2 * H12 * pxy * fyy + H22 * fyy**2 + H2 * d["f_yyy"]) / H1
        pxyt = -(d["f_tty"] + H1y * pxt + H2y * fty + H2 * d["f_tyy"]) / H1
        pxxy = -(pxyt + H11 * pxx * pxy + H12 * (pxx * fyy + pxy**2) + H22 * pxy * fyy + H2 * pxyy) / H1
        pxtt = -(d["f_ttt"] + H1t * pxt + H2t * fty + H2 * d["f_tty"]) / H1
        pxxt = -(pxtt + H1x * pxt + H2x * fty + H2 * pxyt) / H1
        Q = H11 * pxx**2 + 2 * H12 * pxx * pxy + H22 * pxy**2
        vals.append(-(pxxt + Q + H2 * pxxy) / H1)
    return BoundaryDerivatives(_edge_side(side), vals, "ilw-dirichlet"), sels


def tangential_derivatives(values, coords, periodic=False, period=None):
    """First and second derivatives along an edge from 5-point stencils.

    Stencils are centred where possible and one-sided near the ends of a
    non-periodic edge (4th order for the first derivative on uniform spacing).
    """
    values = np.asarray(values, dtype=float)
    coords = np.asarray(coords, dtype=float)
    n = coords.size
    if n < 5:
        raise BoundaryError(f"tangential differencing needs at least 5 edge nodes, got {n}")
    d1 = np.empty(n)
    d2 = np.empty(n)
    for j in range(n):
        if periodic:
            m = n - 1  # the last node duplicates the first
            idx = np.arange(j - 2, j + 3)
            h = coords[idx % m] + np.floor_divide(idx, m) * period - coords[j]
            v = values[idx % m]
        else:
            start = min(max(j - 2, 0), n - 5)
            idx = np.arange(start, start + 5)
            h = coords[idx] - coords[j]
            v = values[idx]
        W = _derivative_weights(h, 2)
        d1[j], d2[j] = W @ v
    return d1, d2


def ilw_neumann_2d(p: Problem, side: str, s, xy, t: float, phi_edge, k: int, periodic=False, period=None):
    """Normal derivatives along a Neumann inflow edge ``phi_n = g``.

    Tangential derivatives of ``phi`` along the edge come from numerical
    differentiation of the current edge values ``phi_edge``.
    """
    keys = ["g"] + (["g_y", "g_t"] if k >= 2 else []) + (["g_yy", "g_ty", "g_tt"] if k >= 3 else [])
    s = np.asarray(s, dtype=float)
    d = _check_keys(p.boundary[side].data(s, t), keys, side)
    d = {key: np.broadcast_to(val, s.shape) for key, val in d.items()}
    E = _EdgeHamiltonian(p.hamiltonian, side)
    x, y = (np.asarray(c, dtype=float) for c in xy)
    g = d["g"]
    vals = [g.copy()]
    if k == 1:
        return BoundaryDerivatives(_edge_side(side), vals, "ilw-neumann")
    py, pyy = tangential_derivatives(phi_edge, s, periodic, period)
    H1, H2 = (np.asarray(v, dtype=float) for v in E.grads(g, py, x, y))
    bad = np.abs(H1) < DEGENERATE_TOL
    if np.any(bad):
        raise BoundaryError(f"degenerate characteristic on {side} edge at node {int(np.argmax(bad))}, t={t:.6g}")
    num = d["g_t"] + H2 * d["g_y"]
    pxx = -num / H1
    vals.append(pxx)
    if k >= 3:
        H11, H12, H22 = E.hessian(g, py, x, y)
        pxy = d["g_y"]
        pyt = -(H1 * pxy + H2 * pyy)
        H1t, H2t = H11 * d["g_t"] + H12 * pyt, H12 * d["g_t"] + H22 * pyt
        H1y, H2y = H11 * pxy + H12 * pyy, H12 * pxy + H22 * pyy
        pxxt = -(d["g_tt"] + H2t * pxy + H2 * d["g_ty"]) / H1 + num * H1t / H1**2
        pxxy = -(d["g_ty"] + H2y * pxy + H2 * d["g_yy"]) / H1 + num * H1y / H1**2
        Q = H11 * pxx**2 + 2 * H12 * pxx * pxy + H22 * pxy**2
        vals.append(-(pxxt + Q + H2 * pxxy) / H1)
    return BoundaryDerivatives(_edge_side(side), vals, "ilw-neumann")
