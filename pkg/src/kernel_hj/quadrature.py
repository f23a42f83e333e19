"""Exponentially weighted cell quadrature and the O(N) convolution sweeps.

Everything here is written for the *left* orientation: the cell integral

    J^L_c = gamma * int_{x_{c-1}}^{x_c} v(y) exp(-gamma (x_c - y)) dy,   c = 1..N

and the running integral ``I^L``. The right-oriented quantities are obtained by
applying the same machinery to the mirrored line (see ``operators``).

In local coordinates ``s = (y - x_{c-1}) / dx_c`` the cell integral becomes
``nu * int_0^1 exp(-nu (1 - s)) p(s) ds`` with ``nu = gamma * dx_c``, so every
quadrature weight is a combination of the moments computed by ``exp_moments``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .grid import QUADRATURE_MIN_CELLS, Grid1D, GridError

WENO_EPS = 1e-6
STENCIL = 6  # big stencil {x_{c-3}, ..., x_{c+2}}
SUB = 4  # small stencils {x_{c-3+r}, ..., x_{c+r}}

_SERIES_NU = 8.0
_SERIES_TERMS = 50


@dataclass(frozen=True)
class ExpMoments:
    """``left[..., m] = int_0^1 e^{-nu(1-s)} s^m ds``, ``right[..., m] = int_0^1 e^{-nu s} s^m ds``."""

    nu: np.ndarray
    left: np.ndarray
    right: np.ndarray


def exp_moments(nu, m_max: int = 5) -> ExpMoments:
    nu = np.asarray(nu, dtype=float)
    if np.any(nu < 0):
        raise ValueError("nu must be non-negative")
    flat = np.atleast_1d(nu).ravel()
    left = np.empty((flat.size, m_max + 1))
    right = np.empty((flat.size, m_max + 1))
    m = np.arange(m_max + 1)

    # Positive-term series: stable for moderate nu, no cancellation at nu -> 0.
    small = flat <= _SERIES_NU
    if np.any(small):
        z = flat[small][:, None]
        j = np.arange(_SERIES_TERMS)
        # z^j / j!
        logfact = np.concatenate(([0.0], np.cumsum(np.log(np.arange(1, _SERIES_TERMS)))))
        with np.errstate(divide="ignore"):
            powers = np.where(j == 0, 1.0, np.exp(j * np.log(np.maximum(z, 1e-300)) - logfact))
        powers = np.where(z == 0.0, (j == 0).astype(float), powers)
        scale = np.exp(-z)
        left[small] = scale * (powers[:, :, None] / (m[None, None, :] + j[None, :, None] + 1.0)).sum(axis=1)
        # lower incomplete gamma series: e^{-z} sum_j z^j / ((m+1)...(m+1+j))
        rising = np.cumprod(m[None, :] + 1.0 + j[:, None], axis=0)  # (terms, m)
        zj = np.where(z == 0.0, (j == 0).astype(float), np.exp(j * np.log(np.maximum(z, 1e-300))))
        right[small] = scale * (zj[:, :, None] / rising[None, :, :]).sum(axis=1)

    # Forward recurrences damp errors by m/nu < 1 here.
    big = ~small
    if np.any(big):
        z = flat[big]
        e = np.exp(-z)
        left[big, 0] = -np.expm1(-z) / z
        right[big, 0] = left[big, 0]
        for k in range(1, m_max + 1):
            left[big, k] = (1.0 - k * left[big, k - 1]) / z
            right[big, k] = (k * right[big, k - 1] - e) / z

    shape = nu.shape + (m_max + 1,)
    return ExpMoments(nu, left.reshape(shape), right.reshape(shape))


def _vandermonde_inverse(s: np.ndarray) -> np.ndarray:
    """Batched inverse of ``V[j, m] = s_j^m``; maps nodal values to monomial coefficients."""
    n = s.shape[-1]
    V = s[..., :, None] ** np.arange(n)
    return np.linalg.inv(V)


def monomial_weights(Vinv: np.ndarray, nu: np.ndarray) -> np.ndarray:
    """Nodal weights ``w_j = nu * sum_m M_m(nu) Vinv[m, j]`` for each cell."""
    n = Vinv.shape[-1]
    M = exp_moments(nu, n - 1).left
    return nu[..., None] * np.einsum("...m,...mj->...j", M, Vinv)


@dataclass
class LineWeights:
    gamma: float
    nu: np.ndarray  # (N,)
    decay: np.ndarray  # (N+1,), decay[c] = exp(-nu_c), decay[0] unused
    expo: np.ndarray  # (N+1,), exp(-gamma (x_i - a))
    mu: float
    big: np.ndarray  # (N, 6)
    sub: np.ndarray  # (N, 3, 4)
    d: np.ndarray  # (N, 3) linear weights
    weno_cells: np.ndarray  # (N,) bool, cells where WENO is applied
    d_fallbacks: int  # WENO-capable cells reverted to linear because some d_r < 0


@dataclass
class WenoDiagnostics:
    beta: np.ndarray  # (M, N, 3)
    omega: np.ndarray  # (M, N, 3)
    xi: np.ndarray  # (M, N+1), xi[:, c] for cell c; xi[:, 0] = 1


class LinePlan:
    """Per-line stencil geometry for left-oriented quadrature.

    Periodic lines treat node ``N`` as node ``0`` and read stencils across the
    seam; bounded lines shift boundary stencils inward so they stay inside the
    domain. Weights are cached per ``gamma``.
    """

    def __init__(self, grid: Grid1D, periodic: bool, cache_size: int = 8):
        N = grid.n_cells
        if N < QUADRATURE_MIN_CELLS:
            raise GridError(
                f"N={N} cells cannot hold the 6-point quadrature stencil (need N >= {QUADRATURE_MIN_CELLS})"
            )
        self.grid = grid
        self.periodic = periodic
        self.N = N
        x = grid.nodes
        L = grid.length
        cells = np.arange(1, N + 1)
        if periodic:
            start = cells - 3
        else:
            start = np.clip(cells - 3, 0, N - (STENCIL - 1))
        ext = start[:, None] + np.arange(STENCIL)  # extended node index
        if periodic:
            wraps, idx = np.divmod(ext, N)
            pos = x[idx] + wraps * L
        else:
            idx = ext
            pos = x[idx]
        self.gather = np.ascontiguousarray(idx, dtype=np.int64)
        self.widths = grid.widths
        self.s = (pos - x[cells - 1][:, None]) / self.widths[:, None]
        self.Vinv = _vandermonde_inverse(self.s)
        self.weno_ok = start == cells - 3
        sub_s = np.stack([self.s[:, r : r + SUB] for r in range(3)], axis=1)
        self.sub_s = sub_s
        self.sub_Vinv = _vandermonde_inverse(sub_s)
        # closed-form smoothness indicators are valid where the 6 nodes are equispaced
        h = np.diff(self.s, axis=1)
        self.uniform_cells = np.all(np.abs(h - 1.0) <= 1e-12, axis=1)
        self.offset = x - x[0]
        self._cache: dict[float, LineWeights] = {}
        self._cache_size = cache_size

    def weights(self, gamma: float) -> LineWeights:
        gamma = float(gamma)
        hit = self._cache.get(gamma)
        if hit is not None:
            return hit
        if not (gamma > 0.0 and np.isfinite(gamma)):
            raise ValueError(f"gamma must be positive and finite, got {gamma}")
        nu = gamma * self.widths
        big = monomial_weights(self.Vinv, nu)
        sub = monomial_weights(self.sub_Vinv, np.repeat(nu[:, None], 3, axis=1))
        d = self._linear_weights(nu, big, sub)
        ok = self.weno_ok & np.all(d >= 0.0, axis=1)
        decay = np.empty(self.N + 1)
        decay[0] = 0.0
        decay[1:] = np.exp(-nu)
        lw = LineWeights(
            gamma=gamma,
            nu=nu,
            decay=decay,
            expo=np.exp(-gamma * self.offset),
            mu=float(np.exp(-gamma * self.grid.length)),
            big=np.ascontiguousarray(big),
            sub=sub,
            d=d,
            weno_cells=ok,
            d_fallbacks=int(np.count_nonzero(self.weno_ok & ~ok)),
        )
        if len(self._cache) >= self._cache_size:
            self._cache.pop(next(iter(self._cache)))
        self._cache[gamma] = lw
        return lw

    def _linear_weights(self, nu, big, sub):
        # Match sum_r d_r Q_r = Q on the monomials 1, s^4, s^5 (cubics are already exact).
        probes = [0, 4, 5]
        A = np.empty((self.N, 3, 3))
        rhs = np.empty((self.N, 3))
        for row, m in enumerate(probes):
            rhs[:, row] = (big * self.s**m).sum(axis=1)
            for r in range(3):
                A[:, row, r] = (sub[:, r] * self.sub_s[:, r] ** m).sum(axis=1)
        return np.linalg.solve(A, rhs[..., None])[..., 0]

    # -- quadrature ---------------------------------------------------------

    def cell_integrals(self, v: np.ndarray, gamma: float) -> np.ndarray:
        """Linear 5th-order ``J^L``; returns shape (M, N+1) with column 0 zero."""
        lw = self.weights(gamma)
        J = np.zeros(v.shape)
        J[:, 1:] = np.einsum("mcj,cj->mc", v[:, self.gather], lw.big)
        return J

    def smoothness(self, vals: np.ndarray, cells: np.ndarray | None = None) -> np.ndarray:
        """``beta_r`` from big-stencil values ``(M, n, 6)`` on the selected cells.

        Evaluated as the integral over the cell of the squared second and third
        derivatives of the cubic ``p_r`` in local coordinates (scale free);
        equispaced stencils use the closed forms instead.
        """
        if cells is None:
            cells = np.ones(self.N, dtype=bool)
        out = np.empty(vals.shape[:-1] + (3,))
        Vinv = self.sub_Vinv[cells]
        for r in range(3):
            c = np.einsum("mcj,ckj->mck", vals[..., r : r + SUB], Vinv[:, r])
            c2, c3 = c[..., 2], c[..., 3]
            out[..., r] = 4.0 * c2 * c2 + 12.0 * c2 * c3 + 48.0 * c3 * c3
        u = self.uniform_cells[cells]
        if np.any(u):
            out[:, u] = uniform_smoothness(vals[:, u])
        return out

    def weno_integrals(self, v: np.ndarray, gamma: float, eps: float = WENO_EPS):
        """WENO-Z ``J^L`` and smoothness data; returns (J, WenoDiagnostics)."""
        lw = self.weights(gamma)
        vals = v[:, self.gather]  # (M, N, 6)
        J = np.zeros(v.shape)
        J[:, 1:] = np.einsum("mcj,cj->mc", vals, lw.big)
        M = v.shape[0]
        beta = np.zeros((M, self.N, 3))
        omega = np.broadcast_to(lw.d, (M, self.N, 3)).copy()
        xi = np.ones(v.shape)
        cells = lw.weno_cells
        if np.any(cells):
            sv = vals[:, cells]
            b = self.smoothness(sv, cells)
            Jr = np.stack(
                [np.einsum("mcj,cj->mc", sv[..., r : r + SUB], lw.sub[cells, r]) for r in range(3)],
                axis=-1,
            )
            w, x_ = weno_z_weights(b, lw.d[cells], eps)
            J[:, 1:][:, cells] = (w * Jr).sum(axis=-1)
            beta[:, cells] = b
            omega[:, cells] = w
            xi[:, 1:][:, cells] = x_
        return J, WenoDiagnostics(beta=beta, omega=omega, xi=xi)

    def sweep(self, J: np.ndarray, gamma: float) -> np.ndarray:
        return kernels.sweep(np.ascontiguousarray(J), self.weights(gamma).decay)

    def sweep_linear(self, v: np.ndarray, gamma: float) -> np.ndarray:
        """Fused linear quadrature + sweep (the hot path)."""
        lw = self.weights(gamma)
        return kernels.quad_sweep(np.ascontiguousarray(v, dtype=float), self.gather, lw.big, lw.decay)


def uniform_smoothness(vals: np.ndarray) -> np.ndarray:
    """Closed-form ``beta_r`` on equispaced stencils; ``vals[..., 0:6] = v_{i-3..i+2}``."""
    v0, v1, v2, v3, v4, v5 = (vals[..., j] for j in range(6))
    b0 = 13.0 / 12.0 * (-v0 + 3 * v1 - 3 * v2 + v3) ** 2 + 0.25 * (v0 - 5 * v1 + 7 * v2 - 3 * v3) ** 2
    b1 = 13.0 / 12.0 * (-v1 + 3 * v2 - 3 * v3 + v4) ** 2 + 0.25 * (v1 - v2 - v3 + v4) ** 2
    b2 = 13.0 / 12.0 * (-v2 + 3 * v3 - 3 * v4 + v5) ** 2 + 0.25 * (-3 * v2 + 7 * v3 - 5 * v4 + v5) ** 2
    return np.stack([b0, b1, b2], axis=-1)


def weno_z_weights(beta: np.ndarray, d: np.ndarray, eps: float = WENO_EPS):
    """Nonlinear weights and the filter quantity ``xi = beta_min / beta_max``."""
    b0, b2 = beta[..., 0], beta[..., 2]
    tau = np.abs(b0 - b2)
    wt = d * (1.0 + tau[..., None] / (eps + beta))
    omega = wt / wt.sum(axis=-1, keepdims=True)
    bmax = 1.0 + (tau / (eps + np.minimum(b0, b2))) ** 2
    bmin = 1.0 + (tau / (eps + np.maximum(b0, b2))) ** 2
    return omega, bmin / bmax


def compose_I0(IL: np.ndarray, IR: np.ndarray) -> np.ndarray:
    IL = np.asarray(IL)
    IR = np.asarray(IR)
    if IL.shape != IR.shape:
        raise ValueError(f"length mismatch: {IL.shape} vs {IR.shape}")
    return 0.5 * (IL + IR)
