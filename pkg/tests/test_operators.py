import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from kernel_hj.grid import make_perturbed_grid, make_uniform_grid
from kernel_hj.operators import (
    BoundaryDerivatives,
    FilterOptions,
    OperatorContext,
    OperatorError,
    apply_D0,
    apply_DL,
    apply_DR,
    reconstruct_bounded,
    reconstruct_periodic,
)

L = 2 * math.pi


def _ctx(n=200, periodic=True, rho=0.0, seed=0):
    g = make_perturbed_grid(-math.pi, math.pi, n, rho, seed) if rho else make_uniform_grid(-math.pi, math.pi, n)
    return OperatorContext(g, periodic)


def _periodic_kernel(w, gamma, x, sign):
    """``gamma int e^{-gamma|x-y|} w(y) dy`` over one-sided periodic history (sign +1: left)."""
    mu = math.exp(-gamma * L)
    if sign > 0:
        val = quad(lambda y: gamma * math.exp(-gamma * (x - y)) * w(y), x - L, x, epsabs=1e-15, epsrel=1e-13, limit=400)[0]
    else:
        val = quad(lambda y: gamma * math.exp(-gamma * (y - x)) * w(y), x, x + L, epsabs=1e-15, epsrel=1e-13, limit=400)[0]
    return val / (1 - mu)


# sin derivatives: d^p sin = sin(x + p pi/2)
def _dsin(p):
    return lambda y: math.sin(y + p * math.pi / 2)


def _expansion_DL(x, gamma, k):
    """Truncated expansion with exact remainder: D_L[v] = sum_{p<=k} (-1)^{p-1} v^(p) / gamma^p + (-1)^k L^{-1}[v^(k+1)] / gamma^(k+1)."""
    series = sum((-1) ** (p - 1) * _dsin(p)(x) / gamma**p for p in range(1, k + 1))
    return series + (-1) ** k * _periodic_kernel(_dsin(k + 1), gamma, x, +1) / gamma ** (k + 1)


def _expansion_DR(x, gamma, k):
    series = sum(-_dsin(p)(x) / gamma**p for p in range(1, k + 1))
    return series - _periodic_kernel(_dsin(k + 1), gamma, x, -1) / gamma ** (k + 1)


@pytest.mark.parametrize("periodic", [True, False])
@given(c=st.floats(-100, 100), gamma=st.floats(0.1, 500))
def test_constants_annihilated(periodic, c, gamma):
    ctx = _ctx(40, periodic)
    v = np.full(41, c)
    for out in (apply_DL(v, ctx, gamma), apply_DR(v, ctx, gamma), apply_D0(v, ctx, gamma)):
        assert np.max(np.abs(out)) <= 1e-13 * max(1.0, abs(c))


def test_prescribed_closure_collocates():
    ctx = _ctx(40, periodic=False)
    gamma = 3.0
    v = np.full(41, 2.0)
    out = apply_DL(v, ctx, gamma, C_a=1.0)
    assert out[0] == pytest.approx(1.0, abs=1e-14)
    np.testing.assert_allclose(out, np.exp(-gamma * (ctx.grid.nodes - ctx.grid.a)), atol=1e-13)
    d0 = apply_D0(v, ctx, gamma, 0.0, 0.0)
    assert abs(d0[0]) <= 1e-14 and abs(d0[-1]) <= 1e-14
    assert apply_DR(v, ctx, gamma, C_b=0.5)[-1] == pytest.approx(0.5, abs=1e-14)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_remainder_expansion_DL(k):
    ctx = _ctx(200)
    gamma = 50.0
    x = ctx.grid.nodes
    out = apply_DL(np.sin(x), ctx, gamma)
    ref = np.array([_expansion_DL(xi, gamma, k) for xi in x[::8]])
    assert np.max(np.abs(out[::8] - ref)) <= 1e-8
    # gamma D_L[sin] approximates cos to O(1/gamma)
    assert np.max(np.abs(gamma * out - np.cos(x))) <= 2.0 / gamma


def test_remainder_expansion_DR():
    ctx = _ctx(200)
    gamma = 50.0
    x = ctx.grid.nodes
    out = apply_DR(np.sin(x), ctx, gamma)
    ref = np.array([_expansion_DR(xi, gamma, 2) for xi in x[::8]])
    assert np.max(np.abs(out[::8] - ref)) <= 1e-8


def test_remainder_expansion_D0():
    ctx = _ctx(200)
    gamma = 50.0
    x = ctx.grid.nodes
    out = apply_D0(np.sin(x), ctx, gamma)
    ref = np.array([0.5 * (_expansion_DL(xi, gamma, 3) + _expansion_DR(xi, gamma, 3)) for xi in x[::8]])
    assert np.max(np.abs(out[::8] - ref)) <= 1e-8
    # leading term -v''/gamma^2
    assert np.max(np.abs(out - np.sin(x) / gamma**2)) <= 2.0 / gamma**4


@pytest.mark.parametrize("rho, seed", [(0.0, 0), (0.2, 1), (0.2, 5)])
@pytest.mark.parametrize("gamma", [5.0, 50.0])
def test_periodic_symbols_on_perturbed_grids(rho, seed, gamma):
    # on e^{ix}: D_L = i/(gamma + i), D_R = -i/(gamma - i), D_0 their mean
    ctx = _ctx(160, rho=rho, seed=seed)
    x = ctx.grid.nodes
    z = np.exp(1j * x)
    sl, sr = 1j / (gamma + 1j), -1j / (gamma - 1j)
    for fn, sym in ((apply_DL, sl), (apply_DR, sr), (apply_D0, 0.5 * (sl + sr))):
        np.testing.assert_allclose(fn(np.sin(x), ctx, gamma), np.imag(sym * z), atol=1e-9)


@pytest.mark.parametrize("rho, seed", [(0.0, 0), (0.2, 2), (0.2, 9)])
def test_bounded_D0_on_perturbed_grids(rho, seed):
    ctx = _ctx(160, periodic=False, rho=rho, seed=seed)
    x = ctx.grid.nodes
    a, b = ctx.grid.a, ctx.grid.b
    gamma, Ca, Cb = 4.0, 0.3, -0.2
    # closed-form one-sided integrals of e^{ix} on [a, b]
    eL, eR = np.exp(-gamma * (x - a)), np.exp(-gamma * (b - x))
    IL = gamma / (gamma + 1j) * (np.exp(1j * x) - np.exp(1j * a) * eL)
    IR = gamma / (gamma - 1j) * (np.exp(1j * x) - np.exp(1j * b) * eR)
    base = np.imag(np.exp(1j * x) - 0.5 * (IL + IR))
    # boundary coefficients from the two collocation conditions D_0(a) = Ca, D_0(b) = Cb
    M = np.array([[eL[0], eR[0]], [eL[-1], eR[-1]]])
    A, B = np.linalg.solve(M, [base[0] - Ca, base[-1] - Cb])
    ref = base - A * eL - B * eR
    np.testing.assert_allclose(apply_D0(np.sin(x), ctx, gamma, Ca, Cb), ref, atol=1e-9)


def test_nonfinite_input_rejected():
    v = np.zeros(41)
    v[3] = np.nan
    with pytest.raises(OperatorError):
        apply_DL(v, _ctx(40), 1.0)


@pytest.mark.parametrize("k", [1, 2, 3])
@pytest.mark.parametrize("weno", [False, True])
def test_reconstruction_of_constant(k, weno):
    ctx = _ctx(40)
    pair = reconstruct_periodic(np.full(41, 3.0), ctx, 7.0, k, weno=weno, filtered=weno)
    assert np.max(np.abs(pair.minus)) <= 1e-12 and np.max(np.abs(pair.plus)) <= 1e-12
    bctx = _ctx(40, periodic=False)
    zero = [np.zeros(1)] * k
    pair = reconstruct_bounded(
        np.full(41, 3.0), bctx, 7.0, k, BoundaryDerivatives("left", zero), BoundaryDerivatives("right", zero)
    )
    assert np.max(np.abs(pair.minus)) <= 1e-12 and np.max(np.abs(pair.plus)) <= 1e-12


@pytest.mark.parametrize("k", [1, 2, 3])
def test_periodic_reconstruction_order(k):
    # gamma = beta / dt with dt = CFL dx; halving dt should shrink the error by about 2^k
    errs = []
    for cfl in (2.0, 1.0, 0.5):
        ctx = _ctx(512)
        dt = cfl * ctx.grid.min_width
        gamma = 1.0 / dt
        pair = reconstruct_periodic(np.sin(ctx.grid.nodes), ctx, gamma, k)
        errs.append(max(np.max(np.abs(pair.minus - np.cos(ctx.grid.nodes))), np.max(np.abs(pair.plus - np.cos(ctx.grid.nodes)))))
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    np.testing.assert_allclose(np.log2(ratios), k + (1 if k == 3 else 0), atol=0.3)


def test_k2_halving_dt_quarters_error():
    errs = []
    for cfl in (1.0, 0.5):
        ctx = _ctx(128)
        gamma = 1.0 / (cfl * ctx.grid.min_width)
        pair = reconstruct_periodic(np.sin(ctx.grid.nodes), ctx, gamma, 2)
        errs.append(np.max(np.abs(pair.minus - np.cos(ctx.grid.nodes))))
    assert 3.5 <= errs[0] / errs[1] <= 4.5


@pytest.mark.parametrize("k", [1, 2, 3])
@pytest.mark.parametrize("offset,filter_d0", [(2, True), (1, True), (2, False)])
def test_unit_filter_is_identity(k, offset, filter_d0):
    ctx = _ctx(64, rho=0.2, seed=4)
    phi = np.sin(ctx.grid.nodes) + 0.3 * np.cos(3 * ctx.grid.nodes)
    ones = (np.ones((1, 65)), np.ones((1, 65)))
    base = reconstruct_periodic(phi, ctx, 5.0, k)
    filt = reconstruct_periodic(phi, ctx, 5.0, k, filtered=True, xi=ones, fopts=FilterOptions(offset, filter_d0))
    scale = np.max(np.abs(phi))
    assert np.max(np.abs(base.minus - filt.minus)) <= 1e-10 * scale
    assert np.max(np.abs(base.plus - filt.plus)) <= 1e-10 * scale


def test_filter_damps_high_powers():
    ctx = _ctx(64)
    phi = np.sin(ctx.grid.nodes)
    zeros = (np.zeros((1, 65)), np.zeros((1, 65)))
    base = reconstruct_periodic(phi, ctx, 5.0, 1)
    filt = reconstruct_periodic(phi, ctx, 5.0, 3, filtered=True, xi=zeros)
    # with sigma = 0 only the first two powers survive, i.e. the k = 2 sum
    k2 = reconstruct_periodic(phi, ctx, 5.0, 2)
    np.testing.assert_allclose(filt.minus, k2.minus, atol=1e-12)
    assert not np.allclose(filt.minus, base.minus)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_bounded_linear_is_exact(k):
    ctx = _ctx(40, periodic=False, rho=0.2, seed=8)
    phi = ctx.grid.nodes.copy()
    d = [np.ones(1)] + [np.zeros(1)] * (k - 1)
    for gamma in (0.5, 20.0):
        pair = reconstruct_bounded(phi, ctx, gamma, k, BoundaryDerivatives("left", d), BoundaryDerivatives("right", d))
        np.testing.assert_allclose(pair.minus, 1.0, atol=1e-12)
        np.testing.assert_allclose(pair.plus, 1.0, atol=1e-12)


def _sin_shift_bd(x, k, side):
    return BoundaryDerivatives(side, [np.array([math.sin(x - 0.3 + m * math.pi / 2)]) for m in range(1, k + 1)])


@pytest.mark.parametrize("k", [1, 2, 3])
def test_bounded_collocation(k):
    ctx = _ctx(100, periodic=False)
    a, b = ctx.grid.a, ctx.grid.b
    phi = np.sin(ctx.grid.nodes - 0.3)
    pair = reconstruct_bounded(phi, ctx, 4.0, k, _sin_shift_bd(a, k, "left"), _sin_shift_bd(b, k, "right"))
    assert pair.minus[0] == pytest.approx(math.cos(a - 0.3), abs=1e-12)
    assert pair.plus[-1] == pytest.approx(math.cos(b - 0.3), abs=1e-12)


def test_bounded_third_order_convergence():
    errs = []
    for gamma in (8.0, 16.0, 32.0):
        ctx = _ctx(400, periodic=False)
        a, b = ctx.grid.a, ctx.grid.b
        phi = np.sin(ctx.grid.nodes - 0.3)
        pair = reconstruct_bounded(phi, ctx, gamma, 3, _sin_shift_bd(a, 3, "left"), _sin_shift_bd(b, 3, "right"))
        errs.append(np.max(np.abs(pair.minus - np.cos(ctx.grid.nodes - 0.3))))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 2.75), orders


def test_bounded_requires_enough_derivatives():
    ctx = _ctx(40, periodic=False)
    bd = BoundaryDerivatives("left", [np.zeros(1)])
    with pytest.raises(OperatorError, match="missing"):
        reconstruct_bounded(np.zeros(41), ctx, 1.0, 2, bd, BoundaryDerivatives("right", [np.zeros(1)]))
    with pytest.raises(OperatorError):
        reconstruct_periodic(np.zeros(41), ctx, 1.0, 2)
    with pytest.raises(OperatorError):
        reconstruct_periodic(np.zeros(41), _ctx(40), 1.0, 4)
    with pytest.raises(OperatorError):
        BoundaryDerivatives("top", [1.0])
    with pytest.raises(OperatorError):
        BoundaryDerivatives("left", [np.inf])


def test_batched_lines_match_single():
    ctx = _ctx(50, rho=0.2, seed=1)
    rows = np.stack([np.sin(ctx.grid.nodes + s) for s in (0.0, 0.5, 1.0)])
    batch = reconstruct_periodic(rows, ctx, 3.0, 3, weno=True, filtered=True)
    for r in range(3):
        one = reconstruct_periodic(rows[r], ctx, 3.0, 3, weno=True, filtered=True)
        np.testing.assert_allclose(batch.minus[r], one.minus, atol=1e-14)
        np.testing.assert_allclose(batch.plus[r], one.plus, atol=1e-14)


def test_mirror_symmetry():
    # reflecting the data swaps and negates the one-sided derivatives
    ctx = _ctx(60, rho=0.0)
    phi = np.exp(np.sin(ctx.grid.nodes))
    pair = reconstruct_periodic(phi, ctx, 4.0, 3)
    ref = reconstruct_periodic(phi[::-1].copy(), ctx, 4.0, 3)
    np.testing.assert_allclose(pair.minus, -ref.plus[::-1], atol=1e-12)
