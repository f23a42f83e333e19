import math

import numpy as np
import pytest
import sympy as sp

from kernel_hj.boundary import (
    DEGENERATE_TOL,
    NEAREST,
    ROOT_RADIUS,
    SIGN,
    UNIQUE,
    BoundaryError,
    extrapolate_derivatives,
    ilw_dirichlet_1d,
    ilw_dirichlet_2d,
    ilw_neumann_1d,
    ilw_neumann_2d,
    select_inflow_root,
    tangential_derivatives,
)
from kernel_hj.grid import make_perturbed_grid, make_uniform_grid
from kernel_hj.problem import (
    DIRICHLET,
    NEUMANN,
    OUTFLOW,
    BoundarySpec,
    Problem,
    SideCondition,
    builtin_problem,
    expression_problem,
)


def test_extrapolate_quadratic():
    g = make_uniform_grid(0, 1, 10)
    bd = extrapolate_derivatives(g.nodes**2, g, "left", 2)
    np.testing.assert_allclose([v[()] if np.ndim(v) == 0 else v[0] for v in bd.values], [0.0, 2.0], atol=1e-10)
    assert bd.provenance == "extrapolation"


def test_extrapolate_constant():
    g = make_perturbed_grid(0, 1, 10, 0.2, 3)
    bd = extrapolate_derivatives(np.full(11, 4.0), g, "right", 3)
    for v in bd.values:
        assert abs(float(np.squeeze(v))) <= 1e-9


@pytest.mark.parametrize("k", [1, 2, 3])
@pytest.mark.parametrize("side", ["left", "right"])
def test_extrapolation_reproduces_design_degree(k, side, rng):
    g = make_perturbed_grid(-1, 2, 15, 0.2, 6)
    coef = rng.standard_normal(k + 2)
    p = np.polynomial.Polynomial(coef)
    bd = extrapolate_derivatives(p(g.nodes), g, side, k)
    x = g.a if side == "left" else g.b
    for m in range(1, k + 1):
        assert float(np.squeeze(bd.values[m - 1])) == pytest.approx(p.deriv(m)(x), abs=1e-8)


def test_extrapolation_order():
    for k in (1, 2, 3):
        errs = []
        for n in (40, 80):
            g = make_uniform_grid(0, 1, n)
            bd = extrapolate_derivatives(np.sin(g.nodes), g, "left", k)
            errs.append([abs(float(np.squeeze(bd.values[m - 1])) - math.sin(m * math.pi / 2)) for m in range(1, k + 1)])
        for m in range(1, k + 1):
            if errs[1][m - 1] > 1e-13:
                order = math.log2(errs[0][m - 1] / errs[1][m - 1])
                assert order >= k + 2 - m - 0.3


def test_extrapolation_batched_and_errors():
    g = make_uniform_grid(0, 1, 10)
    lines = np.stack([g.nodes, 2 * g.nodes])
    bd = extrapolate_derivatives(lines, g, "left", 2)
    np.testing.assert_allclose(bd.values[0], [1.0, 2.0], atol=1e-10)
    with pytest.raises(BoundaryError):
        extrapolate_derivatives(g.nodes, g, "top", 2)


def test_linear_dirichlet_cascade():
    p = builtin_problem("linear_advection")
    for t in (0.0, 0.8, 2.5):
        bd, sel = ilw_dirichlet_1d(p, "left", t, 0.0, 3)
        s = -math.pi - t
        np.testing.assert_allclose([float(v[0]) for v in bd.values], [math.cos(s), -math.sin(s), -math.cos(s)], atol=1e-10)
        assert sel.reason == UNIQUE


def _burgers_with_slope(fp):
    ham = builtin_problem("burgers_1d").hamiltonian
    f = lambda t: (0.0, fp, 0.0, 0.0)
    bc = BoundarySpec({"left": SideCondition(DIRICHLET, f), "right": SideCondition(OUTFLOW)})
    return Problem("b", 1, ham, lambda x: 0 * x, (0.0, 1.0), bc)


def test_burgers_root_selection():
    bd, sel = ilw_dirichlet_1d(_burgers_with_slope(-0.5), "left", 0.0, -1.7, 1)
    np.testing.assert_allclose(sorted(sel.candidates), [-2.0, 0.0], atol=1e-12)
    assert sel.root == pytest.approx(0.0, abs=1e-12) and sel.reason == SIGN


def test_quartic_tie_break():
    p = builtin_problem("riemann_nonconvex_1d")
    _, sel = ilw_dirichlet_1d(p, "left", 0.0, 1.7, 1)
    np.testing.assert_allclose(sorted(sel.candidates), [-2, -1, 1, 2], atol=1e-12)
    assert sel.root == pytest.approx(2.0) and sel.reason == NEAREST
    _, sel = ilw_dirichlet_1d(p, "left", 0.0, -0.2, 1)
    assert sel.root == pytest.approx(-1.0)
    # the right side needs H' < 0: admissible roots are 1 and -2
    _, sel = ilw_dirichlet_1d(p, "right", 0.0, -1.9, 1)
    assert sel.root == pytest.approx(-2.0)
    _, sel = ilw_dirichlet_1d(p, "right", 0.0, 0.4, 1)
    assert sel.root == pytest.approx(1.0)


def test_no_inflow_root_errors():
    # H(u) = u^2 / 2 >= 0 never equals -f' = -1
    ham = builtin_problem("burgers_1d").hamiltonian
    G = lambda u, i: 0.5 * u**2
    dG = lambda u, i: u
    with pytest.raises(BoundaryError, match="no inflow root"):
        select_inflow_root(G, dG, np.array([-1.0]), "left", np.array([0.0]))
    # linear H with the wrong sign for a left inflow
    with pytest.raises(BoundaryError, match="no inflow root"):
        select_inflow_root(lambda u, i: -u, lambda u, i: -np.ones_like(u), np.array([0.3]), "left", np.array([0.0]))
    del ham


def test_degenerate_root_errors():
    # H(u) = u^3 has a single root with H'(0) = 0 at f' = 0
    with pytest.raises(BoundaryError, match="degenerate"):
        select_inflow_root(lambda u, i: u**3 + 0 * u, lambda u, i: 3 * u**2, np.array([0.0]), "left", np.array([0.5]))


def _random_case(r):
    deg = int(r.integers(1, 5))
    coef = r.uniform(-3, 3, deg + 1)
    rhs = float(r.uniform(-3, 3))
    guess = float(r.uniform(-4, 4))
    side = "left" if r.random() < 0.5 else "right"
    return np.polynomial.Polynomial(coef), rhs, guess, side


def test_inflow_sign_contract_randomized():
    r = np.random.default_rng(2024)
    chosen = errors = 0
    for _ in range(1000):
        P, rhs, guess, side = _random_case(r)
        dP = P.deriv()
        sign = 1.0 if side == "left" else -1.0
        R = ROOT_RADIUS * (1 + abs(guess))
        real = [z.real for z in (P - rhs).roots() if abs(z.imag) < 1e-9]
        inside = [z for z in real if abs(z - guess) <= R or abs(z) <= ROOT_RADIUS]
        admissible = [z for z in inside if sign * dP(z) > DEGENERATE_TOL]
        try:
            sel = select_inflow_root(lambda u, i: P(u), lambda u, i: dP(u), np.array([rhs]), side, np.array([guess]))[0]
        except BoundaryError:
            errors += 1
            assert not admissible or any(abs(dP(z)) < 1e-6 for z in inside)
            continue
        chosen += 1
        assert sign * dP(sel.root) > 0
        assert abs(P(sel.root) - rhs) <= 1e-9 * (1 + abs(rhs))
        best = min(admissible, key=lambda z: abs(z - guess))
        assert sel.root == pytest.approx(best, abs=1e-8)
    assert chosen > 500 and errors > 0


def test_neumann_constant_data():
    ham = builtin_problem("linear_advection").hamiltonian
    bc = BoundarySpec({"left": SideCondition(NEUMANN, lambda t: (0.7, 0.0, 0.0)), "right": SideCondition(OUTFLOW)})
    p = Problem("n", 1, ham, lambda x: 0 * x, (0.0, 1.0), bc)
    bd = ilw_neumann_1d(p, "left", 1.0, 3)
    np.testing.assert_allclose([float(v[0]) for v in bd.values], [0.7, 0.0, 0.0], atol=1e-15)


def test_neumann_linear_in_time():
    # phi = -(x - t)^2 / 2 solves phi_t + phi_x = 0 with phi_x(0, t) = t, so the cascade must
    # give phi_xx = -g'/H' = -1 and phi_xxx = 0
    x, t = sp.symbols("x t")
    ham = builtin_problem("linear_advection").hamiltonian
    bc = BoundarySpec({"left": SideCondition(NEUMANN, lambda s: (s, 1.0, 0.0)), "right": SideCondition(OUTFLOW)})
    p = Problem("n", 1, ham, lambda z: 0 * z, (0.0, 1.0), bc)
    bd = ilw_neumann_1d(p, "left", 0.4, 3)
    phi = -((x - t) ** 2) / 2
    assert sp.simplify(sp.diff(phi, t) + sp.diff(phi, x)) == 0
    assert sp.diff(phi, x).subs(x, 0) == t
    assert float(bd.values[1][0]) == pytest.approx(float(sp.diff(phi, x, 2)))
    assert float(bd.values[2][0]) == pytest.approx(0.0)


def test_neumann_matches_exact_burgers():
    # boundary data from the exact Burgers solution restricted to x = 0
    p0 = builtin_problem("burgers_1d")
    h = 1e-3

    def g(t):
        ex = lambda x, s: p0.exact(np.array([x]), s)[0]
        gx = lambda s: (ex(-2 * h, s) - 8 * ex(-h, s) + 8 * ex(h, s) - ex(2 * h, s)) / (12 * h)
        ht = 1e-3
        return (gx(t), (gx(t - 2 * ht) - 8 * gx(t - ht) + 8 * gx(t + ht) - gx(t + 2 * ht)) / (12 * ht), 0.0)

    ham = p0.hamiltonian
    bc = BoundarySpec({"left": SideCondition(NEUMANN, g), "right": SideCondition(OUTFLOW)})
    p = Problem("n", 1, ham, p0.initial, (0.0, 1.0), bc)
    t = 0.03
    bd = ilw_neumann_1d(p, "left", t, 2)
    ex = lambda x: p0.exact(np.array([x]), t)[0]
    pxx = (-ex(2 * h) + 16 * ex(h) - 30 * ex(0) + 16 * ex(-h) - ex(-2 * h)) / (12 * h * h)
    assert float(bd.values[1][0]) == pytest.approx(pxx, abs=1e-4)


def test_neumann_degenerate():
    ham = builtin_problem("burgers_1d").hamiltonian
    bc = BoundarySpec({"left": SideCondition(NEUMANN, lambda t: (-1.0, 0.0, 0.0)), "right": SideCondition(OUTFLOW)})
    p = Problem("n", 1, ham, lambda x: 0 * x, (0.0, 1.0), bc)
    with pytest.raises(BoundaryError, match="degenerate"):
        ilw_neumann_1d(p, "left", 0.0, 2)


def test_dirichlet_data_too_short():
    ham = builtin_problem("linear_advection").hamiltonian
    bc = BoundarySpec({"left": SideCondition(DIRICHLET, lambda t: (0.0, 1.0)), "right": SideCondition(OUTFLOW)})
    with pytest.raises(BoundaryError, match="order"):
        ilw_dirichlet_1d(Problem("d", 1, ham, lambda x: 0 * x, (0.0, 1.0), bc), "left", 0.0, 0.0, 2)


# --- 2D ----------------------------------------------------------------------


def _edge(side, n=41):
    s = np.linspace(-1.0, 1.0, n)
    fixed = {"left": -1.0, "right": 1.0, "bottom": -1.0, "top": 1.0}[side]
    xy = (np.full(n, fixed), s) if side in ("left", "right") else (s, np.full(n, fixed))
    return s, xy


def test_linear_2d_dirichlet():
    p = expression_problem(
        "l2", "u + v", "0", ((-1, 1), (-1, 1)),
        {"left": ("dirichlet", "sin(y - 2*t)"), "right": ("outflow", None), "bottom": ("outflow", None), "top": ("outflow", None)},
    )
    s, xy = _edge("left")
    t = 0.3
    bd, sels = ilw_dirichlet_2d(p, "left", s, xy, t, np.zeros_like(s), 3)
    np.testing.assert_allclose(bd.values[0], np.cos(s - 2 * t), atol=1e-10)
    # exact solution phi = sin(y - 2t + x + 1) - consistent with phi(-1, y, t) = sin(y - 2t)
    np.testing.assert_allclose(bd.values[1], -np.sin(s - 2 * t), atol=1e-9)
    np.testing.assert_allclose(bd.values[2], -np.cos(s - 2 * t), atol=1e-8)


def _quadratic_solution():
    """Exact phi = a w^2 + b w + c, w = x + y + 3, of phi_t + (u + v)^2/2 + (u + v)/10 = 0."""
    x, y, t = sp.symbols("x y t", real=True)
    w = x + y + 3
    a = 1 / (4 * (1 + 2 * t))
    b = (2 / (1 + 2 * t) - sp.Rational(2, 5)) / 8
    c = -sp.integrate(sp.expand(2 * b**2 + b / 5), t)
    phi = a * w**2 + b * w + c
    Hs = lambda u, v: (u + v) ** 2 / 2 + (u + v) / 10
    assert sp.simplify(sp.diff(phi, t) + Hs(sp.diff(phi, x), sp.diff(phi, y))) == 0
    assert not phi.has(sp.log)
    return phi, (x, y, t)


@pytest.mark.parametrize("side", ["left", "bottom", "right", "top"])
def test_2d_cascades_on_exact_solution(side):
    phi, (x, y, t) = _quadratic_solution()
    text = str(phi)
    ham = "(u + v)^2/2 + (u + v)/10"
    bnd = {s_: ("outflow", None) for s_ in ("left", "right", "bottom", "top")}
    bnd[side] = ("dirichlet", text)
    init = str(phi.subs(t, 0))
    p = expression_problem("m", ham, init, ((-1, 1), (-1, 1)), bnd)
    s, xy = _edge(side)
    T = 0.2
    normal = x if side in ("left", "right") else y
    want = [np.broadcast_to(sp.lambdify((x, y), sp.diff(phi, normal, m).subs(t, T))(*xy), s.shape) for m in (1, 2, 3)]
    if side in ("right", "top"):
        # characteristics leave through these edges, so the inflow branch is the
        # mirror root of s^2/2 + s/10 about s = -1/10, not the true gradient
        other = y if normal == x else x
        s_true = sp.lambdify((x, y), (sp.diff(phi, x) + sp.diff(phi, y)).subs(t, T))(*xy)
        tang = sp.lambdify((x, y), sp.diff(phi, other).subs(t, T))(*xy)
        bd, sels = ilw_dirichlet_2d(p, side, s, xy, T, want[0], 1)
        np.testing.assert_allclose(bd.values[0], -0.2 - s_true - tang, atol=1e-9)
        assert np.all(np.abs(bd.values[0] - want[0]) > 0.5)
        return
    bd, sels = ilw_dirichlet_2d(p, side, s, xy, T, want[0] + 0.01, 3)
    for m in range(3):
        np.testing.assert_allclose(bd.values[m], want[m], atol=1e-9)
    # the same solution posed with Neumann data gives the same higher derivatives
    bnd[side] = ("neumann", str(sp.diff(phi, normal)))
    q = expression_problem("m", ham, init, ((-1, 1), (-1, 1)), bnd)
    edge_phi = np.broadcast_to(sp.lambdify((x, y), phi.subs(t, T))(*xy), s.shape)
    nd = ilw_neumann_2d(q, side, s, xy, T, edge_phi, 3)
    for m in range(3):
        np.testing.assert_allclose(nd.values[m], bd.values[m], atol=1e-9)


def test_constant_data_reduces_to_1d():
    p = expression_problem(
        "r", "(u^2 - 1)*(u^2 - 4)/4 + 0*v", "0", ((-1, 1), (-1, 1)),
        {"left": ("dirichlet", "-2"), "right": ("outflow", None), "bottom": ("outflow", None), "top": ("outflow", None)},
    )
    s, xy = _edge("left", 9)
    guesses = np.linspace(-2.2, 2.2, 9)
    bd, sels = ilw_dirichlet_2d(p, "left", s, xy, 0.0, guesses, 1)
    ref = builtin_problem("riemann_nonconvex_1d")
    for g_, sel, val in zip(guesses, sels, bd.values[0]):
        assert val == pytest.approx(ilw_dirichlet_1d(ref, "left", 0.0, g_, 1)[1].root, abs=1e-12)


def test_neumann_2d_constant():
    p = expression_problem(
        "n", "u + v", "0", ((-1, 1), (-1, 1)),
        {"left": ("neumann", "0"), "right": ("outflow", None), "bottom": ("outflow", None), "top": ("outflow", None)},
    )
    s, xy = _edge("left")
    bd = ilw_neumann_2d(p, "left", s, xy, 0.5, np.full(s.size, 2.0), 3)
    for v in bd.values:
        np.testing.assert_allclose(v, 0.0, atol=1e-12)


def test_neumann_2d_linear_explicit():
    # H = u + v: phi_xx = -(g_t + g_y)
    p = expression_problem(
        "n", "u + v", "0", ((-1, 1), (-1, 1)),
        {"left": ("neumann", "sin(y)*t"), "right": ("outflow", None), "bottom": ("outflow", None), "top": ("outflow", None)},
    )
    s, xy = _edge("left")
    bd = ilw_neumann_2d(p, "left", s, xy, 0.7, np.sin(s), 2)
    np.testing.assert_allclose(bd.values[1], -(np.sin(s) + 0.7 * np.cos(s)), atol=1e-12)


def test_tangential_derivatives_order():
    errs = []
    for n in (21, 41, 81):
        s = np.linspace(0, 1, n)
        d1, _ = tangential_derivatives(np.sin(3 * s), s)
        errs.append(np.max(np.abs(d1 - 3 * np.cos(3 * s))))
    assert math.log2(errs[1] / errs[2]) >= 3.7
    # periodic edges use centred stencils everywhere: errors h^4/30 and h^4/90 for sin
    s = np.linspace(0, 2 * np.pi, 65)
    h = s[1]
    d1, d2 = tangential_derivatives(np.sin(s), s, periodic=True, period=2 * np.pi)
    np.testing.assert_allclose(d1, np.cos(s), atol=h**4 / 30 * 1.01)
    np.testing.assert_allclose(d2, -np.sin(s), atol=h**4 / 90 * 1.01)
    with pytest.raises(BoundaryError):
        tangential_derivatives(np.zeros(4), np.arange(4.0))
