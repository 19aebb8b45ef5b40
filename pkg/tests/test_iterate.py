import math

import numpy as np
import pytest

from nelab import iterate as it
from nelab import potentials as pt
from nelab.lattice import Ball, Grid, GridFunction, ball_node_area


@pytest.fixture
def grid():
    return Grid((-1, -1), (2, 2), (49, 49))


def smooth_field(grid, seed):
    rng = np.random.default_rng(seed)
    c = rng.normal(size=5)
    return GridFunction.from_callable(
        grid, lambda x, y: c[0] + 0.5 * c[1] * np.sin(3 * x) * np.cos(2 * y)
        + 0.3 * c[2] * x * y + 0.3 * c[3] * x + 0.2 * c[4] * y**2)


# ---------------------------------------------------------------------------
# De Giorgi


def test_reverse_hypothesis_trivial_cases(grid):
    vK = GridFunction.constant(grid, 3.0)
    inp = it.DeGiorgiInput(vK, (0.0, 0.0), 0.3, chi=2.0, t=2.0, c_star=1.0,
                           M0=1.0, kappa0=3.0)
    holds, worst = it.verify_level_set_hypothesis(inp, [3.0, 4.0], [0.3, 0.15])
    assert holds and worst == 0.0


def test_reverse_hypothesis_support_outside(grid):
    # truncation supported away from the balls: left side vanishes
    pts = grid.nodes()
    vals = np.where(pts[:, 0] > 0.8, 5.0, 0.0)
    v = GridFunction(grid, vals)
    inp = it.DeGiorgiInput(v, (-0.4, -0.4), 0.25, chi=2.0, t=1.0, c_star=1.0,
                           M0=1.0, kappa0=0.0)
    holds, worst = it.verify_level_set_hypothesis(inp, [0.0, 1.0], [0.25])
    assert holds


def test_de_giorgi_constant_function_exact(grid):
    vK = GridFunction.constant(grid, 3.0)
    inp = it.DeGiorgiInput(vK, (0.0, 0.0), 0.3, chi=2.0, t=2.0, c_star=1.0,
                           M0=1.0, kappa0=3.0)
    res = it.de_giorgi_bound(inp)
    assert res.bound == pytest.approx(3.0, abs=1e-14)


def test_de_giorgi_refusal(grid):
    v = smooth_field(grid, 0)
    v = v.copy_with(v.values - v.values.min())
    inp = it.DeGiorgiInput(v, (0.0, 0.0), 0.3, chi=2.0, t=2.0, c_star=1e-9,
                           M0=1.0, kappa0=0.0)
    with pytest.raises(it.HypothesisError):
        it.de_giorgi_bound(inp)


def fitted_input(v, x0, r0, terms=(), seed_kappas=None):
    kappas = seed_kappas if seed_kappas is not None else np.linspace(
        0.0, float(v.values.max()), 6)
    rhos = r0 * 2.0 ** -np.arange(4)
    base = it.DeGiorgiInput(v, x0, r0, chi=2.0, t=2.0, c_star=1.0, M0=1.0,
                            kappa0=0.0, terms=terms)
    _, worst = it.verify_level_set_hypothesis(base, kappas, rhos)
    inp = it.DeGiorgiInput(v, x0, r0, chi=2.0, t=2.0,
                           c_star=max(1.0, worst) * 1.01, M0=1.0, kappa0=0.0,
                           terms=terms)
    return inp, kappas, rhos


def test_de_giorgi_validity_and_monotonicity(grid):
    v = smooth_field(grid, 3)
    v = v.copy_with(v.values - v.values.min())
    inp, kappas, rhos = fitted_input(v, (0.1, -0.05), 0.25)
    res = it.de_giorgi_bound(inp, kappas, rhos)
    assert res.bound >= float(v.interpolate(np.array([[0.1, -0.05]]))[0])
    # exact monotonicity in M0 and kappa0 from the closed form
    bigger = it.DeGiorgiInput(v, (0.1, -0.05), 0.25, chi=2.0, t=2.0,
                              c_star=inp.c_star, M0=2.0, kappa0=0.0)
    assert it.de_giorgi_bound(bigger, kappas, rhos).bound >= res.bound


def test_de_giorgi_harmonic_noise(grid):
    # harmonic interpolant of boundary noise: bound dominates the nodal value
    from nelab.solve import harmonic_extension

    rng = np.random.default_rng(21)
    bvals = np.zeros(grid.n_nodes)
    bmask = grid.boundary_mask()
    bvals[bmask] = rng.uniform(0.0, 1.0, int(bmask.sum()))
    v = GridFunction(grid, harmonic_extension(grid, bvals))
    for x0 in ((0.0, 0.0), (0.2, -0.15), (-0.3, 0.1)):
        inp, kappas, rhos = fitted_input(v, x0, 0.2)
        res = it.de_giorgi_bound(inp, kappas, rhos)
        assert res.bound >= float(v.interpolate(np.array([x0]))[0])


def test_de_giorgi_doubling_homogeneity(grid):
    v = smooth_field(grid, 4)
    v = v.copy_with(v.values - v.values.min())
    dens = GridFunction(grid, np.abs(smooth_field(grid, 5).values))
    term = it.PotentialTerm(pt.Measure(density=dens), m=2.0, delta=1.0, theta=1.0, M=1.0)
    inp, kappas, rhos = fitted_input(v, (0.0, 0.0), 0.25, terms=(term,))
    res = it.de_giorgi_bound(inp, kappas, rhos)
    # scale v by 2 and mu by 2^{t/(m theta)} = 2 so the hypothesis is preserved
    v2 = v.copy_with(2 * v.values)
    term2 = it.PotentialTerm(pt.Measure(density=dens.copy_with(2 * dens.values)),
                             m=2.0, delta=1.0, theta=1.0, M=1.0)
    inp2 = it.DeGiorgiInput(v2, (0.0, 0.0), 0.25, chi=2.0, t=2.0,
                            c_star=inp.c_star, M0=1.0, kappa0=0.0, terms=(term2,))
    res2 = it.de_giorgi_bound(inp2, 2 * np.asarray(kappas), rhos)
    assert res2.bound == pytest.approx(2 * res.bound, rel=1e-9)


# ---------------------------------------------------------------------------
# Moser


def test_moser_constant_function(grid):
    v1 = GridFunction.constant(grid, 1.0)
    inp = it.MoserInput(v1, (0.0, 0.0), p=2.0, M0=50.0, t=1.0, t_star=2.0,
                        chi=2.0, tau1=0.2, tau2=0.5)
    res = it.moser_bound(inp)
    assert res.bound >= 1.0
    assert res.exponent == pytest.approx((2 / 2.0) * 2.0 / (2.0 - 1.0))


def test_moser_homogeneity(grid):
    v = smooth_field(grid, 6)
    v = v.copy_with(np.abs(v.values) + 0.2)
    inp = it.MoserInput(v, (0.0, 0.0), p=2.0, M0=80.0, t=1.0, t_star=2.0,
                        chi=2.0, tau1=0.2, tau2=0.5)
    res = it.moser_bound(inp)
    lam = 3.0
    inp2 = it.MoserInput(v.copy_with(lam * v.values), (0.0, 0.0), p=2.0,
                         M0=80.0, t=1.0, t_star=2.0, chi=2.0, tau1=0.2, tau2=0.5)
    res2 = it.moser_bound(inp2)
    assert res2.bound == pytest.approx(lam * res.bound, rel=1e-9)


def test_moser_validity_bumps(grid):
    rng = np.random.default_rng(8)
    for k in range(20):
        c = rng.normal(size=3)
        v = GridFunction.from_callable(
            grid, lambda x, y: 0.2 + np.abs(c[0]) * np.exp(-6 * ((x - 0.1 * c[1])**2
                                                                 + (y - 0.1 * c[2])**2)))
        tau1, tau2 = 0.25, 0.6
        m0 = 1.0
        res = None
        for _ in range(4):
            try:
                res = it.moser_bound(it.MoserInput(v, (0.0, 0.0), p=2.0, M0=m0,
                                                   t=1.0, t_star=2.0, chi=2.0,
                                                   tau1=tau1, tau2=tau2))
                break
            except it.HypothesisError:
                m0 *= 64
        sup_v = float(v.values[Ball((0.0, 0.0), tau1).node_mask(grid)].max())
        assert res is not None and res.bound >= sup_v


def test_moser_refusal_names_exponent(grid):
    v = smooth_field(grid, 9)
    v = v.copy_with(np.abs(v.values) + 0.1)
    inp = it.MoserInput(v, (0.0, 0.0), p=2.0, M0=1e-8, t=1.0, t_star=2.0,
                        chi=2.0, tau1=0.2, tau2=0.5)
    with pytest.raises(it.HypothesisError, match="gamma"):
        it.moser_bound(inp)


# ---------------------------------------------------------------------------
# hole filling


def test_hole_filling_constant_case():
    res = it.hole_filling(lambda t: 2.0, a=0.0, b=1.0, gamma=1.5, r=0.8)
    assert res.c_gamma >= 2.0
    assert res.certified >= res.value_at_half
    assert res.lam == pytest.approx(0.75 ** (1 / 1.5))


def test_hole_filling_truncated_power():
    a, b, gam, r = 1.0, 0.5, 2.0, 1.0

    def h(tau):
        return a / (r - tau + r / 4) ** gam + b

    res = it.hole_filling(h, a * (4 / r) ** gam, b * 3, gam, r)
    assert res.certified >= res.value_at_half


def test_hole_filling_monotone_in_a_b():
    h = lambda t: 1.0
    r1 = it.hole_filling(h, 1.0, 1.0, 1.0, 1.0)
    r2 = it.hole_filling(h, 2.0, 1.5, 1.0, 1.0)
    assert r2.certified >= r1.certified


def test_hole_filling_refusal():
    with pytest.raises(it.HypothesisError):
        it.hole_filling(lambda t: 10.0, a=0.0, b=0.1, gamma=1.0, r=1.0)


# ---------------------------------------------------------------------------
# fractional seminorms


def test_gagliardo_vanishes_on_constants(grid):
    w = GridFunction.constant(grid, 4.2)
    assert it.gagliardo_seminorm(w, Ball((0, 0), 0.4), 0.5) == 0.0


def test_gagliardo_triangle_inequality(grid):
    rng = np.random.default_rng(10)
    ball = Ball((0.0, 0.0), 0.4)
    for _ in range(10):
        a = smooth_field(grid, int(rng.integers(1000)))
        b = smooth_field(grid, int(rng.integers(1000)))
        s = GridFunction(grid, a.values + b.values)
        assert it.gagliardo_seminorm(s, ball, 0.5) <= (
            it.gagliardo_seminorm(a, ball, 0.5)
            + it.gagliardo_seminorm(b, ball, 0.5) + 1e-9)


def test_gagliardo_mesh_stability():
    vals = []
    for n in (33, 65):
        g = Grid((-1, -1), (2, 2), (n, n))
        w = GridFunction.from_callable(g, lambda x, y: x)
        vals.append(it.gagliardo_seminorm(w, Ball((0, 0), 0.9), 0.5))
    assert abs(vals[1] - vals[0]) / vals[0] < 0.05


def test_nikolski_affine_axis_shift(grid):
    w = GridFunction.from_callable(grid, lambda x, y: x)
    ball = Ball((0.0, 0.0), 0.4)
    val = it.nikolski_ratio(w, ball, [(0.1, 0.0), (0.05, 0.0)], 1.0)
    assert val == pytest.approx(math.sqrt(ball_node_area(grid, ball)), rel=1e-12)


def test_nikolski_margin_validation(grid):
    w = smooth_field(grid, 12)
    with pytest.raises(ValueError):
        it.nikolski_ratio(w, Ball((0.8, 0.8), 0.3), [(0.2, 0.0)], 0.5)


def test_embedding_certificate_cases(grid):
    ball = Ball((0.0, 0.0), 0.5)
    offs = it.lattice_offsets(grid, (1.0 - 0.5) / 2)
    # constant field: both sides collapse to the L^2 term
    wc = GridFunction.constant(grid, 2.0)
    emb = it.nikolski_to_gagliardo(wc, (0, 0), 0.5, 1.0, 1e-12, 0.8, 0.4)
    assert it.gagliardo_seminorm(wc, ball, 0.4) <= emb.certified_seminorm
    # affine and checkerboard fields
    for w, beta, alpha0 in (
        (GridFunction.from_callable(grid, lambda x, y: 0.5 * x - y), 1.0, 0.5),
        (GridFunction(grid, np.indices((49, 49)).sum(axis=0).ravel() % 2 * 2.0 - 1.0), 0.6, 0.3),
    ):
        H = max(it.shifted_l2(w, ball, h) / np.hypot(*h) ** beta for h in offs)
        emb = it.nikolski_to_gagliardo(w, (0, 0), 0.5, 1.0, H * 1.001, beta, alpha0)
        assert it.gagliardo_seminorm(w, ball, alpha0) <= emb.certified_seminorm


def test_embedding_refusal(grid):
    w = smooth_field(grid, 13)
    with pytest.raises(it.HypothesisError, match="shift"):
        it.nikolski_to_gagliardo(w, (0, 0), 0.5, 1.0, 1e-12, 0.8, 0.4)


# ---------------------------------------------------------------------------
# fractional parameter algebra


def test_parameter_solver_uniform_case():
    fp = it.fractional_parameter_solver(2, 2.0, 2.0, 0.5)
    assert fp.s_exponent == pytest.approx(1.0)
    assert fp.b == pytest.approx(2 * 2.0 * 0.5 / (2 + 4 * fp.beta), rel=1e-6)
    assert fp.admissible and fp.gap_condition > 0


def test_parameter_solver_monotone_rhs():
    fp = it.fractional_parameter_solver(3, 2.0, 2.02, 0.9)
    betas = np.linspace(1e-3, 0.9 / 1.9 * (1 - 1e-9), 128)
    rhs = fp.rhs_of_beta(betas)
    assert np.all(np.diff(rhs) >= -1e-14)


def test_parameter_solver_decides_admissibility():
    good = it.fractional_parameter_solver(3, 2.0, 2.02, 0.9)
    assert good.admissible
    tight = it.fractional_parameter_solver(2, 2.0, 2.4, 1.0)
    assert not tight.admissible
    with pytest.raises(pt.PreconditionError):
        it.fractional_parameter_solver(2, 2.0, 4.5, 1.0)


def test_parameter_solver_b_range():
    for (n, p, q, alpha) in ((2, 2.0, 2.1, 0.8), (3, 2.5, 2.6, 0.5), (4, 3.0, 3.05, 0.9)):
        fp = it.fractional_parameter_solver(n, p, q, alpha)
        assert 0 <= fp.b <= p
        assert fp.b < 2 * p * alpha / n + 1e-12


def test_measure_power_average():
    g = Grid((-1, -1), (2, 2), (33, 33))
    mu = pt.Measure(density=GridFunction.constant(g, 2.0))
    assert it.measure_power_average(mu, Ball((0, 0), 0.4), 3.0) == pytest.approx(8.0)
    atom = pt.Measure(atoms=((0.0, 0.0, 1.0),))
    val = it.measure_power_average(atom, Ball((0, 0), 0.5), 1.0)
    assert val == pytest.approx(1.0 / (math.pi * 0.25))
