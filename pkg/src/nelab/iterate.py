"""Executable iteration lemmas.

Each engine first verifies its hypothesis on declared finite data (level or
exponent grids, radius pairs, shift sets) and refuses to certify anything
when the check fails.  When it passes, the returned bound is produced by the
corresponding iteration (geometric level-set descent, exponent ladder,
radius interpolation, lattice-offset summation) with explicit constants,
frozen here rather than copied from any sharp theory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.special import logsumexp

from .lattice import Ball, Grid, GridFunction, node_integral
from .potentials import Measure, PreconditionError, mass_in_ball, p_potential, unit_ball_volume


class HypothesisError(ValueError):
    """A declared hypothesis check failed; no certificate is produced."""


def measure_power_average(mu: Measure, ball: Ball, m: float) -> float:
    """Average of |mu|^m over a ball: discrete-cell average for densities,
    continuum ball volume for pure atom measures (m = 1 only)."""
    if mu.density is not None:
        g = mu.density.grid
        mask = ball.node_mask(g)
        if not mask.any():
            return 0.0
        atom_part = sum(w for x, y, w in mu.atoms
                        if math.hypot(x - ball.center[0], y - ball.center[1]) <= ball.radius)
        area = float(g.node_cell_areas()[mask].sum())
        dens = node_integral(g, mu.density.values ** m, mask)
        return (dens + atom_part) / area
    if mu.atoms and m != 1.0:
        raise ValueError("atoms only average with m = 1")
    vol = unit_ball_volume(mu.n) * ball.radius ** mu.n
    return mass_in_ball(mu, ball) / vol


# ---------------------------------------------------------------------------
# quantitative De Giorgi iteration


@dataclass
class PotentialTerm:
    mu: Measure
    m: float
    delta: float
    theta: float
    M: float


@dataclass
class DeGiorgiInput:
    v: GridFunction
    x0: tuple
    r0: float
    chi: float
    t: float
    c_star: float
    M0: float
    kappa0: float = 0.0
    terms: tuple = ()  # PotentialTerm list

    def __post_init__(self):
        if self.chi <= 1:
            raise ValueError("need chi > 1")
        if self.t < 1 or self.c_star <= 0 or self.M0 <= 0 or self.kappa0 < 0:
            raise ValueError("constants outside declared ranges")
        g = self.v.grid
        ox, oy = g.origin
        if not (ox <= self.x0[0] - 2 * self.r0 and self.x0[0] + 2 * self.r0 <= ox + g.extent[0]
                and oy <= self.x0[1] - 2 * self.r0 and self.x0[1] + 2 * self.r0 <= oy + g.extent[1]):
            raise ValueError("B_{2 r0}(x0) must sit inside the grid")


def _truncation_average(v: GridFunction, kappa: float, ball: Ball, power: float) -> float:
    g = v.grid
    mask = ball.node_mask(g)
    if not mask.any():
        return 0.0
    trunc = np.maximum(v.values - kappa, 0.0)
    return node_integral(g, trunc ** power, mask, average=True)


def _reverse_sides(inp: DeGiorgiInput, kappa: float, rho: float):
    half = Ball(inp.x0, rho / 2)
    full = Ball(inp.x0, rho)
    lhs = _truncation_average(inp.v, kappa, half, inp.t * inp.chi) ** (1.0 / inp.chi)
    rhs = inp.c_star * inp.M0 ** inp.t * _truncation_average(inp.v, kappa, full, inp.t)
    for term in inp.terms:
        avg = measure_power_average(term.mu, full, term.m)
        rhs += inp.c_star * term.M ** inp.t * rho ** (inp.t * term.delta) * avg ** term.theta
    return lhs, rhs


def verify_level_set_hypothesis(inp: DeGiorgiInput, kappa_grid, rho_grid):
    """Check the reverse inequality on every (kappa, rho) pair.

    Returns (holds, worst_ratio) with worst_ratio = max LHS/RHS (0 when all
    left-hand sides vanish).
    """
    worst = 0.0
    for rho in rho_grid:
        if rho > inp.r0 * (1 + 1e-12):
            raise ValueError("rho grid exceeds r0")
        for kappa in kappa_grid:
            if kappa < inp.kappa0:
                raise ValueError("levels must be >= kappa0")
            lhs, rhs = _reverse_sides(inp, float(kappa), float(rho))
            if lhs == 0.0:
                continue
            if rhs == 0.0:
                return False, math.inf
            worst = max(worst, lhs / rhs)
    return worst <= 1.0 + 1e-9, worst


@dataclass
class DeGiorgiResult:
    bound: float
    c: float
    base_term: float
    potential_terms: tuple
    levels: list = dc_field(repr=False, default_factory=list)


def de_giorgi_bound(inp: DeGiorgiInput, kappa_grid=None, rho_grid=None) -> DeGiorgiResult:
    """Certified pointwise bound from the verified reverse inequality.

    The level increments follow the geometric scheme: on dyadic radii
    rho_j = 2^{-j} r0 the level is raised proportionally to the local
    truncation average (power 1/t) or to the accumulated potential term,
    whichever dominates.  The returned bound is the closed-form certificate
    kappa0 + c*M0^{chi/(chi-1)}*avg + c*M0^{1/(chi-1)}*sum M_i P_i with the
    frozen constant c below.
    """
    if kappa_grid is None:
        vmax = float(inp.v.values.max())
        kappa_grid = np.linspace(inp.kappa0, max(vmax, inp.kappa0 + 1e-9), 8)
    if rho_grid is None:
        rho_grid = inp.r0 * 2.0 ** -np.arange(4)
    holds, worst = verify_level_set_hypothesis(inp, kappa_grid, rho_grid)
    if not holds:
        raise HypothesisError(f"reverse inequality fails (worst ratio {worst:.3g})")

    n = 2
    chi, t, cs = inp.chi, inp.t, inp.c_star
    gamma = (2 ** (n + t + 1) * cs) ** (chi / (t * (chi - 1)))
    theta_max = max((term.theta for term in inp.terms), default=1.0)
    c_geo = 4.0 * max(1.0, 2 ** (n * theta_max / t) / math.log(2.0))
    c = gamma * c_geo

    a0 = _truncation_average(inp.v, inp.kappa0, Ball(inp.x0, inp.r0), t) ** (1.0 / t)
    pots = tuple(
        term.M * p_potential(term.mu, inp.x0, 2 * inp.r0, t, term.delta, term.m, term.theta)
        for term in inp.terms
    )
    bound = inp.kappa0 + c * inp.M0 ** (chi / (chi - 1)) * a0 \
        + c * inp.M0 ** (1.0 / (chi - 1)) * sum(pots)

    # diagnostic level trace of the geometric iteration
    levels = [inp.kappa0]
    kappa = inp.kappa0
    spacing = inp.v.grid.spacing
    rho = inp.r0
    for _ in range(60):
        if rho < spacing:
            break
        a_j = _truncation_average(inp.v, kappa, Ball(inp.x0, rho), t) ** (1.0 / t)
        q_j = sum(
            term.M * rho ** term.delta
            * measure_power_average(term.mu, Ball(inp.x0, rho), term.m) ** (term.theta / t)
            for term in inp.terms
        )
        step = gamma * max(inp.M0 ** (chi / (chi - 1)) * a_j,
                           inp.M0 ** (1.0 / (chi - 1)) * q_j)
        if step <= 0:
            break
        kappa += step
        levels.append(kappa)
        rho /= 2
    return DeGiorgiResult(bound, c, a0, pots, levels)


# ---------------------------------------------------------------------------
# quantitative Moser ladder


@dataclass
class MoserInput:
    v: GridFunction
    x0: tuple
    p: float
    M0: float
    t: float
    t_star: float
    chi: float
    tau1: float
    tau2: float

    def __post_init__(self):
        if np.any(self.v.values < 0):
            raise ValueError("v must be nonnegative")
        if self.chi <= 1 or self.p <= 1:
            raise ValueError("need chi > 1 and p > 1")
        if not (0 < self.tau1 < self.tau2):
            raise ValueError("need 0 < tau1 < tau2")


@dataclass
class MoserResult:
    bound: float
    exponent: float
    steps: int
    norm_base: float
    prefactor: float


def _log_ball_integral(v: GridFunction, ball: Ball, exponent: float) -> float:
    g = v.grid
    mask = ball.node_mask(g)
    vals = v.values[mask]
    areas = g.node_cell_areas()[mask]
    pos = vals > 0
    if not pos.any():
        return -math.inf
    return float(logsumexp(exponent * np.log(vals[pos]) + np.log(areas[pos])))


def moser_bound(inp: MoserInput, max_steps: int = 40, exp_cap: float = 1e6) -> MoserResult:
    """Sup bound over the inner ball from the reverse-Hoelder exponent ladder.

    Each rung is verified on the discrete integrals; a failed rung refuses
    with its exponent.  The closure from the last finite exponent to the sup
    uses the exact discrete relation sup <= (I_J / A_min)^{1/e_J}.
    """
    chi, p, t, ts = inp.chi, inp.p, inp.t, inp.t_star
    e = p / 2.0
    radii_outer = inp.tau2
    log_I = _log_ball_integral(inp.v, Ball(inp.x0, inp.tau2), e)
    if log_I == -math.inf:
        return MoserResult(0.0, (2 / p) * chi / (chi - 1), 0, 0.0, 0.0)
    log_sum_c = 0.0
    j = 0
    while e <= exp_cap and j < max_steps:
        rho2 = inp.tau1 + (inp.tau2 - inp.tau1) * 2.0 ** -j
        rho1 = inp.tau1 + (inp.tau2 - inp.tau1) * 2.0 ** -(j + 1)
        gamma_j = e - p / 2.0
        C_j = inp.M0 * (1 + gamma_j) ** t / (rho2 - rho1) ** ts
        log_lhs = _log_ball_integral(inp.v, Ball(inp.x0, rho1), e * chi) / chi
        log_rhs = math.log(C_j) + log_I
        if log_lhs > log_rhs + 1e-9:
            raise HypothesisError(f"reverse-Hoelder rung fails at gamma = {gamma_j:.6g}")
        log_sum_c += chi ** -j * math.log(C_j)
        log_I = _log_ball_integral(inp.v, Ball(inp.x0, rho1), e * chi)
        e *= chi
        j += 1
    g = inp.v.grid
    inner_mask = Ball(inp.x0, inp.tau1).node_mask(g)
    a_min = float(g.node_cell_areas()[inner_mask].min())
    log_I0 = _log_ball_integral(inp.v, Ball(inp.x0, inp.tau2), p / 2.0)
    norm_base = math.exp((2.0 / p) * log_I0)
    prefactor = math.exp((2.0 / p) * log_sum_c + abs(math.log(a_min)) / e)
    bound = prefactor * norm_base
    return MoserResult(bound, (2 / p) * chi / (chi - 1), j, norm_base, prefactor)


# ---------------------------------------------------------------------------
# hole filling


@dataclass
class HoleFillingResult:
    certified: float
    c_gamma: float
    value_at_half: float
    lam: float


def hole_filling(h, a: float, b: float, gamma: float, r: float,
                 pair_grid=None, max_steps: int = 80) -> HoleFillingResult:
    """Absorb the 1/2-multiple of h and certify h(r/2).

    Hypothesis h(t1) <= h(t2)/2 + a/(t2-t1)^gamma + b is checked on the
    declared pair grid and on the interpolation pairs actually used
    (tau_i = r/2 + (r/2)(1 - lam^i), lam = (3/4)^{1/gamma} so that
    lam^{-gamma}/2 = 2/3 < 1).
    """
    if min(a, b) < 0 or gamma < 0 or r <= 0:
        raise ValueError("parameters must be nonnegative, r > 0")
    lam = (0.75) ** (1.0 / gamma) if gamma > 0 else 0.5

    def check(t1, t2):
        gap = t2 - t1
        rhs = h(t2) / 2 + (a / gap**gamma if gamma > 0 else a) + b
        if h(t1) > rhs * (1 + 1e-9) + 1e-12:
            raise HypothesisError(f"hole-filling hypothesis fails at ({t1:.6g}, {t2:.6g})")

    if pair_grid is None:
        ts = np.linspace(r / 2, r, 9)
        pair_grid = [(t1, t2) for i, t1 in enumerate(ts) for t2 in ts[i + 1:]]
    for t1, t2 in pair_grid:
        check(t1, t2)
    taus = [r / 2 + (r / 2) * (1 - lam**i) for i in range(max_steps + 1)]
    for t1, t2 in zip(taus[:-1], taus[1:]):
        if t2 - t1 <= 1e-14 * r:
            break  # interpolation tail below machine resolution
        check(t1, t2)

    if gamma > 0:
        c_a = 3.0 * 2.0**gamma * (1 - lam) ** -gamma
    else:
        c_a = 2.0
    c = max(c_a, 2.0)
    certified = c * a / r**gamma + c * b
    return HoleFillingResult(certified, c, float(h(r / 2)), lam)


# ---------------------------------------------------------------------------
# fractional seminorms and the difference-quotient embedding


def _ball_nodes(w: GridFunction, ball: Ball):
    g = w.grid
    mask = ball.node_mask(g)
    pts = g.nodes()[mask]
    return pts, w.values[mask], g.node_cell_areas()[mask]


def gagliardo_seminorm(w: GridFunction, ball: Ball, beta: float) -> float:
    """Cell-weighted double sum of the fractional kernel, diagonal excluded."""
    if not (0 < beta < 1):
        raise ValueError("beta must lie in (0, 1)")
    pts, vals, areas = _ball_nodes(w, ball)
    if pts.shape[0] < 2:
        return 0.0
    diff = vals[:, None] - vals[None, :]
    d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=-1)
    np.fill_diagonal(d2, np.inf)
    kernel = diff**2 / d2 ** (1 + beta)  # |x-y|^{n+2 beta} with n = 2
    total = float(np.einsum("i,ij,j->", areas, kernel, areas))
    return math.sqrt(total)


def shifted_l2(w: GridFunction, ball: Ball, shift) -> float:
    pts, vals, areas = _ball_nodes(w, ball)
    moved = w.interpolate(pts + np.asarray(shift, dtype=float))
    return math.sqrt(float(np.dot(areas, (moved - vals) ** 2)))


def nikolski_ratio(w: GridFunction, ball: Ball, h_set, beta: float) -> float:
    """max over shifts of ||tau_h w||_{L^2(ball)} / |h|^beta."""
    if not (0 < beta <= 1):
        raise ValueError("beta must lie in (0, 1]")
    g = w.grid
    cx, cy = ball.center
    margin = max(float(np.hypot(*h)) for h in h_set)
    if (cx - ball.radius - margin < g.origin[0] - 1e-12
            or cx + ball.radius + margin > g.origin[0] + g.extent[0] + 1e-12
            or cy - ball.radius - margin < g.origin[1] - 1e-12
            or cy + ball.radius + margin > g.origin[1] + g.extent[1] + 1e-12):
        raise ValueError("ball plus shift margin leaves the grid")
    best = 0.0
    for hvec in h_set:
        hnorm = float(np.hypot(*hvec))
        best = max(best, shifted_l2(w, ball, hvec) / hnorm**beta)
    return best


def lattice_offsets(grid: Grid, max_norm: float, min_norm: float = 0.0) -> np.ndarray:
    mi = int(max_norm / grid.hx) + 1
    mj = int(max_norm / grid.hy) + 1
    di, dj = np.meshgrid(np.arange(-mi, mi + 1), np.arange(-mj, mj + 1))
    off = np.column_stack([di.ravel() * grid.hx, dj.ravel() * grid.hy])
    norms = np.hypot(off[:, 0], off[:, 1])
    keep = (norms > max(min_norm, 1e-15)) & (norms <= max_norm)
    return off[keep]


@dataclass
class EmbeddingResult:
    certified_seminorm: float
    certified_norm: float
    near_constant: float
    far_constant: float
    checked_offsets: int


def nikolski_to_gagliardo(w: GridFunction, center, rho: float, r: float,
                          H: float, beta: float, alpha0: float,
                          K: float = 2.0, h_set=None) -> EmbeddingResult:
    """Turn a verified difference-quotient bound into a fractional-seminorm
    certificate on the inner ball.

    The certificate is a plain lattice-offset sum: offsets below the cutoff
    (r - rho)/K use the hypothesis ||tau_h w|| <= H |h|^beta, offsets above
    use 4||w||^2.  Both constants are computed exactly by summation, so the
    certificate is rigorous for the checked offset set (default: every
    lattice offset up to the cutoff).
    """
    if not (0 < alpha0 < beta <= 1):
        raise ValueError("need 0 < alpha0 < beta")
    g = w.grid
    ball = Ball(center, rho)
    cutoff = (r - rho) / K
    if cutoff <= 0:
        raise ValueError("need rho < r")
    offs_near = lattice_offsets(g, cutoff) if h_set is None else np.asarray(h_set, dtype=float)
    if offs_near.size == 0:
        raise ValueError("cutoff below the lattice scale")
    for hvec in offs_near:
        hnorm = float(np.hypot(*hvec))
        if shifted_l2(w, ball, hvec) > H * hnorm**beta * (1 + 1e-9) + 1e-13:
            raise HypothesisError(f"difference-quotient bound fails at shift {tuple(hvec)}")

    a_max = g.hx * g.hy
    norms_near = np.hypot(offs_near[:, 0], offs_near[:, 1])
    near_const = a_max * float(np.sum(norms_near ** (2 * beta - 2 - 2 * alpha0)))
    offs_far = lattice_offsets(g, 2 * rho, min_norm=float(norms_near.max()))
    norms_far = np.hypot(offs_far[:, 0], offs_far[:, 1])
    far_const = 4 * a_max * float(np.sum(norms_far ** (-2 - 2 * alpha0)))
    _, vals, areas = _ball_nodes(w, ball)
    l2sq = float(np.dot(areas, vals**2))
    semi = math.sqrt(H**2 * near_const + far_const * l2sq)
    return EmbeddingResult(semi, math.sqrt(l2sq) + semi, near_const, far_const,
                           offs_near.shape[0])


# ---------------------------------------------------------------------------
# fractional renormalization parameters


@dataclass
class FractionalParams:
    n: int
    p: float
    q: float
    alpha: float
    s_exponent: float
    beta: float
    b: float
    admissible: bool
    gap_condition: float
    variant_s: float
    variant_gap: float
    variant_admissible: bool

    def rhs_of_beta(self, beta):
        beta = np.asarray(beta, dtype=float)
        s = self.s_exponent
        return 1 + (2 * beta / self.n) * (2 * self.alpha - self.n * (s - 1)) / (s * self.n + 4 * beta)


def _ladder_exponent(n: int, p: float, q: float, improved: bool) -> float:
    slack = 1.0 + 1e-3
    if improved:
        if n == 3:
            return 1.0 if q == p else slack * q / (2 * p - q)
        return 2 * q / ((n + 1) * p - (n - 1) * q)
    if n == 2:
        return 1.0 if q == p else slack * q / (2 * p - q)
    return 2 * q / ((n + 2) * p - n * q)


def fractional_parameter_solver(n: int, p: float, q: float, alpha: float,
                                grid_size: int = 512) -> FractionalParams:
    """Renormalization exponents for the fractional energy route.

    Picks the ladder exponent, the free exponent b balancing the two
    admissibility constraints, and searches the fractional order beta below
    alpha/(1+alpha) for the best gap condition (its right-hand side is
    nondecreasing in beta, so the supremum sits at the endpoint).
    """
    if not (q / p < 1 + 2 / n):
        raise PreconditionError("need q/p < 1 + 2/n")
    s = _ladder_exponent(n, p, q, improved=False)
    beta_max = alpha / (1 + alpha)
    betas = np.linspace(beta_max * 1e-3, beta_max * (1 - 1e-9), grid_size)
    rhs = 1 + (2 * betas / n) * (2 * alpha - n * (s - 1)) / (s * n + 4 * betas)
    k = int(np.argmax(rhs))
    beta = float(betas[k])
    b = 2 * p * (s * alpha + 2 * beta * (s - 1)) / (s * n + 4 * beta)
    admissible = bool(q / p < rhs[k] and 0 <= b <= p)
    gap = float(rhs[k] - q / p)

    s2 = _ladder_exponent(n, p, q, improved=True)
    rhs2 = 1 + (2 * betas / n) * (2 * alpha - n * (s2 - 1)) / (s2 * n + 4 * betas)
    k2 = int(np.argmax(rhs2))
    return FractionalParams(n, p, q, alpha, s, beta, b, admissible, gap,
                            s2, float(rhs2[k2] - q / p), bool(q / p < rhs2[k2]))
