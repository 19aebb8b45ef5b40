"""Truncated Riesz, Havin-Mazya-Wolff and averaged radial potentials.

The measures seen here are finite atom lists plus an optional nonnegative
density sampled on a grid.  Both make |mu|(B_rho(x0)) a step function of
rho (atoms enter at their distances, density nodes at theirs), so every
radial potential integral reduces to a finite sum of exact power-law
integrals between breakpoints.  No quadrature error enters: the only
discretization is the node model of the density itself.

Density-backed Riesz/Wolff integrals start at the grid spacing (below the
lattice scale a node would act as a spurious atom and the kernel integral
would diverge).  The averaged potential needs no cutoff: its integrand uses
ball averages, extended constantly below the first node-entry radius.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .lattice import Ball, Grid, GridFunction, node_integral


class PreconditionError(ValueError):
    """A lemma hypothesis fails; the conclusion gives nothing."""


class UnsupportedInputError(ValueError):
    pass


_BALL_VOLUME_UNIT = {2: math.pi}


def unit_ball_volume(n: int) -> float:
    if n not in _BALL_VOLUME_UNIT:
        _BALL_VOLUME_UNIT[n] = math.pi ** (n / 2) / math.gamma(n / 2 + 1)
    return _BALL_VOLUME_UNIT[n]


@dataclass
class Measure:
    """Weighted point masses plus an optional density on a grid."""

    atoms: tuple = ()  # ((x, y, weight), ...)
    density: GridFunction | None = None
    n: int = 2

    def __post_init__(self):
        self.atoms = tuple((float(x), float(y), float(w)) for x, y, w in self.atoms)
        if any(w <= 0 for _, _, w in self.atoms):
            raise ValueError("atom weights must be positive")
        if self.n < 2:
            raise ValueError("dimension tag must be >= 2")
        if self.density is not None:
            if self.n != 2:
                raise ValueError("densities live on 2-D grids")
            if np.any(self.density.values < 0):
                raise ValueError("density must be nonnegative")

    def total_mass(self) -> float:
        m = sum(w for _, _, w in self.atoms)
        if self.density is not None:
            m += node_integral(self.density.grid, self.density.values)
        return float(m)

    def scaled(self, c: float) -> "Measure":
        dens = None
        if self.density is not None:
            dens = self.density.copy_with(c * self.density.values)
        return Measure(tuple((x, y, c * w) for x, y, w in self.atoms), dens, self.n)


def mass_in_ball(mu: Measure, ball: Ball) -> float:
    """Atom mass plus density integral; sphere-boundary atoms count inside."""
    cx, cy = ball.center
    m = sum(w for x, y, w in mu.atoms
            if math.hypot(x - cx, y - cy) <= ball.radius * (1 + 1e-14))
    if mu.density is not None:
        g = mu.density.grid
        m += node_integral(g, mu.density.values, ball.node_mask(g))
    return float(m)


# ---------------------------------------------------------------------------
# step mass profiles and exact power-law integration


def _pow_int(a: np.ndarray, b: np.ndarray, e: float) -> np.ndarray:
    """Exact integral of rho^{e-1} over [a, b]."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if e == 0.0:
        return np.log(b / a)
    return (b**e - a**e) / e


@functools.lru_cache(maxsize=4096)
def _node_order(grid: Grid, x0: tuple) -> tuple:
    pts = grid.nodes()
    d = np.hypot(pts[:, 0] - x0[0], pts[:, 1] - x0[1])
    order = np.argsort(d, kind="stable")
    return d[order], order


def _step_profile(mu: Measure, x0, r: float, power_m: float = 1.0,
                  density_floor: float | None = None):
    """Entry radii and cumulative |mu|^m masses inside (0, r].

    Returns (radii, cummass) with radii strictly increasing; cummass[j] is
    the mass present on (radii[j], radii[j+1]].  Density node entries are
    clamped below at `density_floor` (grid spacing) when given.
    """
    entries = []
    masses = []
    for x, y, w in mu.atoms:
        d = math.hypot(x - x0[0], y - x0[1])
        if d <= r * (1 + 1e-14):
            entries.append(min(d, r))
            masses.append(w)
    if mu.density is not None:
        g = mu.density.grid
        dists, order = _node_order(g, (float(x0[0]), float(x0[1])))
        vals = (mu.density.values[order] ** power_m) * g.node_cell_areas()[order]
        dd = dists.copy()
        if density_floor is not None:
            dd = np.maximum(dd, density_floor)
        keep = dd <= r * (1 + 1e-14)
        entries.extend(np.minimum(dd[keep], r).tolist())
        masses.extend(vals[keep].tolist())
    if not entries:
        return np.empty(0), np.empty(0)
    entries = np.asarray(entries)
    masses = np.asarray(masses)
    order = np.argsort(entries, kind="stable")
    entries = entries[order]
    masses = np.cumsum(masses[order])
    # collapse duplicate radii, keeping the last (largest) cumulative mass
    keep = np.append(np.diff(entries) > 1e-15 * max(r, 1.0), True)
    return entries[keep], masses[keep]


def _kernel_potential(mu: Measure, x0, r: float, kernel_exp: float,
                      mass_exp: float, n: int) -> float:
    """integral over (0, r] of mass(rho)^{mass_exp} rho^{kernel_exp - 1} drho."""
    for x, y, w in mu.atoms:
        if math.hypot(x - x0[0], y - x0[1]) <= 1e-15 and kernel_exp <= 0:
            return math.inf
    floor = mu.density.grid.spacing if mu.density is not None else None
    radii, cum = _step_profile(mu, x0, r, 1.0, floor)
    if radii.size == 0:
        return 0.0
    left = radii
    right = np.append(radii[1:], r)
    ok = right > left
    seg = _pow_int(left[ok], right[ok], kernel_exp)
    return float(np.dot(cum[ok] ** mass_exp, seg))


def riesz(mu: Measure, x0, r: float, beta: float, n: int | None = None) -> float:
    """Truncated Riesz potential: int_0^r |mu|(B_rho)/rho^{n-beta} drho/rho."""
    if beta <= 0 or r <= 0:
        raise ValueError("need beta > 0 and r > 0")
    n = mu.n if n is None else n
    return _kernel_potential(mu, x0, r, beta - n, 1.0, n)


def wolff(mu: Measure, x0, r: float, beta: float, p: float,
          n: int | None = None) -> float:
    """Havin-Mazya-Wolff potential: int_0^r (|mu|(B_rho)/rho^{n-beta p})^{1/(p-1)} drho/rho."""
    if beta <= 0 or p <= 1 or r <= 0:
        raise ValueError("need beta > 0, p > 1, r > 0")
    n = mu.n if n is None else n
    return _kernel_potential(mu, x0, r, (beta * p - n) / (p - 1), 1.0 / (p - 1), n)


def p_potential(mu: Measure, x0, r: float, t: float, delta: float,
                m: float, theta: float) -> float:
    """Averaged radial potential: int_0^r rho^delta (avg_{B_rho} |mu|^m)^{theta/t} drho/rho."""
    if min(t, delta) <= 0 or m < 0 or theta < 0 or r <= 0:
        raise ValueError("parameters out of range")
    if mu.atoms and m != 1.0:
        raise UnsupportedInputError("atoms only allowed when m = 1")
    radii, cum = _step_profile(mu, x0, r, m, None)
    if radii.size == 0:
        return 0.0
    if mu.density is not None:
        g = mu.density.grid
        dists, order = _node_order(g, (float(x0[0]), float(x0[1])))
        areas = g.node_cell_areas()[order]
        keep = dists <= r * (1 + 1e-14)
        ar, aa = dists[keep], np.cumsum(areas[keep])
        vol = np.interp(radii, ar, aa)
    else:
        vol = unit_ball_volume(mu.n) * radii**mu.n
    vol = np.maximum(vol, 1e-300)
    avg = (cum / vol) ** (theta / t)
    # constant extension of the first average below the first entry radius
    left = np.concatenate([[0.0], radii])
    right = np.append(radii, r)
    avg = np.concatenate([[avg[0]], avg])
    ok = right > left
    seg = _pow_int(left[ok], right[ok], delta)
    return float(np.dot(avg[ok], seg))


# ---------------------------------------------------------------------------
# Lorentz norms


@dataclass(frozen=True)
class LorentzIndex:
    t: float
    gamma: float  # math.inf for the weak type

    def __post_init__(self):
        if self.t <= 0 or self.gamma <= 0:
            raise ValueError("Lorentz indices must be positive")


def lorentz_norm(f: GridFunction, idx: LorentzIndex, mask: np.ndarray | None = None) -> float:
    """Norm of |f| from the exact distribution function of the node model.

    The distribution function |{|f| > lam}| is piecewise constant with node
    cell areas as weights, so the lambda-integral is a finite closed form.
    """
    areas = f.grid.node_cell_areas()
    vals = np.abs(f.values)
    if mask is not None:
        areas = areas[mask]
        vals = vals[mask]
    pos = vals > 0
    if not pos.any():
        return 0.0
    vals = vals[pos]
    areas = areas[pos]
    order = np.argsort(vals)[::-1]
    v = vals[order]
    a = areas[order]
    uniq, start = np.unique(-v, return_index=True)
    levels = -uniq  # descending
    cumarea = np.cumsum(a)
    # area of {|f| >= level_k}: cumulative area through the last node of level k
    ends = np.append(start[1:], v.size) - 1
    C = cumarea[ends]
    if math.isinf(idx.gamma):
        return float(np.max(levels * C ** (1.0 / idx.t)))
    g = idx.gamma
    lower = np.append(levels[1:], 0.0)
    pieces = C ** (g / idx.t) * (levels**g - lower**g)
    return float((idx.t / g * pieces.sum()) ** (1.0 / g))


def lebesgue_norm(f: GridFunction, p: float, mask: np.ndarray | None = None) -> float:
    return node_integral(f.grid, np.abs(f.values) ** p, mask) ** (1.0 / p)


# ---------------------------------------------------------------------------
# sup-of-potential vs Lorentz-norm bound


@dataclass
class SupBoundReport:
    lhs: float
    rhs_lorentz: float
    rhs_lebesgue: float
    ratio: float
    centers: int
    lorentz_index: tuple


def potential_sup_bound_check(mu: Measure, center, tau1: float, r0: float,
                              t: float, delta: float, m: float, theta: float,
                              eps: float = 1.0) -> SupBoundReport:
    """Sup of the averaged potential over an inner ball against the Lorentz
    norm of the density on the enlarged ball.

    Requires the scaling hypothesis n*theta/(t*delta) > 1; without it the
    bound carries no information and the call refuses.
    """
    if mu.density is None:
        raise UnsupportedInputError("needs a density measure")
    n = mu.n
    if n * theta / (t * delta) <= 1:
        raise PreconditionError("need n*theta/(t*delta) > 1")
    g = mu.density.grid
    inner = Ball(center, tau1)
    nodes = g.nodes()[inner.node_mask(g)]
    if nodes.size == 0:
        raise ValueError("inner ball contains no nodes")
    lhs = max(p_potential(mu, tuple(pt), r0, t, delta, m, theta) for pt in nodes)
    ti = m * n * theta / (t * delta)
    gi = m * theta / t
    outer_mask = Ball(center, tau1 + r0).node_mask(g)
    nrm = lorentz_norm(mu.density, LorentzIndex(ti, gi), outer_mask)
    rhs_lorentz = nrm ** (m * theta / t)
    leb = lebesgue_norm(mu.density, (1 + eps) * ti, outer_mask)
    rhs_lebesgue = leb ** (m * theta / t)
    ratio = 0.0 if lhs == 0 else (math.inf if rhs_lorentz == 0 else lhs / rhs_lorentz)
    return SupBoundReport(lhs, rhs_lorentz, rhs_lebesgue, ratio, nodes.shape[0], (ti, gi))


# ---------------------------------------------------------------------------
# file formats


def save_measure_atoms(mu: Measure, path) -> None:
    with open(path, "w") as f:
        f.write("kind,x,y,weight\n")
        for x, y, w in mu.atoms:
            f.write(f"atom,{x:.17g},{y:.17g},{w:.17g}\n")


def load_measure_atoms(path, density: GridFunction | None = None, n: int = 2) -> Measure:
    atoms = []
    with open(path) as f:
        header = f.readline()
        if header.strip() != "kind,x,y,weight":
            raise ValueError("bad measure file header")
        for line in f:
            kind, x, y, w = line.strip().split(",")
            if kind != "atom":
                raise ValueError(f"unknown measure row kind {kind!r}")
            atoms.append((float(x), float(y), float(w)))
    return Measure(tuple(atoms), density, n)


def save_potential_report(path, points: np.ndarray, values: np.ndarray) -> None:
    with open(path, "w") as f:
        f.write("x,y,potential\n")
        for (x, y), v in zip(points, values):
            f.write(f"{x:.17g},{y:.17g},{v:.17g}\n")
