"""Uniform rectangular lattices with P1 triangulations.

Everything downstream (energies, potentials, iteration lemmas) lives on a
regular grid over a rectangle, each cell split into two right triangles.
Gradients are per-triangle constants of the linear interpolant; nodal
quadrature uses the dual cell areas (h^2 in the interior, halved on edges,
quartered at corners).
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np


class DomainExhaustedError(ValueError):
    """Shifted evaluation requested outside the grid."""


@dataclass(frozen=True)
class Grid:
    """Uniform node lattice on origin + [0, extent]."""

    origin: tuple[float, float]
    extent: tuple[float, float]
    shape: tuple[int, int]  # nodes per side, (nx, ny)

    def __post_init__(self):
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))
        object.__setattr__(self, "extent", (float(self.extent[0]), float(self.extent[1])))
        object.__setattr__(self, "shape", (int(self.shape[0]), int(self.shape[1])))
        if min(self.extent) <= 0:
            raise ValueError("extent must be positive")
        if min(self.shape) < 3:
            raise ValueError("need at least 3 nodes per side")

    @classmethod
    def square(cls, n: int, lo: float = 0.0, hi: float = 1.0) -> "Grid":
        return cls((lo, lo), (hi - lo, hi - lo), (n, n))

    @property
    def nx(self) -> int:
        return self.shape[0]

    @property
    def ny(self) -> int:
        return self.shape[1]

    @property
    def hx(self) -> float:
        return self.extent[0] / (self.nx - 1)

    @property
    def hy(self) -> float:
        return self.extent[1] / (self.ny - 1)

    @property
    def spacing(self) -> float:
        return min(self.hx, self.hy)

    @property
    def n_nodes(self) -> int:
        return self.nx * self.ny

    @property
    def area(self) -> float:
        return self.extent[0] * self.extent[1]

    def xs(self) -> np.ndarray:
        return self.origin[0] + self.hx * np.arange(self.nx)

    def ys(self) -> np.ndarray:
        return self.origin[1] + self.hy * np.arange(self.ny)

    def nodes(self) -> np.ndarray:
        """(N, 2) coordinates, row-major: y outer, x inner."""
        X, Y = np.meshgrid(self.xs(), self.ys())
        return np.column_stack([X.ravel(), Y.ravel()])

    def node_cell_areas(self) -> np.ndarray:
        wx = np.full(self.nx, self.hx)
        wx[[0, -1]] = self.hx / 2
        wy = np.full(self.ny, self.hy)
        wy[[0, -1]] = self.hy / 2
        return np.outer(wy, wx).ravel()

    def boundary_mask(self) -> np.ndarray:
        m = np.zeros((self.ny, self.nx), dtype=bool)
        m[0, :] = m[-1, :] = True
        m[:, 0] = m[:, -1] = True
        return m.ravel()

    def contains(self, pts: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        pts = np.atleast_2d(pts)
        ox, oy = self.origin
        ex, ey = self.extent
        return (
            (pts[:, 0] >= ox - tol)
            & (pts[:, 0] <= ox + ex + tol)
            & (pts[:, 1] >= oy - tol)
            & (pts[:, 1] <= oy + ey + tol)
        )


@functools.lru_cache(maxsize=64)
def _triangulation(grid: Grid):
    """Vertex triples, barycenters and the constant-gradient operator.

    Each cell [i,i+1]x[j,j+1] splits into the lower triangle
    (v00, v10, v01) and the upper triangle (v10, v11, v01).
    """
    nx, ny = grid.nx, grid.ny
    hx, hy = grid.hx, grid.hy
    i, j = np.meshgrid(np.arange(nx - 1), np.arange(ny - 1))
    i = i.ravel()
    j = j.ravel()
    v00 = j * nx + i
    v10 = v00 + 1
    v01 = v00 + nx
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v01])
    upper = np.column_stack([v10, v11, v01])
    tris = np.vstack([lower, upper])

    nodes = grid.nodes()
    bary = nodes[tris].mean(axis=1)

    # gx[k, m] = d(grad_x)/d(value at vertex m) on triangle k, ditto gy
    n_cells = lower.shape[0]
    gx = np.empty((2 * n_cells, 3))
    gy = np.empty((2 * n_cells, 3))
    gx[:n_cells] = np.array([-1 / hx, 1 / hx, 0.0])
    gy[:n_cells] = np.array([-1 / hy, 0.0, 1 / hy])
    gx[n_cells:] = np.array([0.0, 1 / hx, -1 / hx])
    gy[n_cells:] = np.array([-1 / hy, 1 / hy, 0.0])

    area = hx * hy / 2
    return tris, bary, gx, gy, area


def triangle_count(grid: Grid) -> int:
    return 2 * (grid.nx - 1) * (grid.ny - 1)


def triangle_barycenters(grid: Grid) -> np.ndarray:
    return _triangulation(grid)[1]


def triangle_area(grid: Grid) -> float:
    return _triangulation(grid)[4]


@dataclass
class GridFunction:
    """Piecewise-linear scalar field: one value per node."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).ravel()
        if self.values.size != self.grid.n_nodes:
            raise ValueError("value count does not match grid")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("non-finite nodal value")

    @classmethod
    def from_callable(cls, grid: Grid, f) -> "GridFunction":
        pts = grid.nodes()
        return cls(grid, np.asarray(f(pts[:, 0], pts[:, 1]), dtype=float))

    @classmethod
    def constant(cls, grid: Grid, c: float) -> "GridFunction":
        return cls(grid, np.full(grid.n_nodes, float(c)))

    def values2d(self) -> np.ndarray:
        return self.values.reshape(self.grid.ny, self.grid.nx)

    def copy_with(self, values: np.ndarray) -> "GridFunction":
        return GridFunction(self.grid, np.array(values, dtype=float))

    def interpolate(self, pts: np.ndarray) -> np.ndarray:
        """Evaluate the P1 interpolant at arbitrary points inside the grid."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        g = self.grid
        xi = (pts[:, 0] - g.origin[0]) / g.hx
        eta = (pts[:, 1] - g.origin[1]) / g.hy
        i = np.clip(np.floor(xi).astype(int), 0, g.nx - 2)
        j = np.clip(np.floor(eta).astype(int), 0, g.ny - 2)
        lx = xi - i
        ly = eta - j
        v = self.values
        k00 = j * g.nx + i
        v00 = v[k00]
        v10 = v[k00 + 1]
        v01 = v[k00 + g.nx]
        v11 = v[k00 + g.nx + 1]
        low = v00 + lx * (v10 - v00) + ly * (v01 - v00)
        up = v11 + (1 - lx) * (v01 - v11) + (1 - ly) * (v10 - v11)
        return np.where(lx + ly <= 1.0, low, up)


@dataclass(frozen=True)
class Ball:
    center: tuple[float, float]
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        object.__setattr__(self, "radius", float(self.radius))
        if self.radius <= 0:
            raise ValueError("radius must be positive")

    def node_mask(self, grid: Grid) -> np.ndarray:
        """Node-center inclusion; points on the sphere count as inside."""
        pts = grid.nodes()
        d2 = (pts[:, 0] - self.center[0]) ** 2 + (pts[:, 1] - self.center[1]) ** 2
        return d2 <= self.radius**2 * (1 + 1e-14)


@dataclass(frozen=True)
class ShiftVector:
    h: tuple[float, float]

    def __post_init__(self):
        object.__setattr__(self, "h", (float(self.h[0]), float(self.h[1])))
        if np.hypot(*self.h) == 0:
            raise ValueError("shift must be nonzero")

    @property
    def norm(self) -> float:
        return float(np.hypot(*self.h))


def gradient(w: GridFunction) -> np.ndarray:
    """Per-triangle constant gradient of the linear interpolant, shape (T, 2)."""
    tris, _, gx, gy, _ = _triangulation(w.grid)
    v = w.values[tris]
    return np.column_stack([(v * gx).sum(axis=1), (v * gy).sum(axis=1)])


def integrate(tri_field: np.ndarray, grid: Grid, average: bool = False) -> float:
    """One-point (barycenter) quadrature: sum of triangle areas times values."""
    tri_field = np.asarray(tri_field, dtype=float)
    if tri_field.shape[0] != triangle_count(grid):
        raise ValueError("field is not per-triangle")
    total = float(tri_field.sum() * triangle_area(grid))
    return total / grid.area if average else total


def node_integral(grid: Grid, node_field: np.ndarray, mask: np.ndarray | None = None,
                  average: bool = False) -> float:
    """Nodal quadrature with dual cell areas, optionally restricted to a mask."""
    areas = grid.node_cell_areas()
    node_field = np.asarray(node_field, dtype=float)
    if mask is not None:
        areas = areas[mask]
        node_field = node_field[mask]
    total = float(np.dot(areas, node_field))
    if average:
        asum = float(areas.sum())
        if asum == 0:
            raise ValueError("empty discrete region")
        return total / asum
    return total


def ball_node_area(grid: Grid, ball: Ball) -> float:
    return float(grid.node_cell_areas()[ball.node_mask(grid)].sum())


def finite_difference(w: GridFunction, shift: ShiftVector) -> GridFunction:
    """tau_h w = w(x+h) - w(x) on the sub-lattice where x+h stays inside."""
    g = w.grid
    hx_, hy_ = shift.h
    if abs(hx_) > g.extent[0] / 2 or abs(hy_) > g.extent[1] / 2:
        raise DomainExhaustedError("shift exceeds half the extent")
    xs = g.xs()
    ys = g.ys()
    ox, oy = g.origin
    # node index ranges whose shifted position stays inside the rectangle
    eps = 1e-12
    keep_x = (xs + hx_ >= ox - eps) & (xs + hx_ <= ox + g.extent[0] + eps)
    keep_y = (ys + hy_ >= oy - eps) & (ys + hy_ <= oy + g.extent[1] + eps)
    i0, i1 = np.flatnonzero(keep_x)[[0, -1]]
    j0, j1 = np.flatnonzero(keep_y)[[0, -1]]
    nxs = i1 - i0 + 1
    nys = j1 - j0 + 1
    if nxs < 3 or nys < 3:
        raise DomainExhaustedError("shifted domain too small")
    sub = Grid((xs[i0], ys[j0]), ((nxs - 1) * g.hx, (nys - 1) * g.hy), (nxs, nys))
    pts = sub.nodes()
    shifted = pts + np.array(shift.h)
    shifted[:, 0] = np.clip(shifted[:, 0], ox, ox + g.extent[0])
    shifted[:, 1] = np.clip(shifted[:, 1], oy, oy + g.extent[1])
    base = w.values.reshape(g.ny, g.nx)[j0 : j1 + 1, i0 : i1 + 1].ravel()
    return GridFunction(sub, w.interpolate(shifted) - base)


@functools.lru_cache(maxsize=64)
def _tent_stencil(hx: float, hy: float, radius: float):
    mi = int(np.ceil(radius / hx))
    mj = int(np.ceil(radius / hy))
    offs = []
    wts = []
    for dj in range(-mj, mj + 1):
        for di in range(-mi, mi + 1):
            d = np.hypot(di * hx, dj * hy)
            if d < radius:
                offs.append((di, dj))
                wts.append(1.0 - d / radius)
    w = np.array(wts)
    return offs, w / w.sum()


def mollify(w: GridFunction, radius: float) -> GridFunction:
    """Normalized tent-kernel smoothing; clamped (nearest-value) extension."""
    g = w.grid
    if radius < g.spacing:
        raise ValueError("radius below grid spacing")
    offs, wts = _tent_stencil(g.hx, g.hy, float(radius))
    vals2 = w.values2d()
    out = np.zeros_like(vals2)
    ii = np.arange(g.nx)
    jj = np.arange(g.ny)
    for (di, dj), wt in zip(offs, wts):
        ci = np.clip(ii + di, 0, g.nx - 1)
        cj = np.clip(jj + dj, 0, g.ny - 1)
        out += wt * vals2[np.ix_(cj, ci)]
    return GridFunction(g, out.ravel())


def save_csv(w: GridFunction, path) -> None:
    pts = w.grid.nodes()
    with open(path, "w") as f:
        f.write("x,y,value\n")
        for (x, y), v in zip(pts, w.values):
            f.write(f"{x:.17g},{y:.17g},{v:.17g}\n")


def load_csv(path) -> GridFunction:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    xs = data[:, 0]
    ys = data[:, 1]
    nx = int(np.flatnonzero(np.diff(ys) != 0)[0]) + 1 if ys[0] != ys[-1] else data.shape[0]
    ny = data.shape[0] // nx
    if nx * ny != data.shape[0]:
        raise ValueError("not a row-major rectangular node file")
    grid = Grid((xs[0], ys[0]), (xs[nx - 1] - xs[0], ys[-1] - ys[0]), (nx, ny))
    return GridFunction(grid, data[:, 2])
