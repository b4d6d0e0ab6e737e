"""Corridor geometry, structured grids and the walking-direction potential.

The walkable domain is a corridor ``[0, L] x [-l, l]`` with an optional
rectangular bottleneck that narrows the corridor to half-width ``w`` on an
interval ``[x_start, x_end]``, and an exit door of configurable half-width
on the right boundary.  The preferred walking direction is the negative
gradient of the distance-to-exit function, obtained from a fast-sweeping
solver for ``|grad(phi)| = 1``.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from enum import Enum
from functools import cached_property

import numpy as np
from scipy import ndimage

from .errors import GeometryError, NumericalError, OutsideDomainError

logger = logging.getLogger(__name__)

_ALIGN_TOL = 1e-9


class BoundaryKind(Enum):
    INFLOW = "inflow"
    OUTFLOW = "outflow"
    WALL = "wall"


@dataclass(frozen=True)
class Bottleneck:
    half_width: float
    x_start: float
    x_end: float


@dataclass(frozen=True)
class DomainSpec:
    """Corridor of length `length` and half-width `half_width` in meters.

    `exit_door_half_width` defaults to the full half-width (door spans the
    whole right boundary).  The bottleneck, when present, cuts out the two
    rectangles ``x in [x_start, x_end], |y| > half_width_bn``.
    """

    length: float
    half_width: float
    bottleneck: Bottleneck | None = None
    exit_door_half_width: float | None = None

    def __post_init__(self):
        if self.length <= 0:
            raise GeometryError("corridor length must be positive")
        if self.half_width <= 0:
            raise GeometryError("corridor half_width must be positive")
        if self.bottleneck is not None:
            bn = self.bottleneck
            if not 0 < bn.half_width < self.half_width:
                raise GeometryError("bottleneck half_width must lie in (0, half_width)")
            if not 0 <= bn.x_start < bn.x_end <= self.length:
                raise GeometryError("bottleneck interval must satisfy 0 <= x_start < x_end <= L")
        door = self.door_half_width
        if not 0 < door <= self.half_width:
            raise GeometryError("exit door half-width must lie in (0, half_width]")

    @property
    def door_half_width(self) -> float:
        if self.exit_door_half_width is None:
            return self.half_width
        return self.exit_door_half_width

    def half_width_at(self, x1):
        """Local half-width of the walkable region at station x1."""
        if self.bottleneck is None:
            return np.broadcast_to(self.half_width, np.shape(x1)).astype(float) \
                if np.ndim(x1) else self.half_width
        bn = self.bottleneck
        inside_bn = (np.asarray(x1) >= bn.x_start) & (np.asarray(x1) <= bn.x_end)
        return np.where(inside_bn, bn.half_width, self.half_width)

    def contains(self, x1, x2, tol=1e-12):
        """True where (x1, x2) lies in the closed walkable domain."""
        hw = self.half_width_at(x1)
        return (
            (np.asarray(x1) >= -tol)
            & (np.asarray(x1) <= self.length + tol)
            & (np.abs(x2) <= hw + tol)
        )


def _snap(value, h, what):
    """Snap `value` to the nearest multiple of the cell size `h`."""
    snapped = round(value / h) * h
    if abs(snapped - value) > _ALIGN_TOL:
        logger.info("%s snapped from %g to the grid line %g", what, value, snapped)
    return snapped


@dataclass(frozen=True, eq=False)
class GridSpec:
    """Cell-centered structured grid over the corridor bounding box.

    Arrays are indexed ``[iy, ix]``.  `inside` marks walkable cells (the
    bottleneck cut-outs are masked), `inflow_faces`/`outflow_faces` mark the
    boundary faces on ``x1 = 0`` and on the exit door at ``x1 = L``.
    """

    domain: DomainSpec
    nx: int
    ny: int
    dx: float
    dy: float
    x: np.ndarray          # (nx,) cell-center abscissae
    y: np.ndarray          # (ny,) cell-center ordinates
    inside: np.ndarray     # (ny, nx) bool
    inflow_faces: np.ndarray   # (ny,) bool
    outflow_faces: np.ndarray  # (ny,) bool

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    def boundary_kind(self, side: str, index: int) -> BoundaryKind:
        """Classify the boundary face at row `index` of the left/right side,
        or column `index` of the bottom/top side."""
        if side == "left":
            return BoundaryKind.INFLOW if self.inflow_faces[index] else BoundaryKind.WALL
        if side == "right":
            return BoundaryKind.OUTFLOW if self.outflow_faces[index] else BoundaryKind.WALL
        if side in ("bottom", "top"):
            return BoundaryKind.WALL
        raise ValueError(f"unknown side {side!r}")

    def cell_of(self, x1, x2):
        """Indices (iy, ix) of the cell containing the point, clipped to range."""
        ix = np.clip((np.asarray(x1) / self.dx).astype(int), 0, self.nx - 1)
        iy = np.clip(((np.asarray(x2) + self.domain.half_width) / self.dy).astype(int),
                     0, self.ny - 1)
        return iy, ix

    @cached_property
    def fill_indices(self):
        """Index arrays mapping every cell to its nearest inside cell.

        Used to extend cell fields across the masked bottleneck cut-outs so
        that bilinear interpolation near mask edges only sees valid values.
        """
        if self.inside.all():
            return None
        _, (iy, ix) = ndimage.distance_transform_edt(
            ~self.inside, sampling=(self.dy, self.dx), return_indices=True)
        return iy, ix

    def fill_outside(self, values: np.ndarray) -> np.ndarray:
        """Replace masked-cell entries by the nearest inside value."""
        idx = self.fill_indices
        if idx is None:
            return values
        return values[idx]

    def interpolate(self, values: np.ndarray, x1, x2):
        """Bilinear interpolation of a cell-centered field at points (x1, x2).

        Queries are clamped to the cell-center hull, i.e. constant
        extrapolation within the boundary half-cells.  `values` should
        already be mask-filled where relevant.
        """
        gx = np.clip(np.asarray(x1, dtype=float) / self.dx - 0.5, 0.0, self.nx - 1.0)
        gy = np.clip((np.asarray(x2, dtype=float) + self.domain.half_width) / self.dy - 0.5,
                     0.0, self.ny - 1.0)
        ix0 = np.minimum(gx.astype(int), self.nx - 2) if self.nx > 1 else np.zeros_like(gx, int)
        iy0 = np.minimum(gy.astype(int), self.ny - 2) if self.ny > 1 else np.zeros_like(gy, int)
        tx = gx - ix0
        ty = gy - iy0
        v00 = values[iy0, ix0]
        v01 = values[iy0, ix0 + 1]
        v10 = values[iy0 + 1, ix0]
        v11 = values[iy0 + 1, ix0 + 1]
        return ((1 - ty) * ((1 - tx) * v00 + tx * v01)
                + ty * ((1 - tx) * v10 + tx * v11))


def build_grid(domain: DomainSpec, nx: int, ny: int) -> GridSpec:
    """Discretize the corridor into an nx-by-ny cell-centered grid.

    Bottleneck walls and the exit door are snapped to the nearest grid
    lines; snapping by more than one cell is rejected, as is a bottleneck
    narrower than two cells.
    """
    if nx < 4 or ny < 4:
        raise GeometryError("grid must have at least 4 cells per direction")
    dx = domain.length / nx
    dy = 2 * domain.half_width / ny
    x = (np.arange(nx) + 0.5) * dx
    y = -domain.half_width + (np.arange(ny) + 0.5) * dy

    inside = np.ones((ny, nx), dtype=bool)
    snapped_domain = domain
    if domain.bottleneck is not None:
        bn = domain.bottleneck
        w = _snap(bn.half_width, dy, "bottleneck half_width")
        xs = _snap(bn.x_start, dx, "bottleneck x_start")
        xe = _snap(bn.x_end, dx, "bottleneck x_end")
        if round(2 * w / dy) < 2:
            raise GeometryError("bottleneck narrower than 2 cells; refine the grid")
        snapped_domain = DomainSpec(
            domain.length, domain.half_width,
            Bottleneck(w, xs, xe), domain.exit_door_half_width)
        in_band = (x[None, :] > xs + _ALIGN_TOL) & (x[None, :] < xe - _ALIGN_TOL)
        inside &= ~(in_band & (np.abs(y[:, None]) > w + _ALIGN_TOL))

    door = _snap(snapped_domain.door_half_width, dy, "exit door half_width")
    if round(2 * door / dy) < 1:
        raise GeometryError("exit door narrower than one cell; refine the grid")
    if domain.exit_door_half_width is not None:
        snapped_domain = DomainSpec(
            snapped_domain.length, snapped_domain.half_width,
            snapped_domain.bottleneck, door)

    inflow = inside[:, 0].copy()
    outflow = inside[:, -1] & (np.abs(y) < door)

    grid = GridSpec(snapped_domain, nx, ny, dx, dy, x, y, inside, inflow, outflow)
    _check_connectivity(grid)
    return grid


def _check_connectivity(grid: GridSpec):
    """Every inside cell must be reachable from the inflow column, and the
    outflow faces must be reachable too."""
    inside = grid.inside
    seen = np.zeros_like(inside)
    queue = deque((iy, 0) for iy in np.flatnonzero(inside[:, 0]))
    for iy, ix in queue:
        seen[iy, ix] = True
    while queue:
        iy, ix = queue.popleft()
        for jy, jx in ((iy - 1, ix), (iy + 1, ix), (iy, ix - 1), (iy, ix + 1)):
            if 0 <= jy < grid.ny and 0 <= jx < grid.nx and inside[jy, jx] and not seen[jy, jx]:
                seen[jy, jx] = True
                queue.append((jy, jx))
    if not (seen | ~inside).all():
        raise GeometryError("grid mask is not connected from the inflow boundary")
    if not seen[np.flatnonzero(grid.outflow_faces), -1].all():
        raise GeometryError("no outflow face reachable through inside cells")


@dataclass(frozen=True, eq=False)
class Potential:
    """Distance-to-exit field and the unit walking-direction field."""

    grid: GridSpec
    phi: np.ndarray        # (ny, nx) distance to the exit door, meters
    direction: np.ndarray  # (ny, nx, 2) unit drift direction per cell

    @cached_property
    def _filled(self):
        g = self.grid
        return (g.fill_outside(self.direction[:, :, 0]),
                g.fill_outside(self.direction[:, :, 1]),
                g.fill_outside(self.phi))

    def direction_at(self, x1, x2):
        """Unit drift direction at arbitrary points, bilinearly interpolated.

        Vectorized over `x1`/`x2`; renormalizes after interpolation.
        """
        dx_f, dy_f, _ = self._filled
        gx = self.grid.interpolate(dx_f, x1, x2)
        gy = self.grid.interpolate(dy_f, x1, x2)
        norm = np.hypot(gx, gy)
        norm = np.where(norm > 0, norm, 1.0)
        return gx / norm, gy / norm

    def phi_at(self, x1, x2):
        _, _, phi_f = self._filled
        return self.grid.interpolate(phi_f, x1, x2)


def _sweep_orders(nx, ny):
    return (
        (range(ny), range(nx)),
        (range(ny), range(nx - 1, -1, -1)),
        (range(ny - 1, -1, -1), range(nx)),
        (range(ny - 1, -1, -1), range(nx - 1, -1, -1)),
    )


def solve_eikonal(grid: GridSpec, max_iter: int = 500) -> Potential:
    """Solve ``|grad(phi)| = 1`` with phi = 0 on the exit door.

    First-order Godunov upwind update, Gauss-Seidel fast sweeping over the
    four sweep orders until the sup-norm change drops below ``1e-10 * dx``.
    Masked cells and wall boundaries are non-traversable (held at +inf).
    """
    if not grid.outflow_faces.any():
        raise GeometryError("grid has no outflow face")
    ny, nx = grid.ny, grid.nx
    dx, dy = grid.dx, grid.dy
    big = np.inf
    phi = np.full((ny, nx), big)
    fixed = np.zeros((ny, nx), dtype=bool)
    # Exit-door cells sit half a cell away from the phi = 0 face.
    door_rows = np.flatnonzero(grid.outflow_faces)
    phi[door_rows, nx - 1] = dx / 2
    fixed[door_rows, nx - 1] = True

    inside = grid.inside
    tol = 1e-10 * dx
    for iteration in range(max_iter):
        change = 0.0
        for rows, cols in _sweep_orders(nx, ny):
            for iy in rows:
                for ix in cols:
                    if fixed[iy, ix] or not inside[iy, ix]:
                        continue
                    a = min(phi[iy, ix - 1] if ix > 0 and inside[iy, ix - 1] else big,
                            phi[iy, ix + 1] if ix < nx - 1 and inside[iy, ix + 1] else big)
                    b = min(phi[iy - 1, ix] if iy > 0 and inside[iy - 1, ix] else big,
                            phi[iy + 1, ix] if iy < ny - 1 and inside[iy + 1, ix] else big)
                    cand = _godunov_update(a, b, dx, dy)
                    if cand < phi[iy, ix]:
                        change = max(change, phi[iy, ix] - cand)
                        phi[iy, ix] = cand
        if change < tol:
            break
    else:
        raise NumericalError("fast sweeping did not reach a fixed point", residual=change)
    if np.isinf(phi[inside]).any():
        raise GeometryError("no outflow face reachable through inside cells")

    direction = _gradient_direction(grid, phi)
    return Potential(grid, phi, direction)


def _godunov_update(a, b, dx, dy):
    """Solution of the one-cell upwind discretization of |grad(phi)| = 1."""
    if np.isinf(a) and np.isinf(b):
        return np.inf
    if np.isinf(b) or a + dx <= b:
        return a + dx
    if np.isinf(a) or b + dy <= a:
        return b + dy
    # both directions active: ((p-a)/dx)^2 + ((p-b)/dy)^2 = 1
    ia, ib = 1.0 / dx**2, 1.0 / dy**2
    s = a * ia + b * ib
    q = s * s - (ia + ib) * (a * a * ia + b * b * ib - 1.0)
    return (s + np.sqrt(max(q, 0.0))) / (ia + ib)


def _gradient_direction(grid: GridSpec, phi: np.ndarray) -> np.ndarray:
    """Normalized negative gradient of phi, central differences with
    one-sided fallback at walls and mask edges."""
    ny, nx = grid.ny, grid.nx
    inside = grid.inside
    direction = np.zeros((ny, nx, 2))
    for iy in range(ny):
        for ix in range(nx):
            if not inside[iy, ix]:
                continue
            gx = _axis_derivative(phi, inside, iy, ix, axis=1, h=grid.dx)
            gy = _axis_derivative(phi, inside, iy, ix, axis=0, h=grid.dy)
            norm = np.hypot(gx, gy)
            if norm == 0.0:
                direction[iy, ix] = (1.0, 0.0)
            else:
                direction[iy, ix] = (-gx / norm, -gy / norm)
    return direction


def _axis_derivative(phi, inside, iy, ix, axis, h):
    if axis == 1:
        lo_ok = ix > 0 and inside[iy, ix - 1]
        hi_ok = ix < phi.shape[1] - 1 and inside[iy, ix + 1]
        lo = phi[iy, ix - 1] if lo_ok else None
        hi = phi[iy, ix + 1] if hi_ok else None
    else:
        lo_ok = iy > 0 and inside[iy - 1, ix]
        hi_ok = iy < phi.shape[0] - 1 and inside[iy + 1, ix]
        lo = phi[iy - 1, ix] if lo_ok else None
        hi = phi[iy + 1, ix] if hi_ok else None
    here = phi[iy, ix]
    if lo_ok and hi_ok:
        return (hi - lo) / (2 * h)
    if hi_ok:
        return (hi - here) / h
    if lo_ok:
        return (here - lo) / h
    return 0.0


def drift_direction_at(potential: Potential, point) -> np.ndarray:
    """Unit drift direction at a single point; raises outside the domain."""
    x1, x2 = float(point[0]), float(point[1])
    if not potential.grid.domain.contains(x1, x2):
        raise OutsideDomainError(f"point ({x1}, {x2}) is outside the domain")
    gx, gy = potential.direction_at(x1, x2)
    return np.array([float(gx), float(gy)])
