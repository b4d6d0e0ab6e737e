"""Domain, grid and eikonal-potential tests."""

import heapq
import itertools

import numpy as np
import pytest

from pedflow.errors import GeometryError, OutsideDomainError
from pedflow.geometry import (Bottleneck, DomainSpec, BoundaryKind, build_grid,
                              drift_direction_at, solve_eikonal)


def corridor(length=3.0, half_width=0.25, **kw):
    return DomainSpec(length, half_width, **kw)


def bottleneck_domain():
    return DomainSpec(3.0, 0.25, Bottleneck(0.05, 1.2, 1.8),
                      exit_door_half_width=0.15)


def dijkstra_distance(grid):
    """Shortest walkable path to the exit door on the 8-connected cell graph
    (Euclidean edge weights), seeded like the sweeping solver at dx/2 in
    front of the door cells.  Independent oracle for the eikonal solve."""
    ny, nx = grid.ny, grid.nx
    dist = np.full((ny, nx), np.inf)
    heap = []
    for iy in np.flatnonzero(grid.outflow_faces):
        dist[iy, nx - 1] = grid.dx / 2
        heapq.heappush(heap, (dist[iy, nx - 1], iy, nx - 1))
    steps = [(sy, sx, np.hypot(sy * grid.dy, sx * grid.dx))
             for sy, sx in itertools.product((-1, 0, 1), repeat=2)
             if (sy, sx) != (0, 0)]
    while heap:
        d, iy, ix = heapq.heappop(heap)
        if d > dist[iy, ix]:
            continue
        for sy, sx, w in steps:
            jy, jx = iy + sy, ix + sx
            if 0 <= jy < ny and 0 <= jx < nx and grid.inside[jy, jx] \
                    and d + w < dist[jy, jx]:
                dist[jy, jx] = d + w
                heapq.heappush(heap, (d + w, jy, jx))
    return dist


class TestDomainSpec:
    def test_rejects_bad_sizes(self):
        with pytest.raises(GeometryError):
            DomainSpec(-1.0, 0.25)
        with pytest.raises(GeometryError):
            DomainSpec(3.0, 0.0)

    def test_rejects_bad_bottleneck(self):
        with pytest.raises(GeometryError):
            DomainSpec(3.0, 0.25, Bottleneck(0.3, 1.2, 1.8))
        with pytest.raises(GeometryError):
            DomainSpec(3.0, 0.25, Bottleneck(0.05, 1.8, 1.2))

    def test_rejects_bad_door(self):
        with pytest.raises(GeometryError):
            DomainSpec(3.0, 0.25, exit_door_half_width=0.3)

    def test_contains(self):
        dom = bottleneck_domain()
        assert dom.contains(0.5, 0.2)
        assert not dom.contains(1.5, 0.2)   # bottleneck cut-out
        assert dom.contains(1.5, 0.04)
        assert not dom.contains(3.5, 0.0)
        assert dom.contains(0.0, -0.25)     # closed boundary

    def test_half_width_at(self):
        dom = bottleneck_domain()
        assert dom.half_width_at(0.5) == 0.25
        assert dom.half_width_at(1.5) == 0.05
        np.testing.assert_allclose(dom.half_width_at(np.array([0.5, 1.5])),
                                   [0.25, 0.05])


class TestBuildGrid:
    def test_straight_corridor_all_inside(self):
        grid = build_grid(corridor(), 120, 10)
        assert grid.dx == pytest.approx(0.025)
        assert grid.dy == pytest.approx(0.05)
        assert grid.inside.all()
        assert grid.inflow_faces.all()
        assert grid.outflow_faces.all()

    def test_bottleneck_mask(self):
        grid = build_grid(bottleneck_domain(), 120, 20)
        x, y = np.meshgrid(grid.x, grid.y)
        cut = (x > 1.2) & (x < 1.8) & (np.abs(y) > 0.05)
        assert not grid.inside[cut].any()
        assert grid.inside[~cut].all()

    def test_too_coarse_rejected(self):
        with pytest.raises(GeometryError):
            build_grid(corridor(), 120, 1)

    def test_bottleneck_narrower_than_two_cells_rejected(self):
        with pytest.raises(GeometryError):
            build_grid(bottleneck_domain(), 120, 4)  # dy = 0.125 >> w

    def test_bottleneck_walls_snap_to_grid_lines(self):
        dom = DomainSpec(3.0, 0.25, Bottleneck(0.05, 1.19, 1.81))
        grid = build_grid(dom, 60, 10)  # dx = 0.05
        assert grid.domain.bottleneck.x_start == pytest.approx(1.2)
        assert grid.domain.bottleneck.x_end == pytest.approx(1.8)

    def test_boundary_kinds(self):
        grid = build_grid(bottleneck_domain(), 120, 20)
        assert grid.boundary_kind("left", 0) is BoundaryKind.INFLOW
        assert grid.boundary_kind("right", 0) is BoundaryKind.WALL
        assert grid.boundary_kind("right", 10) is BoundaryKind.OUTFLOW
        assert grid.boundary_kind("top", 5) is BoundaryKind.WALL
        # door rows: |y| < 0.15
        np.testing.assert_array_equal(grid.outflow_faces,
                                      np.abs(grid.y) < 0.15)


class TestEikonal:
    def test_straight_corridor_exact(self):
        grid = build_grid(corridor(), 120, 10)
        pot = solve_eikonal(grid)
        expected = grid.domain.length - grid.x[None, :]
        assert np.abs(pot.phi - expected).max() < 1e-8
        np.testing.assert_array_equal(pot.direction[:, :, 0],
                                      np.ones((10, 120)))
        np.testing.assert_array_equal(pot.direction[:, :, 1],
                                      np.zeros((10, 120)))

    def test_door_cells_near_zero(self):
        grid = build_grid(corridor(), 120, 10)
        pot = solve_eikonal(grid)
        assert np.abs(pot.phi[:, -1] - grid.dx / 2).max() < 1e-8

    def test_unit_directions(self):
        grid = build_grid(bottleneck_domain(), 60, 10)
        pot = solve_eikonal(grid)
        norms = np.hypot(pot.direction[:, :, 0], pot.direction[:, :, 1])
        np.testing.assert_allclose(norms[grid.inside], 1.0, atol=1e-12)
        assert (pot.phi[grid.inside] >= 0).all()

    def test_bottleneck_matches_dijkstra(self):
        grid = build_grid(bottleneck_domain(), 60, 10)
        pot = solve_eikonal(grid)
        oracle = dijkstra_distance(grid)
        err = np.abs(pot.phi[grid.inside] - oracle[grid.inside]).max()
        assert err < 2 * grid.dx

    def test_refinement_self_convergence(self):
        # doubling the resolution moves phi by O(dx): the coarse and fine
        # solves agree to a few coarse cells everywhere (the fixed Dijkstra
        # oracle is unusable here -- its metrication bias does not vanish)
        coarse = build_grid(bottleneck_domain(), 60, 10)
        fine = build_grid(bottleneck_domain(), 120, 20)
        phi_c = solve_eikonal(coarse)
        phi_f = solve_eikonal(fine)
        iy, ix = np.nonzero(coarse.inside)
        diff = np.abs(phi_f.phi_at(coarse.x[ix], coarse.y[iy])
                      - phi_c.phi[iy, ix]).max()
        assert diff < 2 * coarse.dx

    def test_phi_decreases_along_drift(self):
        grid = build_grid(bottleneck_domain(), 60, 10)
        pot = solve_eikonal(grid)
        for iy, ix in zip(*np.nonzero(grid.inside)):
            x1 = grid.x[ix] + grid.dx * pot.direction[iy, ix, 0]
            x2 = grid.y[iy] + grid.dx * pot.direction[iy, ix, 1]
            if not grid.domain.contains(x1, x2):
                continue
            downstream = float(pot.phi_at(x1, x2))
            assert pot.phi[iy, ix] - downstream >= -1e-6

    def test_no_reachable_exit_rejected(self):
        # bottleneck squeezed shut is rejected at grid construction
        dom = DomainSpec(3.0, 0.25, Bottleneck(0.01, 1.2, 1.8))
        with pytest.raises(GeometryError):
            build_grid(dom, 120, 10)


class TestDriftDirectionAt:
    def test_corridor_interior(self):
        grid = build_grid(corridor(), 120, 10)
        pot = solve_eikonal(grid)
        for point in ((0.1, 0.0), (1.5, 0.2), (2.9, -0.24)):
            np.testing.assert_array_equal(drift_direction_at(pot, point),
                                          [1.0, 0.0])

    def test_bottleneck_entrance_funnels_toward_axis(self):
        grid = build_grid(bottleneck_domain(), 60, 10)
        pot = solve_eikonal(grid)
        for x2 in (0.15, -0.15):
            d = drift_direction_at(pot, (1.05, x2))
            assert d[1] * x2 < 0  # cross component points toward the axis
            assert d[0] > 0

    def test_outside_raises(self):
        grid = build_grid(corridor(), 120, 10)
        pot = solve_eikonal(grid)
        with pytest.raises(OutsideDomainError):
            drift_direction_at(pot, (1.0, 0.3))
        with pytest.raises(OutsideDomainError):
            drift_direction_at(pot, (-0.5, 0.0))
