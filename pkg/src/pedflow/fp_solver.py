"""Finite-volume solver for the scaled nonlinear Fokker-Planck equation.

The corridor density obeys

    d_t rho = div( Sigma grad(rho) - rho f(rho) d(x) ),   f(rho) = v_max (1 - rho),

with Robin in-/outflow conditions and no-flux walls.  Time stepping is IMEX:
the convective flux uses an explicit Godunov (first-order upwind) update, the
diffusion operator is advanced by backward Euler with the Robin boundary
fluxes folded into the linear system.  A damped-Newton solver provides the
1D steady-state profiles.

Densities are scaled: the overcrowding density is 1.  The `rho_max` argument
of the stepping routines runs the same scheme in unscaled variables and
exists for verifying the scaling invariance of the model.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.linalg import solve_banded
from scipy.sparse.linalg import splu

from .errors import NumericalError, OutsideDomainError
from .geometry import GridSpec, Potential

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Full parameterization of the forward model.

    v_max is the free-walking speed, a/b the entrance/exit rates (all m/s),
    sigma1/sigma2 the diffusion strengths in m/sqrt(s).
    """

    v_max: float
    a: float
    b: float
    sigma1: float
    sigma2: float
    potential: Potential

    def __post_init__(self):
        if self.v_max <= 0:
            raise ValueError("v_max must be positive")
        if not 0 <= self.a <= self.v_max:
            raise ValueError("inflow rate a must satisfy 0 <= a <= v_max")
        if not 0 <= self.b <= self.v_max:
            raise ValueError("outflow rate b must satisfy 0 <= b <= v_max")
        if self.sigma1 <= 0 or self.sigma2 <= 0:
            raise ValueError("diffusion strengths must be positive")

    @property
    def grid(self) -> GridSpec:
        return self.potential.grid


def velocity(params: ModelParams, rho):
    """Fundamental-diagram speed v_max * (1 - rho); rho is clamped to [0, 1]."""
    return params.v_max * (1.0 - np.clip(rho, 0.0, 1.0))


@dataclass(frozen=True, eq=False)
class DensityField:
    grid: GridSpec
    rho: np.ndarray  # (ny, nx), scaled density
    t: float
    rho_max: float = 1.0


@dataclass(eq=False)
class DensityHistory:
    """Solution fields at uniform PDE time steps, t = 0, dt, ..., T."""

    grid: GridSpec
    dt: float
    rho: np.ndarray      # (nt, ny, nx)
    influx: np.ndarray   # (nt-1,) boundary mass inflow rate per step
    outflux: np.ndarray  # (nt-1,)
    clamp_events: int = 0
    rho_max: float = 1.0

    @property
    def horizon(self) -> float:
        return (self.rho.shape[0] - 1) * self.dt

    @property
    def n_fields(self) -> int:
        return self.rho.shape[0]

    def field(self, k: int) -> DensityField:
        return DensityField(self.grid, self.rho[k], k * self.dt, self.rho_max)

    @cached_property
    def _filled(self):
        idx = self.grid.fill_indices
        if idx is None:
            return self.rho
        iy, ix = idx
        return self.rho[:, iy, ix]

    def sample(self, x1, x2, t):
        """Density at points and times: bilinear in space, linear in time.

        Vectorized; `t` may be a scalar or match the shape of `x1`.
        Values are clamped to [0, rho_max].
        """
        g = self.grid
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        t = np.asarray(t, dtype=float)
        nt = self.rho.shape[0]
        tt = np.clip(t / self.dt, 0.0, nt - 1.0)
        k0 = np.minimum(tt.astype(int), max(nt - 2, 0))
        wt = tt - k0

        gx = np.clip(x1 / g.dx - 0.5, 0.0, g.nx - 1.0)
        gy = np.clip((x2 + g.domain.half_width) / g.dy - 0.5, 0.0, g.ny - 1.0)
        ix0 = np.minimum(gx.astype(int), g.nx - 2)
        iy0 = np.minimum(gy.astype(int), g.ny - 2)
        tx = gx - ix0
        ty = gy - iy0

        vals = self._filled
        k0b, iy0b, ix0b, txb, tyb, wtb = np.broadcast_arrays(k0, iy0, ix0, tx, ty, wt)

        def plane(k):
            v00 = vals[k, iy0b, ix0b]
            v01 = vals[k, iy0b, ix0b + 1]
            v10 = vals[k, iy0b + 1, ix0b]
            v11 = vals[k, iy0b + 1, ix0b + 1]
            return ((1 - tyb) * ((1 - txb) * v00 + txb * v01)
                    + tyb * ((1 - txb) * v10 + txb * v11))

        out = (1 - wtb) * plane(k0b) + wtb * plane(np.minimum(k0b + 1, nt - 1))
        return np.clip(out, 0.0, self.rho_max)

    def sample_scaled(self, x1, x2, t):
        if self.rho_max == 1.0:
            return self.sample(x1, x2, t)
        return self.sample(x1, x2, t) / self.rho_max


@dataclass(eq=False)
class SteadyProfile:
    """1D stationary profile rho_s(x1), constant in the cross direction."""

    x: np.ndarray    # (nx,) cell centers on [0, L]
    rho: np.ndarray  # (nx,)
    residual: float
    length: float
    rho_max: float = 1.0

    horizon = None

    def sample(self, x1, x2=None, t=None):
        return np.clip(np.interp(np.asarray(x1, dtype=float), self.x, self.rho),
                       0.0, self.rho_max)

    def sample_scaled(self, x1, x2=None, t=None):
        if self.rho_max == 1.0:
            return self.sample(x1, x2, t)
        return self.sample(x1, x2, t) / self.rho_max


@dataclass(frozen=True)
class UniformDensity:
    """Constant-in-space-and-time density source; handy for oracles."""

    value: float = 0.0
    rho_max: float = 1.0
    horizon = None

    def sample(self, x1, x2=None, t=None):
        return np.broadcast_to(self.value, np.shape(x1)).astype(float) \
            if np.ndim(x1) else self.value

    def sample_scaled(self, x1, x2=None, t=None):
        v = self.value / self.rho_max if self.rho_max != 1.0 else self.value
        return np.broadcast_to(v, np.shape(x1)).astype(float) if np.ndim(x1) else v


@dataclass(frozen=True, eq=False)
class RescaledDensity:
    """View of a scaled source as an unscaled one with overcrowding density
    `rho_max`.  Sampling multiplies by rho_max; the scaled view delegates
    unchanged, which makes the trajectory and likelihood pipelines exactly
    invariant under the rescaling."""

    source: object
    rho_max: float

    @property
    def horizon(self):
        return self.source.horizon

    def sample(self, x1, x2=None, t=None):
        return self.rho_max * self.source.sample(x1, x2, t)

    def sample_scaled(self, x1, x2=None, t=None):
        return self.source.sample_scaled(x1, x2, t)


def sample_density(source, point, t):
    """Density of a history/steady/uniform source at one point and time."""
    x1, x2 = float(point[0]), float(point[1])
    grid = getattr(source, "grid", None)
    if grid is not None and not grid.domain.contains(x1, x2):
        raise OutsideDomainError(f"point ({x1}, {x2}) is outside the domain")
    return float(source.sample(x1, x2, t))


def _godunov_flux(rl, rr, v, rho_max):
    """Godunov numerical flux for g(rho) = v rho (1 - rho/rho_max), flow
    from left state `rl` to right state `rr`."""
    gl = v * rl * (1.0 - rl / rho_max)
    gr = v * rr * (1.0 - rr / rho_max)
    out = np.where(rl <= rr, np.minimum(gl, gr), np.maximum(gl, gr))
    crest = 0.25 * v * rho_max
    sonic = (rl > rr) & (rl >= 0.5 * rho_max) & (rr <= 0.5 * rho_max)
    return np.where(sonic, crest, out)


class FpStepper:
    """One-step IMEX integrator bound to a grid, parameter set and step size.

    The implicit diffusion matrix (with Robin boundary terms) is constant in
    time and factorized once.
    """

    def __init__(self, params: ModelParams, dt: float, rho_max: float = 1.0):
        grid = params.grid
        cfl = 0.5 * grid.dx / params.v_max
        if dt > cfl * (1 + 1e-12):
            raise NumericalError(
                f"dt={dt} violates the convective CFL bound 0.5*dx/v_max={cfl:.6g}")
        self.params = params
        self.grid = grid
        self.dt = dt
        self.rho_max = rho_max
        self.clamp_events = 0
        self.max_overshoot = 0.0
        # In a straight corridor with full-width door and axis-aligned drift
        # the dynamics stay uniform across the corridor, so the scheme can
        # run on a single row (the cross couplings cancel identically).
        d = params.potential.direction
        self._uniform_grid = bool(
            grid.inside.all() and grid.inflow_faces.all()
            and grid.outflow_faces.all()
            and np.all(d[:, :, 0] == 1.0) and np.all(d[:, :, 1] == 0.0))
        self._general_ready = False
        if self._uniform_grid:
            self._factorize_1d()
        else:
            self._prepare_general()

    def _prepare_general(self):
        self._face_dirs()
        self._factorize()
        self._general_ready = True

    def _factorize_1d(self):
        g = self.grid
        p = self.params
        kx = p.sigma1**2 * self.dt / g.dx**2
        ab = np.zeros((3, g.nx))
        ab[1] = 1.0 + 2.0 * kx
        ab[1, 0] -= kx
        ab[1, -1] -= kx
        ab[0, 1:] = -kx
        ab[2, :-1] = -kx
        ab[1, 0] += self.dt * p.a / g.dx
        ab[1, -1] += self.dt * p.b / g.dx
        self._ab1d = ab
        self._rhs1d = np.zeros(g.nx)
        self._rhs1d[0] = self.dt * p.a * self.rho_max / g.dx

    def _step_1d(self, row: np.ndarray, t: float):
        g = self.grid
        p = self.params
        dt = self.dt
        rm = self.rho_max
        flux = _godunov_flux(row[:-1], row[1:], p.v_max, rm)
        star = row.copy()
        star[:-1] -= dt / g.dx * flux
        star[1:] += dt / g.dx * flux
        sol = solve_banded((1, 1), self._ab1d, star + self._rhs1d)
        over = max(float((-sol).max(initial=0.0)),
                   float((sol - rm).max(initial=0.0)))
        if over > 1e-8:
            self.clamp_events += int(((sol < -1e-8) | (sol > rm + 1e-8)).sum())
            self.max_overshoot = max(self.max_overshoot, over)
            logger.debug("density clamped by %.3e at t=%.4f", over, t)
        sol = np.clip(sol, 0.0, rm)
        width = g.ny * g.dy
        influx = p.a * float(rm - sol[0]) * width
        outflux = p.b * float(sol[-1]) * width
        return np.tile(sol, (g.ny, 1)), influx, outflux

    def _face_dirs(self):
        g = self.grid
        d = self.params.potential.direction
        inside = g.inside
        # x-faces between (iy, ix-1) and (iy, ix), ix = 1..nx-1
        sx = 0.5 * (d[:, :-1, 0] + d[:, 1:, 0])
        self.sx = np.where(inside[:, :-1] & inside[:, 1:], sx, 0.0)
        # y-faces between (iy-1, ix) and (iy, ix)
        sy = 0.5 * (d[:-1, :, 1] + d[1:, :, 1])
        self.sy = np.where(inside[:-1, :] & inside[1:, :], sy, 0.0)

    def _factorize(self):
        g = self.grid
        p = self.params
        dt = self.dt
        inside = g.inside
        index = -np.ones((g.ny, g.nx), dtype=int)
        ids = np.flatnonzero(inside.ravel())
        index.ravel()[ids] = np.arange(ids.size)
        self.index = index
        n = ids.size
        kx = p.sigma1**2 * dt / g.dx**2
        ky = p.sigma2**2 * dt / g.dy**2

        rows, cols, vals = [], [], []
        diag = np.ones(n)

        def couple(i0, j0, i1, j1, k):
            a, b = index[i0, j0], index[i1, j1]
            diag[a] += k
            rows.append(a)
            cols.append(b)
            vals.append(-k)

        for iy in range(g.ny):
            for ix in range(g.nx):
                if not inside[iy, ix]:
                    continue
                if ix + 1 < g.nx and inside[iy, ix + 1]:
                    couple(iy, ix, iy, ix + 1, kx)
                    couple(iy, ix + 1, iy, ix, kx)
                if iy + 1 < g.ny and inside[iy + 1, ix]:
                    couple(iy, ix, iy + 1, ix, ky)
                    couple(iy + 1, ix, iy, ix, ky)

        # Robin boundary faces: inflow flux a*(rho_max - rho), outflow b*rho.
        self.in_cells = index[np.flatnonzero(g.inflow_faces), 0]
        self.out_cells = index[np.flatnonzero(g.outflow_faces), -1]
        diag[self.in_cells] += dt * p.a / g.dx
        diag[self.out_cells] += dt * p.b / g.dx

        rows.extend(range(n))
        cols.extend(range(n))
        vals.extend(diag)
        mat = sparse.csc_matrix((vals, (rows, cols)), shape=(n, n))
        self._mat = mat
        self._lu = splu(mat)
        self._rhs_const = np.zeros(n)
        self._rhs_const[self.in_cells] += dt * p.a * self.rho_max / g.dx

    def step(self, rho: np.ndarray, t: float):
        """Advance one IMEX step.

        Returns (rho_new, influx, outflux) with the boundary mass rates
        evaluated on the implicit solution, so the discrete mass balance
        mass(t+dt) - mass(t) = dt * (influx - outflux) holds exactly.
        """
        g = self.grid
        p = self.params
        dt = self.dt
        rm = self.rho_max

        if self._uniform_grid and (rho[1:] == rho[:1]).all():
            return self._step_1d(rho[0], t)
        if not self._general_ready:
            self._prepare_general()

        # explicit Godunov convection; zero flux on all boundary faces
        fx = np.where(self.sx >= 0,
                      self.sx * _godunov_flux(rho[:, :-1], rho[:, 1:], p.v_max, rm),
                      self.sx * _godunov_flux(rho[:, 1:], rho[:, :-1], p.v_max, rm))
        fy = np.where(self.sy >= 0,
                      self.sy * _godunov_flux(rho[:-1, :], rho[1:, :], p.v_max, rm),
                      self.sy * _godunov_flux(rho[1:, :], rho[:-1, :], p.v_max, rm))
        star = rho.copy()
        star[:, :-1] -= dt / g.dx * fx
        star[:, 1:] += dt / g.dx * fx
        star[:-1, :] -= dt / g.dy * fy
        star[1:, :] += dt / g.dy * fy

        rhs = star[g.inside] + self._rhs_const
        sol = self._lu.solve(rhs)
        res = np.abs(self._mat @ sol - rhs).max()
        if res > 1e-12 * max(1.0, np.abs(rhs).max()):
            raise NumericalError("implicit diffusion solve did not converge",
                                 residual=res)

        over = max(float((-sol).max(initial=0.0)), float((sol - rm).max(initial=0.0)))
        if over > 1e-8:
            self.clamp_events += int(((sol < -1e-8) | (sol > rm + 1e-8)).sum())
            self.max_overshoot = max(self.max_overshoot, over)
            logger.debug("density clamped by %.3e at t=%.4f", over, t)
        sol = np.clip(sol, 0.0, rm)

        rho_new = np.zeros_like(rho)
        rho_new[g.inside] = sol
        influx = p.a * float((rm - sol[self.in_cells]).sum()) * g.dy
        outflux = p.b * float(sol[self.out_cells].sum()) * g.dy
        return rho_new, influx, outflux


_stepper_cache: dict = {}


def _stepper_for(params: ModelParams, dt: float, rho_max: float) -> FpStepper:
    key = (id(params.potential), params.v_max, params.a, params.b,
           params.sigma1, params.sigma2, dt, rho_max)
    stepper = _stepper_cache.get(key)
    if stepper is None:
        stepper = FpStepper(params, dt, rho_max)
        _stepper_cache[key] = stepper
    return stepper


def step_fp(field_in: DensityField, params: ModelParams, dt: float) -> DensityField:
    """One IMEX step of the Fokker-Planck solver."""
    stepper = _stepper_for(params, dt, field_in.rho_max)
    rho_new, _, _ = stepper.step(field_in.rho, field_in.t)
    return DensityField(field_in.grid, rho_new, field_in.t + dt, field_in.rho_max)


def solve_fp(params: ModelParams, T: float, dt: float,
             rho_max: float = 1.0) -> DensityHistory:
    """Integrate from the empty corridor (rho = 0) to time T, storing every
    field.  `rho_max` != 1 runs the auxiliary unscaled formulation."""
    grid = params.grid
    n = int(round(T / dt))
    if abs(n * dt - T) > 1e-9 * max(1.0, T):
        raise NumericalError(f"horizon T={T} is not a multiple of dt={dt}")
    stepper = FpStepper(params, dt, rho_max)
    rho = np.zeros((n + 1, grid.ny, grid.nx))
    influx = np.zeros(n)
    outflux = np.zeros(n)
    for k in range(n):
        rho[k + 1], influx[k], outflux[k] = stepper.step(rho[k], k * dt)
    if stepper.clamp_events:
        logger.warning("solve_fp clamped %d cell values (max overshoot %.3e)",
                       stepper.clamp_events, stepper.max_overshoot)
    return DensityHistory(grid, dt, rho, influx, outflux,
                          stepper.clamp_events, rho_max)


def total_mass(field_or_history, k=None) -> float:
    """Integral of rho over the domain (for a history, of field k)."""
    if isinstance(field_or_history, DensityHistory):
        h = field_or_history
        return float(h.rho[k][h.grid.inside].sum()) * h.grid.cell_area
    f = field_or_history
    return float(f.rho[f.grid.inside].sum()) * f.grid.cell_area


def steady_state_1d(params: ModelParams, nx: int,
                    max_iter: int = 200, tol: float = 1e-10) -> SteadyProfile:
    """Damped-Newton solve of the 1D stationary problem

        0 = d/dx ( sigma1^2 rho' - v_max rho (1 - rho) )

    with Robin conditions j(0) = a (1 - rho(0)), j(L) = b rho(L), discretized
    by second-order centered differences on `nx` cells.  Requires a straight
    corridor; the initial guess is the constant a / (a + b).
    """
    if params.grid.domain.bottleneck is not None:
        raise ValueError("steady_state_1d requires a straight corridor")
    L = params.grid.domain.length
    dx = L / nx
    x = (np.arange(nx) + 0.5) * dx
    sig2 = params.sigma1**2
    v, a, b = params.v_max, params.a, params.b

    def flux_faces(r):
        rf = 0.5 * (r[:-1] + r[1:])
        j = np.empty(nx + 1)
        j[1:-1] = -sig2 * np.diff(r) / dx + v * rf * (1.0 - rf)
        j[0] = a * (1.0 - r[0])
        j[-1] = b * r[-1]
        return j

    def residual(r):
        return np.diff(flux_faces(r)) / dx

    def jacobian(r):
        # tridiagonal in banded form (ab[0]=upper, ab[1]=diag, ab[2]=lower)
        # j_face = -sig2 (r_{i+1}-r_i)/dx + v rf (1-rf)
        rf = 0.5 * (r[:-1] + r[1:])
        dj_dleft = sig2 / dx + 0.5 * v * (1.0 - 2.0 * rf)
        dj_dright = -sig2 / dx + 0.5 * v * (1.0 - 2.0 * rf)
        ab = np.zeros((3, nx))
        # R_i = (j_{i+1/2} - j_{i-1/2})/dx
        ab[1, :-1] += dj_dleft / dx          # d j_{i+1/2} / d r_i
        ab[0, 1:] += dj_dright / dx          # d j_{i+1/2} / d r_{i+1}
        ab[1, 1:] -= dj_dright / dx          # d j_{i-1/2} / d r_i
        ab[2, :-1] -= dj_dleft / dx          # d j_{i-1/2} / d r_{i-1}
        ab[1, 0] += a / dx                   # boundary face j_0 = a (1 - r_0)
        ab[1, -1] += b / dx                  # boundary face j_nx = b r_{nx-1}
        return ab

    r = np.full(nx, a / (a + b) if a + b > 0 else 0.0)
    res = residual(r)
    norm = np.abs(res).max()
    for _ in range(max_iter):
        if norm < tol:
            break
        ab = jacobian(r)
        delta = solve_banded((1, 1), ab, -res)
        lam = 1.0
        for _ in range(50):
            trial = r + lam * delta
            tres = residual(trial)
            tnorm = np.abs(tres).max()
            if tnorm < norm:
                break
            lam *= 0.5
        else:
            raise NumericalError("Newton line search stagnated", residual=norm)
        r, res, norm = trial, tres, tnorm
    else:
        raise NumericalError("Newton did not converge in steady_state_1d",
                             residual=norm)
    r = np.clip(r, 0.0, 1.0)
    return SteadyProfile(x, r, float(norm), L)


def entropy(field_in: DensityField) -> float:
    """Entropy diagnostic  sum dx dy [rho log rho + (1-rho) log(1-rho) - rho x1]
    with the 0 log 0 = 0 convention; x1 is the cell-center abscissa."""
    g = field_in.grid
    rho = field_in.rho

    def xlogx(z):
        return np.where(z > 0, z * np.log(np.where(z > 0, z, 1.0)), 0.0)

    integrand = xlogx(rho) + xlogx(1.0 - rho) - rho * g.x[None, :]
    return float(integrand[g.inside].sum()) * g.cell_area


class Regime(Enum):
    INFLUX_LIMITED = "influx_limited"
    OUTFLUX_LIMITED = "outflux_limited"
    MAXIMAL_CURRENT = "maximal_current"


def classify_regime(params: ModelParams) -> Regime:
    """Stationary phase from the inflow/outflow rates and v_max."""
    a, b, half = params.a, params.b, params.v_max / 2
    if a >= half and b >= half:
        return Regime.MAXIMAL_CURRENT
    if a == b:
        logger.warning("regime a == b < v_max/2 is not classified by the phase "
                       "diagram; reporting influx limited")
        return Regime.INFLUX_LIMITED
    return Regime.INFLUX_LIMITED if a < b else Regime.OUTFLUX_LIMITED
