"""Pedestrian trajectories as Euler-Maruyama paths driven by a density source.

Each walker follows

    X_{k+1} = X_k + f(rho(X_k, t_k)) d(X_k) dt + sqrt(2 Sigma dt) xi_k

inside the corridor.  Walls reflect specularly; the entrance and exit are
partially reflecting with step-scaled crossing probabilities

    P_in  = sqrt(pi dt / (2 sigma1^2)) * a * (1 - rho(0, x2)),
    P_out = sqrt(pi dt / sigma1^2) * b * rho(L, x2),

so that the discrete walkers are consistent with the Robin boundary
conditions of the density equation.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .fp_solver import ModelParams, velocity
from .geometry import DomainSpec

logger = logging.getLogger(__name__)

_MAX_REFLECTIONS = 10
_MAX_REDRAWS = 100


@dataclass(frozen=True)
class SdeConfig:
    """Trajectory-generation settings.  sigma1/sigma2 override the model
    diffusion for the walkers when set (data-generation noise)."""

    dt: float
    T: float
    J: int
    base_seed: int = 0
    sigma1: float | None = None
    sigma2: float | None = None

    def __post_init__(self):
        if self.dt <= 0 or self.T <= 0:
            raise ValueError("dt and T must be positive")
        if self.J < 1:
            raise ValueError("need at least one trajectory")


@dataclass(eq=False)
class Trajectory:
    id: int
    t0: float
    tf: float
    positions: np.ndarray  # (n, 2) at times t0, t0+dt, ..., min(tf, T)
    entered: bool = True

    @property
    def n_samples(self) -> int:
        return self.positions.shape[0]


@dataclass(eq=False)
class Ensemble:
    trajectories: list[Trajectory]
    provenance: dict

    def __iter__(self):
        return iter(self.trajectories)

    def __len__(self):
        return len(self.trajectories)


@dataclass(frozen=True)
class Inside:
    position: np.ndarray


@dataclass(frozen=True)
class Exited:
    position: np.ndarray  # crossing point clipped to the exit door


class StillWaiting:
    pass


class StepRejected:
    """Too many reflections in one step; the caller redraws the noise."""


def em_step(x, t, density, params: ModelParams, dt: float, noise):
    """Explicit Euler-Maruyama proposal before boundary handling.

    Broadcasts over leading axes of `x`/`noise` (last axis has length 2).
    """
    x = np.asarray(x, dtype=float)
    noise = np.asarray(noise, dtype=float)
    rho = density.sample_scaled(x[..., 0], x[..., 1], t)
    speed = velocity(params, rho)
    dx1, dx2 = params.potential.direction_at(x[..., 0], x[..., 1])
    out = np.empty_like(x)
    out[..., 0] = x[..., 0] + speed * dx1 * dt \
        + np.sqrt(2.0 * params.sigma1**2 * dt) * noise[..., 0]
    out[..., 1] = x[..., 1] + speed * dx2 * dt \
        + np.sqrt(2.0 * params.sigma2**2 * dt) * noise[..., 1]
    return out


def entry_probability(x2, t, density, params: ModelParams, dt: float) -> float:
    p = np.sqrt(np.pi * dt / (2.0 * params.sigma1**2)) * params.a \
        * (1.0 - float(density.sample_scaled(0.0, x2, t)))
    if p > 1.0:
        logger.debug("P_in=%.3f clamped to 1", p)
    return min(max(p, 0.0), 1.0)


def exit_probability(x2, t, density, params: ModelParams, dt: float) -> float:
    L = params.grid.domain.length
    p = np.sqrt(np.pi * dt / params.sigma1**2) * params.b \
        * float(density.sample_scaled(L, x2, t))
    if p > 1.0:
        logger.debug("P_out=%.3f clamped to 1", p)
    return min(max(p, 0.0), 1.0)


def _cross_ordinate(o1, o2, x1, x2, plane):
    """Ordinate where the segment (o1,o2) -> (x1,x2) crosses x1 = plane."""
    run = x1 - o1
    if run == 0.0:
        return o2
    return o2 + (plane - o1) / run * (x2 - o2)


def apply_boundary(x_old, x_new, t, density, params: ModelParams, dt: float, rng):
    """Resolve boundary crossings of the proposed step x_old -> x_new.

    Returns Inside(pos), Exited(pos), StillWaiting (for a walker queued at
    the entrance, signalled by x_old=None) or StepRejected after too many
    reflections.  `t` is the time at which the step was proposed, used when
    evaluating the boundary densities.
    """
    dom: DomainSpec = params.grid.domain
    if x_old is None:
        # waiting at the entrance with ordinate x_new[1]
        x2 = float(x_new[1])
        if rng.uniform() < entry_probability(x2, t, density, params, dt):
            return Inside(np.array([0.0, x2]))
        return StillWaiting

    o1, o2 = float(x_old[0]), float(x_old[1])
    x1, x2 = float(x_new[0]), float(x_new[1])
    L = dom.length
    ell = dom.half_width
    bn = dom.bottleneck
    door = dom.door_half_width

    for _ in range(_MAX_REFLECTIONS):
        if _contains(dom, x1, x2):
            return Inside(np.array([x1, x2]))
        if x1 > L:
            x2c = _cross_ordinate(o1, o2, x1, x2, L)
            if abs(x2c) <= door:
                if rng.uniform() < exit_probability(
                        min(max(x2c, -ell), ell), t, density, params, dt):
                    return Exited(np.array([L, min(max(x2c, -door), door)]))
            o1, o2 = L, x2c
            x1 = 2.0 * L - x1
            continue
        if x1 < 0.0:
            x2c = _cross_ordinate(o1, o2, x1, x2, 0.0)
            if rng.uniform() < entry_probability(
                    min(max(x2c, -ell), ell), t, density, params, dt):
                return Inside(np.array([0.0, min(max(x2c, -ell), ell)]))
            o1, o2 = 0.0, x2c
            x1 = -x1
            continue
        if abs(x2) > ell:
            wall = ell if x2 > 0 else -ell
            o1, o2 = _cross_abscissa(o1, o2, x1, x2, wall), wall
            x2 = 2.0 * wall - x2
            continue
        if bn is not None and bn.x_start <= x1 <= bn.x_end and abs(x2) > bn.half_width:
            if abs(o2) <= bn.half_width:
                wall = bn.half_width if x2 > 0 else -bn.half_width
                o1, o2 = _cross_abscissa(o1, o2, x1, x2, wall), wall
                x2 = 2.0 * wall - x2
            elif o1 < bn.x_start:
                o1, o2 = bn.x_start, _cross_ordinate(o1, o2, x1, x2, bn.x_start)
                x1 = 2.0 * bn.x_start - x1
            elif o1 > bn.x_end:
                o1, o2 = bn.x_end, _cross_ordinate(o1, o2, x1, x2, bn.x_end)
                x1 = 2.0 * bn.x_end - x1
            else:
                return StepRejected
            continue
        return StepRejected
    return StepRejected


def _contains(dom: DomainSpec, x1: float, x2: float, tol: float = 1e-12) -> bool:
    """Scalar version of DomainSpec.contains (hot path)."""
    if x1 < -tol or x1 > dom.length + tol:
        return False
    hw = dom.half_width
    bn = dom.bottleneck
    if bn is not None and bn.x_start <= x1 <= bn.x_end:
        hw = bn.half_width
    return abs(x2) <= hw + tol


def _cross_abscissa(o1, o2, x1, x2, plane):
    rise = x2 - o2
    if rise == 0.0:
        return o1
    return o1 + (plane - o2) / rise * (x1 - o1)


def generate_trajectory(tid: int, density, params: ModelParams,
                        cfg: SdeConfig) -> Trajectory:
    """Simulate one walker with its own seeded RNG stream."""
    rng = np.random.default_rng(cfg.base_seed + tid)
    ell = params.grid.domain.half_width
    x2_entry = rng.uniform(-ell, ell)
    n_steps = int(round(cfg.T / cfg.dt))
    dt = cfg.dt

    t0 = None
    x = None
    positions = []
    k = 0
    # waiting phase: one entry attempt per step
    while k < n_steps:
        outcome = apply_boundary(None, np.array([0.0, x2_entry]), k * dt,
                                 density, params, dt, rng)
        if isinstance(outcome, Inside):
            t0 = k * dt
            x = outcome.position
            positions.append(x)
            break
        k += 1
    if t0 is None:
        return Trajectory(tid, cfg.T, cfg.T, np.empty((0, 2)), entered=False)

    tf = cfg.T
    while k < n_steps:
        t = k * dt
        for _ in range(_MAX_REDRAWS):
            noise = rng.standard_normal(2)
            proposal = em_step(x, t, density, params, dt, noise)
            outcome = apply_boundary(x, proposal, t, density, params, dt, rng)
            if outcome is not StepRejected:
                break
        else:
            logger.warning("trajectory %d: step at t=%.4f kept in place after "
                           "%d redraws", tid, t, _MAX_REDRAWS)
            outcome = Inside(x.copy())
        k += 1
        if isinstance(outcome, Exited):
            positions.append(outcome.position)
            tf = k * dt
            break
        x = outcome.position
        positions.append(x)
    return Trajectory(tid, t0, tf, np.array(positions))


def _generate_batched(density, params: ModelParams, cfg: SdeConfig):
    """All J walkers advanced in lock-step over the time grid.

    Per-walker RNG streams and the scalar boundary logic are unchanged, only
    the density/direction sampling of the joint Euler-Maruyama move is
    batched, so the result is identical to `generate_trajectory` walker by
    walker.
    """
    ids = list(range(1, cfg.J + 1))
    rngs = {tid: np.random.default_rng(cfg.base_seed + tid) for tid in ids}
    ell = params.grid.domain.half_width
    x2_entry = {tid: rngs[tid].uniform(-ell, ell) for tid in ids}
    n_steps = int(round(cfg.T / cfg.dt))
    dt = cfg.dt

    waiting = list(ids)
    active: list[int] = []
    pos: dict[int, np.ndarray] = {}
    paths: dict[int, list] = {tid: [] for tid in ids}
    t0 = {tid: cfg.T for tid in ids}
    tf = {tid: cfg.T for tid in ids}
    entered = {tid: False for tid in ids}

    for k in range(n_steps):
        t = k * dt
        still = []
        for tid in waiting:
            outcome = apply_boundary(None, np.array([0.0, x2_entry[tid]]), t,
                                     density, params, dt, rngs[tid])
            if isinstance(outcome, Inside):
                t0[tid] = t
                entered[tid] = True
                pos[tid] = outcome.position
                paths[tid].append(outcome.position)
                active.append(tid)
            else:
                still.append(tid)
        waiting = still
        if not active:
            continue

        x = np.array([pos[tid] for tid in active])
        noise = np.array([rngs[tid].standard_normal(2) for tid in active])
        proposals = em_step(x, t, density, params, dt, noise)

        done = []
        for i, tid in enumerate(active):
            outcome = apply_boundary(x[i], proposals[i], t, density, params,
                                     dt, rngs[tid])
            redraws = 1
            while outcome is StepRejected and redraws < _MAX_REDRAWS:
                retry = em_step(x[i], t, density, params, dt,
                                rngs[tid].standard_normal(2))
                outcome = apply_boundary(x[i], retry, t, density, params,
                                         dt, rngs[tid])
                redraws += 1
            if outcome is StepRejected:
                logger.warning("trajectory %d: step at t=%.4f kept in place "
                               "after %d redraws", tid, t, _MAX_REDRAWS)
                outcome = Inside(pos[tid].copy())
            if isinstance(outcome, Exited):
                paths[tid].append(outcome.position)
                tf[tid] = (k + 1) * dt
                done.append(tid)
            else:
                pos[tid] = outcome.position
                paths[tid].append(outcome.position)
        active = [tid for tid in active if tid not in done]

    return [Trajectory(tid, t0[tid], tf[tid],
                       np.array(paths[tid]) if paths[tid] else np.empty((0, 2)),
                       entered[tid])
            for tid in ids]


def generate_ensemble(density, params: ModelParams, cfg: SdeConfig,
                      batched: bool = True) -> Ensemble:
    """Generate J walkers; per-trajectory RNG streams are seeded by
    base_seed + id, so results are reproducible and order-independent."""
    horizon = density.horizon
    if horizon is not None and horizon < cfg.T - 1e-12:
        raise ValueError(f"density horizon {horizon} shorter than T={cfg.T}")
    sde_params = params
    if cfg.sigma1 is not None or cfg.sigma2 is not None:
        sde_params = replace(params,
                             sigma1=cfg.sigma1 or params.sigma1,
                             sigma2=cfg.sigma2 or params.sigma2)
    if batched:
        trajectories = _generate_batched(density, sde_params, cfg)
    else:
        trajectories = [generate_trajectory(tid, density, sde_params, cfg)
                        for tid in range(1, cfg.J + 1)]
    never = sum(not tr.entered for tr in trajectories)
    if never:
        logger.info("%d of %d trajectories never entered the corridor",
                    never, cfg.J)
    provenance = {
        "sde": cfg,
        "params": params,
        "density_rho_max": getattr(density, "rho_max", 1.0),
    }
    return Ensemble(trajectories, provenance)
