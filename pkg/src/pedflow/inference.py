"""Estimation of the free-walking speed from trajectory ensembles.

The negative log-likelihood of a path under candidate speed v is the
discretized Girsanov functional

    Psi(v; X) = 1/4 sum_k [ |F_k|^2_Sigma dt - 2 <F_k, X_{k+1} - X_k>_Sigma ],

with F_k = v (1 - rho(X_k, t_k)) d(X_k) evaluated at the left endpoint (Ito
convention) and rho obtained from a forward solve run at the candidate v.
The MAP estimator minimizes Psi plus a Gaussian prior penalty via a 1D
Nelder-Mead; the posterior is sampled with the preconditioned Crank-Nicolson
(pCN) proposal, whose acceptance ratio needs Psi only.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .fp_solver import ModelParams, solve_fp, steady_state_1d
from .trajectories import Ensemble, Trajectory

logger = logging.getLogger(__name__)

_NEGATIVE_PENALTY = 1e6
_NEGATIVE_EPS = 1e-6
_CACHE_LIMIT = 16  # forward solves kept alive (MCMC revisits few speeds)


@dataclass(frozen=True)
class Prior:
    """Gaussian N(m, c) prior on the speed, truncated to v > 0."""

    m: float
    c: float

    def __post_init__(self):
        if self.c <= 0:
            raise ValueError("prior variance must be positive")


@dataclass(eq=False)
class InferenceConfig:
    """Likelihood settings: the (possibly mis-specified) diffusion entering
    the Girsanov norm, the density source used for candidate speeds and the
    PDE resolution of those forward solves."""

    sigma1: float = 1.0
    sigma2: float = 1.0
    density_mode: str = "transient"  # or "steady"
    pde_dt: float = 0.005
    steady_nx: int = 2000
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.sigma1 <= 0 or self.sigma2 <= 0:
            raise ValueError("inference diffusion strengths must be positive")
        if self.density_mode not in ("transient", "steady"):
            raise ValueError("density_mode must be 'transient' or 'steady'")


def forward_density(v: float, ens: Ensemble, cfg: InferenceConfig):
    """Density source for candidate speed v, memoized on v rounded to 1e-10.

    Geometry, rates and PDE diffusion come from the ensemble provenance;
    only the speed is replaced.  The PDE step is reduced when the candidate
    speed would violate the CFL bound of the configured step.
    """
    base: ModelParams = ens.provenance["params"]
    sde = ens.provenance["sde"]
    v = float(v)
    if v <= 0:
        raise ValueError("candidate speed must be positive")
    key = (round(v, 10), base.a, base.b, base.sigma1, base.sigma2,
           id(base.potential), sde.T, cfg.pde_dt, cfg.density_mode, cfg.steady_nx)
    cached = cfg._cache.get(key)
    if cached is not None:
        return cached
    while len(cfg._cache) >= _CACHE_LIMIT:
        cfg._cache.pop(next(iter(cfg._cache)))
    params = replace(base, v_max=v) if v != base.v_max else base
    if cfg.density_mode == "steady":
        source = steady_state_1d(params, cfg.steady_nx)
    else:
        dt = cfg.pde_dt
        cfl = 0.5 * params.grid.dx / v
        n = max(int(math.ceil(sde.T / min(dt, cfl))), 1)
        source = solve_fp(params, sde.T, sde.T / n)
    cfg._cache[key] = source
    return source


def _psi_trajectory(v, positions, t0, dt, density, cfg, dir1, dir2):
    """Discretized Psi of one path given precomputed drift directions."""
    xk = positions[:-1]
    dx = np.diff(positions, axis=0)
    tk = t0 + dt * np.arange(xk.shape[0])
    rho = np.asarray(density.sample_scaled(xk[:, 0], xk[:, 1], tk), dtype=float)
    f1 = v * (1.0 - rho) * dir1
    f2 = v * (1.0 - rho) * dir2
    s1sq, s2sq = cfg.sigma1**2, cfg.sigma2**2
    quad = (f1 * f1 / s1sq + f2 * f2 / s2sq) * dt
    cross = f1 * dx[:, 0] / s1sq + f2 * dx[:, 1] / s2sq
    return 0.25 * float(np.sum(quad - 2.0 * cross))


def psi_single(v: float, traj: Trajectory, density, cfg: InferenceConfig,
               potential=None) -> float:
    """Girsanov misfit of one trajectory at candidate speed v.

    `density` must be the source obtained at the same candidate v; the
    drift is zero outside the observation window, so the sum runs over the
    recorded samples only.  With `potential=None` the walking direction is
    the corridor axis.
    """
    if traj.n_samples < 2:
        raise ValueError("trajectory needs at least 2 samples")
    xk = traj.positions[:-1]
    if potential is None:
        d1 = np.ones(xk.shape[0])
        d2 = np.zeros(xk.shape[0])
    else:
        d1, d2 = potential.direction_at(xk[:, 0], xk[:, 1])
        d1, d2 = np.asarray(d1, float), np.asarray(d2, float)
    dt = traj.tf - traj.t0
    n = traj.n_samples - 1
    return _psi_trajectory(v, traj.positions, traj.t0,
                           dt / n if n else 0.0, density, cfg, d1, d2)


class PsiEvaluator:
    """Precomputes the geometry-dependent parts of Psi for an ensemble.

    Per trajectory: left-endpoint positions, increments, times and drift
    directions (independent of the candidate speed).  Never-entered
    trajectories contribute zero.
    """

    def __init__(self, ens: Ensemble, cfg: InferenceConfig):
        self.cfg = cfg
        self.ens = ens
        params: ModelParams = ens.provenance["params"]
        dt = ens.provenance["sde"].dt
        self.dt = dt
        xs, dxs, ts, d1s, d2s = [], [], [], [], []
        for tr in ens:
            if tr.n_samples < 2:
                continue
            xk = tr.positions[:-1]
            d1, d2 = params.potential.direction_at(xk[:, 0], xk[:, 1])
            xs.append(xk)
            dxs.append(np.diff(tr.positions, axis=0))
            ts.append(tr.t0 + dt * np.arange(xk.shape[0]))
            d1s.append(np.asarray(d1, float))
            d2s.append(np.asarray(d2, float))
        self.n_paths = len(xs)
        # Candidate speeds below max(a, b) have no well-posed forward model
        # (the rates must not exceed the free-walking speed), so the
        # posterior support is restricted accordingly.
        self.v_min = max(params.a, params.b) if self.n_paths else 0.0
        if self.n_paths:
            # all observation windows concatenated: Psi_J is one big sum
            self._xk = np.concatenate(xs)
            self._dx = np.concatenate(dxs)
            self._tk = np.concatenate(ts)
            self._d1 = np.concatenate(d1s)
            self._d2 = np.concatenate(d2s)

    def psi(self, v: float, density) -> float:
        if not self.n_paths:
            return 0.0
        rho = np.asarray(density.sample_scaled(
            self._xk[:, 0], self._xk[:, 1], self._tk), dtype=float)
        f1 = v * (1.0 - rho) * self._d1
        f2 = v * (1.0 - rho) * self._d2
        s1sq, s2sq = self.cfg.sigma1**2, self.cfg.sigma2**2
        quad = (f1 * f1 / s1sq + f2 * f2 / s2sq) * self.dt
        cross = f1 * self._dx[:, 0] / s1sq + f2 * self._dx[:, 1] / s2sq
        return 0.25 * float(np.sum(quad - 2.0 * cross))

    def psi_forward(self, v: float) -> float:
        """Psi at candidate v including the coupled forward solve."""
        if not self.n_paths:
            return 0.0
        return self.psi(v, forward_density(v, self.ens, self.cfg))


def psi_ensemble(v: float, ens: Ensemble, density, cfg: InferenceConfig) -> float:
    """Sum of per-trajectory misfits, all sharing one forward solve."""
    return PsiEvaluator(ens, cfg).psi(v, density)


def objective(v: float, ens: Ensemble, prior: Prior, cfg: InferenceConfig,
              _evaluator: PsiEvaluator | None = None) -> float:
    """MAP objective Psi_J(v) + (v - m)^2 / (2c); candidates outside the
    admissible speed range are penalized linearly instead of evaluated."""
    ev = _evaluator if _evaluator is not None else PsiEvaluator(ens, cfg)
    floor = max(_NEGATIVE_EPS, ev.v_min)
    if v < floor:
        return objective(floor, ens, prior, cfg, ev) \
            + _NEGATIVE_PENALTY * (floor - v)
    return ev.psi_forward(v) + (v - prior.m) ** 2 / (2.0 * prior.c)


@dataclass(eq=False)
class MapResult:
    v_hat: float
    value: float
    trace: list  # (iteration, best v, best objective)
    converged: bool
    n_evaluations: int


def nelder_mead(ens: Ensemble, prior: Prior, cfg: InferenceConfig,
                v_init: float, tol: float = 1e-4,
                max_iter: int = 500) -> MapResult:
    """1D Nelder-Mead on the MAP objective.

    Two-vertex simplex started at {v_init, 1.05 v_init}; reflection 1,
    expansion 2, contraction 0.5, shrink 0.5; stops when the simplex
    diameter falls below `tol`.
    """
    if v_init <= 0:
        raise ValueError("v_init must be positive")
    if tol <= 0:
        raise ValueError("tol must be positive")
    evaluator = PsiEvaluator(ens, cfg)
    memo: dict = {}
    n_eval = 0

    def f(v):
        nonlocal n_eval
        key = round(v, 10)
        if key not in memo:
            memo[key] = objective(v, ens, prior, cfg, evaluator)
            n_eval += 1
        return memo[key]

    simplex = [v_init, 1.05 * v_init]
    values = [f(v) for v in simplex]
    trace = []
    converged = False
    for iteration in range(max_iter):
        order = np.argsort(values)
        simplex = [simplex[i] for i in order]
        values = [values[i] for i in order]
        best, worst = simplex
        trace.append((iteration, best, values[0]))
        if abs(best - worst) < tol:
            converged = True
            break
        vr = best + 1.0 * (best - worst)
        fr = f(vr)
        if fr < values[0]:
            ve = best + 2.0 * (best - worst)
            fe = f(ve)
            if fe <= fr:
                simplex[1], values[1] = ve, fe
            else:
                simplex[1], values[1] = vr, fr
        else:
            vc = best + 0.5 * (vr - best) if fr < values[1] else \
                best + 0.5 * (worst - best)
            fc = f(vc)
            if fc < values[1]:
                simplex[1], values[1] = vc, fc
            else:
                # shrink toward the best vertex
                simplex[1] = best + 0.5 * (worst - best)
                values[1] = f(simplex[1])
    order = np.argsort(values)
    best = simplex[order[0]]
    return MapResult(best, values[order[0]], trace, converged, n_eval)


@dataclass(eq=False)
class PosteriorChain:
    samples: np.ndarray   # (N+1,)
    accepted: np.ndarray  # (N,) bool
    beta: float
    burn_in: int

    @property
    def acceptance_rate(self) -> float:
        return float(self.accepted.mean()) if self.accepted.size else 0.0

    def post_burn_in(self) -> np.ndarray:
        return self.samples[self.burn_in:]


def pcn_sample(ens: Ensemble, prior: Prior, cfg: InferenceConfig,
               beta: float, N: int, v_init: float, rng) -> PosteriorChain:
    """pCN chain targeting exp(-Psi) against the truncated Gaussian prior.

    Proposal y = m + sqrt(1 - beta^2) (v - m) + beta xi with xi ~ N(0, c);
    acceptance min{1, exp(Psi(v) - Psi(y))} restricted to admissible speeds
    (y > 0 and y >= max(a, b) when the likelihood is active).  Psi of the
    current state is cached, so each iteration costs one forward solve.
    """
    if not 0 < beta <= 1:
        raise ValueError("beta must lie in (0, 1]")
    if N < 1 or v_init <= 0:
        raise ValueError("need N >= 1 and v_init > 0")
    evaluator = PsiEvaluator(ens, cfg)
    contraction = math.sqrt(1.0 - beta * beta)
    scale = math.sqrt(prior.c)
    v = float(v_init)
    psi_v = evaluator.psi_forward(v)
    samples = np.empty(N + 1)
    accepted = np.zeros(N, dtype=bool)
    samples[0] = v
    for k in range(N):
        y = prior.m + contraction * (v - prior.m) + beta * scale * rng.standard_normal()
        if y > 0 and y >= evaluator.v_min:
            psi_y = evaluator.psi_forward(y)
            if math.log(rng.uniform()) < psi_v - psi_y:
                v, psi_v = y, psi_y
                accepted[k] = True
        samples[k + 1] = v
    burn_in = (N + 1) // 5
    return PosteriorChain(samples, accepted, beta, burn_in)


@dataclass(eq=False)
class PosteriorSummary:
    mean: float
    variance: float
    histogram: tuple  # (counts, bin edges)
    acceptance_rate: float
    n_samples: int


def posterior_summary(chain: PosteriorChain, bins: int = 50) -> PosteriorSummary:
    """Post burn-in statistics of a chain."""
    tail = chain.post_burn_in()
    if tail.size == 0:
        raise ValueError("chain shorter than its burn-in")
    counts, edges = np.histogram(tail, bins=bins)
    return PosteriorSummary(float(tail.mean()), float(tail.var()),
                            (counts, edges), chain.acceptance_rate, tail.size)


def mc_standard_error(samples: np.ndarray, n_batches: int = 30) -> float:
    """Batch-means Monte Carlo standard error of the sample mean."""
    samples = np.asarray(samples, dtype=float)
    n = samples.size
    if n < 2 * n_batches:
        return float(samples.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    size = n // n_batches
    means = samples[:n_batches * size].reshape(n_batches, size).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(n_batches))
