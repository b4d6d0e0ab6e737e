"""End-to-end experiment pipeline and CSV export.

A pipeline runs four stages in order: forward density solve (transient or
steady), trajectory generation with the true parameters, estimation with
the inference parameters (possibly mis-specified diffusion), and export.
The compute stages cache their results under ``<out>/cache`` keyed by a
checksum of the relevant config keys, so reruns and downstream-only changes
are cheap.  All CSVs use comma separators, UNIX newlines and a header row;
floats are written with 15 significant digits so identical configs produce
byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
import sys
import time
from pathlib import Path
from dataclasses import asdict, dataclass

import numpy as np
import scipy

from . import __version__
from .config import ExperimentConfig
from .errors import PedflowError
from .fp_solver import (DensityHistory, ModelParams, SteadyProfile,
                        classify_regime, solve_fp, steady_state_1d)
from .geometry import Potential, build_grid, solve_eikonal
from .inference import (MapResult, PosteriorChain, mc_standard_error,
                        nelder_mead, pcn_sample, posterior_summary)
from .trajectories import Ensemble, Trajectory, generate_ensemble

# offset added to the base seed for the pCN chain's RNG stream, keeping it
# disjoint from the per-trajectory streams (base_seed + id)
_CHAIN_SEED_OFFSET = 77_777


@dataclass(eq=False)
class RunManifest:
    config: dict          # flat section.key -> value snapshot
    versions: dict
    seeds: dict
    timings: dict         # stage -> seconds
    files: dict           # relative path -> sha256

    def write(self, path):
        payload = {"config": self.config, "versions": self.versions,
                   "seeds": self.seeds, "timings": self.timings,
                   "files": self.files}
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True, default=str)
            fh.write("\n")


def build_model(cfg: ExperimentConfig) -> ModelParams:
    """Grid, eikonal potential and true model parameters for a config."""
    grid = build_grid(cfg.domain, cfg.nx, cfg.ny)
    potential = solve_eikonal(grid)
    return ModelParams(cfg.v_max, cfg.a, cfg.b, cfg.sigma1, cfg.sigma2,
                       potential)


# ---------------------------------------------------------------- CSV export

def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def write_density_csv(history: DensityHistory, path, stride: int = 1):
    """Rows "t,x,y,rho" over inside cells, every `stride`-th stored step."""
    g = history.grid
    iy, ix = np.nonzero(g.inside)
    with open(path, "w", newline="\n") as fh:
        fh.write("t,x,y,rho\n")
        for k in range(0, history.n_fields, stride):
            t = k * history.dt
            rho = history.rho[k]
            for j, i in zip(iy, ix):
                fh.write(f"{t:.15g},{g.x[i]:.15g},{g.y[j]:.15g},"
                         f"{rho[j, i]:.15g}\n")


def write_steady_csv(profile: SteadyProfile, path):
    with open(path, "w", newline="\n") as fh:
        fh.write("x,rho\n")
        for xi, ri in zip(profile.x, profile.rho):
            fh.write(f"{xi:.15g},{ri:.15g}\n")


def write_potential_csv(potential: Potential, path):
    """Rows "x,y,phi,gx,gy" over inside cells (gx, gy = drift direction)."""
    g = potential.grid
    with open(path, "w", newline="\n") as fh:
        fh.write("x,y,phi,gx,gy\n")
        for j, i in zip(*np.nonzero(g.inside)):
            fh.write(f"{g.x[i]:.15g},{g.y[j]:.15g},{potential.phi[j, i]:.15g},"
                     f"{potential.direction[j, i, 0]:.15g},"
                     f"{potential.direction[j, i, 1]:.15g}\n")


def write_ensemble_csv(ens: Ensemble, path):
    """Rows "traj_id,t,x,y" in trajectory-major order plus a JSON sidecar
    (`<path>.meta.json`) with the generation settings."""
    sde = ens.provenance["sde"]
    with open(path, "w", newline="\n") as fh:
        fh.write("traj_id,t,x,y\n")
        for tr in ens:
            for k in range(tr.n_samples):
                t = tr.t0 + k * sde.dt
                fh.write(f"{tr.id},{t:.15g},{tr.positions[k, 0]:.15g},"
                         f"{tr.positions[k, 1]:.15g}\n")
    params: ModelParams = ens.provenance["params"]
    dom = params.grid.domain
    meta = {
        "sde": asdict(sde),
        "model": {"v_max": params.v_max, "a": params.a, "b": params.b,
                  "sigma1": params.sigma1, "sigma2": params.sigma2},
        "domain": {"length": dom.length, "half_width": dom.half_width,
                   "exit_door_half_width": dom.door_half_width,
                   "bottleneck": asdict(dom.bottleneck) if dom.bottleneck else None},
        "grid": {"nx": params.grid.nx, "ny": params.grid.ny},
        "density_rho_max": ens.provenance.get("density_rho_max", 1.0),
        "n_entered": sum(tr.entered for tr in ens),
    }
    with open(str(path) + ".meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_chain_csv(chain: PosteriorChain, path):
    """Rows "k,v,accepted"; k = 0 is the initial state (accepted = 0)."""
    with open(path, "w", newline="\n") as fh:
        fh.write("k,v,accepted\n")
        fh.write(f"0,{chain.samples[0]:.15g},0\n")
        for k in range(1, chain.samples.size):
            fh.write(f"{k},{chain.samples[k]:.15g},"
                     f"{int(chain.accepted[k - 1])}\n")


def write_map_trace_csv(result: MapResult, path):
    with open(path, "w", newline="\n") as fh:
        fh.write("iter,v,objective\n")
        for it, v, val in result.trace:
            fh.write(f"{it},{v:.15g},{val:.15g}\n")


def write_summary(path, entries: dict):
    with open(path, "w", newline="\n") as fh:
        for key, value in entries.items():
            if isinstance(value, float):
                fh.write(f"{key} = {value:.15g}\n")
            else:
                fh.write(f"{key} = {value}\n")


# ------------------------------------------------------------- stage caching

def _stage_key(cfg: ExperimentConfig, stage: str) -> str:
    kv = cfg.key_values()
    pick = {
        "forward": ("domain.", "grid.", "model.", "sde.T",
                    "inference.density", "inference.steady_nx"),
        "generate": ("domain.", "grid.", "model.", "sde.",
                     "inference.density", "inference.steady_nx"),
        "estimate": ("domain.", "grid.", "model.", "sde.", "inference.",
                     "prior.", "run.beta", "run.n_mcmc", "run.v_init",
                     "run.estimator"),
    }[stage]
    sub = {k: v for k, v in sorted(kv.items())
           if any(k.startswith(p) for p in pick)}
    digest = hashlib.sha256(json.dumps(sub, sort_keys=True).encode())
    return digest.hexdigest()[:16]


def _forward_stage(cfg: ExperimentConfig, params: ModelParams, cache_dir):
    path = cache_dir / f"forward-{_stage_key(cfg, 'forward')}.npz"
    if path.exists():
        data = np.load(path)
        if cfg.inference.density_mode == "steady":
            return SteadyProfile(data["x"], data["rho"],
                                 float(data["residual"]), float(data["length"]))
        return DensityHistory(params.grid, float(data["dt"]), data["rho"],
                              data["influx"], data["outflux"])
    if cfg.inference.density_mode == "steady":
        profile = steady_state_1d(params, cfg.inference.steady_nx)
        np.savez_compressed(path, x=profile.x, rho=profile.rho,
                            residual=profile.residual, length=profile.length)
        return profile
    history = solve_fp(params, cfg.sde.T, cfg.pde_dt)
    np.savez_compressed(path, rho=history.rho, dt=history.dt,
                        influx=history.influx, outflux=history.outflux)
    return history


def _generate_stage(cfg: ExperimentConfig, params: ModelParams, density,
                    cache_dir) -> Ensemble:
    path = cache_dir / f"generate-{_stage_key(cfg, 'generate')}.npz"
    provenance = {"sde": cfg.sde, "params": params,
                  "density_rho_max": getattr(density, "rho_max", 1.0)}
    if path.exists():
        data = np.load(path)
        trajectories = []
        offsets = data["offsets"]
        for i, tid in enumerate(data["ids"]):
            pos = data["positions"][offsets[i]:offsets[i + 1]]
            trajectories.append(Trajectory(int(tid), float(data["t0"][i]),
                                           float(data["tf"][i]), pos,
                                           bool(data["entered"][i])))
        return Ensemble(trajectories, provenance)
    ens = generate_ensemble(density, params, cfg.sde)
    lengths = [tr.n_samples for tr in ens]
    np.savez_compressed(
        path,
        ids=np.array([tr.id for tr in ens]),
        t0=np.array([tr.t0 for tr in ens]),
        tf=np.array([tr.tf for tr in ens]),
        entered=np.array([tr.entered for tr in ens]),
        offsets=np.concatenate([[0], np.cumsum(lengths)]),
        positions=np.concatenate([tr.positions.reshape(-1, 2) for tr in ens])
        if sum(lengths) else np.empty((0, 2)))
    return ens


def _estimate_stage(cfg: ExperimentConfig, ens: Ensemble, cache_dir):
    path = cache_dir / f"estimate-{_stage_key(cfg, 'estimate')}.npz"
    map_result = None
    chain = None
    if path.exists():
        data = np.load(path)
        if "map_v" in data:
            map_result = MapResult(
                float(data["map_v"]), float(data["map_value"]),
                [(int(i), float(v), float(o)) for i, v, o in data["map_trace"]],
                bool(data["map_converged"]), int(data["map_n_eval"]))
        if "chain" in data:
            chain = PosteriorChain(data["chain"], data["accepted"],
                                   cfg.beta, int(data["burn_in"]))
        return map_result, chain
    payload = {}
    if cfg.estimator in ("map", "both"):
        map_result = nelder_mead(ens, cfg.prior, cfg.inference, cfg.v_init)
        payload.update(map_v=map_result.v_hat, map_value=map_result.value,
                       map_trace=np.array(map_result.trace, dtype=float),
                       map_converged=map_result.converged,
                       map_n_eval=map_result.n_evaluations)
    if cfg.estimator in ("pcn", "both"):
        rng = np.random.default_rng(cfg.sde.base_seed + _CHAIN_SEED_OFFSET)
        chain = pcn_sample(ens, cfg.prior, cfg.inference, cfg.beta,
                           cfg.n_mcmc, cfg.v_init, rng)
        payload.update(chain=chain.samples, accepted=chain.accepted,
                       burn_in=chain.burn_in)
    np.savez_compressed(path, **payload)
    return map_result, chain


# --------------------------------------------------------------- the pipeline

def run_pipeline(cfg: ExperimentConfig, out_dir) -> RunManifest:
    """Run forward solve, trajectory generation, estimation and export.

    Stage outputs are cached under ``<out_dir>/cache`` keyed by a config
    checksum; a failing stage aborts with its name while earlier outputs
    stay on disk.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cache_dir = out / "cache"
    cache_dir.mkdir(exist_ok=True)

    timings = {}
    files = {}
    stage = "setup"
    try:
        t0 = time.perf_counter()
        params = build_model(cfg)
        timings["setup"] = time.perf_counter() - t0

        stage = "forward"
        t0 = time.perf_counter()
        density = _forward_stage(cfg, params, cache_dir)
        timings["forward"] = time.perf_counter() - t0

        stage = "generate"
        t0 = time.perf_counter()
        ens = _generate_stage(cfg, params, density, cache_dir)
        timings["generate"] = time.perf_counter() - t0

        stage = "estimate"
        t0 = time.perf_counter()
        map_result, chain = _estimate_stage(cfg, ens, cache_dir)
        timings["estimate"] = time.perf_counter() - t0

        stage = "export"
        t0 = time.perf_counter()
        if isinstance(density, SteadyProfile):
            write_steady_csv(density, out / "steady.csv")
            files["steady.csv"] = None
        else:
            write_density_csv(density, out / "density.csv", cfg.snapshot_stride)
            files["density.csv"] = None
        write_potential_csv(params.potential, out / "potential.csv")
        files["potential.csv"] = None
        write_ensemble_csv(ens, out / "trajectories.csv")
        files["trajectories.csv"] = None
        files["trajectories.csv.meta.json"] = None

        summary = {
            "preset": cfg.preset or "-",
            "regime": classify_regime(params).value,
            "true_v_max": cfg.v_max,
            "prior_mean": cfg.prior.m,
            "prior_variance": cfg.prior.c,
            "n_trajectories": len(ens),
            "n_entered": sum(tr.entered for tr in ens),
        }
        if map_result is not None:
            write_map_trace_csv(map_result, out / "map_trace.csv")
            files["map_trace.csv"] = None
            summary["map_v"] = map_result.v_hat
            summary["map_objective"] = map_result.value
            summary["map_converged"] = map_result.converged
        if chain is not None:
            write_chain_csv(chain, out / "chain.csv")
            files["chain.csv"] = None
            post = posterior_summary(chain)
            summary["posterior_mean"] = post.mean
            summary["posterior_variance"] = post.variance
            summary["posterior_std"] = post.variance ** 0.5
            summary["posterior_se"] = mc_standard_error(chain.post_burn_in())
            summary["acceptance_rate"] = post.acceptance_rate
            summary["n_posterior_samples"] = post.n_samples
        write_summary(out / "summary.txt", summary)
        files["summary.txt"] = None
        timings["export"] = time.perf_counter() - t0
    except PedflowError as exc:
        raise type(exc)(f"pipeline stage '{stage}' failed: {exc}") from exc

    for name in files:
        files[name] = _sha256(out / name)
    manifest = RunManifest(
        config=cfg.key_values(),
        versions={"python": sys.version.split()[0], "numpy": np.__version__,
                  "scipy": scipy.__version__, "pedflow": __version__},
        seeds={"base_seed": cfg.sde.base_seed,
               "chain_seed": cfg.sde.base_seed + _CHAIN_SEED_OFFSET},
        timings={k: round(v, 6) for k, v in timings.items()},
        files=files)
    manifest.write(out / "manifest.json")
    return manifest
