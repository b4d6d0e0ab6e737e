"""Command-line front end.

Subcommands are thin wrappers over the library: `steady`, `solve-fp`,
`eikonal`, `generate`, `estimate-map`, `estimate-pcn`, `pipeline` and
`sweep`.  Exit codes: 0 success, 2 configuration error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from .config import (ExperimentConfig, PRESETS, load_config, preset_config,
                     with_overrides)
from .errors import ConfigError, GeometryError, NumericalError, PedflowError
from .fp_solver import solve_fp, steady_state_1d
from .pipeline import (build_model, run_pipeline, write_density_csv,
                       write_ensemble_csv, write_potential_csv,
                       write_steady_csv)
from .trajectories import generate_ensemble

logger = logging.getLogger(__name__)


def _add_common(parser):
    parser.add_argument("--config", metavar="PATH", help="config file")
    parser.add_argument("--preset", metavar="NAME",
                        help=f"named preset ({', '.join(sorted(PRESETS))})")
    parser.add_argument("--out", metavar="DIR", default="out",
                        help="output directory (default: out)")
    parser.add_argument("--seed", type=int, metavar="INT",
                        help="override the trajectory base seed")
    parser.add_argument("--estimator", choices=("map", "pcn", "both"),
                        help="override the estimator selection")
    parser.add_argument("--density", choices=("transient", "steady"),
                        help="override the inference density mode")


def _resolve_config(args) -> ExperimentConfig:
    if args.config and args.preset:
        raise ConfigError("give either --config or --preset, not both")
    if args.config:
        cfg = load_config(args.config)
    elif args.preset:
        cfg = preset_config(args.preset)
    else:
        raise ConfigError("one of --config or --preset is required")
    if args.seed is not None:
        cfg = replace(cfg, sde=replace(cfg.sde, base_seed=args.seed))
    if args.estimator is not None:
        cfg = replace(cfg, estimator=args.estimator)
    if args.density is not None:
        cfg = replace(cfg, inference=replace(cfg.inference,
                                             density_mode=args.density))
    return cfg


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cmd_steady(args) -> int:
    cfg = _resolve_config(args)
    params = build_model(cfg)
    profile = steady_state_1d(params, cfg.inference.steady_nx)
    path = _outdir(args) / "steady.csv"
    write_steady_csv(profile, path)
    print(path)
    return 0


def _cmd_solve_fp(args) -> int:
    cfg = _resolve_config(args)
    params = build_model(cfg)
    history = solve_fp(params, cfg.sde.T, cfg.pde_dt)
    path = _outdir(args) / "density.csv"
    write_density_csv(history, path, cfg.snapshot_stride)
    print(path)
    return 0


def _cmd_eikonal(args) -> int:
    cfg = _resolve_config(args)
    params = build_model(cfg)
    path = _outdir(args) / "potential.csv"
    write_potential_csv(params.potential, path)
    print(path)
    return 0


def _cmd_generate(args) -> int:
    cfg = _resolve_config(args)
    params = build_model(cfg)
    if cfg.inference.density_mode == "steady":
        density = steady_state_1d(params, cfg.inference.steady_nx)
    else:
        density = solve_fp(params, cfg.sde.T, cfg.pde_dt)
    ens = generate_ensemble(density, params, cfg.sde)
    path = _outdir(args) / "trajectories.csv"
    write_ensemble_csv(ens, path)
    print(path)
    return 0


def _cmd_pipeline(args, estimator=None) -> int:
    cfg = _resolve_config(args)
    if estimator is not None:
        cfg = replace(cfg, estimator=estimator)
    manifest = run_pipeline(cfg, args.out)
    print(Path(args.out) / "manifest.json")
    for name in sorted(manifest.files):
        print(Path(args.out) / name)
    return 0


def _sweep_worker(job):
    config, preset, key, value, out_dir = job
    cfg = load_config(config) if config else preset_config(preset)
    cfg = with_overrides(cfg, {key: value})
    run_pipeline(cfg, out_dir)
    return out_dir


def _cmd_sweep(args) -> int:
    if not (args.config or args.preset):
        raise ConfigError("one of --config or --preset is required")
    values = [v for v in args.values.split(",") if v]
    if not values:
        raise ConfigError("--values must list at least one value")
    _resolve_config(args)  # fail fast on bad config before spawning jobs
    slug = args.key.replace(".", "_")
    jobs = [(args.config, args.preset, args.key, value,
             str(Path(args.out) / f"{slug}_{value}")) for value in values]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            done = list(pool.map(_sweep_worker, jobs))
    else:
        done = [_sweep_worker(job) for job in jobs]
    for out_dir in done:
        print(out_dir)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="pedflow",
        description="Pedestrian-flow simulation and speed estimation.")
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, helptext in (
            ("steady", "solve the 1D stationary profile"),
            ("solve-fp", "run the transient density solve"),
            ("eikonal", "export the distance-to-exit potential"),
            ("generate", "simulate a trajectory ensemble"),
            ("estimate-map", "full pipeline, MAP estimator only"),
            ("estimate-pcn", "full pipeline, pCN sampler only"),
            ("pipeline", "full simulate-generate-estimate-export pipeline"),
            ("sweep", "run the pipeline over a list of values for one key")):
        p = sub.add_parser(name, help=helptext)
        _add_common(p)
        if name == "sweep":
            p.add_argument("--key", required=True, metavar="SECTION.KEY",
                           help="config key to vary, e.g. run.beta or sde.J")
            p.add_argument("--values", required=True,
                           help="comma-separated list of values")
            p.add_argument("--jobs", type=int, default=1,
                           help="number of concurrent pipeline processes")

    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")

    handlers = {
        "steady": _cmd_steady,
        "solve-fp": _cmd_solve_fp,
        "eikonal": _cmd_eikonal,
        "generate": _cmd_generate,
        "estimate-map": lambda a: _cmd_pipeline(a, estimator="map"),
        "estimate-pcn": lambda a: _cmd_pipeline(a, estimator="pcn"),
        "pipeline": _cmd_pipeline,
        "sweep": _cmd_sweep,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, GeometryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, PedflowError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
