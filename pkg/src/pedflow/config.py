"""Experiment configuration: sectioned key-value files and named presets.

The config format is flat INI-style text with the sections [domain],
[grid], [model], [sde], [inference], [prior] and [run].  Unknown sections
or keys are rejected.  Presets bundle the benchmark parameter sets; a file
may start from a preset (``preset = name`` under [run]) and override
individual keys.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass

from .errors import ConfigError
from .geometry import Bottleneck, DomainSpec
from .inference import InferenceConfig, Prior
from .trajectories import SdeConfig

_SCHEMA = {
    "domain": {"length", "half_width", "exit_door_half_width",
               "bottleneck_half_width", "bottleneck_x_start", "bottleneck_x_end"},
    "grid": {"nx", "ny"},
    "model": {"v_max", "a", "b", "sigma1", "sigma2", "pde_dt"},
    "sde": {"dt", "T", "J", "base_seed", "sigma1", "sigma2"},
    "inference": {"sigma1", "sigma2", "density", "pde_dt", "steady_nx"},
    "prior": {"mean", "variance"},
    "run": {"preset", "estimator", "beta", "n_mcmc", "v_init",
            "out_dir", "snapshot_stride"},
}

_ESTIMATORS = ("map", "pcn", "both")


@dataclass(frozen=True)
class ExperimentConfig:
    domain: DomainSpec
    nx: int
    ny: int
    v_max: float
    a: float
    b: float
    sigma1: float
    sigma2: float
    pde_dt: float
    sde: SdeConfig
    inference: InferenceConfig
    prior: Prior
    estimator: str = "both"
    beta: float = 0.1
    n_mcmc: int = 5000
    v_init: float = 1.0
    snapshot_stride: int = 1
    out_dir: str | None = None
    preset: str | None = None

    def __post_init__(self):
        if self.estimator not in _ESTIMATORS:
            raise ConfigError(f"estimator must be one of {_ESTIMATORS}")
        if not 0 < self.beta <= 1:
            raise ConfigError("beta must lie in (0, 1]")
        if self.n_mcmc < 1:
            raise ConfigError("n_mcmc must be positive")
        if self.v_init <= 0:
            raise ConfigError("v_init must be positive")
        if self.nx < 4 or self.ny < 4:
            raise ConfigError("grid must have at least 4 cells per direction")
        if not 0 <= self.a <= self.v_max:
            raise ConfigError("inflow rate a violates 0 <= a <= v_max")
        if not 0 <= self.b <= self.v_max:
            raise ConfigError("outflow rate b violates 0 <= b <= v_max")
        if self.sigma1 <= 0 or self.sigma2 <= 0:
            raise ConfigError("model diffusion strengths must be positive")
        if self.pde_dt <= 0:
            raise ConfigError("pde_dt must be positive")

    def key_values(self) -> dict:
        """Flat section.key -> value view (for manifests and cache keys)."""
        dom = self.domain
        out = {
            "domain.length": dom.length,
            "domain.half_width": dom.half_width,
            "domain.exit_door_half_width": dom.door_half_width,
            "grid.nx": self.nx, "grid.ny": self.ny,
            "model.v_max": self.v_max, "model.a": self.a, "model.b": self.b,
            "model.sigma1": self.sigma1, "model.sigma2": self.sigma2,
            "model.pde_dt": self.pde_dt,
            "sde.dt": self.sde.dt, "sde.T": self.sde.T, "sde.J": self.sde.J,
            "sde.base_seed": self.sde.base_seed,
            "inference.sigma1": self.inference.sigma1,
            "inference.sigma2": self.inference.sigma2,
            "inference.density": self.inference.density_mode,
            "inference.pde_dt": self.inference.pde_dt,
            "inference.steady_nx": self.inference.steady_nx,
            "prior.mean": self.prior.m, "prior.variance": self.prior.c,
            "run.estimator": self.estimator, "run.beta": self.beta,
            "run.n_mcmc": self.n_mcmc, "run.v_init": self.v_init,
            "run.snapshot_stride": self.snapshot_stride,
        }
        if dom.bottleneck is not None:
            out["domain.bottleneck_half_width"] = dom.bottleneck.half_width
            out["domain.bottleneck_x_start"] = dom.bottleneck.x_start
            out["domain.bottleneck_x_end"] = dom.bottleneck.x_end
        if self.sde.sigma1 is not None:
            out["sde.sigma1"] = self.sde.sigma1
        if self.sde.sigma2 is not None:
            out["sde.sigma2"] = self.sde.sigma2
        return out


# Benchmark setup: corridor L=3, width 0.5, truth v_max=1.5, data noise 0.05,
# horizon T=2 at dt_SDE=1e-3, J=20, prior N(1, 0.25), mis-specified
# inference sigma=1, PDE step 0.005 on a 120x10 grid.
_BASE = {
    "domain.length": 3.0, "domain.half_width": 0.25,
    "grid.nx": 120, "grid.ny": 10,
    "model.v_max": 1.5, "model.sigma1": 0.05, "model.sigma2": 0.05,
    "model.pde_dt": 0.005,
    "sde.dt": 1e-3, "sde.T": 2.0, "sde.J": 20, "sde.base_seed": 0,
    "inference.sigma1": 1.0, "inference.sigma2": 1.0,
    "inference.density": "transient", "inference.pde_dt": 0.005,
    "inference.steady_nx": 2000,
    "prior.mean": 1.0, "prior.variance": 0.25,
    "run.estimator": "both", "run.beta": 0.1, "run.n_mcmc": 5000,
    "run.v_init": 1.0, "run.snapshot_stride": 1,
}

_BOTTLENECK = {
    "domain.exit_door_half_width": 0.15,
    "domain.bottleneck_half_width": 0.05,
    "domain.bottleneck_x_start": 1.2, "domain.bottleneck_x_end": 1.8,
    "grid.ny": 20,
    "model.sigma1": 0.05, "model.sigma2": 0.03,
    "model.pde_dt": 4e-3, "inference.pde_dt": 4e-3,
    # matched likelihood noise: the shorter horizon T=1 leaves the
    # mis-specified sigma=1 likelihood too weak against the prior
    "inference.sigma1": 0.05, "inference.sigma2": 0.03,
    "sde.T": 1.0,
}

PRESETS = {
    "influx_a02_b04": {**_BASE, "model.a": 0.2, "model.b": 0.4},
    "influx_a01_b015": {**_BASE, "model.a": 0.1, "model.b": 0.15},
    "outflux_a04_b02": {**_BASE, "model.a": 0.4, "model.b": 0.2},
    "outflux_a045_b04": {**_BASE, "model.a": 0.45, "model.b": 0.4},
    "maxcurrent_a09_b0975": {**_BASE, "model.a": 0.9, "model.b": 0.975},
    "bottleneck_influx": {**_BASE, **_BOTTLENECK, "model.a": 0.2, "model.b": 0.4},
    "bottleneck_outflux": {**_BASE, **_BOTTLENECK, "model.a": 0.4, "model.b": 0.2},
}


def _build(kv: dict) -> ExperimentConfig:
    def need(key):
        if key not in kv:
            raise ConfigError(f"missing required key {key}")
        return kv[key]

    bn = None
    if "domain.bottleneck_half_width" in kv:
        bn = Bottleneck(float(need("domain.bottleneck_half_width")),
                        float(need("domain.bottleneck_x_start")),
                        float(need("domain.bottleneck_x_end")))
    door = kv.get("domain.exit_door_half_width")
    try:
        domain = DomainSpec(float(need("domain.length")),
                            float(need("domain.half_width")),
                            bn, float(door) if door is not None else None)
    except Exception as exc:
        raise ConfigError(f"invalid domain: {exc}") from exc

    sde = SdeConfig(
        dt=float(need("sde.dt")), T=float(need("sde.T")), J=int(need("sde.J")),
        base_seed=int(kv.get("sde.base_seed", 0)),
        sigma1=float(kv["sde.sigma1"]) if "sde.sigma1" in kv else None,
        sigma2=float(kv["sde.sigma2"]) if "sde.sigma2" in kv else None)
    inference = InferenceConfig(
        sigma1=float(kv.get("inference.sigma1", 1.0)),
        sigma2=float(kv.get("inference.sigma2", 1.0)),
        density_mode=str(kv.get("inference.density", "transient")),
        pde_dt=float(kv.get("inference.pde_dt", 0.005)),
        steady_nx=int(kv.get("inference.steady_nx", 2000)))
    prior = Prior(float(need("prior.mean")), float(need("prior.variance")))
    return ExperimentConfig(
        domain=domain,
        nx=int(need("grid.nx")), ny=int(need("grid.ny")),
        v_max=float(need("model.v_max")),
        a=float(need("model.a")), b=float(need("model.b")),
        sigma1=float(need("model.sigma1")), sigma2=float(need("model.sigma2")),
        pde_dt=float(need("model.pde_dt")),
        sde=sde, inference=inference, prior=prior,
        estimator=str(kv.get("run.estimator", "both")),
        beta=float(kv.get("run.beta", 0.1)),
        n_mcmc=int(kv.get("run.n_mcmc", 5000)),
        v_init=float(kv.get("run.v_init", 1.0)),
        snapshot_stride=int(kv.get("run.snapshot_stride", 1)),
        out_dir=kv.get("run.out_dir"),
        preset=kv.get("run.preset"))


def preset_config(name: str, overrides: dict | None = None) -> ExperimentConfig:
    """Expand a named preset, optionally overriding flat section.key values."""
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from "
                          f"{sorted(PRESETS)}")
    kv = dict(PRESETS[name])
    kv["run.preset"] = name
    if overrides:
        for key in overrides:
            section = key.split(".", 1)[0]
            if section not in _SCHEMA or key.split(".", 1)[1] not in _SCHEMA[section]:
                raise ConfigError(f"unknown config key {key}")
        kv.update(overrides)
    return _build(kv)


def with_overrides(cfg: ExperimentConfig, overrides: dict) -> ExperimentConfig:
    """Rebuild a config with flat section.key values replaced (used by the
    sweep command; values may be strings, they go through the parsers)."""
    kv = cfg.key_values()
    if cfg.out_dir is not None:
        kv["run.out_dir"] = cfg.out_dir
    if cfg.preset is not None:
        kv["run.preset"] = cfg.preset
    for key in overrides:
        parts = key.split(".", 1)
        if len(parts) != 2 or parts[0] not in _SCHEMA \
                or parts[1] not in _SCHEMA[parts[0]]:
            raise ConfigError(f"unknown config key {key}")
    kv.update(overrides)
    try:
        return _build(kv)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str) -> ExperimentConfig:
    """Parse and validate a config file; unknown keys are errors."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keys are case-sensitive (sde.T)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except configparser.ParsingError as exc:
        raise ConfigError(f"parse error in {path}: {exc}") from exc

    kv = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key, value in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            kv[f"{section}.{key}"] = value

    preset = kv.pop("run.preset", None)
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}")
        merged = dict(PRESETS[preset])
        merged.update(kv)
        merged["run.preset"] = preset
        kv = merged
    try:
        return _build(kv)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
