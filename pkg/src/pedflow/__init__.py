"""Pedestrian flow in a corridor: mean-field density model, particle
trajectories and Bayesian estimation of the free-walking speed."""

__version__ = "0.1.0"

from .config import ExperimentConfig, load_config, preset_config
from .errors import (ConfigError, GeometryError, NumericalError,
                     OutsideDomainError, PedflowError)
from .fp_solver import (DensityField, DensityHistory, ModelParams, Regime,
                        SteadyProfile, classify_regime, entropy,
                        sample_density, solve_fp, steady_state_1d, step_fp,
                        velocity)
from .geometry import (BoundaryKind, Bottleneck, DomainSpec, GridSpec,
                       Potential, build_grid, drift_direction_at,
                       solve_eikonal)
from .inference import (InferenceConfig, MapResult, PosteriorChain, Prior,
                        nelder_mead, objective, pcn_sample, posterior_summary,
                        psi_ensemble, psi_single)
from .pipeline import RunManifest, build_model, run_pipeline
from .trajectories import (Ensemble, SdeConfig, Trajectory, apply_boundary,
                           em_step, generate_ensemble)

__all__ = [
    "__version__",
    "ExperimentConfig", "load_config", "preset_config",
    "ConfigError", "GeometryError", "NumericalError", "OutsideDomainError",
    "PedflowError",
    "DensityField", "DensityHistory", "ModelParams", "Regime", "SteadyProfile",
    "classify_regime", "entropy", "sample_density", "solve_fp",
    "steady_state_1d", "step_fp", "velocity",
    "BoundaryKind", "Bottleneck", "DomainSpec", "GridSpec", "Potential",
    "build_grid", "drift_direction_at", "solve_eikonal",
    "InferenceConfig", "MapResult", "PosteriorChain", "Prior", "nelder_mead",
    "objective", "pcn_sample", "posterior_summary", "psi_ensemble",
    "psi_single",
    "RunManifest", "build_model", "run_pipeline",
    "Ensemble", "SdeConfig", "Trajectory", "apply_boundary", "em_step",
    "generate_ensemble",
]
