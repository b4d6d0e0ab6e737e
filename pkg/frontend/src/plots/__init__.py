"""Figure rendering for pedflow CSV outputs."""

from .render import (PlotsError, eikonal, load_columns, posterior,
                     steady_profiles, trajectories)

__version__ = "0.1.0"

__all__ = ["PlotsError", "eikonal", "load_columns", "posterior",
           "steady_profiles", "trajectories", "__version__"]
