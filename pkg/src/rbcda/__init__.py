"""Rayleigh-Benard convection with continuous-data-assimilation downscaling.

Public surface:

* :mod:`rbcda.config` — grid/physics/run configuration and validation
* :mod:`rbcda.solver` — staggered-grid Boussinesq solver
* :mod:`rbcda.cda` — nudging-based downscaling of coarse observations
* :mod:`rbcda.observations` — coarsening, observation noise, ensembles
* :mod:`rbcda.metrics` — error metrics, normality tests, power-law fits
* :mod:`rbcda.trajio` — binary trajectory/observation interchange format
* :mod:`rbcda.harness` — experiment CLI (``rbcda`` entry point)
"""

from .config import (
    ConfigError,
    GridSpec,
    PhysicalParams,
    RunConfig,
    TimeSpec,
    desk_config,
    load_config,
    parse_config,
    save_config,
    serialize_config,
    validate,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "GridSpec",
    "PhysicalParams",
    "RunConfig",
    "TimeSpec",
    "desk_config",
    "load_config",
    "parse_config",
    "save_config",
    "serialize_config",
    "validate",
    "__version__",
]
