"""Grid, physical-parameter, and run configuration shared by all modules.

Everything here is immutable after construction and cheap to pickle, so
configs can be shared freely across worker processes.  The on-disk format is
a flat INI file with one section per dataclass; floats are serialized via
``repr`` so that ``parse_config(serialize_config(c)) == c`` holds exactly.
"""

from __future__ import annotations

import configparser
import io
import math
from dataclasses import dataclass

__all__ = [
    "ConfigError",
    "PhysicalParams",
    "GridSpec",
    "TimeSpec",
    "RunConfig",
    "validate",
    "serialize_config",
    "parse_config",
    "load_config",
    "save_config",
]

# A-priori velocity scale for stability heuristics, calibrated against
# desk-scale pilot runs (measured max|u| ~= 0.5 at Ra=1e5 after spin-up;
# 0.7 leaves margin for stiffer configs without flipping the desk verdicts).
U_EST = 0.7
CFL_LIMIT = 0.15
GRID_REYNOLDS_LIMIT = 10.0


class ConfigError(ValueError):
    """Raised for configurations that cannot be run at all."""


@dataclass(frozen=True)
class PhysicalParams:
    """Non-dimensional control parameters.

    The governing equations are already non-dimensional, so the Rayleigh and
    Prandtl numbers are atomic inputs; no dimensional quantities are stored.
    """

    rayleigh: float
    prandtl: float

    @property
    def nu(self) -> float:
        """Momentum diffusion coefficient Pr/sqrt(Ra)."""
        return self.prandtl / math.sqrt(self.rayleigh)

    @property
    def kappa(self) -> float:
        """Thermal diffusion coefficient 1/sqrt(Ra)."""
        return 1.0 / math.sqrt(self.rayleigh)


@dataclass(frozen=True)
class GridSpec:
    """Uniform staggered grid on [0, lx] x [0, ly], periodic in x.

    ``ly`` is fixed at 1.0 in normalized form and ``lx`` is the aspect
    ratio; both are kept as fields so the file format stays self-describing.
    """

    nx: int
    ny: int
    lx: float = 3.0
    ly: float = 1.0

    @property
    def dx(self) -> float:
        return self.lx / self.nx

    @property
    def dy(self) -> float:
        return self.ly / self.ny

    # Staggered array shapes: u on x-faces, v on y-faces (walls included),
    # temperature and pressure at cell centers.
    @property
    def shape_u(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def shape_v(self) -> tuple[int, int]:
        return (self.nx, self.ny + 1)

    @property
    def shape_center(self) -> tuple[int, int]:
        return (self.nx, self.ny)


@dataclass(frozen=True)
class TimeSpec:
    """Fixed-step time integration window and snapshot cadence."""

    dt: float
    t_final: float
    save_every: int = 1

    @property
    def n_steps(self) -> int:
        """Whole number of steps covering [0, t_final]."""
        return int(round(self.t_final / self.dt))


@dataclass(frozen=True)
class RunConfig:
    """Aggregate configuration for one solver run."""

    physical: PhysicalParams
    grid: GridSpec
    time: TimeSpec
    seed: int = 0
    init_amplitude: float = 0.1


def _positive(name: str, value: float) -> None:
    if not math.isfinite(value) or value <= 0:
        raise ConfigError(f"{name} must be positive and finite, got {value!r}")


def validate(
    config: RunConfig,
    s_factors: tuple[int, ...] = (),
    t_factors: tuple[int, ...] = (),
) -> list[str]:
    """Check a configuration, returning a list of warning diagnostics.

    Malformed configurations (non-positive sizes, spatial coarsening factors
    that do not tile the grid, a time window that is not a whole number of
    steps) raise :class:`ConfigError`.  A-priori stability heuristics that
    merely look risky come back as human-readable warning strings: an
    estimated-CFL warning when ``U_EST*dt/min(dx, dy)`` exceeds the CFL
    limit and a grid-Reynolds warning when ``U_EST*max(dx, dy)/nu`` exceeds
    the resolution limit.  The estimates use the fixed velocity scale
    ``U_EST`` rather than a pilot run, so they are conservative, not exact.
    """
    phys, grid, time = config.physical, config.grid, config.time

    if grid.nx <= 0 or grid.ny <= 0:
        raise ConfigError("grid size must be positive")
    _positive("lx", grid.lx)
    _positive("ly", grid.ly)
    _positive("rayleigh", phys.rayleigh)
    _positive("prandtl", phys.prandtl)
    _positive("dt", time.dt)
    if not math.isfinite(time.t_final) or time.t_final < 0:
        raise ConfigError(f"t_final must be nonnegative, got {time.t_final!r}")
    if time.save_every <= 0:
        raise ConfigError("save_every must be positive")
    if not math.isfinite(config.init_amplitude) or config.init_amplitude < 0:
        raise ConfigError("init_amplitude must be nonnegative")
    n_steps = time.t_final / time.dt
    if abs(n_steps - round(n_steps)) > 1e-8 * max(1.0, abs(n_steps)):
        raise ConfigError(
            f"t_final/dt = {n_steps!r} is not a whole number of steps"
        )
    for s in s_factors:
        if s <= 0 or grid.nx % s or grid.ny % s:
            raise ConfigError(
                f"spatial factor {s} does not tile the {grid.nx}x{grid.ny} grid"
            )
    for t in t_factors:
        if t <= 0:
            raise ConfigError(f"temporal factor must be positive, got {t}")

    warnings: list[str] = []
    cfl_est = U_EST * time.dt / min(grid.dx, grid.dy)
    if cfl_est > CFL_LIMIT:
        warnings.append(
            f"cfl: estimated max|u|*dt/dx = {cfl_est:.3g} exceeds "
            f"{CFL_LIMIT} (velocity scale {U_EST}); reduce dt or refine"
        )
    re_grid = U_EST * max(grid.dx, grid.dy) / phys.nu
    if re_grid > GRID_REYNOLDS_LIMIT:
        warnings.append(
            f"resolution: estimated grid Reynolds number {re_grid:.3g} "
            f"exceeds {GRID_REYNOLDS_LIMIT}; grid likely under-resolved "
            f"at Ra = {phys.rayleigh:g}"
        )
    return warnings


def serialize_config(config: RunConfig) -> str:
    """Render a config as the flat INI interchange format."""
    cp = configparser.ConfigParser()
    cp["physical"] = {
        "rayleigh": repr(config.physical.rayleigh),
        "prandtl": repr(config.physical.prandtl),
    }
    cp["grid"] = {
        "nx": str(config.grid.nx),
        "ny": str(config.grid.ny),
        "lx": repr(config.grid.lx),
        "ly": repr(config.grid.ly),
    }
    cp["time"] = {
        "dt": repr(config.time.dt),
        "t_final": repr(config.time.t_final),
        "save_every": str(config.time.save_every),
    }
    cp["run"] = {
        "seed": str(config.seed),
        "init_amplitude": repr(config.init_amplitude),
    }
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def parse_config(text: str) -> RunConfig:
    """Parse the INI interchange format back into a RunConfig."""
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
        return RunConfig(
            physical=PhysicalParams(
                rayleigh=cp.getfloat("physical", "rayleigh"),
                prandtl=cp.getfloat("physical", "prandtl"),
            ),
            grid=GridSpec(
                nx=cp.getint("grid", "nx"),
                ny=cp.getint("grid", "ny"),
                lx=cp.getfloat("grid", "lx"),
                ly=cp.getfloat("grid", "ly"),
            ),
            time=TimeSpec(
                dt=cp.getfloat("time", "dt"),
                t_final=cp.getfloat("time", "t_final"),
                save_every=cp.getint("time", "save_every"),
            ),
            seed=cp.getint("run", "seed"),
            init_amplitude=cp.getfloat("run", "init_amplitude"),
        )
    except (configparser.Error, ValueError, KeyError) as exc:
        raise ConfigError(f"bad config file: {exc}") from exc


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def save_config(config: RunConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_config(config))


def desk_config(
    rayleigh: float = 1e5,
    *,
    nx: int = 192,
    ny: int = 64,
    dt: float = 1e-3,
    t_final: float = 10.0,
    save_every: int = 100,
    seed: int = 0,
) -> RunConfig:
    """Convenience constructor for the default desk-scale setup."""
    return RunConfig(
        physical=PhysicalParams(rayleigh=rayleigh, prandtl=0.7),
        grid=GridSpec(nx=nx, ny=ny, lx=3.0, ly=1.0),
        time=TimeSpec(dt=dt, t_final=t_final, save_every=save_every),
        seed=seed,
    )
