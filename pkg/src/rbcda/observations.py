"""Coarse observations: subsampling, observation noise, ensembles.

Observations are strided subsamples of a fine trajectory: every ``s``-th
point in each spatial direction (anchor at index 0) and every ``t``-th
snapshot.  All four variables (u, v, temperature, pressure) share the
coarse shape (nx/s, ny/s); for the staggered v this means rows
0, s, ..., ny-s of the stored layout, which drops the top-wall row exactly
like the file format does.  Pressure observations are produced and
perturbed alongside the rest even though the nudging equations never use
them; downstream consumers of the observation files do.

Noise streams come from PCG64 (numpy's default 64-bit generator) with the
ziggurat normal transform, so a (seed, shape) pair pins the exact noise
field on any platform.  Draw order within one observation set: u, then v,
then temperature, then pressure, each filled in C order.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .config import GridSpec, PhysicalParams
from .trajio import FLAG_OBSERVATION, FormatError, Trajectory, read_container, write_container

__all__ = [
    "CoarseObservation",
    "ModelNoiseSpec",
    "coarsen",
    "add_obs_noise",
    "make_ensemble",
    "perturb_cda_model",
    "write_observation",
    "read_observation",
]


@dataclass
class CoarseObservation:
    """Time-indexed coarse fields plus the metadata to interpret them.

    ``grid`` is the FINE reference grid; coarse shapes are (nx/s, ny/s).
    ``cadence`` counts fine solver steps between observation snapshots; the
    source trajectory's own snapshot cadence times ``t_factor``.
    """

    grid: GridSpec
    physical: PhysicalParams
    dt: float
    cadence: int
    s_factor: int
    t_factor: int
    sigma_obs: float
    noise_seed: int
    source_hash: bytes
    seed: int
    times: np.ndarray
    u: np.ndarray
    v: np.ndarray
    temperature: np.ndarray
    pressure: np.ndarray

    @property
    def n_snapshots(self) -> int:
        return len(self.times)

    @property
    def coarse_shape(self) -> tuple[int, int]:
        return (self.grid.nx // self.s_factor, self.grid.ny // self.s_factor)


@dataclass(frozen=True)
class ModelNoiseSpec:
    """Recipe for model (as opposed to observational) error injection.

    ``target == "cda_rayleigh"`` swaps the true Rayleigh number for
    ``ra_assumed`` in the downscaling model; ``target ==
    "surrogate_weights"`` records the per-layer weight-perturbation scale
    consumed by the surrogate package (sigma_mod times each layer's weight
    standard deviation).
    """

    sigma_mod: float
    target: str
    ra_assumed: float | None = None

    def __post_init__(self):
        if self.target not in ("cda_rayleigh", "surrogate_weights"):
            raise ValueError(f"unknown model-noise target {self.target!r}")
        if self.sigma_mod < 0:
            raise ValueError("sigma_mod must be nonnegative")
        if self.target == "cda_rayleigh" and self.ra_assumed is None:
            raise ValueError("cda_rayleigh target requires ra_assumed")


def coarsen(traj: Trajectory, s: int, t: int) -> CoarseObservation:
    """Noise-free strided subsample of a trajectory.

    Spatial stride ``s`` must divide both grid dimensions; snapshots are
    taken at indices 0, t, 2t, ...  Values are bit-copies of the reference.
    """
    grid = traj.grid
    if s <= 0 or t <= 0:
        raise ValueError("coarsening factors must be positive")
    if grid.nx % s or grid.ny % s:
        raise ValueError(
            f"spatial factor {s} does not divide the {grid.nx}x{grid.ny} grid"
        )
    ny = grid.ny
    return CoarseObservation(
        grid=grid,
        physical=traj.physical,
        dt=traj.dt,
        cadence=traj.cadence * t,
        s_factor=s,
        t_factor=t,
        sigma_obs=0.0,
        noise_seed=0,
        source_hash=traj.source_hash,
        seed=traj.seed,
        times=traj.times[::t].copy(),
        u=np.ascontiguousarray(traj.u[::t, ::s, ::s]),
        v=np.ascontiguousarray(traj.v[::t, ::s, :ny:s]),
        temperature=np.ascontiguousarray(traj.temperature[::t, ::s, ::s]),
        pressure=np.ascontiguousarray(traj.pressure[::t, ::s, ::s]),
    )


def add_obs_noise(obs: CoarseObservation, sigma_obs: float,
                  seed: int) -> CoarseObservation:
    """Independent N(0, sigma_obs^2) on every entry of every variable.

    The same noise level perturbs all four variables.  ``sigma_obs == 0``
    returns a bit-identical copy (no generator draws at all, so noise-off
    pipelines collapse onto noise-free ones exactly).
    """
    if sigma_obs < 0:
        raise ValueError("sigma_obs must be nonnegative")
    if sigma_obs == 0.0:
        return replace(
            obs,
            sigma_obs=0.0,
            noise_seed=seed,
            u=obs.u.copy(),
            v=obs.v.copy(),
            temperature=obs.temperature.copy(),
            pressure=obs.pressure.copy(),
        )
    rng = np.random.default_rng(seed)
    return replace(
        obs,
        sigma_obs=sigma_obs,
        noise_seed=seed,
        u=obs.u + rng.normal(0.0, sigma_obs, obs.u.shape),
        v=obs.v + rng.normal(0.0, sigma_obs, obs.v.shape),
        temperature=obs.temperature + rng.normal(0.0, sigma_obs,
                                                 obs.temperature.shape),
        pressure=obs.pressure + rng.normal(0.0, sigma_obs,
                                           obs.pressure.shape),
    )


def make_ensemble(obs_clean: CoarseObservation, sigma_obs: float,
                  n_members: int, base_seed: int) -> list[CoarseObservation]:
    """n_members noisy observation sets with member seeds base_seed + index."""
    if n_members < 1:
        raise ValueError("n_members must be >= 1")
    return [
        add_obs_noise(obs_clean, sigma_obs, base_seed + member)
        for member in range(n_members)
    ]


def member_seed(base_seed: int, member: int) -> int:
    """The pinned member-seed convention, exposed for reporting."""
    return base_seed + member


def perturb_cda_model(params: PhysicalParams,
                      spec: ModelNoiseSpec) -> PhysicalParams:
    """Model error for the downscaler: run with an assumed Rayleigh number."""
    if spec.target != "cda_rayleigh":
        raise ValueError(
            f"wrong target {spec.target!r}: perturb_cda_model handles "
            f"cda_rayleigh only"
        )
    return PhysicalParams(rayleigh=spec.ra_assumed, prandtl=params.prandtl)


def write_observation(obs: CoarseObservation, path) -> None:
    """Persist an observation set in the shared container format."""
    write_container(
        path,
        flags=FLAG_OBSERVATION,
        grid=obs.grid,
        physical=obs.physical,
        dt=obs.dt,
        cadence=obs.cadence,
        s_factor=obs.s_factor,
        t_factor=obs.t_factor,
        sigma_obs=obs.sigma_obs,
        noise_seed=obs.noise_seed,
        seed=obs.seed,
        source_hash=obs.source_hash,
        times=obs.times,
        fields=(obs.u, obs.v, obs.temperature, obs.pressure),
    )


def read_observation(path) -> CoarseObservation:
    c = read_container(path)
    if not c["flags"] & FLAG_OBSERVATION:
        raise FormatError(
            "file is a full trajectory; use trajio.read_trajectory"
        )
    u, v, temperature, pressure = c["fields"]
    return CoarseObservation(
        grid=c["grid"],
        physical=c["physical"],
        dt=c["dt"],
        cadence=c["cadence"],
        s_factor=c["s_factor"],
        t_factor=c["t_factor"],
        sigma_obs=c["sigma_obs"],
        noise_seed=c["noise_seed"],
        seed=c["seed"],
        source_hash=c["source_hash"],
        times=c["times"],
        u=u,
        v=v,
        temperature=temperature,
        pressure=pressure,
    )
