"""Bit-exact binary persistence for trajectories and coarse observations.

This file format is the sole interchange contract with external consumers.
One container serves both full trajectories and coarse observations (a
header flag distinguishes them).  All integers and floats are
little-endian; floats are IEEE 754 binary64.

Layout (offsets in bytes):

    0    8   magic ``b"RBCDATRJ"``
    8    4   format version (u32, currently 1)
    12   4   flags (u32; bit 0 set = observation container)
    16   4   nx  (u32, fine-grid cells in x)
    20   4   ny  (u32, fine-grid cells in y)
    24   8   lx  (f64, domain length over height)
    32   8   ly  (f64, domain height, 1.0 in normalized form)
    40   8   rayleigh (f64)
    48   8   prandtl  (f64)
    56   8   dt  (f64, fine solver time step)
    64   4   cadence (u32, fine steps between stored snapshots)
    68   4   n_snapshots (u32)
    72   4   n_vars (u32, always 4)
    76   32  variable names, four 8-byte NUL-padded ASCII fields:
             "u", "v", "T", "p"
    108  4   s_factor (u32, spatial coarsening; 1 for full trajectories)
    112  4   t_factor (u32, temporal coarsening; 1 for full trajectories)
    116  8   sigma_obs (f64, observation noise level; 0 when noise-free)
    124  8   noise_seed (u64)
    132  8   seed (u64, solver RNG seed of the source run)
    140  32  source_hash (SHA-256 provenance digest)
    172  4   endianness marker (u32, 0x01020304)
    176  8*n snapshot times (f64[n_snapshots])
    ...      payload: per snapshot, variables in order u, v, T, p, each a
             row-major f64 array of shape (nx/s, ny/s)

Storage shapes: the staggered v field has ny+1 rows in memory, but its top
row sits on the upper wall and is identically zero under no-slip, so only
rows 0..ny-1 are persisted and readers reconstruct the wall row.  This
makes all four stored variables the same shape.  The writer refuses states
whose v wall rows are not exactly zero rather than silently dropping data.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .config import GridSpec, PhysicalParams

__all__ = [
    "Trajectory",
    "FormatError",
    "MAGIC",
    "VERSION",
    "write_trajectory",
    "read_trajectory",
    "read_header",
]

MAGIC = b"RBCDATRJ"
VERSION = 1
ENDIAN_MARK = 0x01020304
FLAG_OBSERVATION = 1
VAR_NAMES = (b"u", b"v", b"T", b"p")

_HEAD = struct.Struct("<8sIIIIdddddIII")
_NAMES = struct.Struct("<8s8s8s8s")
_TAIL = struct.Struct("<IIdQQ32sI")
HEADER_SIZE = _HEAD.size + _NAMES.size + _TAIL.size  # 176


class FormatError(ValueError):
    """Raised for files that do not conform to the container format."""


@dataclass(eq=False)
class Trajectory:
    """Snapshot series of one solver run plus provenance metadata.

    Arrays are snapshot-major: ``u`` (nt, nx, ny), ``v`` (nt, nx, ny+1)
    with wall rows zero, ``temperature``/``pressure`` (nt, nx, ny).
    ``max_cfl`` and ``final_state`` are in-memory diagnostics and are not
    persisted.
    """

    grid: GridSpec
    physical: PhysicalParams
    dt: float
    cadence: int
    seed: int
    source_hash: bytes
    times: np.ndarray
    u: np.ndarray
    v: np.ndarray
    temperature: np.ndarray
    pressure: np.ndarray
    max_cfl: float | None = None
    final_state: object | None = None

    @property
    def n_snapshots(self) -> int:
        return len(self.times)


def _pack_header(*, flags, grid, physical, dt, cadence, n_snapshots,
                 s_factor, t_factor, sigma_obs, noise_seed, seed,
                 source_hash) -> bytes:
    if len(source_hash) != 32:
        raise FormatError("source_hash must be 32 bytes")
    head = _HEAD.pack(
        MAGIC, VERSION, flags, grid.nx, grid.ny, grid.lx, grid.ly,
        physical.rayleigh, physical.prandtl, dt, cadence, n_snapshots, 4,
    )
    names = _NAMES.pack(*VAR_NAMES)
    tail = _TAIL.pack(
        s_factor, t_factor, sigma_obs, noise_seed & 0xFFFFFFFFFFFFFFFF,
        seed & 0xFFFFFFFFFFFFFFFF, source_hash, ENDIAN_MARK,
    )
    return head + names + tail


def write_container(path, *, flags, grid, physical, dt, cadence,
                    s_factor, t_factor, sigma_obs, noise_seed, seed,
                    source_hash, times, fields) -> None:
    """Write the raw container; ``fields`` is (u, v, T, p) stored-shape arrays."""
    times = np.asarray(times, dtype=np.float64)
    n = len(times)
    shape = fields[0].shape
    for f in fields:
        if f.shape != shape or f.shape[0] != n:
            raise FormatError(
                f"inconsistent field shapes {[f.shape for f in fields]} "
                f"for {n} snapshots"
            )
    header = _pack_header(
        flags=flags, grid=grid, physical=physical, dt=dt, cadence=cadence,
        n_snapshots=n, s_factor=s_factor, t_factor=t_factor,
        sigma_obs=sigma_obs, noise_seed=noise_seed, seed=seed,
        source_hash=source_hash,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        times.astype("<f8", copy=False).tofile(fh)
        for i in range(n):
            for f in fields:
                np.ascontiguousarray(f[i]).astype("<f8", copy=False).tofile(fh)


def read_container(path) -> dict:
    """Read and validate the raw container; returns header fields + arrays."""
    with open(path, "rb") as fh:
        raw = fh.read(HEADER_SIZE)
        if len(raw) < HEADER_SIZE:
            raise FormatError(
                f"truncated header: expected {HEADER_SIZE} bytes, got {len(raw)}"
            )
        (magic, version, flags, nx, ny, lx, ly, rayleigh, prandtl, dt,
         cadence, n_snapshots, n_vars) = _HEAD.unpack(raw[: _HEAD.size])
        if magic != MAGIC or version != VERSION:
            raise FormatError(
                f"magic/version mismatch: got {magic!r} v{version}, "
                f"expected {MAGIC!r} v{VERSION}"
            )
        names = _NAMES.unpack(raw[_HEAD.size: _HEAD.size + _NAMES.size])
        if n_vars != 4 or tuple(x.rstrip(b"\0") for x in names) != VAR_NAMES:
            raise FormatError(f"unexpected variable list {names!r}")
        (s_factor, t_factor, sigma_obs, noise_seed, seed, source_hash,
         endian) = _TAIL.unpack(raw[_HEAD.size + _NAMES.size:])
        if endian != ENDIAN_MARK:
            raise FormatError(f"endianness marker 0x{endian:08x} is wrong")
        if nx <= 0 or ny <= 0 or s_factor <= 0 or t_factor <= 0:
            raise FormatError("non-positive sizes in header")
        if nx % s_factor or ny % s_factor:
            raise FormatError(
                f"s_factor {s_factor} does not divide grid {nx}x{ny}"
            )

        times = np.fromfile(fh, dtype="<f8", count=n_snapshots)
        if len(times) < n_snapshots:
            raise FormatError(
                f"truncated times: expected {n_snapshots}, got {len(times)}"
            )
        nxs, nys = nx // s_factor, ny // s_factor
        expected = n_snapshots * 4 * nxs * nys
        payload = np.fromfile(fh, dtype="<f8")
        if payload.size != expected:
            raise FormatError(
                f"truncated or oversized payload: expected {expected * 8} "
                f"bytes, got {payload.size * 8}"
            )
    payload = payload.reshape(n_snapshots, 4, nxs, nys)
    return {
        "flags": flags,
        "grid": GridSpec(nx=nx, ny=ny, lx=lx, ly=ly),
        "physical": PhysicalParams(rayleigh=rayleigh, prandtl=prandtl),
        "dt": dt,
        "cadence": cadence,
        "s_factor": s_factor,
        "t_factor": t_factor,
        "sigma_obs": sigma_obs,
        "noise_seed": noise_seed,
        "seed": seed,
        "source_hash": source_hash,
        "times": times.astype(np.float64),
        "fields": tuple(
            np.ascontiguousarray(payload[:, m]) for m in range(4)
        ),
    }


def read_header(path) -> dict:
    """Header fields only (no payload)."""
    with open(path, "rb") as fh:
        raw = fh.read(HEADER_SIZE)
    if len(raw) < HEADER_SIZE:
        raise FormatError(
            f"truncated header: expected {HEADER_SIZE} bytes, got {len(raw)}"
        )
    (magic, version, flags, nx, ny, lx, ly, rayleigh, prandtl, dt,
     cadence, n_snapshots, n_vars) = _HEAD.unpack(raw[: _HEAD.size])
    if magic != MAGIC or version != VERSION:
        raise FormatError(
            f"magic/version mismatch: got {magic!r} v{version}, "
            f"expected {MAGIC!r} v{VERSION}"
        )
    (s_factor, t_factor, sigma_obs, noise_seed, seed, source_hash,
     endian) = _TAIL.unpack(raw[_HEAD.size + _NAMES.size:])
    return {
        "flags": flags, "nx": nx, "ny": ny, "lx": lx, "ly": ly,
        "rayleigh": rayleigh, "prandtl": prandtl, "dt": dt,
        "cadence": cadence, "n_snapshots": n_snapshots,
        "s_factor": s_factor, "t_factor": t_factor, "sigma_obs": sigma_obs,
        "noise_seed": noise_seed, "seed": seed, "source_hash": source_hash,
    }


def write_trajectory(traj: Trajectory, path) -> None:
    """Persist a full fine-grid trajectory.

    Raises :class:`FormatError` if the state is unserializable (v wall rows
    not exactly zero; the format omits the top wall row).
    """
    ny = traj.grid.ny
    if traj.v.size and not (
        np.all(traj.v[:, :, ny] == 0.0) and np.all(traj.v[:, :, 0] == 0.0)
    ):
        raise FormatError(
            "unserializable state: v wall rows are not exactly zero"
        )
    write_container(
        path,
        flags=0,
        grid=traj.grid,
        physical=traj.physical,
        dt=traj.dt,
        cadence=traj.cadence,
        s_factor=1,
        t_factor=1,
        sigma_obs=0.0,
        noise_seed=0,
        seed=traj.seed,
        source_hash=traj.source_hash,
        times=traj.times,
        fields=(traj.u, traj.v[:, :, :ny], traj.temperature, traj.pressure),
    )


def read_trajectory(path) -> Trajectory:
    """Read a full trajectory, reconstructing the omitted v wall row."""
    c = read_container(path)
    if c["flags"] & FLAG_OBSERVATION:
        raise FormatError(
            "file is an observation container; use observations.read_observation"
        )
    if c["s_factor"] != 1 or c["t_factor"] != 1:
        raise FormatError("full trajectory must have s_factor = t_factor = 1")
    grid = c["grid"]
    u, v_stored, temperature, pressure = c["fields"]
    n = v_stored.shape[0]
    v = np.zeros((n, grid.nx, grid.ny + 1))
    v[:, :, : grid.ny] = v_stored
    return Trajectory(
        grid=grid,
        physical=c["physical"],
        dt=c["dt"],
        cadence=c["cadence"],
        seed=c["seed"],
        source_hash=c["source_hash"],
        times=c["times"],
        u=u,
        v=v,
        temperature=temperature,
        pressure=pressure,
    )
