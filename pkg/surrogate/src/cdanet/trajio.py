"""Reader/writer for the binary snapshot-container interchange format.

This module is a self-contained implementation of the on-disk contract
shared with the solver-side toolkit; it deliberately imports nothing from
it.  One container serves both full trajectories and coarse observations
(header bit 0 distinguishes them).  All integers and floats are
little-endian; floats are IEEE 754 binary64.

Layout (offsets in bytes):

    0    8   magic ``b"RBCDATRJ"``
    8    4   format version (u32, currently 1)
    12   4   flags (u32; bit 0 set = observation container)
    16   4   nx  (u32, fine-grid cells in x)
    20   4   ny  (u32, fine-grid cells in y)
    24   8   lx  (f64)
    32   8   ly  (f64)
    40   8   rayleigh (f64)
    48   8   prandtl  (f64)
    56   8   dt  (f64, fine solver time step)
    64   4   cadence (u32, fine steps between stored snapshots)
    68   4   n_snapshots (u32)
    72   4   n_vars (u32, always 4)
    76   32  variable names, four 8-byte NUL-padded ASCII fields
    108  4   s_factor (u32; 1 for full trajectories)
    112  4   t_factor (u32; 1 for full trajectories)
    116  8   sigma_obs (f64)
    124  8   noise_seed (u64)
    132  8   seed (u64, solver RNG seed of the source run)
    140  32  source_hash (SHA-256 provenance digest)
    172  4   endianness marker (u32, 0x01020304)
    176  8*n snapshot times (f64[n_snapshots])
    ...      payload: per snapshot, variables in order u, v, T, p, each a
             row-major f64 array of shape (nx/s, ny/s)

The staggered v field of a full trajectory has ny+1 rows in memory; both
wall rows are identically zero under no-slip, the top one is omitted on
disk and reconstructed on read.  The writer refuses states whose v wall
rows are not exactly zero.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "Container",
    "FormatError",
    "MAGIC",
    "VERSION",
    "HEADER_SIZE",
    "FLAG_OBSERVATION",
    "read_container",
    "write_container",
    "read_header",
    "write_fine_trajectory",
    "slice_window",
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
class Container:
    """One snapshot-container file held in memory.

    ``fields`` is the stored payload, a (4, nt, nx/s, ny/s) array in
    variable order u, v, T, p.  For a full trajectory the persisted v is
    missing its top wall row; :meth:`v_full` reconstructs it.
    """

    flags: int
    nx: int
    ny: int
    lx: float
    ly: float
    rayleigh: float
    prandtl: float
    dt: float
    cadence: int
    s_factor: int
    t_factor: int
    sigma_obs: float
    noise_seed: int
    seed: int
    source_hash: bytes
    times: np.ndarray
    fields: np.ndarray

    @property
    def is_observation(self) -> bool:
        return bool(self.flags & FLAG_OBSERVATION)

    @property
    def n_snapshots(self) -> int:
        return len(self.times)

    @property
    def stored_shape(self) -> tuple[int, int]:
        return self.nx // self.s_factor, self.ny // self.s_factor

    @property
    def u(self) -> np.ndarray:
        return self.fields[0]

    @property
    def v(self) -> np.ndarray:
        return self.fields[1]

    @property
    def temperature(self) -> np.ndarray:
        return self.fields[2]

    @property
    def pressure(self) -> np.ndarray:
        return self.fields[3]

    def v_full(self) -> np.ndarray:
        """v with the omitted top wall row restored (trajectories only)."""
        if self.is_observation:
            raise FormatError("observation containers store v as sampled")
        n, nx, ny = self.fields[1].shape
        v = np.zeros((n, nx, ny + 1))
        v[:, :, :ny] = self.fields[1]
        return v


def _pack_header(c: Container) -> bytes:
    if len(c.source_hash) != 32:
        raise FormatError("source_hash must be 32 bytes")
    head = _HEAD.pack(
        MAGIC, VERSION, c.flags, c.nx, c.ny, c.lx, c.ly,
        c.rayleigh, c.prandtl, c.dt, c.cadence, c.n_snapshots, 4,
    )
    names = _NAMES.pack(*VAR_NAMES)
    tail = _TAIL.pack(
        c.s_factor, c.t_factor, c.sigma_obs,
        c.noise_seed & 0xFFFFFFFFFFFFFFFF,
        c.seed & 0xFFFFFFFFFFFFFFFF,
        c.source_hash, ENDIAN_MARK,
    )
    return head + names + tail


def write_container(c: Container, path) -> None:
    """Persist a container byte-exactly per the layout above."""
    nxs, nys = c.stored_shape
    n = c.n_snapshots
    if c.fields.shape != (4, n, nxs, nys):
        raise FormatError(
            f"payload shape {c.fields.shape} does not match header "
            f"(4, {n}, {nxs}, {nys})"
        )
    header = _pack_header(c)
    times = np.asarray(c.times, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(header)
        times.tofile(fh)
        for i in range(n):
            for m in range(4):
                np.ascontiguousarray(c.fields[m, i]).astype(
                    "<f8", copy=False
                ).tofile(fh)


def read_container(path) -> Container:
    """Read and validate one container file."""
    with open(path, "rb") as fh:
        raw = fh.read(HEADER_SIZE)
        if len(raw) < HEADER_SIZE:
            raise FormatError(
                f"truncated header: expected {HEADER_SIZE} bytes, "
                f"got {len(raw)}"
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
    fields = np.ascontiguousarray(
        payload.reshape(n_snapshots, 4, nxs, nys).transpose(1, 0, 2, 3)
    )
    return Container(
        flags=flags, nx=nx, ny=ny, lx=lx, ly=ly, rayleigh=rayleigh,
        prandtl=prandtl, dt=dt, cadence=cadence, s_factor=s_factor,
        t_factor=t_factor, sigma_obs=sigma_obs, noise_seed=noise_seed,
        seed=seed, source_hash=source_hash,
        times=times.astype(np.float64), fields=fields,
    )


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


def write_fine_trajectory(path, *, nx, ny, lx, ly, rayleigh, prandtl, dt,
                          cadence, seed, source_hash, times, u, v, T,
                          p) -> None:
    """Write network output as a full fine-grid trajectory container.

    ``v`` carries both wall rows (shape (nt, nx, ny+1)); they must be
    exactly zero, matching the no-slip storage rule.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    T = np.asarray(T, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if v.size and not (np.all(v[:, :, ny] == 0.0)
                       and np.all(v[:, :, 0] == 0.0)):
        raise FormatError(
            "unserializable state: v wall rows are not exactly zero"
        )
    c = Container(
        flags=0, nx=nx, ny=ny, lx=lx, ly=ly, rayleigh=rayleigh,
        prandtl=prandtl, dt=dt, cadence=cadence, s_factor=1, t_factor=1,
        sigma_obs=0.0, noise_seed=0, seed=seed, source_hash=source_hash,
        times=np.asarray(times, dtype=np.float64),
        fields=np.stack([u, v[:, :, :ny], T, p]),
    )
    write_container(c, path)


def slice_window(c: Container, t_start: float, t_end: float) -> Container:
    """Snapshot subrange with times in [t_start, t_end] (inclusive).

    Metadata is unchanged; times stay absolute.  Raises if fewer than two
    snapshots fall inside the window.
    """
    sel = (c.times >= t_start) & (c.times <= t_end)
    if np.count_nonzero(sel) < 2:
        raise FormatError(
            f"window [{t_start}, {t_end}] selects fewer than two of "
            f"{c.n_snapshots} snapshots"
        )
    return replace(
        c,
        times=c.times[sel].copy(),
        fields=np.ascontiguousarray(c.fields[:, sel]),
    )
