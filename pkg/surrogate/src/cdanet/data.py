"""Window assembly: pairing coarse inputs with fine supervision.

A training window is one coarse observation file (the network input) plus
one fine trajectory file whose frames fall inside the observation's time
span (the supervision).  Fields live on the staggered grid of the source
solver: u on x-faces (i dx, (j+1/2) dy), v on y-faces ((i+1/2) dx, j dy)
with zero wall rows, T and p on cell centers.  Supervision covers every
stored fine point except the identically-zero v wall rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .trajio import Container, FormatError, read_container

__all__ = [
    "WindowData",
    "load_window",
    "field_stats",
    "staggered_coords",
    "center_coords",
]

FIELD_NAMES = ("u", "v", "T", "p")


def staggered_coords(nx: int, ny: int, lx: float, ly: float,
                     field: str) -> tuple[np.ndarray, np.ndarray]:
    """(x, y) sample coordinates of one stored variable, shape (nx, ny*).

    For v only the interior rows j = 1..ny-1 are returned; the wall rows
    are fixed by the no-slip condition, not by the network.
    """
    dx = lx / nx
    dy = ly / ny
    i = np.arange(nx)
    if field == "u":
        x = i * dx
        y = (np.arange(ny) + 0.5) * dy
    elif field == "v":
        x = (i + 0.5) * dx
        y = np.arange(1, ny) * dy
    elif field in ("T", "p"):
        x = (i + 0.5) * dx
        y = (np.arange(ny) + 0.5) * dy
    else:
        raise ValueError(f"unknown field {field!r}")
    X, Y = np.meshgrid(x, y, indexing="ij")
    return X, Y


def center_coords(nx: int, ny: int, lx: float,
                  ly: float) -> tuple[np.ndarray, np.ndarray]:
    return staggered_coords(nx, ny, lx, ly, "T")


def field_stats(containers) -> tuple[np.ndarray, np.ndarray]:
    """Per-variable mean and std over the stored payloads of the given
    containers (used to normalize network inputs and outputs)."""
    sums = np.zeros(4)
    sqs = np.zeros(4)
    count = 0
    for c in containers:
        f = c.fields
        sums += f.sum(axis=(1, 2, 3))
        sqs += (f * f).sum(axis=(1, 2, 3))
        count += f[0].size
    if count == 0:
        raise FormatError("no fields to compute stats from")
    mean = sums / count
    var = sqs / count - mean * mean
    std = np.sqrt(np.maximum(var, 0.0))
    if np.any(std <= 0):
        raise FormatError("degenerate field statistics (zero variance)")
    return mean, std


@dataclass(eq=False)
class WindowData:
    """Tensors for one (observation, target) pair.

    ``inp`` is the raw coarse window (4, T, Y, X).  ``coords``/``values``/
    ``field_idx`` flatten all supervised points of all target frames;
    ``colloc`` holds the cell-center collocation coordinates for the
    physics term.
    """

    obs: Container
    target: Container | None
    inp: torch.Tensor
    t0: float
    t1: float
    coords: torch.Tensor | None
    values: torch.Tensor | None
    field_idx: torch.Tensor | None
    colloc: torch.Tensor | None

    @property
    def n_points(self) -> int:
        return 0 if self.coords is None else self.coords.shape[0]


def _window_input(obs: Container) -> torch.Tensor:
    # stored payload is (4, nt, x, y); conv layout wants (4, t, y, x)
    return torch.from_numpy(
        np.ascontiguousarray(obs.fields.transpose(0, 1, 3, 2))
    )


def _check_pair(obs: Container, target: Container,
                allow_ra_mismatch: bool = False) -> None:
    if not obs.is_observation:
        raise FormatError("input file is not an observation container")
    if target.is_observation:
        raise FormatError("target file is not a full trajectory")
    same = (obs.nx == target.nx and obs.ny == target.ny
            and obs.lx == target.lx and obs.ly == target.ly)
    if not same:
        raise FormatError(
            f"observation grid {obs.nx}x{obs.ny} does not match target "
            f"{target.nx}x{target.ny}"
        )
    # imperfect-model targets legitimately carry a different Rayleigh
    # number than the observations they answer to
    ra_ok = allow_ra_mismatch or obs.rayleigh == target.rayleigh
    if not ra_ok or obs.prandtl != target.prandtl:
        raise FormatError("observation/target physical parameters differ")
    t0, t1 = obs.times[0], obs.times[-1]
    if target.times[0] < t0 - 1e-12 or target.times[-1] > t1 + 1e-12:
        raise FormatError(
            f"target frames [{target.times[0]}, {target.times[-1]}] fall "
            f"outside the observation window [{t0}, {t1}]"
        )


def load_window(obs_path, target_path=None, *, target_stride: int = 1,
                allow_ra_mismatch: bool = False) -> WindowData:
    """Read one pair of files into training-ready tensors.

    ``target_stride`` keeps every stride-th target frame for supervision
    and collocation; the frame times themselves are unchanged.
    ``allow_ra_mismatch`` admits targets produced by an imperfect model
    whose header Rayleigh number differs from the observations'.
    """
    if target_stride < 1:
        raise ValueError("target_stride must be >= 1")
    obs = read_container(obs_path)
    inp = _window_input(obs)
    t0, t1 = float(obs.times[0]), float(obs.times[-1])
    if target_path is None:
        return WindowData(obs=obs, target=None, inp=inp, t0=t0, t1=t1,
                          coords=None, values=None, field_idx=None,
                          colloc=None)
    target = read_container(target_path)
    _check_pair(obs, target, allow_ra_mismatch=allow_ra_mismatch)

    nx, ny, lx, ly = target.nx, target.ny, target.lx, target.ly
    frames = np.arange(target.n_snapshots)[::target_stride]
    times = target.times[frames]
    nt = frames.size
    coord_blocks = []
    value_blocks = []
    idx_blocks = []
    for m, name in enumerate(FIELD_NAMES):
        X, Y = staggered_coords(nx, ny, lx, ly, name)
        vals = target.fields[m][frames]
        if name == "v":
            vals = vals[:, :, 1:]  # drop the stored bottom wall row
        npts = X.size
        xs = np.tile(X.ravel(), nt)
        ys = np.tile(Y.ravel(), nt)
        ts = np.repeat(times, npts)
        coord_blocks.append(np.stack([xs, ys, ts], axis=1))
        value_blocks.append(vals.reshape(nt, -1).ravel())
        idx_blocks.append(np.full(nt * npts, m, dtype=np.int64))
    coords = torch.from_numpy(np.concatenate(coord_blocks))
    values = torch.from_numpy(np.concatenate(value_blocks))
    field_idx = torch.from_numpy(np.concatenate(idx_blocks))

    Xc, Yc = center_coords(nx, ny, lx, ly)
    xs = np.tile(Xc.ravel(), nt)
    ys = np.tile(Yc.ravel(), nt)
    ts = np.repeat(times, Xc.size)
    colloc = torch.from_numpy(np.stack([xs, ys, ts], axis=1))

    return WindowData(obs=obs, target=target, inp=inp, t0=t0, t1=t1,
                      coords=coords, values=values, field_idx=field_idx,
                      colloc=colloc)
