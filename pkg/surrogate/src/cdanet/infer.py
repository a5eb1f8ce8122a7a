"""Whole-grid evaluation of a trained model and trajectory-file output."""

from __future__ import annotations

import numpy as np
import torch

from .data import staggered_coords
from .model import SurrogateModel
from .trajio import Container, FormatError, write_fine_trajectory

__all__ = ["predict_field_grid", "infer_fields", "write_inference"]

_CHUNK = 65536


def _query_chunked(model: SurrogateModel, feats, t0: float, t1: float,
                   coords: torch.Tensor) -> torch.Tensor:
    outs = []
    with torch.no_grad():
        for k in range(0, coords.shape[0], _CHUNK):
            c = coords[k: k + _CHUNK]
            outs.append(model.query(feats, t0, t1, c[:, 0], c[:, 1],
                                    c[:, 2]))
    return torch.cat(outs)


def predict_field_grid(model: SurrogateModel, feats, t0: float, t1: float,
                       nx: int, ny: int, lx: float, ly: float, times,
                       field: str) -> np.ndarray:
    """One variable on its staggered sample points at the given times.

    Returns (nt, nx, ny) for u/T/p and (nt, nx, ny+1) for v with the wall
    rows set exactly to zero.
    """
    times = np.asarray(times, dtype=np.float64)
    X, Y = staggered_coords(nx, ny, lx, ly, field)
    npts = X.size
    xs = np.tile(X.ravel(), len(times))
    ys = np.tile(Y.ravel(), len(times))
    ts = np.repeat(times, npts)
    coords = torch.from_numpy(np.stack([xs, ys, ts], axis=1))
    out = _query_chunked(model, feats, t0, t1, coords)
    col = {"u": 0, "v": 1, "T": 2, "p": 3}[field]
    vals = out[:, col].numpy().reshape(len(times), *X.shape)
    if field == "v":
        full = np.zeros((len(times), nx, ny + 1))
        full[:, :, 1:ny] = vals
        return full
    return np.ascontiguousarray(vals)


def _check_obs(obs: Container, meta: dict) -> None:
    if not obs.is_observation:
        raise FormatError("inference input must be an observation container")
    if (obs.s_factor != meta["s_factor"]
            or obs.t_factor != meta["t_factor"]):
        raise FormatError(
            f"incompatible factors: trained for S={meta['s_factor']}, "
            f"T={meta['t_factor']}, observation has S={obs.s_factor}, "
            f"T={obs.t_factor}"
        )


def infer_fields(model: SurrogateModel, obs: Container, meta: dict,
                 times=None, fields=("u", "v", "T", "p")) -> dict:
    """Evaluate the model on an observation window.

    ``times`` defaults to the observation frame times and must stay inside
    the window.  Returns {field: array} plus the evaluation times.
    """
    _check_obs(obs, meta)
    inp = torch.from_numpy(
        np.ascontiguousarray(obs.fields.transpose(0, 1, 3, 2))
    )
    t0, t1 = float(obs.times[0]), float(obs.times[-1])
    if times is None:
        times = obs.times
    times = np.asarray(times, dtype=np.float64)
    if times.size == 0:
        raise FormatError("no evaluation times")
    if times[0] < t0 - 1e-9 or times[-1] > t1 + 1e-9:
        raise FormatError(
            f"evaluation times [{times[0]}, {times[-1]}] leave the "
            f"observation window [{t0}, {t1}]"
        )
    with torch.no_grad():
        feats = model.encode(inp)
    out = {"times": times}
    for f in fields:
        out[f] = predict_field_grid(model, feats, t0, t1, obs.nx, obs.ny,
                                    obs.lx, obs.ly, times, f)
    return out


def write_inference(model: SurrogateModel, obs: Container, meta: dict,
                    out_path, times=None) -> dict:
    """Run inference and persist the result as a fine trajectory file."""
    res = infer_fields(model, obs, meta, times=times)
    times = res["times"]
    if len(times) > 1:
        cadence = max(1, int(round((times[1] - times[0]) / obs.dt)))
    else:
        cadence = obs.cadence
    write_fine_trajectory(
        out_path,
        nx=obs.nx, ny=obs.ny, lx=obs.lx, ly=obs.ly,
        rayleigh=obs.rayleigh, prandtl=obs.prandtl, dt=obs.dt,
        cadence=cadence, seed=obs.seed, source_hash=obs.source_hash,
        times=times, u=res["u"], v=res["v"], T=res["T"], p=res["p"],
    )
    return res
