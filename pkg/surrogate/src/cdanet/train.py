"""Training loop, mode flags, and checkpoint persistence.

The loss is a normalized data misfit plus ``pde_loss_weight`` times the
physics residual; both terms are sampled in per-step batches that cover
every stored target point, respectively every cell-center collocation
point, once per epoch.  Mode 2 redraws observation noise and additive
weight noise at each epoch start; with both levels at zero it runs the
identical operation sequence as mode 1, so fixed seeds reproduce mode-1
checkpoints bit for bit.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import replace

import numpy as np
import torch

from .config import (SurrogateConfig, TrainPlan, config_from_dict,
                     config_hash, config_to_dict)
from .data import WindowData, field_stats, load_window
from .infer import predict_field_grid
from .metrics import rrmse
from .model import SurrogateModel, build_model
from .pde import residual_loss

__all__ = [
    "TrainingError",
    "CheckpointError",
    "train",
    "save_checkpoint",
    "load_checkpoint",
    "CKPT_FORMAT",
    "CKPT_VERSION",
]

CKPT_FORMAT = "cdanet-checkpoint"
CKPT_VERSION = 1


class TrainingError(RuntimeError):
    pass


class CheckpointError(ValueError):
    pass


def _check_windows(windows: list[WindowData]) -> None:
    first = windows[0].obs
    for w in windows:
        o = w.obs
        same = (o.nx == first.nx and o.ny == first.ny and o.lx == first.lx
                and o.ly == first.ly and o.s_factor == first.s_factor
                and o.t_factor == first.t_factor)
        if not same:
            raise TrainingError(
                "training windows disagree on grid or coarsening factors"
            )
        if o.rayleigh != first.rayleigh or o.prandtl != first.prandtl:
            raise TrainingError(
                "training windows disagree on physical parameters"
            )


def _perturb_weights(model: SurrogateModel, sigma_mod: float,
                     gen: torch.Generator) -> None:
    # additive noise scaled by each parameter tensor's own standard
    # deviation, drawn fresh and kept for the epoch's updates
    with torch.no_grad():
        for p in model.parameters():
            sigma_layer = float(p.detach().std(correction=0)) \
                if p.numel() > 1 else 0.0
            if sigma_layer > 0.0:
                eps = torch.randn(p.shape, generator=gen,
                                  dtype=p.dtype) * (sigma_mod * sigma_layer)
                p.add_(eps)


def _validation_rrmse(model: SurrogateModel, val: WindowData) -> float:
    obs, target = val.obs, val.target
    with torch.no_grad():
        feats = model.encode(val.inp)
    pred = predict_field_grid(model, feats, val.t0, val.t1, target.nx,
                              target.ny, target.lx, target.ly,
                              target.times, "T")
    return rrmse(target.temperature, pred)


def train(plan: TrainPlan, seed: int | None = None):
    """Run one training job; returns (model, meta, history).

    ``history`` has one entry per epoch with the mean data and physics
    losses over the epoch's steps and the end-of-epoch validation RRMSE
    of temperature (NaN when the plan has no validation pair).
    """
    cfg = plan.model if seed is None else replace(plan.model, seed=seed)
    windows = [load_window(o, f, target_stride=plan.target_stride,
                           allow_ra_mismatch=(plan.mode == 3))
               for o, f in plan.train_pairs]
    _check_windows(windows)
    val = load_window(*plan.val_pair) if plan.val_pair else None
    pde_batch = cfg.pde_batch_size or cfg.batch_size

    mean, std = field_stats([w.target for w in windows])
    first = windows[0].obs
    model = build_model(cfg, mean, std, first.lx, first.ly)
    rayleigh = plan.ra_assumed if plan.ra_assumed else first.rayleigh
    prandtl = first.prandtl
    lam = cfg.pde_loss_weight

    opt = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    g_shuffle = torch.Generator().manual_seed(cfg.seed + 1)
    g_noise = torch.Generator().manual_seed(cfg.seed + 2)
    f_std = model.f_std

    history = []
    pde_cursor = [0] * len(windows)
    pde_perm = [None] * len(windows)
    for epoch in range(cfg.epochs):
        inputs = []
        for w in windows:
            inp = w.inp
            if plan.mode == 2 and cfg.sigma_obs > 0.0:
                inp = inp + cfg.sigma_obs * torch.randn(
                    inp.shape, generator=g_noise, dtype=inp.dtype)
            inputs.append(inp)
        if plan.mode == 2 and cfg.sigma_mod > 0.0:
            _perturb_weights(model, cfg.sigma_mod, g_noise)

        queues = []
        for wi, w in enumerate(windows):
            perm = torch.randperm(w.n_points, generator=g_shuffle)
            queues.append([
                (wi, perm[i: i + cfg.batch_size])
                for i in range(0, w.n_points, cfg.batch_size)
            ])
        schedule = [item for group in itertools.zip_longest(*queues)
                    for item in group if item is not None]

        sums = {"data": 0.0, "pde": 0.0}
        for wi, idx in schedule:
            w = windows[wi]
            feats = model.encode(inputs[wi])
            c = w.coords[idx]
            out = model.query(feats, w.t0, w.t1, c[:, 0], c[:, 1], c[:, 2])
            fidx = w.field_idx[idx]
            res = (out[torch.arange(len(fidx)), fidx] - w.values[idx]) \
                / f_std[fidx]
            loss_data = (res * res).mean()
            loss = loss_data
            loss_pde = torch.zeros(())
            if lam > 0.0:
                m = w.colloc.shape[0]
                if pde_perm[wi] is None or pde_cursor[wi] >= m:
                    pde_perm[wi] = torch.randperm(m, generator=g_shuffle)
                    pde_cursor[wi] = 0
                take = pde_perm[wi][
                    pde_cursor[wi]: pde_cursor[wi] + pde_batch]
                pde_cursor[wi] += pde_batch
                pc = w.colloc[take]

                def predict(x, y, t):
                    return model.query(feats, w.t0, w.t1, x, y, t)

                loss_pde = residual_loss(predict, pc[:, 0], pc[:, 1],
                                         pc[:, 2], rayleigh, prandtl)
                loss = loss + lam * loss_pde
            step_data = loss_data.detach().item()
            step_pde = loss_pde.detach().item()
            if not math.isfinite(step_data + lam * step_pde):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}: data="
                    f"{step_data} pde={step_pde} "
                    f"(lr={cfg.learning_rate}, batch={cfg.batch_size})"
                )
            opt.zero_grad()
            loss.backward()
            opt.step()
            sums["data"] += step_data
            sums["pde"] += step_pde

        n_steps = len(schedule)
        entry = {
            "epoch": epoch,
            "loss_data": sums["data"] / n_steps,
            "loss_pde": sums["pde"] / n_steps,
            "val_rrmse": _validation_rrmse(model, val) if val else None,
        }
        history.append(entry)

    meta = {
        "mode": plan.mode,
        "ra_assumed": rayleigh,
        "rayleigh": first.rayleigh,
        "prandtl": prandtl,
        "s_factor": first.s_factor,
        "t_factor": first.t_factor,
        "nx": first.nx,
        "ny": first.ny,
        "lx": first.lx,
        "ly": first.ly,
        "dt": first.dt,
        "seed": cfg.seed,
        "n_windows": len(windows),
    }
    return model, meta, history


def save_checkpoint(path, model: SurrogateModel, meta: dict,
                    history: list) -> None:
    torch.save({
        "format": CKPT_FORMAT,
        "version": CKPT_VERSION,
        "config": config_to_dict(model.cfg),
        "config_hash": config_hash(model.cfg),
        "state_dict": model.state_dict(),
        "meta": dict(meta),
        "history": [dict(h) for h in history],
    }, path)


def load_checkpoint(path):
    """Returns (model, meta, history); validates format and version."""
    try:
        data = torch.load(path, weights_only=True)
    except Exception as exc:
        raise CheckpointError(f"unreadable checkpoint: {exc}") from exc
    if not isinstance(data, dict) or data.get("format") != CKPT_FORMAT:
        raise CheckpointError("not a model checkpoint file")
    if data.get("version") != CKPT_VERSION:
        raise CheckpointError(
            f"checkpoint version {data.get('version')} unsupported "
            f"(expected {CKPT_VERSION})"
        )
    cfg = config_from_dict(data["config"])
    if config_hash(cfg) != data["config_hash"]:
        raise CheckpointError("checkpoint config hash mismatch")
    state = data["state_dict"]
    meta = data["meta"]
    model = SurrogateModel(cfg, state["f_mean"], state["f_std"],
                           meta["lx"], meta["ly"]).to(torch.float64)
    model.load_state_dict(state)
    model.eval()
    return model, meta, data["history"]
