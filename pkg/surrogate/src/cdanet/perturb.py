"""Inference-time weight perturbation and the ensemble sweep.

Perturbed inference adds independent Gaussian noise to every learnable
parameter tensor, with per-tensor standard deviation ``sigma_mod`` times
that tensor's own (population) standard deviation.  A zero ``sigma_mod``
draws nothing and reproduces the unperturbed model bit for bit.  The
sweep runs ``n_members`` perturbed inferences per noise level against a
reference trajectory and emits the shared CSV schema.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .infer import infer_fields
from .metrics import (MetricError, fit_power_law, plateau_value, rms,
                      series_stack, write_ensemble_summary_csv,
                      write_member_series_csv, write_power_law_csv)
from .model import SurrogateModel
from .trajio import Container, FormatError, read_container
from .train import load_checkpoint

__all__ = [
    "WeightPerturbation",
    "layer_sigmas",
    "apply_perturbation",
    "member_seed",
    "perturb_sweep",
]


@dataclass(frozen=True)
class WeightPerturbation:
    sigma_mod: float
    seed: int = 0

    def __post_init__(self):
        if self.sigma_mod < 0:
            raise ValueError("sigma_mod must be nonnegative")


def member_seed(base_seed: int, member: int) -> int:
    return base_seed + member


def layer_sigmas(model: SurrogateModel) -> dict[str, float]:
    """Population standard deviation of each parameter tensor."""
    return {
        name: (float(p.detach().std(correction=0)) if p.numel() > 1 else 0.0)
        for name, p in model.named_parameters()
    }


def apply_perturbation(model: SurrogateModel,
                       pert: WeightPerturbation) -> SurrogateModel:
    """Fresh model copy with perturbed parameters (buffers untouched)."""
    copy = SurrogateModel(model.cfg, model.f_mean, model.f_std,
                          model.lx, model.ly).to(torch.float64)
    copy.load_state_dict(model.state_dict())
    copy.eval()
    if pert.sigma_mod == 0.0:
        return copy
    gen = torch.Generator().manual_seed(pert.seed)
    sigmas = layer_sigmas(model)
    with torch.no_grad():
        for name, p in copy.named_parameters():
            sigma_layer = sigmas[name]
            if sigma_layer > 0.0:
                eps = torch.randn(p.shape, generator=gen, dtype=p.dtype) \
                    * (pert.sigma_mod * sigma_layer)
                p.add_(eps)
    return copy


def _reference_at(ref: Container, times: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(ref.times, times)
    if np.any(idx >= len(ref.times)) or not np.allclose(
            ref.times[np.minimum(idx, len(ref.times) - 1)], times,
            rtol=0.0, atol=1e-9):
        raise FormatError(
            "reference frames do not cover the observation times"
        )
    return np.ascontiguousarray(ref.temperature[idx])


def _run_key(obs: Container, ref: Container, meta: dict, sigma_mod: float,
             base_seed: int) -> dict:
    return {
        "scenario": "surrogate_eval",
        "rayleigh": ref.rayleigh,
        "prandtl": ref.prandtl,
        "nx": ref.nx,
        "ny": ref.ny,
        "lx": ref.lx,
        "ly": ref.ly,
        "dt": ref.dt,
        "s_factor": obs.s_factor,
        "t_factor": obs.t_factor,
        "sigma_obs": obs.sigma_obs,
        "sigma_mod": sigma_mod,
        "ra_assumed": meta["ra_assumed"],
        "mu_u": 0.0,
        "mu_t": 0.0,
        "t_window": float(obs.times[-1] - obs.times[0]),
        "reference_seed": ref.seed,
        "base_seed": base_seed,
    }


def perturb_sweep(checkpoint_path, obs_path, ref_path, sigma_grid,
                  n_members: int, base_seed: int, out_dir,
                  plateau_fraction: float = 0.25) -> dict:
    """Perturbed-inference ensembles over a noise-level grid.

    Member and summary statistics measure each perturbed member against
    the reference trajectory; the sigma_mod = 0 cell reports the
    unperturbed floor.  The power-law file instead characterizes the
    noise response: its squared-error measure is each ensemble's mean
    deviation energy from the unperturbed prediction, which isolates the
    perturbation effect from the floor (no representation-error offset,
    no member cross terms), and the log-log fit is taken over the whole
    grid.  Writes member_series.csv, ensemble_summary.csv and
    power_law.csv in the shared schema and returns the in-memory
    reductions.
    """
    sigma_grid = [float(s) for s in sigma_grid]
    if any(s <= 0 for s in sigma_grid):
        raise ValueError("sigma grid entries must be positive")
    if n_members < 1:
        raise ValueError("n_members must be >= 1")
    model, meta, _ = load_checkpoint(checkpoint_path)
    obs = read_container(obs_path)
    ref = read_container(ref_path)
    if ref.is_observation:
        raise FormatError("reference must be a full trajectory")
    times = obs.times
    ref_T = _reference_at(ref, times)
    cell_area = (ref.lx / ref.nx) * (ref.ly / ref.ny)
    ref_rms = np.array([rms(ref_T[n]) for n in range(len(times))])
    if np.any(ref_rms == 0.0):
        raise MetricError("degenerate reference frame (zero norm)")

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    member_rows: list[dict] = []
    summary_rows: list[dict] = []
    results: dict = {"sigma": {}}

    def run_cell(sigma_mod: float, members: list[int],
                 base_T=None) -> dict:
        key = _run_key(obs, ref, meta, sigma_mod, base_seed)
        plateaus = np.empty(len(members))
        field_sum = np.zeros_like(ref_T)
        sq_err_sum = np.zeros(len(times))
        sq_dev_sum = np.zeros(len(times))
        for j, m in enumerate(members):
            seed = member_seed(base_seed, m)
            pert = WeightPerturbation(sigma_mod=sigma_mod, seed=seed)
            pm = apply_perturbation(model, pert)
            fields = infer_fields(pm, obs, meta, fields=("T",))["T"]
            series = series_stack(ref_T, fields)
            plateaus[j] = plateau_value(times, series["rrmse"],
                                        plateau_fraction)
            field_sum += fields
            err = fields - ref_T
            sq_err_sum += np.sum(err * err, axis=(1, 2))
            if base_T is not None:
                dev = fields - base_T
                sq_dev_sum += np.sum(dev * dev, axis=(1, 2))
            for i, tv in enumerate(times):
                member_rows.append(key | {
                    "member": m,
                    "member_seed": seed,
                    "variable": "T",
                    "time": repr(float(tv)),
                    "mae": repr(float(series["mae"][i])),
                    "rmse": repr(float(series["rmse"][i])),
                    "rrmse": repr(float(series["rrmse"][i])),
                })
        mean_field = field_sum / len(members)
        mean_series = series_stack(ref_T, mean_field)
        mean_plateau = plateau_value(times, mean_series["rrmse"],
                                     plateau_fraction)
        lam_series = sq_err_sum * (cell_area / len(members))
        lam_plateau = plateau_value(times, lam_series, plateau_fraction)
        min_member = float(np.min(plateaus))
        factor = (min_member / mean_plateau if mean_plateau > 0
                  else float("inf"))
        summary_rows.append(key | {
            "variable": "T",
            "n_members": len(members),
            "n_failed": 0,
            "status": "complete",
            "plateau_fraction": plateau_fraction,
            "plateau_mean": repr(float(np.mean(plateaus))),
            "plateau_std": repr(float(np.std(plateaus, ddof=1))
                                if len(members) > 1 else 0.0),
            "plateau_q25": repr(float(np.quantile(plateaus, 0.25))),
            "plateau_q50": repr(float(np.quantile(plateaus, 0.50))),
            "plateau_q75": repr(float(np.quantile(plateaus, 0.75))),
            "plateau_min": repr(min_member),
            "mean_field_plateau": repr(mean_plateau),
            "improvement_factor": repr(factor),
            "lambda_plateau": repr(lam_plateau),
        })
        dev_plateau = None
        if base_T is not None:
            dev_series = sq_dev_sum * (cell_area / len(members))
            dev_plateau = plateau_value(times, dev_series,
                                        plateau_fraction)
        return {"plateaus": plateaus, "lambda_plateau": lam_plateau,
                "response_lambda": dev_plateau, "key": key,
                "mean_field": mean_field}

    floor = run_cell(0.0, [0])
    results["lambda0"] = floor["lambda_plateau"]
    results["plateau0"] = float(floor["plateaus"][0])
    base_T = floor["mean_field"]
    for sigma in sigma_grid:
        cell = run_cell(sigma, list(range(n_members)), base_T=base_T)
        cell.pop("mean_field")
        results["sigma"][sigma] = cell

    dev_lams = [results["sigma"][s]["response_lambda"]
                for s in sigma_grid]
    power_rows = []
    fit = None
    if len(sigma_grid) >= 2:
        exponent, prefactor, r2, n_fit = fit_power_law(
            sigma_grid, dev_lams, threshold=0.0)
        fit = {"exponent": exponent, "prefactor": prefactor, "r2": r2,
               "n_points": n_fit, "threshold": 0.0}
        for s, l in zip(sigma_grid, dev_lams):
            power_rows.append(results["sigma"][s]["key"] | {
                "variable": "T",
                "n_members": n_members,
                "lambda_plateau": repr(l),
                "fit_exponent": repr(exponent),
                "fit_prefactor": repr(prefactor),
                "fit_r2": repr(r2),
                "fit_threshold": repr(0.0),
                "fit_n_points": n_fit,
            })
    results["fit"] = fit

    paths = {
        "members": out_dir / "member_series.csv",
        "summary": out_dir / "ensemble_summary.csv",
    }
    write_member_series_csv(paths["members"], member_rows)
    write_ensemble_summary_csv(paths["summary"], summary_rows)
    if power_rows:
        paths["power_law"] = out_dir / "power_law.csv"
        write_power_law_csv(paths["power_law"], power_rows)
    results["paths"] = {k: str(v) for k, v in paths.items()}
    return results
