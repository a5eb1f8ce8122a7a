"""Experiment harness: reference runs, observations, sweeps, reports.

CLI (installed as ``rbcda``)::

    rbcda reference      --config cfg.ini --out traj.bin [--seed N]
    rbcda observe  IN    --out obs.bin --s-factor S [--t-factor T]
                         [--sigma X] [--seed N]
    rbcda cda-sweep REF  --plan plan.json [--out DIR] [--workers N]
                         [--seed N]
    rbcda scenario3-gen  --config cfg.ini --plan plan.json [--out DIR]
                         [--workers N] [--seed N]
    rbcda report MEMBERS.csv --out DIR

Sweeps fan members out over a worker pool (static member partition, fork
start method, results aggregated in member order), so outputs are bitwise
independent of ``--workers``.  A diverging member never aborts a sweep: it
becomes a failed CSV row and the cell summary is flagged incomplete.

Every CSV row carries the full parameter tuple and seeds, so any single
run is reproducible from its row alone; ``report`` rebuilds ensemble
summaries and power-law fits from the member-series CSV without touching
binaries (the mean-field and improvement columns need member fields and
are NaN there).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import multiprocessing
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .cda import NudgingParams, downscale
from .config import (
    ConfigError,
    RunConfig,
    TimeSpec,
    load_config,
    validate,
)
from .metrics import (
    EnsembleAccumulator,
    ensemble_mean_improvement,
    fit_power_law,
    ks_normality,
    plateau_value,
    rms,
    write_ensemble_summary_csv,
    write_ks_profile_csv,
    write_member_series_csv,
    write_power_law_csv,
)
from .observations import (
    CoarseObservation,
    ModelNoiseSpec,
    add_obs_noise,
    coarsen,
    member_seed,
    perturb_cda_model,
    write_observation,
)
from .solver import BlowUpError, simulate
from .trajio import Trajectory, read_trajectory, write_trajectory

SCENARIOS = (
    "cda_obs_noise",
    "cda_model_noise",
    "cda_combined",
    "ensemble_size_study",
    "ra_sensitivity",
    "st_sensitivity",
    "scenario3_datagen",
    "surrogate_eval",
)

# Tuned nudging coefficient for the default desk scale (see tune_mu).
DEFAULT_MU = 10.0

# Ensembles below this size give a meaningless fitted-Gaussian KS test;
# profiles are emitted only at or above it.
KS_MIN_MEMBERS = 20


@dataclass(frozen=True)
class ExperimentPlan:
    """One experiment-matrix description, loadable from JSON.

    The model-noise axis perturbs the downscaler's assumed Rayleigh
    number: ra_assumed = ra_true * (1 + sigma_mod), so sigma_mod = 0.3
    reproduces the canonical 1.3x mismatch.
    """

    scenario: str
    sigma_obs_grid: tuple[float, ...] = ()
    sigma_mod_grid: tuple[float, ...] = ()
    s_factors: tuple[int, ...] = (4,)
    t_factors: tuple[int, ...] = (1,)
    n_members: int = 1
    ra_values: tuple[float, ...] = ()
    output_dir: str = "."
    mu_u: float = DEFAULT_MU
    mu_t: float = DEFAULT_MU
    member_sizes: tuple[int, ...] = ()
    n_trajectories: int = 2
    variable: str = "T"

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if self.n_members < 1:
            raise ValueError("n_members must be >= 1")
        needs_obs = self.scenario in ("cda_obs_noise", "cda_combined",
                                      "ensemble_size_study")
        needs_mod = self.scenario in ("cda_model_noise", "cda_combined")
        if needs_obs and not self.sigma_obs_grid:
            raise ValueError(
                f"scenario {self.scenario} needs a nonempty sigma_obs_grid"
            )
        if needs_mod and not self.sigma_mod_grid:
            raise ValueError(
                f"scenario {self.scenario} needs a nonempty sigma_mod_grid"
            )
        if not self.s_factors or not self.t_factors:
            raise ValueError("s_factors and t_factors must be nonempty")
        if self.member_sizes and max(self.member_sizes) > self.n_members:
            raise ValueError("member_sizes cannot exceed n_members")


_PLAN_TUPLE_FIELDS = {
    "sigma_obs_grid": float,
    "sigma_mod_grid": float,
    "s_factors": int,
    "t_factors": int,
    "ra_values": float,
    "member_sizes": int,
}


def plan_from_dict(data: dict) -> ExperimentPlan:
    known = set(ExperimentPlan.__dataclass_fields__)
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown plan keys {sorted(unknown)}")
    kwargs = dict(data)
    for key, cast in _PLAN_TUPLE_FIELDS.items():
        if key in kwargs:
            kwargs[key] = tuple(cast(v) for v in kwargs[key])
    return ExperimentPlan(**kwargs)


def load_plan(path) -> ExperimentPlan:
    with open(path, "r", encoding="utf-8") as fh:
        return plan_from_dict(json.load(fh))


def save_plan(plan: ExperimentPlan, path) -> None:
    data = {k: (list(v) if isinstance(v, tuple) else v)
            for k, v in plan.__dict__.items()}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Pipeline stages.


def run_reference(config: RunConfig, out_path) -> Trajectory:
    """Simulate and persist one reference trajectory."""
    for warning in validate(config):
        print(f"warning: {warning}", file=sys.stderr)
    traj = simulate(config)
    write_trajectory(traj, out_path)
    return traj


def make_observation(traj: Trajectory, s_factor: int, t_factor: int,
                     sigma_obs: float, seed: int,
                     out_path=None) -> CoarseObservation:
    obs = coarsen(traj, s_factor, t_factor)
    obs = add_obs_noise(obs, sigma_obs, seed)
    if out_path is not None:
        write_observation(obs, out_path)
    return obs


def _run_key(scenario, config, s, t, sigma_obs, sigma_mod, ra_assumed,
             nudging, t_window, reference_seed, base_seed):
    grid = config.grid
    return {
        "scenario": scenario,
        "rayleigh": config.physical.rayleigh,
        "prandtl": config.physical.prandtl,
        "nx": grid.nx,
        "ny": grid.ny,
        "lx": grid.lx,
        "ly": grid.ly,
        "dt": config.time.dt,
        "s_factor": s,
        "t_factor": t,
        "sigma_obs": sigma_obs,
        "sigma_mod": sigma_mod,
        "ra_assumed": ra_assumed,
        "mu_u": nudging.mu_u,
        "mu_t": nudging.mu_t,
        "t_window": t_window,
        "reference_seed": reference_seed,
        "base_seed": base_seed,
    }


# Worker context: set in the parent before the pool forks, inherited
# copy-on-write so member tasks only ship small argument tuples.
_CTX: dict = {}


def _set_member_context(config, obs_clean, ref_fields, eval_steps, nudging,
                        t_window, variable) -> None:
    _CTX.clear()
    _CTX.update(
        config=config, obs_clean=obs_clean, ref_fields=ref_fields,
        eval_steps=eval_steps, nudging=nudging, t_window=t_window,
        variable=variable,
    )


def _member_task(args):
    """One downscaling member; returns reduced metric payloads only."""
    member, sigma_obs, seed = args
    config = _CTX["config"]
    obs = add_obs_noise(_CTX["obs_clean"], sigma_obs, seed)
    eval_steps = _CTX["eval_steps"]
    idx = {int(s): i for i, s in enumerate(eval_steps)}
    nt = len(eval_steps)
    grid = config.grid
    var = _CTX["variable"]
    fields = np.empty((nt, grid.nx, grid.ny + (1 if var == "v" else 0)))

    def tap(k, state):
        i = idx.get(k)
        if i is None:
            return
        if var == "T":
            fields[i] = state.temperature
        elif var == "u":
            fields[i] = state.u
        elif var == "v":
            fields[i] = state.v
        else:
            fields[i] = state.pressure

    try:
        downscale(obs, config, _CTX["nudging"], None, _CTX["t_window"],
                  tap=tap, record=False)
    except BlowUpError as exc:
        return {"member": member, "seed": seed, "status": "failed",
                "error": str(exc), "fields": None}
    return {"member": member, "seed": seed, "status": "ok", "error": "",
            "fields": fields}


def _map_members(tasks, workers: int):
    """Ordered member results, inline for one worker, forked pool above."""
    if workers <= 1:
        for t in tasks:
            yield _member_task(t)
        return
    ctx = multiprocessing.get_context("fork")
    with ctx.Pool(processes=workers) as pool:
        yield from pool.imap(_member_task, tasks, chunksize=1)


def _eval_grid(traj: Trajectory):
    """Snapshot-step indices and times shared by reference and members."""
    steps = np.round(
        (traj.times - traj.times[0]) / traj.dt
    ).astype(int)
    return steps, traj.times


def run_cda_sweep(plan: ExperimentPlan, reference: Trajectory, out_dir,
                  workers: int = 1, base_seed: int = 0) -> dict[str, Path]:
    """The experiment matrix: per-cell member ensembles, metrics, CSVs."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    nudging = NudgingParams(plan.mu_u, plan.mu_t,
                            velocity_only=(plan.mu_t == 0.0))
    nudging.require_active()

    eval_steps, eval_times = _eval_grid(reference)
    t_window = float(eval_times[-1] - eval_times[0])
    if t_window <= 0:
        raise ValueError("reference trajectory spans no time window")
    config = RunConfig(
        physical=reference.physical,
        grid=reference.grid,
        time=TimeSpec(dt=reference.dt, t_final=t_window,
                      save_every=max(int(eval_steps[-1]), 1)),
        seed=reference.seed,
    )
    var = plan.variable
    ref_fields = {"u": reference.u, "v": reference.v,
                  "T": reference.temperature, "p": reference.pressure}[var]
    cell_area = reference.grid.dx * reference.grid.dy

    sigma_obs_grid = plan.sigma_obs_grid or (0.0,)
    sigma_mod_grid = plan.sigma_mod_grid or (0.0,)
    if plan.scenario == "ra_sensitivity" and plan.ra_values:
        # Sensitivity to the downscaler's assumed Rayleigh number against
        # one fixed reference; expressed on the model-noise axis.
        ra_true = reference.physical.rayleigh
        sigma_mod_grid = tuple(ra / ra_true - 1.0 for ra in plan.ra_values)
    member_rows, summary_rows, power_rows, ks_rows = [], [], [], []

    for s in plan.s_factors:
        for t in plan.t_factors:
            obs_clean = coarsen(reference, s, t)
            lambda_by_sigma: dict[float, tuple[dict, float]] = {}
            for sigma_mod in sigma_mod_grid:
                ra_assumed = reference.physical.rayleigh * (1.0 + sigma_mod)
                model = config
                if sigma_mod != 0.0:
                    spec = ModelNoiseSpec(sigma_mod=sigma_mod,
                                          target="cda_rayleigh",
                                          ra_assumed=ra_assumed)
                    model = replace(
                        config,
                        physical=perturb_cda_model(config.physical, spec),
                    )
                for sigma_obs in sigma_obs_grid:
                    key = _run_key(
                        plan.scenario, model, s, t, sigma_obs, sigma_mod,
                        ra_assumed, nudging, t_window, reference.seed,
                        base_seed,
                    )
                    _set_member_context(model, obs_clean, ref_fields,
                                        eval_steps, nudging, t_window, var)
                    acc = EnsembleAccumulator(ref_fields, eval_times,
                                              cell_area, var)
                    tasks = [
                        (m, sigma_obs, member_seed(base_seed, m))
                        for m in range(plan.n_members)
                    ]
                    failed, finals = [], {}
                    for res in _map_members(tasks, workers):
                        if res["status"] != "ok":
                            failed.append(res)
                            member_rows.append(key | {
                                "member": res["member"],
                                "member_seed": res["seed"],
                                "variable": var,
                                "time": "",
                                "mae": "", "rmse": "",
                                "rrmse": f"failed: {res['error']}",
                            })
                            continue
                        series = acc.add_member(res["fields"])
                        finals[res["member"]] = res["fields"][-1]
                        for i, tv in enumerate(eval_times):
                            member_rows.append(key | {
                                "member": res["member"],
                                "member_seed": res["seed"],
                                "variable": var,
                                "time": repr(float(tv)),
                                "mae": repr(float(series.mae[i])),
                                "rmse": repr(float(series.rmse[i])),
                                "rrmse": repr(float(series.rrmse[i])),
                            })
                    if not acc.member_series:
                        summary_rows.append(key | {
                            "variable": var, "n_members": 0,
                            "n_failed": len(failed), "status": "empty",
                            "plateau_fraction": 0.25,
                            "plateau_mean": "nan", "plateau_std": "nan",
                            "plateau_q25": "nan", "plateau_q50": "nan",
                            "plateau_q75": "nan", "plateau_min": "nan",
                            "mean_field_plateau": "nan",
                            "improvement_factor": "nan",
                            "lambda_plateau": "nan",
                        })
                        continue
                    result = acc.finalize()
                    summ = result.summary()
                    _, factor = ensemble_mean_improvement(result)
                    status = "complete" if not failed else "incomplete"
                    summary_rows.append(key | {
                        "variable": var,
                        "n_members": summ["n_members"],
                        "n_failed": len(failed),
                        "status": status,
                        "plateau_fraction": 0.25,
                        "plateau_mean": repr(summ["plateau_mean"]),
                        "plateau_std": repr(summ["plateau_std"]),
                        "plateau_q25": repr(summ["plateau_q25"]),
                        "plateau_q50": repr(summ["plateau_q50"]),
                        "plateau_q75": repr(summ["plateau_q75"]),
                        "plateau_min": repr(summ["plateau_min"]),
                        "mean_field_plateau": repr(summ["mean_field_plateau"]),
                        "improvement_factor": repr(factor),
                        "lambda_plateau": repr(summ["lambda_plateau"]),
                    })
                    if plan.scenario == "ensemble_size_study":
                        # Stabilization report: plateau statistics over
                        # member prefixes of increasing size.  Mean-field
                        # and lambda need fields, so prefixes carry NaN.
                        for size in sorted(set(plan.member_sizes)):
                            if not 0 < size < result.n_members:
                                continue
                            pre = result.member_plateau[:size]
                            summary_rows.append(key | {
                                "variable": var,
                                "n_members": size,
                                "n_failed": len(failed),
                                "status": "prefix",
                                "plateau_fraction": 0.25,
                                "plateau_mean": repr(float(np.mean(pre))),
                                "plateau_std": repr(
                                    float(np.std(pre, ddof=1))
                                    if size > 1 else 0.0),
                                "plateau_q25": repr(float(
                                    np.quantile(pre, 0.25))),
                                "plateau_q50": repr(float(
                                    np.quantile(pre, 0.50))),
                                "plateau_q75": repr(float(
                                    np.quantile(pre, 0.75))),
                                "plateau_min": repr(float(np.min(pre))),
                                "mean_field_plateau": "nan",
                                "improvement_factor": "nan",
                                "lambda_plateau": "nan",
                            })
                    if sigma_obs > 0 and not failed:
                        lambda_by_sigma[sigma_obs] = (
                            key, summ["lambda_plateau"],
                        )
                    if (len(finals) >= KS_MIN_MEMBERS and var == "T"
                            and sigma_obs > 0):
                        ks_rows.extend(_ks_profile_rows(
                            key, var, finals, reference.grid,
                        ))
                if len(lambda_by_sigma) >= 2:
                    sigmas = sorted(lambda_by_sigma)
                    lams = [lambda_by_sigma[x][1] for x in sigmas]
                    fit = fit_power_law(sigmas, lams)
                    for x in sigmas:
                        power_rows.append(lambda_by_sigma[x][0] | {
                            "variable": var, "n_members": plan.n_members,
                            "lambda_plateau": repr(lambda_by_sigma[x][1]),
                            "fit_exponent": repr(fit.exponent),
                            "fit_prefactor": repr(fit.prefactor),
                            "fit_r2": repr(fit.r2),
                            "fit_threshold": repr(fit.threshold),
                            "fit_n_points": fit.n_points,
                        })
                lambda_by_sigma.clear()

    paths = {
        "members": out_dir / "member_series.csv",
        "summary": out_dir / "ensemble_summary.csv",
    }
    write_member_series_csv(paths["members"], member_rows)
    write_ensemble_summary_csv(paths["summary"], summary_rows)
    if power_rows:
        paths["power_law"] = out_dir / "power_law.csv"
        write_power_law_csv(paths["power_law"], power_rows)
    if ks_rows:
        paths["ks_profile"] = out_dir / "ks_profile.csv"
        write_ks_profile_csv(paths["ks_profile"], ks_rows)
    return paths


def _ks_profile_rows(key, var, finals, grid, alpha: float = 0.05):
    """Fitted-Gaussian KS p-values along the horizontal midline."""
    members = sorted(finals)
    j = grid.ny // 2
    samples = np.array([finals[m][:, j] for m in members])
    pvals = ks_normality(samples)
    rows = []
    for i in range(grid.nx):
        p = float(pvals[i])
        degenerate = math.isnan(p)
        rows.append(key | {
            "variable": var,
            "n_members": len(members),
            "line": "midline_y",
            "point_index": i,
            "x": repr((i + 0.5) * grid.dx),
            "y": repr((j + 0.5) * grid.dy),
            "p_value": repr(p),
            "degenerate": int(degenerate),
            "reject_at_05": 0 if degenerate else int(p < alpha),
        })
    return rows


def _scenario3_task(args):
    """One (reference, imperfect downscale) training pair."""
    index, seed = args
    plan: ExperimentPlan = _CTX["plan"]
    config: RunConfig = replace(_CTX["config"], seed=seed)
    out_dir: Path = _CTX["out_dir"]
    s, t = plan.s_factors[0], plan.t_factors[0]
    sigma_mod = plan.sigma_mod_grid[0] if plan.sigma_mod_grid else 0.0

    ref = simulate(config)
    ref_path = out_dir / f"pair{index:03d}_reference.bin"
    write_trajectory(ref, ref_path)
    obs = coarsen(ref, s, t)
    obs_path = out_dir / f"pair{index:03d}_obs.bin"
    write_observation(obs, obs_path)

    ra_true = config.physical.rayleigh
    ra_assumed = ra_true * (1.0 + sigma_mod)
    model = config
    if sigma_mod != 0.0:
        spec = ModelNoiseSpec(sigma_mod=sigma_mod, target="cda_rayleigh",
                              ra_assumed=ra_assumed)
        model = replace(config, physical=perturb_cda_model(config.physical,
                                                           spec))
    nudging = NudgingParams(plan.mu_u, plan.mu_t,
                            velocity_only=(plan.mu_t == 0.0))
    try:
        cda = downscale(obs, model, nudging)
    except BlowUpError as exc:
        return {"index": index, "seed": seed, "status": "failed",
                "error": str(exc)}
    cda_path = out_dir / f"pair{index:03d}_downscaled.bin"
    write_trajectory(cda, cda_path)

    rr = np.array([
        rms(cda.temperature[i] - ref.temperature[i]) / rms(ref.temperature[i])
        for i in range(len(ref.times))
    ])
    plateau = plateau_value(ref.times, rr, 0.25)
    return {
        "index": index, "seed": seed, "status": "ok", "error": "",
        "ra_true": ra_true, "ra_assumed": ra_assumed,
        "sigma_mod": sigma_mod, "s_factor": s, "t_factor": t,
        "plateau_rrmse": plateau,
        "reference": str(ref_path), "observation": str(obs_path),
        "downscaled": str(cda_path),
    }


def run_scenario3(plan: ExperimentPlan, config: RunConfig, out_dir,
                  workers: int = 1, base_seed: int = 0) -> Path:
    """Imperfect-model training pairs: truth at Ra, downscale at assumed Ra."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _CTX.clear()
    _CTX.update(plan=plan, config=config, out_dir=out_dir)
    tasks = [(i, base_seed + i) for i in range(plan.n_trajectories)]
    if workers <= 1:
        results = [_scenario3_task(t) for t in tasks]
    else:
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(processes=workers) as pool:
            results = list(pool.imap(_scenario3_task, tasks, chunksize=1))
    index_path = out_dir / "pairs.csv"
    cols = ["index", "seed", "status", "error", "ra_true", "ra_assumed",
            "sigma_mod", "s_factor", "t_factor", "plateau_rrmse",
            "reference", "observation", "downscaled"]
    with open(index_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore")
        writer.writeheader()
        for row in results:
            writer.writerow({c: row.get(c, "") for c in cols})
    return index_path


# ---------------------------------------------------------------------------
# Report: rebuild summaries from the member-series CSV alone.


def report_from_member_csv(members_csv, out_dir) -> dict[str, Path]:
    """Recompute ensemble summaries and power-law fits from member rows.

    The squared-error integral equals rmse^2 * (lx*ly) on the uniform
    grid, so the lambda series is recoverable from the stored rmse values;
    the mean-field columns need the member fields and stay NaN here.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    key_cols = ("scenario", "rayleigh", "prandtl", "nx", "ny", "lx", "ly",
                "dt", "s_factor", "t_factor", "sigma_obs", "sigma_mod",
                "ra_assumed", "mu_u", "mu_t", "t_window", "reference_seed",
                "base_seed")
    cells: dict[tuple, dict] = {}
    with open(members_csv, "r", newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            key = tuple(row[c] for c in key_cols) + (row["variable"],)
            cell = cells.setdefault(key, {"key_row": row, "members": {},
                                          "failed": set()})
            member = int(row["member"])
            if row["rrmse"].startswith("failed"):
                cell["failed"].add(member)
                continue
            cell["members"].setdefault(member, []).append(
                (float(row["time"]), float(row["rmse"]),
                 float(row["rrmse"]))
            )

    summary_rows, power_rows = [], []
    by_axis: dict[tuple, list] = {}
    for key, cell in sorted(cells.items()):
        base = {c: cell["key_row"][c] for c in key_cols}
        var = cell["key_row"]["variable"]
        plateaus, lam_plateaus = [], []
        area = float(base["lx"]) * float(base["ly"])
        times = None
        lam_sum = None
        for member in sorted(cell["members"]):
            pts = sorted(cell["members"][member])
            t = np.array([p[0] for p in pts])
            rmse = np.array([p[1] for p in pts])
            rrmse = np.array([p[2] for p in pts])
            if times is None:
                times = t
                lam_sum = np.zeros_like(t)
            lam_sum += rmse * rmse * area
            plateaus.append(plateau_value(t, rrmse, 0.25))
        if times is None:
            continue
        n = len(cell["members"])
        lam = plateau_value(times, lam_sum / n, 0.25)
        plateaus = np.array(plateaus)
        summary_rows.append(base | {
            "variable": var,
            "n_members": n,
            "n_failed": len(cell["failed"]),
            "status": "complete" if not cell["failed"] else "incomplete",
            "plateau_fraction": 0.25,
            "plateau_mean": repr(float(np.mean(plateaus))),
            "plateau_std": repr(float(np.std(plateaus, ddof=1))
                                if n > 1 else 0.0),
            "plateau_q25": repr(float(np.quantile(plateaus, 0.25))),
            "plateau_q50": repr(float(np.quantile(plateaus, 0.50))),
            "plateau_q75": repr(float(np.quantile(plateaus, 0.75))),
            "plateau_min": repr(float(np.min(plateaus))),
            "mean_field_plateau": "nan",
            "improvement_factor": "nan",
            "lambda_plateau": repr(lam),
        })
        sigma = float(base["sigma_obs"]) if base["sigma_obs"] else 0.0
        if sigma > 0 and not cell["failed"]:
            axis = tuple(base[c] for c in key_cols
                         if c != "sigma_obs") + (var,)
            by_axis.setdefault(axis, []).append((sigma, lam, base, n))

    for axis, pts in sorted(by_axis.items()):
        if len(pts) < 2:
            continue
        pts.sort()
        fit = fit_power_law([p[0] for p in pts], [p[1] for p in pts])
        for sigma, lam, base, n in pts:
            power_rows.append(base | {
                "variable": axis[-1], "n_members": n,
                "lambda_plateau": repr(lam),
                "fit_exponent": repr(fit.exponent),
                "fit_prefactor": repr(fit.prefactor),
                "fit_r2": repr(fit.r2),
                "fit_threshold": repr(fit.threshold),
                "fit_n_points": fit.n_points,
            })

    paths = {"summary": out_dir / "ensemble_summary_report.csv"}
    write_ensemble_summary_csv(paths["summary"], summary_rows)
    if power_rows:
        paths["power_law"] = out_dir / "power_law_report.csv"
        write_power_law_csv(paths["power_law"], power_rows)
    return paths


# ---------------------------------------------------------------------------
# CLI.


def _add_common(p, config=False, plan=False):
    if config:
        p.add_argument("--config", required=True,
                       help="solver configuration (INI)")
    if plan:
        p.add_argument("--plan", required=True, help="experiment plan (JSON)")
    p.add_argument("--out", help="output file or directory")
    p.add_argument("--workers", type=int, default=1,
                   help="worker processes for member sweeps")
    p.add_argument("--seed", type=int, default=None,
                   help="base seed override")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rbcda",
        description="Convection reference runs, coarse observations, "
                    "nudging-based downscaling sweeps, and CSV reports.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("reference", help="run and persist a reference "
                                         "trajectory")
    _add_common(p, config=True)

    p = sub.add_parser("observe", help="coarsen a trajectory into a noisy "
                                       "observation file")
    p.add_argument("trajectory", help="input trajectory file")
    p.add_argument("--s-factor", type=int, required=True)
    p.add_argument("--t-factor", type=int, default=1)
    p.add_argument("--sigma", type=float, default=0.0,
                   help="observation noise standard deviation")
    _add_common(p)

    p = sub.add_parser("cda-sweep", help="run the downscaling ensemble "
                                         "matrix against a reference")
    p.add_argument("reference", help="reference trajectory file")
    _add_common(p, plan=True)

    p = sub.add_parser("scenario3-gen", help="generate imperfect-model "
                                             "training pairs")
    _add_common(p, config=True, plan=True)

    p = sub.add_parser("report", help="rebuild summary CSVs from a "
                                      "member-series CSV")
    p.add_argument("members", help="member-series CSV")
    _add_common(p)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "reference":
            config = load_config(args.config)
            if args.seed is not None:
                config = replace(config, seed=args.seed)
            if not args.out:
                raise ValueError("reference needs --out")
            traj = run_reference(config, args.out)
            print(f"wrote {args.out}: {len(traj.times)} snapshots, "
                  f"max CFL {traj.max_cfl:.4f}")
        elif args.command == "observe":
            traj = read_trajectory(args.trajectory)
            if not args.out:
                raise ValueError("observe needs --out")
            obs = make_observation(traj, args.s_factor, args.t_factor,
                                   args.sigma, args.seed or 0, args.out)
            print(f"wrote {args.out}: {obs.n_snapshots} snapshots at "
                  f"{obs.coarse_shape}, sigma={obs.sigma_obs}")
        elif args.command == "cda-sweep":
            plan = load_plan(args.plan)
            traj = read_trajectory(args.reference)
            out_dir = args.out or plan.output_dir
            paths = run_cda_sweep(plan, traj, out_dir,
                                  workers=args.workers,
                                  base_seed=args.seed or 0)
            for name, path in paths.items():
                print(f"{name}: {path}")
        elif args.command == "scenario3-gen":
            plan = load_plan(args.plan)
            config = load_config(args.config)
            out_dir = args.out or plan.output_dir
            index = run_scenario3(plan, config, out_dir,
                                  workers=args.workers,
                                  base_seed=args.seed or 0)
            print(f"pairs index: {index}")
        elif args.command == "report":
            if not args.out:
                raise ValueError("report needs --out")
            paths = report_from_member_csv(args.members, args.out)
            for name, path in paths.items():
                print(f"{name}: {path}")
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
