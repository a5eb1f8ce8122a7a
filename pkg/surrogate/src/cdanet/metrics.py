"""Error metrics and the shared CSV reporting schema.

Definitions and column layouts match the solver-side toolkit so rows from
both tools can be concatenated and fed to the same report generator:
RRMSE is RMSE over the reference RMS, the squared-error measure is the
ensemble mean of the midpoint-rule integral of squared error, and scalar
member summaries are time averages over the final fraction of the window.
"""

from __future__ import annotations

import csv

import numpy as np

__all__ = [
    "MetricError",
    "rms",
    "mae",
    "rmse",
    "rrmse",
    "plateau_value",
    "series_stack",
    "fit_power_law",
    "RUN_KEY_COLUMNS",
    "MEMBER_SERIES_COLUMNS",
    "ENSEMBLE_SUMMARY_COLUMNS",
    "POWER_LAW_COLUMNS",
    "write_member_series_csv",
    "write_ensemble_summary_csv",
    "write_power_law_csv",
]


class MetricError(ValueError):
    pass


def rms(f) -> float:
    f = np.asarray(f, dtype=float)
    return float(np.sqrt(np.mean(f * f)))


def mae(reference, predicted) -> float:
    r = np.asarray(reference)
    p = np.asarray(predicted)
    if r.shape != p.shape:
        raise MetricError(f"shape mismatch {r.shape} vs {p.shape}")
    return float(np.mean(np.abs(p - r)))


def rmse(reference, predicted) -> float:
    r = np.asarray(reference)
    p = np.asarray(predicted)
    if r.shape != p.shape:
        raise MetricError(f"shape mismatch {r.shape} vs {p.shape}")
    return rms(p - r)


def rrmse(reference, predicted) -> float:
    denom = rms(reference)
    if denom == 0.0:
        raise MetricError("degenerate reference: zero norm")
    return rmse(reference, predicted) / denom


def plateau_value(times, values, fraction: float = 0.25) -> float:
    """Mean of ``values`` over the final ``fraction`` of the time window."""
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.size == 0:
        raise MetricError("empty series")
    t_cut = t[-1] - fraction * (t[-1] - t[0])
    sel = t >= t_cut
    return float(np.mean(v[sel]))


def series_stack(reference, predicted) -> dict[str, np.ndarray]:
    """Per-frame mae/rmse/rrmse for (nt, ...) stacks."""
    ref = np.asarray(reference, dtype=float)
    pred = np.asarray(predicted, dtype=float)
    if ref.shape != pred.shape:
        raise MetricError(f"shape mismatch {ref.shape} vs {pred.shape}")
    nt = ref.shape[0]
    out = {k: np.empty(nt) for k in ("mae", "rmse", "rrmse")}
    for n in range(nt):
        out["mae"][n] = mae(ref[n], pred[n])
        out["rmse"][n] = rmse(ref[n], pred[n])
        denom = rms(ref[n])
        out["rrmse"][n] = np.nan if denom == 0.0 else out["rmse"][n] / denom
    return out


def fit_power_law(sigmas, lambdas, threshold: float = 0.0):
    """Least-squares log-log line over points with sigma > threshold.

    Returns (exponent, prefactor, r2, n_points).  The threshold excludes
    the floor-dominated cells below the resolvable scaling range.
    """
    s = np.asarray(sigmas, dtype=float)
    lam = np.asarray(lambdas, dtype=float)
    if s.shape != lam.shape or s.ndim != 1:
        raise MetricError("sigma/lambda arrays must be 1-D and equal length")
    if np.any(s <= 0) or np.any(lam <= 0):
        raise MetricError("power-law fit needs strictly positive inputs")
    sel = s > threshold
    if np.count_nonzero(sel) < 2:
        raise MetricError("need at least two points above the threshold")
    ls = np.log(s[sel])
    ll = np.log(lam[sel])
    slope, intercept = np.polyfit(ls, ll, 1)
    fitted = slope * ls + intercept
    ss_res = float(np.sum((ll - fitted) ** 2))
    ss_tot = float(np.sum((ll - np.mean(ll)) ** 2))
    if ss_tot > 0:
        r2 = 1.0 - ss_res / ss_tot
    else:
        r2 = 1.0 if ss_res < 1e-24 else 0.0
    return (float(slope), float(np.exp(intercept)), r2,
            int(np.count_nonzero(sel)))


# Shared report schema: every row carries the full parameter tuple and
# seeds so any single run is reproducible from its row alone.

RUN_KEY_COLUMNS = (
    "scenario", "rayleigh", "prandtl", "nx", "ny", "lx", "ly", "dt",
    "s_factor", "t_factor", "sigma_obs", "sigma_mod", "ra_assumed",
    "mu_u", "mu_t", "t_window", "reference_seed", "base_seed",
)

MEMBER_SERIES_COLUMNS = RUN_KEY_COLUMNS + (
    "member", "member_seed", "variable", "time", "mae", "rmse", "rrmse",
)

ENSEMBLE_SUMMARY_COLUMNS = RUN_KEY_COLUMNS + (
    "variable", "n_members", "n_failed", "status", "plateau_fraction",
    "plateau_mean", "plateau_std", "plateau_q25", "plateau_q50",
    "plateau_q75", "plateau_min", "mean_field_plateau",
    "improvement_factor", "lambda_plateau",
)

POWER_LAW_COLUMNS = RUN_KEY_COLUMNS + (
    "variable", "n_members", "lambda_plateau", "fit_exponent",
    "fit_prefactor", "fit_r2", "fit_threshold", "fit_n_points",
)


def _write_csv(path, rows, columns) -> None:
    rows = list(rows)
    for row in rows:
        missing = set(columns) - set(row)
        if missing:
            raise MetricError(f"row missing columns {sorted(missing)}")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(columns),
                                extrasaction="ignore")
        writer.writeheader()
        writer.writerows(rows)


def write_member_series_csv(path, rows) -> None:
    _write_csv(path, rows, MEMBER_SERIES_COLUMNS)


def write_ensemble_summary_csv(path, rows) -> None:
    _write_csv(path, rows, ENSEMBLE_SUMMARY_COLUMNS)


def write_power_law_csv(path, rows) -> None:
    _write_csv(path, rows, POWER_LAW_COLUMNS)
