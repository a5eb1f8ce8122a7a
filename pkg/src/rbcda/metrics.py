"""Error metrics, ensemble statistics, normality tests, power-law fits.

Scalar metrics between a reference field f and a prediction f-hat over the
uniform grid:

* ``mae``   — mean absolute error
* ``rmse``  — root-mean-square error
* ``rrmse`` — rmse normalized by the root-mean-square of the reference
* ``lambda_measure`` — ensemble expectation of the area-weighted squared
  error integral, E[sum (f - f_hat)^2 * dx * dy]

Ensemble reductions use the *plateau* scalar: the time-mean of a metric
over the final fraction (default 25%) of the assimilation window, which is
robust to the oscillation the error series shows after convergence.

The normality check is a one-sample Kolmogorov-Smirnov test against a
Gaussian fitted with the sample mean and (ddof=1) standard deviation,
using the asymptotic p-value.  With a fitted null this is conservative
(p-values cluster near 1 for truly Gaussian samples); that is the intended
behavior, documented here rather than corrected.

CSV schemas emitted by the writers at the bottom are listed in
``MEMBER_SERIES_COLUMNS``, ``ENSEMBLE_SUMMARY_COLUMNS``,
``POWER_LAW_COLUMNS``, and ``KS_PROFILE_COLUMNS`` and documented in the
README.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.stats

__all__ = [
    "MetricError",
    "mae",
    "rmse",
    "rms",
    "rrmse",
    "lambda_measure",
    "plateau_value",
    "MetricSeries",
    "metric_series",
    "EnsembleResult",
    "EnsembleAccumulator",
    "ensemble_metrics",
    "ensemble_mean_improvement",
    "ks_normality",
    "PowerLawFit",
    "fit_power_law",
]


class MetricError(ValueError):
    """Degenerate metric input (zero-norm reference, too few members...)."""


def mae(reference, predicted) -> float:
    """Mean absolute error."""
    r = np.asarray(reference)
    p = np.asarray(predicted)
    if r.shape != p.shape:
        raise MetricError(f"shape mismatch {r.shape} vs {p.shape}")
    return float(np.mean(np.abs(p - r)))


def rms(f) -> float:
    """Root-mean-square of a field."""
    f = np.asarray(f, dtype=float)
    return float(np.sqrt(np.mean(f * f)))


def rmse(reference, predicted) -> float:
    """Root-mean-square error."""
    r = np.asarray(reference)
    p = np.asarray(predicted)
    if r.shape != p.shape:
        raise MetricError(f"shape mismatch {r.shape} vs {p.shape}")
    return rms(p - r)


def rrmse(reference, predicted) -> float:
    """RMSE normalized by the reference RMS; raises on a zero reference."""
    denom = rms(reference)
    if denom == 0.0:
        raise MetricError("degenerate reference: zero norm")
    return rmse(reference, predicted) / denom


def lambda_measure(members, reference, cell_area: float) -> float:
    """Ensemble mean of the discrete squared-error integral.

    ``members`` is an iterable of fields (or an (M, ...) array); the
    integral is the midpoint rule, i.e. sum of squared errors times the
    uniform cell area.
    """
    ref = np.asarray(reference, dtype=float)
    total = 0.0
    count = 0
    for m in members:
        err = np.asarray(m, dtype=float) - ref
        total += float(np.sum(err * err)) * cell_area
        count += 1
    if count == 0:
        raise MetricError("lambda_measure needs at least one member")
    return total / count


def plateau_value(times, values, fraction: float = 0.25) -> float:
    """Mean of ``values`` over the final ``fraction`` of the time window."""
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.size == 0:
        raise MetricError("empty series")
    t_cut = t[-1] - fraction * (t[-1] - t[0])
    sel = t >= t_cut
    return float(np.mean(v[sel]))


@dataclass
class MetricSeries:
    """Per-time error metrics for one variable of one run.

    ``undefined`` flags times where the reference norm is zero and rrmse is
    meaningless (stored as NaN there).
    """

    variable: str
    times: np.ndarray
    mae: np.ndarray
    rmse: np.ndarray
    rrmse: np.ndarray
    undefined: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.undefined is None:
            self.undefined = np.zeros(len(self.times), dtype=bool)
        n = len(self.times)
        for name in ("mae", "rmse", "rrmse", "undefined"):
            if len(getattr(self, name)) != n:
                raise MetricError(f"series length mismatch in {name}")

    def plateau_rrmse(self, fraction: float = 0.25) -> float:
        return plateau_value(self.times, self.rrmse, fraction)


def metric_series(reference, predicted, times, variable: str) -> MetricSeries:
    """Build a MetricSeries from (nt, ...) reference/prediction stacks."""
    ref = np.asarray(reference, dtype=float)
    pred = np.asarray(predicted, dtype=float)
    if ref.shape != pred.shape:
        raise MetricError(f"shape mismatch {ref.shape} vs {pred.shape}")
    nt = ref.shape[0]
    if len(times) != nt:
        raise MetricError("times length mismatch")
    maes = np.empty(nt)
    rmses = np.empty(nt)
    rrmses = np.empty(nt)
    undef = np.zeros(nt, dtype=bool)
    for n in range(nt):
        maes[n] = mae(ref[n], pred[n])
        rmses[n] = rmse(ref[n], pred[n])
        denom = rms(ref[n])
        if denom == 0.0:
            rrmses[n] = np.nan
            undef[n] = True
        else:
            rrmses[n] = rmses[n] / denom
    return MetricSeries(
        variable=variable,
        times=np.asarray(times, dtype=float).copy(),
        mae=maes,
        rmse=rmses,
        rrmse=rrmses,
        undefined=undef,
    )


@dataclass
class EnsembleResult:
    """Member metric series plus ensemble reductions for one sweep cell."""

    variable: str
    times: np.ndarray
    member_series: list
    mean_field_series: MetricSeries
    lambda_series: np.ndarray
    member_plateau: np.ndarray
    plateau_fraction: float

    @property
    def n_members(self) -> int:
        return len(self.member_series)

    def summary(self) -> dict:
        mp = self.member_plateau
        return {
            "n_members": len(mp),
            "plateau_mean": float(np.mean(mp)),
            "plateau_std": float(np.std(mp, ddof=1)) if len(mp) > 1 else 0.0,
            "plateau_q25": float(np.quantile(mp, 0.25)),
            "plateau_q50": float(np.quantile(mp, 0.50)),
            "plateau_q75": float(np.quantile(mp, 0.75)),
            "plateau_min": float(np.min(mp)),
            "mean_field_plateau": self.mean_field_series.plateau_rrmse(
                self.plateau_fraction
            ),
            "lambda_plateau": plateau_value(
                self.times, self.lambda_series, self.plateau_fraction
            ),
        }


class EnsembleAccumulator:
    """Streaming ensemble statistics: members are added one at a time.

    Holding every member's full field history for a large ensemble would
    take gigabytes; this keeps only per-member metric series, the running
    sum of member fields (for the ensemble-mean field), and the running sum
    of squared-error integrals (for the lambda series).
    """

    def __init__(self, reference, times, cell_area: float, variable: str,
                 plateau_fraction: float = 0.25):
        self.reference = np.asarray(reference, dtype=float)
        self.times = np.asarray(times, dtype=float).copy()
        if self.reference.shape[0] != self.times.size:
            raise MetricError("reference/times length mismatch")
        self.cell_area = cell_area
        self.variable = variable
        self.plateau_fraction = plateau_fraction
        self.member_series: list[MetricSeries] = []
        self._field_sum = np.zeros_like(self.reference)
        self._sq_err_sum = np.zeros(self.times.size)

    def add_member(self, fields) -> MetricSeries:
        fields = np.asarray(fields, dtype=float)
        if fields.shape != self.reference.shape:
            raise MetricError(
                f"member shape {fields.shape} != reference "
                f"{self.reference.shape}"
            )
        series = metric_series(self.reference, fields, self.times,
                               self.variable)
        self.member_series.append(series)
        self._field_sum += fields
        err = fields - self.reference
        self._sq_err_sum += np.sum(err * err, axis=tuple(range(1, err.ndim)))
        return series

    def finalize(self) -> EnsembleResult:
        m = len(self.member_series)
        if m < 1:
            raise MetricError("ensemble needs at least one member")
        mean_field = self._field_sum / m
        mean_series = metric_series(self.reference, mean_field, self.times,
                                    self.variable)
        lam = self._sq_err_sum * (self.cell_area / m)
        plateaus = np.array([
            s.plateau_rrmse(self.plateau_fraction) for s in self.member_series
        ])
        return EnsembleResult(
            variable=self.variable,
            times=self.times,
            member_series=self.member_series,
            mean_field_series=mean_series,
            lambda_series=lam,
            member_plateau=plateaus,
            plateau_fraction=self.plateau_fraction,
        )


def ensemble_metrics(member_fields, reference, times, cell_area: float,
                     variable: str = "T",
                     plateau_fraction: float = 0.25) -> EnsembleResult:
    """Convenience wrapper over :class:`EnsembleAccumulator`."""
    acc = EnsembleAccumulator(reference, times, cell_area, variable,
                              plateau_fraction)
    for fields in member_fields:
        acc.add_member(fields)
    return acc.finalize()


def ensemble_mean_improvement(result: EnsembleResult) -> tuple[bool, float]:
    """Is the ensemble-mean field's plateau RRMSE below every member's?

    Returns ``(improved, factor)`` with factor = (minimum member plateau) /
    (mean-field plateau); the factor is ``inf`` when the mean field is
    exact and 1.0 for the degenerate single-member ensemble.
    """
    if result.n_members < 1:
        raise MetricError("empty ensemble")
    if result.n_members == 1:
        return False, 1.0
    mean_plateau = result.mean_field_series.plateau_rrmse(
        result.plateau_fraction
    )
    min_member = float(np.min(result.member_plateau))
    if mean_plateau == 0.0:
        return True, math.inf
    return mean_plateau < min_member, min_member / mean_plateau


def ks_normality(samples, min_members: int = 20) -> np.ndarray:
    """One-sample KS p-values against a fitted Gaussian, per spatial point.

    ``samples`` has shape (n_members, n_points).  The null at each point is
    the Gaussian with that point's sample mean and ddof=1 standard
    deviation; p-values use the asymptotic KS distribution.  Degenerate
    (zero-variance) points get NaN.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim != 2:
        raise MetricError("samples must be (n_members, n_points)")
    n_members, n_points = x.shape
    if n_members < min_members:
        raise MetricError(
            f"need >= {min_members} members for the normality test, "
            f"got {n_members}"
        )
    pvals = np.empty(n_points)
    for k in range(n_points):
        col = x[:, k]
        # constant columns are degenerate even when summation rounding
        # leaves the sample std at ~1e-16 instead of exactly zero
        if np.ptp(col) == 0.0:
            pvals[k] = np.nan
            continue
        mean = float(np.mean(col))
        std = float(np.std(col, ddof=1))
        if std == 0.0 or not math.isfinite(std):
            pvals[k] = np.nan
            continue
        res = scipy.stats.kstest(
            col, scipy.stats.norm(loc=mean, scale=std).cdf, method="asymp"
        )
        pvals[k] = res.pvalue
    return pvals


@dataclass(frozen=True)
class PowerLawFit:
    exponent: float
    prefactor: float
    r2: float
    n_points: int
    threshold: float


def fit_power_law(sigmas, lambdas, threshold: float = 0.0) -> PowerLawFit:
    """Least-squares line in log-log space over points with sigma > threshold.

    Verifies quadratic scaling regimes: for data following
    ``lambda = prefactor * sigma**exponent`` exactly, the fit is exact to
    rounding.  Raises on nonpositive inputs or fewer than two usable points
    (a plateau below ``threshold`` is excluded by the caller's choice of
    threshold, mirroring how scaling ranges are read off above the
    representation-error floor).
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
    return PowerLawFit(
        exponent=float(slope),
        prefactor=float(np.exp(intercept)),
        r2=r2,
        n_points=int(np.count_nonzero(sel)),
        threshold=threshold,
    )


# ---------------------------------------------------------------------------
# CSV emitters.  Every row carries the full parameter tuple and seeds so any
# single run is reproducible from its row alone.

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

KS_PROFILE_COLUMNS = RUN_KEY_COLUMNS + (
    "variable", "n_members", "line", "point_index", "x", "y", "p_value",
    "degenerate", "reject_at_05",
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


def write_ks_profile_csv(path, rows) -> None:
    _write_csv(path, rows, KS_PROFILE_COLUMNS)
