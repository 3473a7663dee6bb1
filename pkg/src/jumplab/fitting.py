"""Power-law fits for sweep data.

Exponent and prefactor come from ordinary least squares on log-log data; the
confidence interval is a percentile residual bootstrap (200 resamples by
default).  The fit window drops the largest scale while its residual exceeds
3x the fit RMS, which cuts grossly pre-asymptotic points.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class PowerLawFit:
    exponent: float
    exponent_ci: tuple            # (lo, hi) percentile bootstrap
    prefactor: float              # exp(intercept), i.e. value at scale 1
    r_squared: float
    deltas: np.ndarray            # scales used, ascending
    excluded: tuple               # scales dropped by the window rule
    residuals: np.ndarray         # log-space residuals on the final window
    segment_exponents: np.ndarray  # pairwise slopes, a curvature diagnostic
    n_boot: int
    ci_level: float


def _ols_loglog(x, y):
    slope, intercept = np.polyfit(x, y, 1)
    fit = slope * x + intercept
    resid = y - fit
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return slope, intercept, resid, r2


def fit_power_law(deltas, values, n_boot=200, ci_level=0.95, seed=0,
                  min_points=3) -> PowerLawFit:
    """Fit values ~ C * delta^alpha on log-log axes with a bootstrap CI.

    Requires at least ``min_points`` (3) scales with positive values.
    """
    deltas = np.asarray(deltas, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(deltas) != len(values):
        raise ValidationError("deltas and values must have equal length")
    if len(deltas) < min_points:
        raise ValidationError(f"power-law fit needs >= {min_points} scales")
    if np.any(deltas <= 0) or np.any(values <= 0):
        raise ValidationError("power-law fit needs positive scales and values")
    order = np.argsort(deltas)
    d = deltas[order]
    v = values[order]

    excluded = []
    while True:
        x = np.log(d)
        y = np.log(v)
        slope, intercept, resid, r2 = _ols_loglog(x, y)
        rms = float(np.sqrt(np.mean(resid**2)))
        # Drop the largest scale while it is a clear pre-asymptotic outlier.
        # The raw residual is leverage-damped beyond usefulness on short
        # sweeps, so the test uses the deleted (leave-largest-out) residual
        # against 3x the full-fit RMS.
        if len(d) > min_points and rms > 0:
            s_sub, i_sub, _, _ = _ols_loglog(x[:-1], y[:-1])
            pred_resid = y[-1] - (s_sub * x[-1] + i_sub)
            if abs(pred_resid) > 3.0 * rms:
                excluded.append(float(d[-1]))
                d = d[:-1]
                v = v[:-1]
                continue
        break

    rng = np.random.default_rng(seed)
    centered = resid - resid.mean()
    slopes = np.empty(n_boot)
    for b in range(n_boot):
        rs = rng.choice(centered, size=len(centered), replace=True)
        slopes[b] = np.polyfit(x, slope * x + intercept + rs, 1)[0]
    tail = 100.0 * (1.0 - ci_level) / 2.0
    lo, hi = np.percentile(slopes, [tail, 100.0 - tail])

    seg = np.diff(y) / np.diff(x)
    return PowerLawFit(exponent=float(slope), exponent_ci=(float(lo), float(hi)),
                       prefactor=float(np.exp(intercept)), r_squared=r2,
                       deltas=d, excluded=tuple(excluded), residuals=resid,
                       segment_exponents=seg, n_boot=n_boot, ci_level=ci_level)


def fit_slope(x, y):
    """Plain OLS slope with R^2, for linear diagnostics (decay fits)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    slope, intercept, resid, r2 = _ols_loglog(x, y)  # same algebra, no logs
    return float(slope), float(intercept), r2
