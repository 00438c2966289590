"""Small statistics helpers shared by the pipelines."""

import math

import numpy as np
from scipy import stats


def fit_loglog_slope(points):
    """OLS slope of log y on log x.

    Returns
    -------
    (slope, stderr); stderr is 0 for two points.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if pts.shape[0] < 2:
        raise ValueError("need at least two points")
    if np.any(pts <= 0):
        raise ValueError("coordinates must be positive")
    x, y = np.log(pts[:, 0]), np.log(pts[:, 1])
    xc = x - x.mean()
    sxx = float(xc @ xc)
    if sxx == 0:
        raise ValueError("x values must not all coincide")
    slope = float(xc @ (y - y.mean())) / sxx
    if pts.shape[0] == 2:
        return slope, 0.0
    resid = y - y.mean() - slope * xc
    return slope, math.sqrt(float(resid @ resid) / (pts.shape[0] - 2) / sxx)


def wilson_ci(successes, trials, confidence=0.95):
    if trials == 0:
        return 0.0, 1.0
    ci = stats.binomtest(int(successes), int(trials)).proportion_ci(confidence, method="wilson")
    return float(ci.low), float(ci.high)


def censored_median(times, censored):
    """Kaplan–Meier median of right-censored times; inf if survival never drops to 1/2."""
    t = np.asarray(times, dtype=np.float64)
    c = np.asarray(censored, dtype=bool)
    if t.size == 0:
        return math.nan
    order = np.lexsort((c, t))  # events before censorings at equal times
    t, c = t[order], c[order]
    at_risk = t.size
    surv = 1.0
    for ti, ci in zip(t, c):
        if not ci:
            surv *= 1.0 - 1.0 / at_risk
            if surv <= 0.5:
                return float(ti)
        at_risk -= 1
    return math.inf
