"""Statistical checks: KS tests, power-law slopes, tail plateaus."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np
from scipy import stats as _st

from .errors import WindowError


@dataclass(frozen=True)
class FitReport:
    estimate: float
    stderr: float
    residual_norm: float
    window: tuple[float, float]

    def __post_init__(self):
        if not self.stderr >= 0:
            raise ValueError("stderr must be non-negative")

    def as_dict(self):
        d = asdict(self)
        d["window"] = list(self.window)
        return d


class KSResult(NamedTuple):
    statistic: float
    p_value: float


def ks_two_sample(a, b) -> KSResult:
    """Two-sample Kolmogorov-Smirnov statistic with the asymptotic p-value."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be non-empty")
    r = _st.ks_2samp(a, b, method="asymp")
    return KSResult(float(r.statistic), float(r.pvalue))


def ks_normal(a) -> KSResult:
    """One-sample KS distance to the standard normal."""
    a = np.asarray(a, dtype=np.float64)
    if a.size == 0:
        raise ValueError("sample must be non-empty")
    r = _st.kstest(a, "norm", method="asymp")
    return KSResult(float(r.statistic), float(r.pvalue))


def loglog_slope(points, sigma=None) -> FitReport:
    """Least-squares slope of ``log value`` against ``log n``.

    ``sigma`` optionally gives the standard error of each ``log value``;
    without it the stderr comes from the residual scatter.
    """
    pts = [(float(n), float(v)) for n, v in points]
    if len(pts) < 3:
        raise ValueError("need at least three points")
    if any(n <= 0 or v <= 0 for n, v in pts):
        raise ValueError("loglog_slope needs positive n and values")
    x = np.log([p[0] for p in pts])
    y = np.log([p[1] for p in pts])
    w = np.ones_like(x) if sigma is None else 1.0 / np.asarray(sigma, dtype=np.float64) ** 2
    xm = np.sum(w * x) / np.sum(w)
    ym = np.sum(w * y) / np.sum(w)
    sxx = np.sum(w * (x - xm) ** 2)
    slope = float(np.sum(w * (x - xm) * (y - ym)) / sxx)
    resid = y - ym - slope * (x - xm)
    if sigma is None:
        dof = len(x) - 2
        s2 = float(np.sum(resid**2) / dof) if dof > 0 else 0.0
        se = math.sqrt(s2 / sxx)
    else:
        se = math.sqrt(1.0 / sxx)
    return FitReport(slope, se, float(np.sqrt(np.mean(resid**2))), (float(math.exp(x.min())), float(math.exp(x.max()))))


def tail_window(n: int, v: float) -> tuple[float, float]:
    """``[sqrt(n) log(n)**3, n v - log n]``, where the precise slowdown tail applies."""
    ln = math.log(n)
    return math.sqrt(n) * ln**3, n * v - ln


def tail_plateau(points, n: int, v: float, window=None) -> FitReport:
    """Estimate ``K0`` from tail points ``(x, p)`` or ``(x, p, stderr)``.

    Each point gives ``p x**2 / (n v - x)``; the estimate is their
    inverse-variance weighted mean (plain mean without stderrs).  Tail
    counts from one sample are nested and hence positively correlated, so
    the reported stderr is the weighted mean of the individual stderrs,
    the fully-correlated bound.  ``residual_norm`` is the relative RMS
    spread around the plateau.
    """
    lo, hi = tail_window(n, v) if window is None else window
    pts = [tuple(map(float, p)) for p in points]
    if not pts:
        raise ValueError("no tail points")
    for p in pts:
        if not lo <= p[0] <= hi:
            raise WindowError(f"x={p[0]:.6g} outside the tail window [{lo:.6g}, {hi:.6g}]")
    x = np.array([p[0] for p in pts])
    k = np.array([p[1] for p in pts]) * x * x / (n * v - x)
    if all(len(p) > 2 for p in pts):
        se = np.array([p[2] for p in pts]) * x * x / (n * v - x)
        if np.any(se <= 0):
            w = np.ones_like(k)
            se_est = 0.0
        else:
            w = 1.0 / se**2
            se_est = float(np.sum(w * se) / np.sum(w))
    else:
        w = np.ones_like(k)
        se_est = float(np.std(k, ddof=1) / math.sqrt(len(k))) if len(k) > 1 else 0.0
    est = float(np.sum(w * k) / np.sum(w))
    spread = float(np.sqrt(np.sum(w * (k - est) ** 2) / np.sum(w)))
    rel = spread / abs(est) if est != 0 else float("inf")
    return FitReport(est, se_est, rel, (float(x.min()), float(x.max())))
