"""
Linear Granger causality with an in-house F-distribution tail.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .crossmap import pearson
from .errors import LengthMismatch, SeriesTooShort, SingularDesign
from .series import TimeSeries

__all__ = ["GrangerResult", "granger", "f_distribution_sf", "betainc_reg", "granger_strength",
           "granger_prediction_rho"]

EXACT_FIT_RSS = 1e-12


def _betacf(a: float, b: float, x: float, max_iter: int = 10_000, eps: float = 1e-16) -> float:
    """Continued fraction of the incomplete beta function (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = tiny if abs(d) < tiny else d
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            break
    return h


def betainc_reg(a: float, b: float, x: float) -> float:
    """Regularised incomplete beta ``I_x(a, b)``."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(log_front)
    # the continued fraction converges fastest below the distribution's mean
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def f_distribution_sf(x: float, d1: float, d2: float) -> float:
    """Survival function ``P(F > x)`` of the F(d1, d2) distribution."""
    if x <= 0:
        return 1.0
    if math.isinf(x):
        return 0.0
    return betainc_reg(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * x))


@dataclass(frozen=True)
class GrangerResult:
    direction: tuple
    lag_order: int
    f_statistic: float
    p_value: float
    r2_restricted: float
    r2_full: float
    rss_restricted: float = float("nan")
    rss_full: float = float("nan")

    def to_dict(self) -> dict:
        return {
            "direction": list(self.direction), "lag_order": self.lag_order,
            "f_statistic": self.f_statistic, "p_value": self.p_value,
            "r2_restricted": self.r2_restricted, "r2_full": self.r2_full,
        }


def _lags(v: np.ndarray, p: int) -> np.ndarray:
    n = v.size
    return np.column_stack([v[p - k: n - k] for k in range(1, p + 1)])


def _rss(X: np.ndarray, y: np.ndarray) -> float:
    q, r = np.linalg.qr(X)
    diag = np.abs(np.diag(r))
    if diag.size and diag.min() <= 1e-10 * max(diag.max(), 1e-300):
        raise SingularDesign("collinear regressors in the Granger design")
    beta = np.linalg.solve(r, q.T @ y)
    res = y - X @ beta
    return float(res @ res)


def granger(source: TimeSeries, target: TimeSeries, lag_order: int = 1) -> GrangerResult:
    """F test of whether the source's past improves prediction of the target.

    Restricted model: target on an intercept and its own ``lag_order`` lags.
    Full model: additionally the source's lags. An exact full fit
    (``RSS_full < 1e-12``) reports ``F = inf, p = 0``; collinear lags raise
    :class:`SingularDesign`.
    """
    x = np.asarray(source.values if hasattr(source, "values") else source, dtype=float)
    y = np.asarray(target.values if hasattr(target, "values") else target, dtype=float)
    if x.size != y.size:
        raise LengthMismatch("source and target differ in length")
    p = int(lag_order)
    if p < 1:
        raise ValueError("lag_order must be >= 1")
    n = y.size
    if n <= 3 * p + 2:
        raise SeriesTooShort(f"need more than {3 * p + 2} samples for lag_order={p}")
    yt = y[p:]
    T = yt.size
    ones = np.ones((T, 1))
    Xr = np.hstack([ones, _lags(y, p)])
    Xf = np.hstack([Xr, _lags(x, p)])
    rss_r = _rss(Xr, yt)
    rss_f = _rss(Xf, yt)
    tss = float(np.sum((yt - yt.mean()) ** 2))
    r2r = 1.0 - rss_r / tss if tss > 0 else 0.0
    r2f = 1.0 - rss_f / tss if tss > 0 else 0.0
    df2 = T - 2 * p - 1
    labels = (getattr(source, "label", "x"), getattr(target, "label", "y"))
    if rss_f < EXACT_FIT_RSS:
        return GrangerResult(labels, p, math.inf, 0.0, r2r, r2f, rss_r, rss_f)
    F = max(((rss_r - rss_f) / p) / (rss_f / df2), 0.0)
    return GrangerResult(labels, p, F, f_distribution_sf(F, p, df2), r2r, r2f, rss_r, rss_f)


def granger_strength(result: GrangerResult) -> float:
    """Partial correlation of the source's lags with the target: ``sqrt(1 - RSS_f/RSS_r)``.

    A [0, 1] skill score comparable in scale to a cross-map correlation.
    """
    if not result.rss_restricted > 0:
        return 0.0
    return math.sqrt(max(0.0, 1.0 - result.rss_full / result.rss_restricted))


def granger_prediction_rho(source, target, lag_order: int = 1) -> float:
    """Correlation between the target and the full Granger model's fitted values.

    This is the linear counterpart of a cross-map skill: the same statistic
    (correlation of observations with predictions) computed for the
    least-squares predictor that uses both series' pasts.
    """
    x = np.asarray(source.values if hasattr(source, "values") else source, dtype=float)
    y = np.asarray(target.values if hasattr(target, "values") else target, dtype=float)
    p = int(lag_order)
    yt = y[p:]
    X = np.hstack([np.ones((yt.size, 1)), _lags(y, p), _lags(x, p)])
    beta, *_ = np.linalg.lstsq(X, yt, rcond=None)
    return pearson(yt, X @ beta)
