"""
Delay embedding and automatic selection of the delay and dimension.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import SeriesTooShort
from .series import TimeSeries

__all__ = [
    "EmbeddingParams",
    "ShadowManifold",
    "embed",
    "delay_matrix",
    "select_tau",
    "select_dimension",
    "mutual_information_curve",
    "fnn_fraction",
]

FNN_DISTANCE_RATIO = 15.0
FNN_LONELINESS = 2.0
FNN_TARGET = 0.05
MIN_CROSS_MAP_E = 2
# a mutual-information dip counts only if it exceeds this many sampling std
MI_DIP_SIGMAS = 5.0
# ...and the curve must climb back by this fraction of the dip before going lower
MI_RISE_FRACTION = 0.25


@dataclass(frozen=True)
class EmbeddingParams:
    dimension_E: int = 2
    delay_tau: int = 1

    def __post_init__(self):
        if int(self.dimension_E) < 1 or int(self.delay_tau) < 1:
            raise ValueError("embedding dimension and delay must be >= 1")
        object.__setattr__(self, "dimension_E", int(self.dimension_E))
        object.__setattr__(self, "delay_tau", int(self.delay_tau))

    @property
    def E(self) -> int:
        return self.dimension_E

    @property
    def tau(self) -> int:
        return self.delay_tau

    @property
    def span(self) -> int:
        """Number of samples consumed before the first embeddable index."""
        return (self.dimension_E - 1) * self.delay_tau


@dataclass(frozen=True)
class ShadowManifold:
    """Delay vectors of one series.

    Row ``k`` is the point built at original time index ``k + offset``:
    ``[x[k+offset], x[k+offset-tau], ..., x[k+offset-(E-1)tau]]``.
    """

    points: np.ndarray
    source_index_offset: int
    params: EmbeddingParams

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    @property
    def E(self) -> int:
        return self.params.dimension_E

    def time_index(self, rows):
        """Original sample index of manifold row(s)."""
        return np.asarray(rows) + self.source_index_offset


def delay_matrix(x: np.ndarray, E: int, tau: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    span = (E - 1) * tau
    n_pts = x.size - span
    if n_pts < 1:
        raise SeriesTooShort(f"series of length {x.size} too short for E={E}, tau={tau}")
    # column j holds x[i - j*tau] for i = span .. N-1
    cols = [x[span - j * tau: span - j * tau + n_pts] for j in range(E)]
    return np.column_stack(cols)


def embed(series: TimeSeries, params: EmbeddingParams) -> ShadowManifold:
    n = len(series)
    if n <= params.span:
        raise SeriesTooShort(
            f"series {series.label!r} has {n} samples; E={params.E}, tau={params.tau} "
            f"needs more than {params.span}")
    pts = delay_matrix(series.values, params.E, params.tau)
    pts.setflags(write=False)
    return ShadowManifold(pts, params.span, params)


# --------------------------------------------------------------------------
# delay selection
# --------------------------------------------------------------------------

def _histogram_mi(a: np.ndarray, b: np.ndarray, bins: int, edges_a, edges_b) -> float:
    joint, _, _ = np.histogram2d(a, b, bins=[edges_a, edges_b])
    pxy = joint / joint.sum()
    px = pxy.sum(axis=1, keepdims=True)
    py = pxy.sum(axis=0, keepdims=True)
    nz = pxy > 0
    return float(np.sum(pxy[nz] * np.log(pxy[nz] / (px @ py)[nz])))


def mutual_information_curve(x, max_lag: int) -> np.ndarray:
    """Histogram mutual information (nats) between ``x[t]`` and ``x[t+lag]``.

    Entry ``k`` is lag ``k``; lag 0 is included. Uses ``ceil(sqrt(N/5))``
    equal-width bins over the range of the whole series.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    bins = max(2, math.ceil(math.sqrt(n / 5.0)))
    edges = np.linspace(x.min(), x.max(), bins + 1)
    if edges[0] == edges[-1]:
        edges = np.linspace(x.min() - 0.5, x.max() + 0.5, bins + 1)
    out = np.empty(max_lag + 1)
    for lag in range(max_lag + 1):
        out[lag] = _histogram_mi(x[: n - lag], x[lag:], bins, edges, edges)
    return out


def _autocorrelation(x: np.ndarray, max_lag: int) -> np.ndarray:
    x = np.asarray(x, dtype=float) - np.mean(x)
    denom = float(np.dot(x, x))
    if denom == 0.0:
        return np.ones(max_lag + 1)
    return np.array([np.dot(x[: x.size - k], x[k:]) / denom for k in range(max_lag + 1)])


def select_tau(series: TimeSeries, max_lag: int) -> int:
    """Delay at the first minimum of the lagged mutual information.

    The curve is smoothed with a 3-lag running mean, then a local minimum
    is accepted only when it is prominent: its drop below the
    lag-1 value exceeds ``MI_DIP_SIGMAS`` times the sampling std of the
    histogram estimator under independence, ``(B-1)*sqrt(2)/(2N)``, and the
    curve afterwards climbs back by at least that much and by
    ``MI_RISE_FRACTION`` of the drop before reaching a lower value. This
    skips the small dips a smooth orbit produces as it crosses the bin grid,
    and the wander of a curve that has decayed to its noise floor. With no
    accepted minimum the first lag where the autocorrelation falls below
    ``1/e`` is returned (``max_lag`` if never).
    """
    x = series.values
    n = x.size
    max_lag = int(max_lag)
    if max_lag < 1:
        raise ValueError("max_lag must be >= 1")
    if n < 4 * max_lag:
        raise SeriesTooShort(f"need at least {4 * max_lag} samples, got {n}")
    if max_lag == 1:
        return 1
    mi = mutual_information_curve(x, max_lag)
    bins = max(2, math.ceil(math.sqrt(n / 5.0)))
    noise = (bins - 1) * math.sqrt(2.0) / (2.0 * n)
    # running mean over lags 1..max_lag: a smooth orbit crossing the fixed
    # bin grid makes the raw curve zigzag
    sm = mi.copy()
    for k in range(1, max_lag + 1):
        sm[k] = mi[max(1, k - 1): min(max_lag, k + 1) + 1].mean()
    for lag in range(1, max_lag):
        if not (sm[lag] < sm[lag - 1] and sm[lag] <= sm[lag + 1]):
            continue
        depth = sm[1] - sm[lag]
        if depth <= MI_DIP_SIGMAS * noise:
            continue
        # how far the curve climbs before it next goes lower
        later = sm[lag + 1:]
        lower = np.nonzero(later < sm[lag])[0]
        climb = later[: lower[0]] if lower.size else later
        rise = float(climb.max()) - sm[lag] if climb.size else 0.0
        if rise >= max(MI_DIP_SIGMAS * noise, MI_RISE_FRACTION * depth):
            return lag
    acf = _autocorrelation(x, max_lag)
    below = np.nonzero(acf[1:] < 1.0 / math.e)[0]
    return int(below[0] + 1) if below.size else max_lag


# --------------------------------------------------------------------------
# dimension selection
# --------------------------------------------------------------------------

def _nearest_other(points: np.ndarray, block: int = 512):
    """Index and distance of each row's nearest other row (ties to the lower index)."""
    n = points.shape[0]
    idx = np.empty(n, dtype=np.int64)
    dist = np.empty(n)
    for start in range(0, n, block):
        stop = min(start + block, n)
        d2 = np.zeros((stop - start, n))
        for k in range(points.shape[1]):
            diff = points[start:stop, k][:, None] - points[None, :, k]
            d2 += diff * diff
        d2[np.arange(stop - start), np.arange(start, stop)] = np.inf
        j = np.argmin(d2, axis=1)
        idx[start:stop] = j
        dist[start:stop] = np.sqrt(d2[np.arange(stop - start), j])
    return idx, dist


def fnn_fraction(x, E: int, tau: int, ratio: float = FNN_DISTANCE_RATIO,
                 loneliness: float = FNN_LONELINESS) -> float:
    """Fraction of false nearest neighbours when going from E to E+1 dimensions.

    The added coordinate is the sample ``tau`` steps after the newest one of
    each E-dimensional vector, so the test asks whether the present state
    determines the next delay coordinate. (A coordinate further in the past
    is never determined for non-invertible maps such as the logistic map.)
    Neighbour distances below ``1e-9`` of the series std count as exact
    repeats; they are false only if the new coordinate differs by more than
    that tolerance times ``ratio``.
    """
    x = np.asarray(x, dtype=float)
    hi = delay_matrix(x, E + 1, tau)
    lo = hi[:, 1:]
    extra = hi[:, 0]
    j, r = _nearest_other(lo)
    gap = np.abs(extra - extra[j])
    sd = np.std(x)
    tol = 1e-9 * sd
    crit1 = gap > ratio * np.maximum(r, tol)
    r_next = np.sqrt(r * r + gap * gap)
    crit2 = r_next / sd > loneliness if sd > 0 else np.zeros_like(crit1)
    return float(np.mean(crit1 | crit2))


def select_dimension(series: TimeSeries, tau: int, max_E: int,
                     ratio: float = FNN_DISTANCE_RATIO,
                     loneliness: float = FNN_LONELINESS,
                     target: float = FNN_TARGET) -> int:
    """Smallest E >= 2 whose false-nearest-neighbour fraction is below ``target``.

    E = 1 is returned only when ``max_E`` is 1. A single coordinate holds no
    delay at all, so a driver's history could never show up on the
    manifold, even when the channel's own dynamics unfold in one dimension.
    """
    x = series.values
    max_E = int(max_E)
    if max_E < 1:
        raise ValueError("max_E must be >= 1")
    if x.size <= (max_E - 1) * tau + 1:
        raise SeriesTooShort(f"series too short for max_E={max_E}, tau={tau}")
    if max_E == 1:
        return 1
    for E in range(MIN_CROSS_MAP_E, max_E):
        if x.size - E * tau < 2:
            break
        if fnn_fraction(x, E, tau, ratio, loneliness) < target:
            return E
    return max_E
