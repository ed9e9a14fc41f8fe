"""
Sparse linear-Gaussian dynamic Bayesian network.

Each channel is regressed on every channel's past ``max_lag`` samples. The
per-channel objective

    (1 / 2T) * sum_t (y_t - b - x_t . w)**2 + sum_j lam_j * |w_j|

is minimised by proximal gradient descent (ISTA) with a backtracking line
search. Intercepts are not penalised. The fitted model gives Gaussian
conditional densities ``N(y_t; yhat_t, sigma_c**2)`` for every sample whose
parents are observed.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import IndexOutOfRange, NonFiniteInput, NonSquare, SeriesTooShort, ChannelMismatch
from .series import Recording

__all__ = [
    "DbnModel",
    "EdgePriorMatrix",
    "LassoFit",
    "soft_threshold",
    "lasso_ista",
    "lambda_max",
    "lagged_design",
    "learn",
    "conditional_probability",
    "conditional_densities",
    "normalize_ccm_priors",
    "DENSITY_FLOOR",
]

DENSITY_FLOOR = 1e-12
MAX_ITER = 10_000
REL_TOL = 1e-8


def soft_threshold(v, t):
    """Proximal map of ``t * |.|``: ``sign(v) * max(|v| - t, 0)``."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("threshold must be non-negative")
    out = np.sign(v) * np.maximum(np.abs(v) - t, 0.0)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class EdgePriorMatrix:
    """Normalised coupling strengths, ``strengths[to][from]`` in [0, 1], zero diagonal."""

    strengths: np.ndarray

    def __post_init__(self):
        s = np.array(self.strengths, dtype=float)
        if s.ndim != 2 or s.shape[0] != s.shape[1]:
            raise NonSquare("prior matrix must be square")
        if np.any(s < 0) or np.any(s > 1) or np.any(np.diag(s) != 0):
            raise ValueError("prior strengths must lie in [0, 1] with a zero diagonal")
        s.setflags(write=False)
        object.__setattr__(self, "strengths", s)


def normalize_ccm_priors(raw_rho) -> EdgePriorMatrix:
    """Clamp negatives, zero the diagonal, then divide by the largest entry."""
    m = np.array(raw_rho, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NonSquare(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NonFiniteInput("raw coupling matrix has NaN or Inf")
    m = np.maximum(m, 0.0)
    np.fill_diagonal(m, 0.0)
    top = m.max() if m.size else 0.0
    if top > 0:
        m = m / top
    return EdgePriorMatrix(m)


@dataclass(frozen=True)
class DbnModel:
    """Fitted lagged network.

    ``weights[to, from, lag - 1]`` is the coefficient of channel ``from`` at
    ``lag`` samples in the past on channel ``to``.
    """

    weights: np.ndarray
    intercepts: np.ndarray
    noise_vars: np.ndarray
    max_lag: int
    lam: float
    channels: tuple = ()
    objective_trace: tuple = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        c = w.shape[0]
        if w.shape != (c, c, self.max_lag):
            raise ValueError("weights must have shape (channels, channels, max_lag)")
        nv = np.array(self.noise_vars, dtype=float)
        if np.any(nv <= 0) or not np.all(np.isfinite(w)):
            raise ValueError("noise variances must be positive and weights finite")
        for name, arr in (("weights", w), ("noise_vars", nv),
                          ("intercepts", np.array(self.intercepts, dtype=float))):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not self.channels:
            object.__setattr__(self, "channels", tuple(f"ch{i}" for i in range(c)))
        object.__setattr__(self, "channels", tuple(self.channels))

    @property
    def n_channels(self) -> int:
        return self.weights.shape[0]

    def parents(self, channel: int) -> list:
        """``(from_channel, lag)`` pairs with a nonzero weight into ``channel``."""
        f, lag = np.nonzero(self.weights[channel])
        return [(int(a), int(b) + 1) for a, b in zip(f, lag)]

    def adjacency(self) -> np.ndarray:
        """Boolean ``(to, from)`` matrix: any nonzero lag."""
        return np.any(self.weights != 0, axis=2)

    def strength(self) -> np.ndarray:
        """Sum of absolute lag weights per ``(to, from)``."""
        return np.abs(self.weights).sum(axis=2)

    def channel_index(self, label) -> int:
        if isinstance(label, (int, np.integer)):
            return int(label)
        try:
            return self.channels.index(label)
        except ValueError:
            raise ChannelMismatch(f"channel {label!r} not in model {self.channels}") from None

    # ---- persistence -----------------------------------------------------

    def to_dict(self) -> dict:
        to, fr, lag = np.nonzero(self.weights)
        triplets = [[int(a), int(b), int(c) + 1, float(self.weights[a, b, c])]
                    for a, b, c in zip(to, fr, lag)]
        return {
            "max_lag": int(self.max_lag),
            "lambda": float(self.lam),
            "channels": list(self.channels),
            "weights": triplets,
            "intercepts": [float(v) for v in self.intercepts],
            "noise_vars": [float(v) for v in self.noise_vars],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "DbnModel":
        c = len(d["channels"])
        L = int(d["max_lag"])
        w = np.zeros((c, c, L))
        for to, fr, lag, val in d["weights"]:
            w[int(to), int(fr), int(lag) - 1] = float(val)
        return cls(w, np.array(d["intercepts"], dtype=float),
                   np.array(d["noise_vars"], dtype=float), L, float(d["lambda"]),
                   tuple(d["channels"]))

    @classmethod
    def from_json(cls, text: str) -> "DbnModel":
        return cls.from_dict(json.loads(text))


# --------------------------------------------------------------------------
# solver
# --------------------------------------------------------------------------

@dataclass
class LassoFit:
    coef: np.ndarray
    intercept: float
    objective: list
    n_iter: int
    converged: bool


def lagged_design(data: np.ndarray, max_lag: int):
    """Design matrix of all channels' lags 1..max_lag.

    Column ``lag_index * C + from`` holds ``data[t - lag, from]`` for
    ``t = max_lag .. N-1``. Returns ``(X, Y)`` with ``Y = data[max_lag:]``.
    """
    n, c = data.shape
    cols = [data[max_lag - lag: n - lag] for lag in range(1, max_lag + 1)]
    return np.concatenate(cols, axis=1), data[max_lag:]


def _objective(X, y, w, b, pen):
    r = y - b - X @ w
    return float(r @ r) / (2.0 * y.size) + float(np.sum(pen * np.abs(w)))


def _power_iteration(G: np.ndarray, n_iter: int = 100) -> float:
    if G.shape[0] == 0:
        return 1.0
    v = np.ones(G.shape[0]) / math.sqrt(G.shape[0])
    est = 0.0
    for _ in range(n_iter):
        gv = G @ v
        nrm = float(np.linalg.norm(gv))
        if nrm == 0.0:
            return 1.0
        v = gv / nrm
        if abs(nrm - est) <= 1e-10 * nrm:
            est = nrm
            break
        est = nrm
    return est


def lasso_ista(X, y, penalties, max_iter: int = MAX_ITER, rel_tol: float = REL_TOL,
               w0: Optional[np.ndarray] = None) -> LassoFit:
    """ISTA with backtracking for ``(1/2T)||y - b - Xw||^2 + sum(pen * |w|)``.

    The intercept is eliminated by centring, so only ``w`` is iterated on.
    Every accepted step satisfies the sufficient-decrease condition, which
    makes the objective sequence non-increasing.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    T, p = X.shape
    pen = np.broadcast_to(np.asarray(penalties, dtype=float), (p,))
    xm, ym = X.mean(axis=0), y.mean()
    Xc, yc = X - xm, y - ym
    G = Xc.T @ Xc / T
    c = Xc.T @ yc / T
    L = _power_iteration(G)
    step = 1.0 / L if L > 0 else 1.0
    w = np.zeros(p) if w0 is None else np.array(w0, dtype=float)

    def smooth(v):
        r = yc - Xc @ v
        return float(r @ r) / (2.0 * T)

    f = smooth(w)
    obj = [f + float(np.sum(pen * np.abs(w)))]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        grad = G @ w - c
        while True:
            w_new = soft_threshold(w - step * grad, step * pen)
            d = w_new - w
            f_new = smooth(w_new)
            if f_new <= f + float(grad @ d) + float(d @ d) / (2.0 * step) + 1e-15 * abs(f):
                break
            step *= 0.5
        F_new = f_new + float(np.sum(pen * np.abs(w_new)))
        if F_new > obj[-1]:
            # rounding-level uptick at the optimum; keep the previous iterate
            converged = True
            break
        w, f = w_new, f_new
        obj.append(F_new)
        if abs(obj[-2] - F_new) <= rel_tol * max(abs(obj[-2]), 1e-300):
            converged = True
            break
    intercept = float(ym - xm @ w)
    return LassoFit(w, intercept, obj, it, converged)


def lambda_max(X, y) -> float:
    """Smallest uniform penalty for which the all-zero coefficient vector is optimal."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    Xc = X - X.mean(axis=0)
    return float(np.max(np.abs(Xc.T @ (y - y.mean()))) / y.size) if X.shape[1] else 0.0


def _penalty_vector(lam: float, priors: Optional[EdgePriorMatrix], to: int, c: int,
                    max_lag: int) -> np.ndarray:
    per_from = np.full(c, float(lam))
    if priors is not None:
        per_from = lam * (1.0 - priors.strengths[to])
    return np.tile(per_from, max_lag)


def learn(rec: Recording, max_lag: int = 2, lam: float = 0.01,
          priors: Optional[EdgePriorMatrix] = None, workers: int = 1,
          max_iter: int = MAX_ITER, rel_tol: float = REL_TOL) -> DbnModel:
    """Fit the sparse lagged network to ``rec``.

    Parameters
    ----------
    rec : Recording
    max_lag : int
        Parents are every channel at lags ``1..max_lag``.
    lam : float
        l1 strength. With ``priors`` the edge ``from -> to`` is penalised by
        ``lam * (1 - priors.strengths[to, from])``.
    priors : EdgePriorMatrix, optional
    workers : int
        Threads used to fit target channels in parallel.

    Returns
    -------
    DbnModel
        ``objective_trace`` holds each channel's objective history.
    """
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    max_lag = int(max_lag)
    data = rec.as_array()
    n, c = data.shape
    if not np.all(np.isfinite(data)):
        raise NonFiniteInput("recording has NaN or Inf")
    if n <= max_lag + c * max_lag:
        raise SeriesTooShort(
            f"{n} samples is too few for {c} channels at max_lag={max_lag}")
    if priors is not None and priors.strengths.shape != (c, c):
        raise ChannelMismatch("prior matrix does not match the channel count")
    X, Y = lagged_design(data, max_lag)

    def fit(to):
        return lasso_ista(X, Y[:, to], _penalty_vector(lam, priors, to, c, max_lag),
                          max_iter=max_iter, rel_tol=rel_tol)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            fits = list(pool.map(fit, range(c)))
    else:
        fits = [fit(to) for to in range(c)]

    W = np.zeros((c, c, max_lag))
    b = np.zeros(c)
    nv = np.zeros(c)
    for to, res in enumerate(fits):
        W[to] = res.coef.reshape(max_lag, c).T
        b[to] = res.intercept
        resid = Y[:, to] - res.intercept - X @ res.coef
        nv[to] = max(float(np.mean(resid * resid)), DENSITY_FLOOR)
    return DbnModel(W, b, nv, max_lag, float(lam), tuple(rec.labels),
                    tuple(tuple(f.objective) for f in fits))


# --------------------------------------------------------------------------
# conditionals
# --------------------------------------------------------------------------

def _model_data(model: DbnModel, rec: Recording) -> np.ndarray:
    if rec.n_channels != model.n_channels:
        raise ChannelMismatch(
            f"recording has {rec.n_channels} channels, model has {model.n_channels}")
    return rec.as_array()


def conditional_densities(model: DbnModel, rec: Recording, channel) -> np.ndarray:
    """Floored Gaussian density of every sample of ``channel`` given its parents.

    Entries before ``max_lag`` (parents unobserved) are NaN.
    """
    c = model.channel_index(channel)
    data = _model_data(model, rec)
    L = model.max_lag
    out = np.full(data.shape[0], np.nan)
    if data.shape[0] <= L:
        return out
    X, Y = lagged_design(data, L)
    coef = model.weights[c].T.reshape(-1)
    pred = model.intercepts[c] + X @ coef
    var = model.noise_vars[c]
    dens = np.exp(-0.5 * (Y[:, c] - pred) ** 2 / var) / math.sqrt(2.0 * math.pi * var)
    out[L:] = np.maximum(dens, DENSITY_FLOOR)
    return out


def conditional_probability(model: DbnModel, rec: Recording, channel, time_index: int) -> float:
    """Density ``N(y_t; yhat_t, sigma^2)`` of one sample, floored at 1e-12."""
    n = len(rec)
    if not model.max_lag <= time_index < n:
        raise IndexOutOfRange(
            f"time_index {time_index} outside [{model.max_lag}, {n}) for max_lag={model.max_lag}")
    c = model.channel_index(channel)
    data = _model_data(model, rec)
    pred = model.intercepts[c]
    for lag in range(1, model.max_lag + 1):
        pred = pred + float(model.weights[c, :, lag - 1] @ data[time_index - lag])
    var = float(model.noise_vars[c])
    r = float(data[time_index, c]) - pred
    dens = math.exp(-0.5 * r * r / var) / math.sqrt(2.0 * math.pi * var)
    return max(dens, DENSITY_FLOOR)
