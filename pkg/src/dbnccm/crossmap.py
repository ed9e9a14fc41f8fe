"""
Convergent cross mapping, standard and DBN-informed.

The shadow manifold of the source predicts the target. For every manifold
row the E+1 nearest neighbours get a Gaussian kernel weight ``u_i`` and, in
DBN-informed mode, a conditional density ``p_i`` of the target at the
neighbour's time. The hybrid weights ``w_i = u_i p_i / sum_j u_j p_j``
average the target values at the neighbours' times.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .dbn import DbnModel, conditional_densities
from .embedding import EmbeddingParams, ShadowManifold, embed
from .errors import (ChannelMismatch, DegenerateNeighborhood, LengthMismatch,
                     NotEnoughPoints)
from .neighbors import NeighborSet, knn_batch
from .series import Recording, TimeSeries

__all__ = [
    "KernelConfig",
    "CcmResult",
    "ConvergenceCurve",
    "kernel_weights",
    "kernel_weight_matrix",
    "hybrid_weights",
    "cross_map",
    "cross_map_manifold",
    "convergence",
    "pearson",
]

BANDWIDTH_MODES = ("per_query_mean", "per_query_nearest", "global_fixed")


@dataclass(frozen=True)
class KernelConfig:
    bandwidth_mode: str = "per_query_mean"
    fixed_sigma: Optional[float] = None

    def __post_init__(self):
        if self.bandwidth_mode not in BANDWIDTH_MODES:
            raise ValueError(f"bandwidth_mode must be one of {BANDWIDTH_MODES}")
        if (self.bandwidth_mode == "global_fixed") != (self.fixed_sigma is not None):
            raise ValueError("fixed_sigma is required exactly when bandwidth_mode is global_fixed")
        if self.fixed_sigma is not None and not self.fixed_sigma > 0:
            raise ValueError("fixed_sigma must be positive")

    def to_dict(self) -> dict:
        return {"bandwidth_mode": self.bandwidth_mode, "fixed_sigma": self.fixed_sigma}


@dataclass(frozen=True)
class CcmResult:
    rho: float
    predictions: np.ndarray
    observed: np.ndarray
    direction: tuple
    library_size: int
    mode: str
    degenerate: bool = False
    params: Optional[EmbeddingParams] = None
    kernel: Optional[KernelConfig] = None
    neighbor_indices: Optional[np.ndarray] = field(default=None, repr=False)
    weights: Optional[np.ndarray] = field(default=None, repr=False)
    rows: Optional[np.ndarray] = field(default=None, repr=False)

    def to_dict(self) -> dict:
        d = {
            "direction": list(self.direction),
            "mode": self.mode,
            "rho": float(self.rho),
            "library_size": int(self.library_size),
            "degenerate": bool(self.degenerate),
        }
        if self.params is not None:
            d["embedding"] = {"E": self.params.E, "tau": self.params.tau}
        if self.kernel is not None:
            d["kernel"] = self.kernel.to_dict()
        return d


@dataclass(frozen=True)
class ConvergenceCurve:
    library_sizes: tuple
    rhos: tuple
    rho_std: tuple
    n_draws: int

    def to_csv(self) -> str:
        lines = ["size,rho_mean,rho_std"]
        lines += [f"{s},{r!r},{sd!r}" for s, r, sd in
                  zip(self.library_sizes, self.rhos, self.rho_std)]
        return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# correlation
# --------------------------------------------------------------------------

def pearson(a, b, return_flag: bool = False):
    """Sample Pearson correlation with compensated (fsum) accumulation.

    Returns 0 when either input is constant; with ``return_flag`` the result
    is ``(rho, degenerate)``.
    """
    a = np.asarray(a, dtype=float).reshape(-1)
    b = np.asarray(b, dtype=float).reshape(-1)
    if a.size != b.size:
        raise LengthMismatch(f"lengths differ: {a.size} vs {b.size}")
    if a.size < 2:
        raise LengthMismatch("need at least two samples")
    n = a.size
    da = a - math.fsum(a.tolist()) / n
    db = b - math.fsum(b.tolist()) / n
    saa = math.fsum((da * da).tolist())
    sbb = math.fsum((db * db).tolist())
    if saa == 0.0 or sbb == 0.0:
        return (0.0, True) if return_flag else 0.0
    sab = math.fsum((da * db).tolist())
    rho = sab / (math.sqrt(saa) * math.sqrt(sbb))
    rho = min(1.0, max(-1.0, rho))
    return (rho, False) if return_flag else rho


# --------------------------------------------------------------------------
# weights
# --------------------------------------------------------------------------

def _sigma(dist: np.ndarray, cfg: KernelConfig) -> np.ndarray:
    if cfg.bandwidth_mode == "per_query_mean":
        return dist.mean(axis=-1)
    if cfg.bandwidth_mode == "per_query_nearest":
        return dist[..., 0] if dist.ndim > 1 else dist[0]
    return np.full(dist.shape[:-1], cfg.fixed_sigma) if dist.ndim > 1 else cfg.fixed_sigma


def kernel_weight_matrix(dist: np.ndarray, cfg: KernelConfig) -> np.ndarray:
    """Row-wise ``exp(-d^2 / (2 sigma^2))`` for a (rows x k) distance array."""
    dist = np.asarray(dist, dtype=float)
    sigma = np.asarray(_sigma(dist, cfg), dtype=float).reshape(-1, 1)
    all_zero = ~np.any(dist > 0, axis=1)
    bad = (sigma[:, 0] <= 0) & ~all_zero
    if np.any(bad):
        raise DegenerateNeighborhood(
            "kernel bandwidth resolved to 0 while some neighbour distance is positive")
    safe = np.where(sigma > 0, sigma, 1.0)
    u = np.exp(-(dist * dist) / (2.0 * safe * safe))
    u[all_zero] = 1.0
    return u


def kernel_weights(ns: NeighborSet, cfg: KernelConfig = KernelConfig()) -> np.ndarray:
    """Gaussian kernel weights of one neighbour set."""
    return kernel_weight_matrix(np.asarray(ns.distances)[None, :], cfg)[0]


def hybrid_weights(u: np.ndarray, p: Optional[np.ndarray] = None) -> np.ndarray:
    """Normalise ``u * p`` per row to sum to one.

    ``p`` is first divided by its row maximum. Scaling cancels in the final
    normalisation anyway; dividing first makes a constant ``p`` collapse to
    exactly 1 so the result is bit-identical to the kernel-only weights, and
    keeps tiny densities from underflowing the product.
    """
    u = np.atleast_2d(u)
    if p is None:
        prod = u
    else:
        p = np.atleast_2d(np.asarray(p, dtype=float))
        prod = u * (p / p.max(axis=1, keepdims=True))
    return prod / prod.sum(axis=1, keepdims=True)


# --------------------------------------------------------------------------
# cross map
# --------------------------------------------------------------------------

def cross_map_manifold(manifold: ShadowManifold, y: np.ndarray, cfg: KernelConfig = KernelConfig(),
                       density: Optional[np.ndarray] = None, library=None,
                       exclusion_radius: Optional[int] = None,
                       allow_self_neighbor: bool = False, rows=None,
                       keep_details: bool = False):
    """Core cross-map on a prebuilt manifold.

    Parameters
    ----------
    manifold : ShadowManifold
        Embedding of the source series.
    y : ndarray
        Target series on the same time axis as the source.
    density : ndarray, optional
        Per-time-index conditional density of the target (NaN where
        undefined). Rows whose time has an undefined density are dropped from
        the library. ``None`` gives standard CCM.
    rows : array_like of int, optional
        Manifold rows to predict; all rows by default.

    Returns
    -------
    dict with ``rows``, ``observed``, ``predictions``, ``rho``, ``degenerate``
    and, with ``keep_details``, ``neighbors`` and ``weights``.
    """
    y = np.asarray(y, dtype=float)
    n_pts = manifold.n_points
    lib = np.arange(n_pts) if library is None else np.unique(np.asarray(library, dtype=np.int64))
    if density is not None:
        density = np.asarray(density, dtype=float)
        ok = np.isfinite(density[manifold.time_index(lib)])
        lib = lib[ok]
    q = np.arange(n_pts) if rows is None else np.asarray(rows, dtype=np.int64)
    idx, dist = knn_batch(manifold, q, lib, exclusion_radius,
                          allow_self_neighbor=allow_self_neighbor)
    u = kernel_weight_matrix(dist, cfg)
    times = manifold.time_index(idx)
    p = None if density is None else density[times]
    w = hybrid_weights(u, p)
    preds = np.sum(w * y[times], axis=1)
    observed = y[manifold.time_index(q)]
    rho, degenerate = pearson(observed, preds, return_flag=True)
    out = {"rows": q, "observed": observed, "predictions": preds, "rho": rho,
           "degenerate": degenerate, "library_size": int(lib.size)}
    if keep_details:
        out["neighbors"] = idx
        out["weights"] = w
    return out


def _target_density(model: DbnModel, source: TimeSeries, target: TimeSeries,
                    recording: Optional[Recording]) -> np.ndarray:
    if target.label not in model.channels:
        raise ChannelMismatch(f"target {target.label!r} is not a channel of the DBN model")
    if recording is None:
        chans = {source.label: source, target.label: target}
        missing = [c for c in model.channels if c not in chans]
        if missing:
            raise ChannelMismatch(
                f"model needs channels {missing}; pass the full recording")
        recording = Recording(tuple(chans[c] for c in model.channels))
    elif list(recording.labels) != list(model.channels):
        recording = Recording(tuple(recording.channel(c) for c in model.channels))
    if len(recording) != len(target):
        raise LengthMismatch("recording and target differ in length")
    return conditional_densities(model, recording, target.label)


def cross_map(source: TimeSeries, target: TimeSeries, params: EmbeddingParams,
              cfg: KernelConfig = KernelConfig(), model: Optional[DbnModel] = None,
              library=None, recording: Optional[Recording] = None,
              exclusion_radius: Optional[int] = None, allow_self_neighbor: bool = False,
              keep_details: bool = False) -> CcmResult:
    """Predict ``target`` from the shadow manifold of ``source``.

    ``rho`` is the cross-map skill from source's manifold to the target:
    high skill means the target's dynamics are recoverable from the source's
    reconstructed state. With a ``model`` the neighbours are additionally
    weighted by the model's conditional density of the target; ``recording``
    supplies the model's other channels when it has more than these two.
    """
    if len(source) != len(target):
        raise LengthMismatch(f"source has {len(source)} samples, target {len(target)}")
    manifold = embed(source, params)
    density = None
    if model is not None:
        density = _target_density(model, source, target, recording)
    out = cross_map_manifold(manifold, target.values, cfg, density, library,
                             exclusion_radius, allow_self_neighbor, keep_details=keep_details)
    if out["degenerate"]:
        warnings.warn(f"degenerate cross map {source.label}->{target.label}: "
                      "constant prediction or target; rho set to 0", RuntimeWarning,
                      stacklevel=2)
    return CcmResult(
        rho=out["rho"], predictions=out["predictions"], observed=out["observed"],
        direction=(source.label, target.label), library_size=out["library_size"],
        mode="standard" if model is None else "dbn_informed",
        degenerate=out["degenerate"], params=params, kernel=cfg,
        neighbor_indices=out.get("neighbors"), weights=out.get("weights"),
        rows=out["rows"])


def convergence(source: TimeSeries, target: TimeSeries, params: EmbeddingParams,
                cfg: KernelConfig = KernelConfig(), model: Optional[DbnModel] = None,
                sizes: Sequence[int] = (100, 200, 400, 800), n_draws: int = 10,
                seed: int = 0, sampling: str = "uniform",
                recording: Optional[Recording] = None,
                exclusion_radius: Optional[int] = None,
                allow_self_neighbor: bool = False) -> ConvergenceCurve:
    """Cross-map skill against library size.

    For each size, ``n_draws`` libraries are drawn (uniform rows without
    replacement, or random contiguous blocks with ``sampling="contiguous"``)
    and every manifold row is predicted from each library.
    """
    if n_draws < 1:
        raise ValueError("n_draws must be >= 1")
    if sampling not in ("uniform", "contiguous"):
        raise ValueError("sampling must be 'uniform' or 'contiguous'")
    if len(source) != len(target):
        raise LengthMismatch("source and target differ in length")
    sizes = [int(s) for s in sizes]
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ValueError("library sizes must be strictly increasing")
    manifold = embed(source, params)
    n_pts = manifold.n_points
    if max(sizes) > n_pts:
        raise NotEnoughPoints(f"library size {max(sizes)} exceeds {n_pts} manifold rows")
    density = None
    if model is not None:
        density = _target_density(model, source, target, recording)
    rng = np.random.default_rng(seed)
    means, stds = [], []
    for size in sizes:
        rhos = []
        for _ in range(n_draws):
            if size == n_pts:
                lib = np.arange(n_pts)
            elif sampling == "uniform":
                lib = np.sort(rng.choice(n_pts, size=size, replace=False))
            else:
                start = int(rng.integers(0, n_pts - size + 1))
                lib = np.arange(start, start + size)
            out = cross_map_manifold(manifold, target.values, cfg, density, lib,
                                     exclusion_radius, allow_self_neighbor)
            rhos.append(out["rho"])
        means.append(float(np.mean(rhos)))
        stds.append(float(np.std(rhos)))
    return ConvergenceCurve(tuple(sizes), tuple(means), tuple(stds), int(n_draws))
