"""
Intervention effects: change in cross-map skill from before to after an event.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .crossmap import KernelConfig, cross_map_manifold
from .dbn import DbnModel, EdgePriorMatrix, conditional_densities, learn
from .embedding import EmbeddingParams, embed
from .errors import InvalidSpec, MissingOnset, SeriesTooShort
from .neighbors import knn_batch
from .series import Recording, segment_samples
from .synthetic import SyntheticSpec, generate

__all__ = [
    "DbnSettings",
    "InterventionResult",
    "segmented_intervention",
    "simulated_intervention",
    "default_windows",
]


@dataclass(frozen=True)
class DbnSettings:
    max_lag: int = 2
    lam: float = 0.01
    priors: Optional[EdgePriorMatrix] = None


@dataclass(frozen=True)
class InterventionResult:
    rho_pre: float
    rho_post: float
    delta_rho: float
    direction: tuple
    mode: str
    scheme: str
    windows: tuple = ()
    seed: Optional[int] = None
    neighbor_shift: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "direction": list(self.direction),
            "scheme": self.scheme,
            "mode": self.mode,
            "rho_pre": self.rho_pre,
            "rho_post": self.rho_post,
            "delta_rho": self.delta_rho,
            "windows": [list(w) for w in self.windows],
            "seed": self.seed,
            "neighbor_shift": self.neighbor_shift,
        }


def default_windows(rec: Recording, params: EmbeddingParams):
    """Sample ranges ``[0, onset)`` and ``[onset + guard, N)``.

    The guard of ``(E-1)*tau`` samples keeps every post-window delay vector
    entirely after the event.
    """
    if rec.event_onset is None:
        raise MissingOnset("recording has no event onset and no explicit windows were given")
    onset = int(round(rec.event_onset * rec.sample_rate))
    return (0, onset), (onset + params.span, len(rec))


def _to_samples(rec: Recording, window):
    a, b = window
    return int(round(a * rec.sample_rate)), int(round(b * rec.sample_rate))


def _segment_rho(seg: Recording, source, target, params, cfg, model, exclusion_radius,
                 allow_self_neighbor):
    src = seg.channel(source)
    tgt = seg.channel(target)
    if len(src) <= params.span + params.E + 1:
        raise SeriesTooShort(
            f"segment of {len(src)} samples too short for E={params.E}, tau={params.tau}")
    manifold = embed(src, params)
    density = None if model is None else conditional_densities(model, seg, tgt.label)
    out = cross_map_manifold(manifold, tgt.values, cfg, density, None, exclusion_radius,
                             allow_self_neighbor)
    return out["rho"]


def _neighbor_shift(rec: Recording, source, params, pre, post, exclusion_radius) -> float:
    """Fraction of post-window points whose neighbours all lie in the post window.

    Neighbours are searched on the manifold of the whole recording restricted
    to the two windows. Unchanged dynamics mix pre and post neighbours.
    """
    manifold = embed(rec.channel(source), params)
    off = manifold.source_index_offset
    pre_rows = np.arange(max(pre[0], off), pre[1]) - off
    post_rows = np.arange(max(post[0] + params.span, off), post[1]) - off
    lib = np.concatenate([pre_rows, post_rows])
    if post_rows.size == 0 or lib.size <= params.E + 1:
        return float("nan")
    try:
        idx, _ = knn_batch(manifold, post_rows, lib, exclusion_radius)
    except Exception:
        return float("nan")
    return float(np.mean(np.all(idx >= post_rows[0], axis=1)))


def segmented_intervention(rec: Recording, source_ch, target_ch, params: EmbeddingParams,
                           cfg: KernelConfig = KernelConfig(), model: Optional[DbnModel] = None,
                           pre_window=None, post_window=None,
                           dbn: Optional[DbnSettings] = None, retrain_post: bool = False,
                           exclusion_radius: Optional[int] = None,
                           allow_self_neighbor: bool = False,
                           seed: Optional[int] = None) -> InterventionResult:
    """Cross-map skill before and after the event and their difference.

    Parameters
    ----------
    rec : Recording
    source_ch, target_ch : str or int
        The source's manifold predicts the target.
    pre_window, post_window : (start_s, end_s), optional
        Explicit windows in seconds. Both default from ``rec.event_onset``
        (see :func:`default_windows`).
    model : DbnModel, optional
        Use this model in both windows.
    dbn : DbnSettings, optional
        Learn a model on the pre window only and evaluate its conditionals in
        both windows. ``retrain_post`` fits a separate model on the post
        window instead.
    """
    if (pre_window is None) != (post_window is None):
        raise ValueError("give both windows or neither")
    if pre_window is None:
        pre, post = default_windows(rec, params)
    else:
        pre, post = _to_samples(rec, pre_window), _to_samples(rec, post_window)
    src = rec.channel(source_ch).label
    tgt = rec.channel(target_ch).label
    seg_pre = segment_samples(rec, *pre)
    seg_post = segment_samples(rec, *post)

    model_pre = model_post = model
    if model is None and dbn is not None:
        model_pre = learn(seg_pre, dbn.max_lag, dbn.lam, dbn.priors)
        model_post = learn(seg_post, dbn.max_lag, dbn.lam, dbn.priors) if retrain_post else model_pre
    mode = "standard" if model_pre is None else "dbn_informed"

    rho_pre = _segment_rho(seg_pre, src, tgt, params, cfg, model_pre, exclusion_radius,
                           allow_self_neighbor)
    if pre == post and model_post is model_pre:
        rho_post = rho_pre
    else:
        rho_post = _segment_rho(seg_post, src, tgt, params, cfg, model_post,
                                exclusion_radius, allow_self_neighbor)
    rate = rec.sample_rate
    windows = ((pre[0] / rate, pre[1] / rate), (post[0] / rate, post[1] / rate))
    shift = _neighbor_shift(rec, src, params, pre, post, exclusion_radius)
    return InterventionResult(rho_pre, rho_post, rho_post - rho_pre, (src, tgt), mode,
                              "segmented", windows, seed, shift)


def simulated_intervention(spec: SyntheticSpec, do: Optional[dict], onset_fraction: float,
                           source_ch, target_ch, params: EmbeddingParams,
                           cfg: KernelConfig = KernelConfig(),
                           dbn: Optional[DbnSettings] = None,
                           exclusion_radius: Optional[int] = None,
                           allow_self_neighbor: bool = False) -> InterventionResult:
    """Simulate ``spec`` with a do-operation from ``onset_fraction`` onwards, then segment.

    ``do`` is ``{"channel": label or index, "mode": "clamp" | "shift",
    "value": float}``; ``None`` runs the unperturbed system with the same
    onset. The intervened channel's new values feed back into the dynamics.
    """
    if not 0.0 < onset_fraction < 1.0:
        raise InvalidSpec("onset_fraction must lie in (0, 1)")
    onset = int(round(onset_fraction * spec.n_samples))
    if not 0 < onset < spec.n_samples:
        raise InvalidSpec("onset falls outside the simulated samples")
    run = spec
    if do is not None:
        mode = do.get("mode", "clamp")
        if mode not in ("clamp", "shift"):
            raise InvalidSpec(f"unknown intervention mode {mode!r}")
        run = replace(spec, intervention={"channel": do["channel"], "mode": mode,
                                          "value": float(do.get("value", 0.0)),
                                          "onset": onset})
    rec = generate(run)
    rec = Recording(rec.channels, onset / rec.sample_rate)
    res = segmented_intervention(rec, source_ch, target_ch, params, cfg, dbn=dbn,
                                 exclusion_radius=exclusion_radius,
                                 allow_self_neighbor=allow_self_neighbor, seed=spec.seed)
    return replace(res, scheme="simulated")
