"""
Predictive Consistency against surrogate baselines, and Causal Impact ranking.
"""

from __future__ import annotations

import csv
import io
import json
from fractions import Fraction
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .baselines import granger_prediction_rho
from .crossmap import KernelConfig, cross_map_manifold, _target_density
from .dbn import DbnModel
from .embedding import EmbeddingParams, embed
from .errors import DegenerateBaseline, LengthMismatch
from .series import Recording, TimeSeries

__all__ = [
    "SurrogateConfig",
    "MetricsRow",
    "MetricsReport",
    "pc_norm",
    "shuffled_rho",
    "surrogate_offsets",
    "causal_impact",
    "granger_shuffled_rho",
    "REPORT_COLUMNS",
]

REPORT_COLUMNS = ("pair", "band", "method", "pc_norm", "ci", "rho_pre", "rho_post",
                  "rho_shuffled_mean", "rho_shuffled_std")


@dataclass(frozen=True)
class SurrogateConfig:
    method: str = "circular_shift"
    n_surrogates: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.method not in ("circular_shift", "full_permutation"):
            raise ValueError("method must be circular_shift or full_permutation")
        if self.n_surrogates < 1:
            raise ValueError("n_surrogates must be >= 1")


def pc_norm(rho_pre: float, rho_shuffled: float) -> float:
    """``(rho_pre - rho_shuffled) / (1 - rho_shuffled)``; negative values pass through.

    Evaluated in exact rational arithmetic and rounded once, so the result is
    the correctly rounded value for the given inputs (``pc_norm(0.8, 0.2)``
    is exactly 0.75).
    """
    if rho_shuffled >= 1.0 - 1e-9:
        raise DegenerateBaseline(f"shuffled baseline {rho_shuffled} leaves no headroom")
    a, b = Fraction(rho_pre), Fraction(rho_shuffled)
    return float((a - b) / (1 - b))


def surrogate_offsets(n: int, sc: SurrogateConfig) -> list:
    """Per-surrogate randomisation, pre-drawn so evaluation order is irrelevant.

    Circular shifts are uniform integers in ``[n/4, 3n/4]``; permutations
    are full index permutations.
    """
    rng = np.random.default_rng(sc.seed)
    if sc.method == "circular_shift":
        lo, hi = n // 4, (3 * n) // 4
        return [int(v) for v in rng.integers(lo, hi + 1, size=sc.n_surrogates)]
    return [rng.permutation(n) for _ in range(sc.n_surrogates)]


def shuffled_rho(source: TimeSeries, target: TimeSeries, params: EmbeddingParams,
                 cfg: KernelConfig = KernelConfig(), model: Optional[DbnModel] = None,
                 sc: SurrogateConfig = SurrogateConfig(), recording: Optional[Recording] = None,
                 exclusion_radius: Optional[int] = None, allow_self_neighbor: bool = False,
                 offsets: Optional[Sequence] = None):
    """Mean and std of cross-map skill with the target's alignment destroyed.

    The target (and, in DBN mode, its conditional densities, which travel
    with each sample) is rotated or permuted while the source manifold stays
    fixed. ``offsets`` overrides the random draws; an offset of 0 reproduces
    the unshuffled skill.
    """
    if len(source) != len(target):
        raise LengthMismatch("source and target differ in length")
    manifold = embed(source, params)
    y = target.values
    density = None
    if model is not None:
        density = _target_density(model, source, target, recording)
    draws = surrogate_offsets(len(y), sc) if offsets is None else list(offsets)
    rhos = []
    for d in draws:
        if np.ndim(d) == 0:
            ys = np.roll(y, int(d))
            ds = None if density is None else np.roll(density, int(d))
        else:
            ys = y[d]
            ds = None if density is None else density[d]
        out = cross_map_manifold(manifold, ys, cfg, ds, None, exclusion_radius,
                                 allow_self_neighbor)
        rhos.append(out["rho"])
    rhos = np.asarray(rhos)
    return float(rhos.mean()), float(rhos.std())


def granger_shuffled_rho(source: TimeSeries, target: TimeSeries, lag_order: int = 1,
                         sc: SurrogateConfig = SurrogateConfig()):
    """Surrogate baseline for :func:`granger_prediction_rho`.

    The source is rotated or permuted (the target keeps its own past), so the
    baseline retains the target's autoregressive predictability.
    """
    x = source.values
    rhos = []
    for d in surrogate_offsets(x.size, sc):
        xs = np.roll(x, int(d)) if np.ndim(d) == 0 else x[d]
        rhos.append(granger_prediction_rho(xs, target.values, lag_order))
    rhos = np.asarray(rhos)
    return float(rhos.mean()), float(rhos.std())


def causal_impact(results) -> list:
    """Rank predictors of one target.

    ``results`` is a sequence of ``(label, rho_pre, rho_post)``. Each value is
    ``rho_pre * |delta| / max |delta|``; when every delta is zero all values
    are 0.
    """
    results = list(results)
    if not results:
        raise ValueError("need at least one predictor")
    # exact rationals: the max-|delta| predictor gets exactly its own rho_pre
    deltas = [abs(Fraction(post) - Fraction(pre)) for _, pre, post in results]
    top = max(deltas)
    if top == 0:
        return [0.0] * len(results)
    return [float(Fraction(pre) * d / top) for (_, pre, _), d in zip(results, deltas)]


@dataclass
class MetricsRow:
    pair: str
    band: str
    method: str
    pc_norm: Optional[float] = None
    ci: Optional[float] = None
    rho_pre: Optional[float] = None
    rho_post: Optional[float] = None
    rho_shuffled_mean: Optional[float] = None
    rho_shuffled_std: Optional[float] = None
    # the cross-mapped series; groups predictors for causal impact
    target: str = field(default="", compare=False)


@dataclass
class MetricsReport:
    rows: list = field(default_factory=list)

    def fill_causal_impact(self) -> None:
        """Compute CI across predictors sharing a target, band and method."""
        groups = {}
        for r in self.rows:
            if r.rho_pre is not None and r.rho_post is not None:
                groups.setdefault((r.target, r.band, r.method), []).append(r)
        for members in groups.values():
            ci = causal_impact([(m.pair, m.rho_pre, m.rho_post) for m in members])
            for m, v in zip(members, ci):
                m.ci = v

    def sorted_rows(self) -> list:
        return sorted(self.rows, key=lambda r: (r.band, r.pair, r.method))

    def to_json(self) -> str:
        rows = [asdict(r) for r in self.sorted_rows()]
        return json.dumps({"rows": rows}, sort_keys=True, indent=1) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in self.sorted_rows():
            w.writerow([_cell(getattr(r, c)) for c in REPORT_COLUMNS])
        return buf.getvalue()

    @classmethod
    def from_json(cls, text: str) -> "MetricsReport":
        d = json.loads(text)
        rows = []
        for item in d.get("rows", []):
            row = MetricsRow(**item)
            if not row.target:
                row.target = row.pair.split("->")[-1]
            rows.append(row)
        return cls(rows)


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)
