"""
Batch analysis over every ordered channel pair and frequency band.

Each (pair, band) task writes its own JSON file under ``<out>/tasks`` and is
recorded in ``<out>/manifest.json``; a rerun with the same configuration
skips finished tasks. Merged reports (``report.json``, ``report.csv``,
``convergence.csv``) and SVG figures are rebuilt from the task files, so
their bytes do not depend on scheduling or on how many workers ran.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from itertools import permutations
from typing import Optional

import numpy as np

from .baselines import granger, granger_prediction_rho
from .crossmap import KernelConfig, convergence, cross_map
from .dbn import DbnModel, learn, normalize_ccm_priors
from .embedding import EmbeddingParams, select_dimension, select_tau
from .errors import CcmError, DegenerateBaseline
from .intervention import DbnSettings, default_windows, segmented_intervention
from .metrics import (MetricsReport, MetricsRow, SurrogateConfig, granger_shuffled_rho,
                      pc_norm, shuffled_rho)
from .plots import plot_emit
from .series import BandSpec, Recording, bandpass, parse_bands, read_csv, segment_samples, standardize
from .synthetic import SyntheticSpec, generate

log = logging.getLogger(__name__)

__all__ = ["PipelineConfig", "PipelineError", "run_pipeline", "task_seed", "load_config",
           "CONFIG_KEYS"]


class PipelineError(Exception):
    """Stage failure; carries the stage name and the exit code to report."""

    def __init__(self, stage: str, message: str, exit_code: int = 1, task: str = None):
        super().__init__(message)
        self.stage = stage
        self.exit_code = exit_code
        self.task = task

    def to_dict(self) -> dict:
        d = {"stage": self.stage, "error": str(self), "exit_code": self.exit_code}
        if self.task:
            d["task"] = self.task
        return d


@dataclass(frozen=True)
class PipelineConfig:
    """Everything one pipeline run needs. Field names double as config-file keys."""

    input: Optional[str] = None
    synthetic: Optional[dict] = None
    sample_rate: Optional[float] = None
    event_onset: Optional[float] = None
    channels: Optional[str] = None
    bands: Optional[str] = None
    embed_dim: int = 3
    embed_tau: int = 1
    auto_embed: bool = False
    max_embed_dim: int = 6
    max_tau: int = 20
    bandwidth_mode: str = "per_query_mean"
    fixed_sigma: Optional[float] = None
    exclusion_radius: Optional[int] = None
    allow_self_neighbor: bool = False
    use_dbn: bool = True
    max_lag: int = 2
    lam: float = 0.01
    use_ccm_priors: bool = False
    surrogate_method: str = "circular_shift"
    n_surrogates: int = 100
    pre_window: Optional[str] = None
    post_window: Optional[str] = None
    retrain_post: bool = False
    granger_lag: int = 2
    convergence_draws: int = 5
    convention: str = "paper"
    output: str = "ccm_out"
    seed: int = 0
    workers: int = 1

    def fingerprint(self) -> str:
        d = asdict(self)
        d.pop("workers")
        d.pop("output")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    def kernel(self) -> KernelConfig:
        return KernelConfig(self.bandwidth_mode, self.fixed_sigma)


CONFIG_SECTIONS = {
    "input": ("input", "sample_rate", "event_onset", "channels", "bands"),
    "embedding": ("embed_dim", "embed_tau", "auto_embed", "max_embed_dim", "max_tau"),
    "kernel": ("bandwidth_mode", "fixed_sigma", "exclusion_radius", "allow_self_neighbor"),
    "dbn": ("use_dbn", "max_lag", "lam", "use_ccm_priors"),
    "surrogates": ("surrogate_method", "n_surrogates"),
    "intervention": ("pre_window", "post_window", "retrain_post"),
    "baselines": ("granger_lag", "convergence_draws"),
    "output": ("output", "convention", "seed", "workers"),
}
CONFIG_KEYS = {k: sec for sec, keys in CONFIG_SECTIONS.items() for k in keys}


def _coerce(name: str, text: str):
    f = {f.name: f for f in fields(PipelineConfig)}[name]
    kind = str(f.type)
    if text.strip().lower() in ("", "none"):
        return None
    if "bool" in kind:
        return text.strip().lower() in ("1", "true", "yes", "on")
    if "int" in kind:
        return int(text)
    if "float" in kind:
        return float(text)
    return text.strip()


def load_config(path: str) -> dict:
    """Read a sectioned ``key = value`` file into PipelineConfig keyword arguments."""
    cp = configparser.ConfigParser()
    if not cp.read(path, encoding="utf-8"):
        raise PipelineError("config", f"cannot read config file {path}", 2)
    out = {}
    for section in cp.sections():
        for key, value in cp.items(section):
            if key not in CONFIG_KEYS:
                raise PipelineError("config", f"unknown config key [{section}] {key}", 2)
            out[key] = _coerce(key, value)
    return out


def task_seed(master: int, *parts) -> int:
    """Master seed combined with a stable hash of the task label."""
    label = "(" + ",".join(str(p) for p in parts) + ")"
    h = int.from_bytes(hashlib.sha256(label.encode()).digest()[:8], "big")
    return (int(master) + h) % 2**32


def _parse_window(text: Optional[str]):
    if text is None:
        return None
    a, b = text.split(",") if "," in text else text.split(":")
    return float(a), float(b)


# --------------------------------------------------------------------------
# stages
# --------------------------------------------------------------------------

def ingest(cfg: PipelineConfig) -> Recording:
    try:
        if cfg.synthetic is not None:
            rec = generate(SyntheticSpec.from_dict(cfg.synthetic))
            if cfg.event_onset is not None:
                rec = Recording(rec.channels, cfg.event_onset)
        elif cfg.input is not None:
            if not os.path.exists(cfg.input):
                raise PipelineError("ingest", f"input file not found: {cfg.input}", 2)
            rec = read_csv(cfg.input, cfg.sample_rate, cfg.event_onset)
        else:
            raise PipelineError("ingest", "no input file or synthetic spec given", 2)
    except PipelineError:
        raise
    except (OSError, ValueError, CcmError) as exc:
        raise PipelineError("ingest", str(exc), 2) from None
    if cfg.channels:
        wanted = [c.strip() for c in cfg.channels.split(",") if c.strip()]
        missing = [c for c in wanted if c not in rec.labels]
        if missing:
            raise PipelineError("ingest", f"channels not in input: {missing}", 2)
        rec = Recording(tuple(rec.channel(c) for c in wanted), rec.event_onset)
    if rec.n_channels < 2:
        raise PipelineError("ingest", "need at least two channels to form a pair", 2)
    return rec


def _band_name(band: Optional[BandSpec]) -> str:
    return "broadband" if band is None else band.name


@dataclass
class _BandContext:
    band: str
    rec: Recording
    train: Recording
    train_range: tuple
    params: dict
    model: Optional[DbnModel]
    priors: Optional[list]


def _train_range(cfg: PipelineConfig, rec: Recording, params: EmbeddingParams):
    if cfg.pre_window is not None:
        a, b = _parse_window(cfg.pre_window)
        return int(round(a * rec.sample_rate)), int(round(b * rec.sample_rate))
    if rec.event_onset is not None:
        return default_windows(rec, params)[0]
    return 0, len(rec)


def _embedding_for(cfg: PipelineConfig, series) -> EmbeddingParams:
    if not cfg.auto_embed:
        return EmbeddingParams(cfg.embed_dim, cfg.embed_tau)
    max_tau = max(1, min(cfg.max_tau, len(series) // 4))
    tau = select_tau(series, max_tau)
    E = select_dimension(series, tau, cfg.max_embed_dim)
    return EmbeddingParams(E, tau)


def build_band(cfg: PipelineConfig, rec: Recording, band: Optional[BandSpec]) -> _BandContext:
    name = _band_name(band)
    try:
        proc = rec if band is None else rec.map_channels(lambda ch: bandpass(ch, band))
        proc = proc.map_channels(standardize)
    except CcmError as exc:
        raise PipelineError("preprocess", f"band {name}: {exc}") from None
    try:
        params = {ch.label: _embedding_for(cfg, ch) for ch in proc.channels}
    except CcmError as exc:
        raise PipelineError("embed", f"band {name}: {exc}") from None
    ref = max(params.values(), key=lambda p: p.span)
    i0, i1 = _train_range(cfg, proc, ref)
    train = segment_samples(proc, i0, i1)
    model = priors = None
    if cfg.use_dbn:
        try:
            prior_matrix = None
            if cfg.use_ccm_priors:
                raw = np.zeros((proc.n_channels, proc.n_channels))
                for a, b in permutations(range(proc.n_channels), 2):
                    src, tgt = train.channels[a], train.channels[b]
                    res = cross_map(src, tgt, params[src.label], cfg.kernel(),
                                    exclusion_radius=cfg.exclusion_radius,
                                    allow_self_neighbor=cfg.allow_self_neighbor)
                    # raw[to][from]: evidence that `from` drives `to`
                    if cfg.convention == "sugihara":
                        raw[a, b] = res.rho
                    else:
                        raw[b, a] = res.rho
                prior_matrix = normalize_ccm_priors(raw)
                priors = prior_matrix.strengths.tolist()
            model = learn(train, cfg.max_lag, cfg.lam, prior_matrix)
        except CcmError as exc:
            raise PipelineError("learn-dbn", f"band {name}: {exc}") from None
    return _BandContext(name, proc, train, (i0, i1), params, model, priors)


_BAND_CACHE: dict = {}


def _cached_band(cfg: PipelineConfig, band: Optional[BandSpec]) -> _BandContext:
    # one entry per (config, band); worker processes fill their own copy
    key = (cfg.fingerprint(), band)
    if key not in _BAND_CACHE:
        if len(_BAND_CACHE) > 16:
            _BAND_CACHE.clear()
        _BAND_CACHE[key] = build_band(cfg, ingest(cfg), band)
    return _BAND_CACHE[key]


def _pair_label(cfg: PipelineConfig, src: str, tgt: str) -> str:
    return f"{tgt}->{src}" if cfg.convention == "sugihara" else f"{src}->{tgt}"


def _safe_pc(rho, shuffled):
    try:
        return pc_norm(rho, shuffled)
    except DegenerateBaseline:
        return None


def run_task(cfg: PipelineConfig, band: Optional[BandSpec], src: str, tgt: str) -> dict:
    """All measurements for one ordered pair in one band."""
    ctx = _cached_band(cfg, band)
    label = _pair_label(cfg, src, tgt)
    params = ctx.params[src]
    kernel = cfg.kernel()
    common = dict(exclusion_radius=cfg.exclusion_radius,
                  allow_self_neighbor=cfg.allow_self_neighbor)
    train = ctx.train
    s, t = train.channel(src), train.channel(tgt)
    onset = ctx.rec.event_onset is not None or cfg.pre_window is not None
    out = {"pair": label, "source": src, "target": tgt, "band": ctx.band,
           "embedding": {"E": params.E, "tau": params.tau}, "methods": {}}
    modes = [("standard_ccm", None)]
    if ctx.model is not None:
        modes.append(("dbn_ccm", ctx.model))
    for method, model in modes:
        stage = "ccm"
        try:
            res = cross_map(s, t, params, kernel, model, recording=train, **common)
            stage = "metrics"
            sc = SurrogateConfig(cfg.surrogate_method, cfg.n_surrogates,
                                 task_seed(cfg.seed, label, ctx.band, method))
            sh_mean, sh_std = shuffled_rho(s, t, params, kernel, model, sc, train, **common)
            entry = {"rho_pre": res.rho, "degenerate": res.degenerate,
                     "rho_shuffled_mean": sh_mean, "rho_shuffled_std": sh_std,
                     "pc_norm": _safe_pc(res.rho, sh_mean), "rho_post": None,
                     "delta_rho": None, "neighbor_shift": None}
            if onset:
                stage = "intervene"
                windows = {}
                if cfg.pre_window is not None:
                    windows = {"pre_window": _parse_window(cfg.pre_window),
                               "post_window": _parse_window(cfg.post_window)}
                dbn = None
                if model is not None:
                    dbn = DbnSettings(cfg.max_lag, cfg.lam, None)
                iv = segmented_intervention(
                    ctx.rec, src, tgt, params, kernel,
                    model=None if cfg.retrain_post else model,
                    dbn=dbn if cfg.retrain_post else None, retrain_post=cfg.retrain_post,
                    seed=cfg.seed, **windows, **common)
                entry.update(rho_post=iv.rho_post, delta_rho=iv.delta_rho,
                             neighbor_shift=_finite(iv.neighbor_shift))
        except CcmError as exc:
            raise PipelineError(stage, f"{label} [{ctx.band}] {method}: {exc}",
                                task=f"{label}|{ctx.band}") from None
        out["methods"][method] = entry

    try:
        g = granger(s, t, cfg.granger_lag)
        g_rho = granger_prediction_rho(s, t, cfg.granger_lag)
        sc = SurrogateConfig(cfg.surrogate_method, cfg.n_surrogates,
                             task_seed(cfg.seed, label, ctx.band, "granger"))
        g_mean, g_std = granger_shuffled_rho(s, t, cfg.granger_lag, sc)
        out["methods"]["granger"] = {
            "rho_pre": g_rho, "rho_shuffled_mean": g_mean, "rho_shuffled_std": g_std,
            "pc_norm": _safe_pc(g_rho, g_mean), "f_statistic": _finite(g.f_statistic),
            "p_value": g.p_value, "rho_post": None, "delta_rho": None}
        if onset:
            i0, i1 = ctx.train_range
            post = segment_samples(ctx.rec, i1 + params.span, len(ctx.rec)) \
                if cfg.post_window is None else _window_segment(ctx.rec, cfg.post_window)
            rho_post = granger_prediction_rho(post.channel(src), post.channel(tgt),
                                              cfg.granger_lag)
            out["methods"]["granger"].update(rho_post=rho_post, delta_rho=rho_post - g_rho)
    except (CcmError, np.linalg.LinAlgError) as exc:
        log.warning("granger skipped for %s [%s]: %s", label, ctx.band, exc)

    try:
        n_pts = len(s) - params.span
        sizes = sorted({max(params.E + 3, int(n_pts * f)) for f in (0.125, 0.25, 0.5, 1.0)})
        curve = convergence(s, t, params, kernel, None, sizes, cfg.convergence_draws,
                            task_seed(cfg.seed, label, ctx.band, "convergence"), **common)
        out["convergence"] = [[sz, r, sd] for sz, r, sd in
                              zip(curve.library_sizes, curve.rhos, curve.rho_std)]
    except CcmError as exc:
        log.warning("convergence skipped for %s [%s]: %s", label, ctx.band, exc)
        out["convergence"] = []
    return out


def _window_segment(rec: Recording, text: str) -> Recording:
    a, b = _parse_window(text)
    return segment_samples(rec, int(round(a * rec.sample_rate)), int(round(b * rec.sample_rate)))


def _finite(v):
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else None


# --------------------------------------------------------------------------
# orchestration
# --------------------------------------------------------------------------

def _safe(s: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in s)


def _task_name(band: str, src: str, tgt: str) -> str:
    return f"{_safe(band)}__{_safe(src)}__{_safe(tgt)}"


def _atomic_write(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


def _run_one(args):
    cfg, band, src, tgt = args
    return run_task(cfg, band, src, tgt)


def _load_manifest(path: str, fingerprint: str) -> dict:
    if not os.path.exists(path):
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            m = json.load(fh)
    except (OSError, json.JSONDecodeError):
        return {}
    if m.get("config") != fingerprint:
        return {}
    return {name: True for name in m.get("completed", [])}


def _write_manifest(path: str, fingerprint: str, done: dict, total: int) -> None:
    _atomic_write(path, _dumps({"config": fingerprint, "completed": sorted(done),
                                "n_tasks": total}))


def merge_reports(cfg: PipelineConfig, out_dir: str, task_docs: list, band_docs: dict) -> MetricsReport:
    report = MetricsReport()
    curves = []
    for doc in task_docs:
        for method, m in sorted(doc["methods"].items()):
            # the source's past predicting the target already reads as source -> target,
            # so Granger rows are never relabelled
            pair = f'{doc["source"]}->{doc["target"]}' if method == "granger" else doc["pair"]
            report.rows.append(MetricsRow(
                pair=pair, band=doc["band"], method=method, pc_norm=m.get("pc_norm"),
                rho_pre=m.get("rho_pre"), rho_post=m.get("rho_post"),
                rho_shuffled_mean=m.get("rho_shuffled_mean"),
                rho_shuffled_std=m.get("rho_shuffled_std"), target=doc["target"]))
        for size, r, sd in doc.get("convergence", []):
            curves.append((doc["pair"], doc["band"], size, r, sd))
    report.fill_causal_impact()
    full = json.loads(report.to_json())
    full["bands"] = band_docs
    _atomic_write(os.path.join(out_dir, "report.json"), _dumps(full))
    _atomic_write(os.path.join(out_dir, "report.csv"), report.to_csv())
    lines = ["pair,band,size,rho_mean,rho_std"]
    lines += [f"{p},{b},{s},{r!r},{sd!r}" for p, b, s, r, sd in sorted(curves)]
    _atomic_write(os.path.join(out_dir, "convergence.csv"), "\n".join(lines) + "\n")
    return report


def run_pipeline(cfg: PipelineConfig) -> dict:
    """Run every task, merge, plot. Returns a summary; raises PipelineError on failure."""
    out_dir = cfg.output
    task_dir = os.path.join(out_dir, "tasks")
    try:
        os.makedirs(task_dir, exist_ok=True)
    except OSError as exc:
        raise PipelineError("output", str(exc), 2) from None
    try:
        bands = parse_bands(cfg.bands)
    except (CcmError, ValueError) as exc:
        raise PipelineError("config", f"bad --bands: {exc}", 2) from None
    rec = ingest(cfg)
    fp = cfg.fingerprint()
    manifest_path = os.path.join(out_dir, "manifest.json")
    done = _load_manifest(manifest_path, fp)

    band_docs = {}
    for band in bands:
        ctx = _cached_band(cfg, band)
        doc = {"n_connections": 0, "strength": 0.0,
               "embedding": {k: [p.E, p.tau] for k, p in sorted(ctx.params.items())}}
        if ctx.model is not None:
            adj = ctx.model.adjacency()
            np.fill_diagonal(adj, False)
            st = ctx.model.strength()
            np.fill_diagonal(st, 0.0)
            doc.update(n_connections=int(adj.sum()), strength=float(st.sum()),
                       priors=ctx.priors)
            _atomic_write(os.path.join(out_dir, f"dbn_{_safe(ctx.band)}.json"),
                          ctx.model.to_json() + "\n")
        band_docs[ctx.band] = doc

    jobs = [(cfg, band, a, b) for band in bands for a, b in permutations(rec.labels, 2)]
    names = [_task_name(_band_name(b), s, t) for _, b, s, t in jobs]
    pending = [(j, n) for j, n in zip(jobs, names)
               if not (n in done and os.path.exists(os.path.join(task_dir, n + ".json")))]
    log.info("%d tasks, %d already complete", len(jobs), len(jobs) - len(pending))

    def record(name, doc):
        _atomic_write(os.path.join(task_dir, name + ".json"), _dumps(doc))
        done[name] = True
        _write_manifest(manifest_path, fp, done, len(jobs))

    try:
        if cfg.workers > 1 and len(pending) > 1:
            with ProcessPoolExecutor(cfg.workers) as pool:
                for (job, name), doc in zip(pending, pool.map(_run_one, [j for j, _ in pending])):
                    record(name, doc)
        else:
            for job, name in pending:
                record(name, _run_one(job))
    finally:
        _write_manifest(manifest_path, fp, done, len(jobs))

    docs = []
    for name in names:
        with open(os.path.join(task_dir, name + ".json"), encoding="utf-8") as fh:
            docs.append(json.load(fh))
    report = merge_reports(cfg, out_dir, docs, band_docs)
    try:
        plots = plot_emit(os.path.join(out_dir, "report.json"), out_dir)
    except CcmError as exc:
        raise PipelineError("plot", str(exc)) from None
    return {"n_tasks": len(jobs), "n_resumed": len(jobs) - len(pending),
            "n_rows": len(report.rows), "output": out_dir,
            "plots": [os.path.basename(p) for p in plots]}
