"""
``ccmtool`` command line.

Every subcommand prints JSON (or CSV where noted) to stdout. Failures print a
JSON object ``{"stage": ..., "error": ...}`` to stderr and exit with 1 for an
analysis error or 2 for a usage or I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import warnings
from dataclasses import fields

import numpy as np

from . import __version__
from .crossmap import KernelConfig, convergence, cross_map
from .dbn import DbnModel, learn
from .embedding import EmbeddingParams, embed, mutual_information_curve, select_dimension, select_tau
from .errors import CcmError
from .intervention import DbnSettings, default_windows, segmented_intervention
from .metrics import SurrogateConfig, pc_norm, shuffled_rho
from .pipeline import CONFIG_KEYS, CONFIG_SECTIONS, PipelineConfig, PipelineError, load_config, run_pipeline
from .plots import plot_emit
from .series import Recording, read_csv, segment_samples, standardize, write_csv
from .synthetic import SyntheticSpec, generate, preset

log = logging.getLogger("dbnccm")


class UsageError(Exception):
    pass


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, sort_keys=True, indent=1) + "\n")


def _fail(stage: str, message: str, code: int) -> int:
    sys.stderr.write(json.dumps({"stage": stage, "error": message, "exit_code": code},
                                sort_keys=True) + "\n")
    return code


def _load(args) -> Recording:
    if not os.path.exists(args.input):
        raise UsageError(f"input file not found: {args.input}")
    rec = read_csv(args.input, getattr(args, "sample_rate", None),
                   getattr(args, "onset", None))
    return rec.map_channels(standardize) if getattr(args, "standardize", True) else rec


def _params(args, series=None) -> EmbeddingParams:
    if getattr(args, "auto_embed", False) and series is not None:
        tau = select_tau(series, max(1, min(args.max_tau, len(series) // 4)))
        return EmbeddingParams(select_dimension(series, tau, args.max_embed_dim), tau)
    return EmbeddingParams(args.embed_dim, args.embed_tau)


def _kernel(args) -> KernelConfig:
    return KernelConfig(args.bandwidth_mode, args.fixed_sigma)


def _model(args, rec: Recording):
    if args.mode == "standard":
        return None
    if getattr(args, "model", None):
        with open(args.model, encoding="utf-8") as fh:
            return DbnModel.from_json(fh.read())
    return learn(rec, args.max_lag, args.lam)


def _direction(args, src, tgt) -> str:
    return f"{tgt}->{src}" if args.convention == "sugihara" else f"{src}->{tgt}"


def _window(text):
    if text is None:
        return None
    try:
        a, b = text.replace(":", ",").split(",")
        return float(a), float(b)
    except ValueError:
        raise UsageError(f"window must be START,END in seconds, got {text!r}") from None


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_ingest(args) -> int:
    args.standardize = False
    rec = _load(args)
    data = rec.as_array()
    _emit({"channels": rec.labels, "n_samples": len(rec), "sample_rate": rec.sample_rate,
           "event_onset": rec.event_onset, "duration": rec.duration,
           "mean": [float(v) for v in data.mean(axis=0)],
           "std": [float(v) for v in data.std(axis=0, ddof=1)]})
    if args.out:
        write_csv(rec, args.out)
    return 0


def cmd_synth(args) -> int:
    if args.spec:
        with open(args.spec, encoding="utf-8") as fh:
            spec = SyntheticSpec.from_dict(json.load(fh))
    else:
        spec = preset(args.preset, args.n_samples, args.seed)
    if args.emit_spec:
        _emit(spec.to_dict())
        return 0
    rec = generate(spec)
    if args.out:
        write_csv(rec, args.out)
    else:
        sys.stdout.write(write_csv(rec, None, sidecar=False))
    return 0


def cmd_embed(args) -> int:
    args.standardize = True
    rec = _load(args)
    ch = rec.channel(args.channel)
    params = _params(args, ch)
    m = embed(ch, params)
    out = {"channel": ch.label, "E": params.E, "tau": params.tau, "n_points": m.n_points,
           "first_index": m.source_index_offset}
    if args.mi_lags:
        out["mutual_information"] = [float(v) for v in mutual_information_curve(ch.values, args.mi_lags)]
    _emit(out)
    return 0


def cmd_learn_dbn(args) -> int:
    rec = _load(args)
    model = learn(rec, args.max_lag, args.lam, workers=args.workers)
    text = model.to_json() + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    adj = model.adjacency()
    _emit({"channels": list(model.channels), "max_lag": model.max_lag, "lambda": model.lam,
           "edges": [[model.channels[f], model.channels[t]] for t, f in zip(*np.nonzero(adj))],
           "model": model.to_dict()})
    return 0


def cmd_ccm(args) -> int:
    rec = _load(args)
    src, tgt = rec.channel(args.source), rec.channel(args.target)
    params = _params(args, src)
    model = _model(args, rec)
    common = dict(exclusion_radius=args.exclusion_radius,
                  allow_self_neighbor=args.allow_self_neighbor)
    res = cross_map(src, tgt, params, _kernel(args), model, recording=rec, **common)
    out = res.to_dict()
    out["pair"] = _direction(args, src.label, tgt.label)
    out["convention"] = args.convention
    if args.sizes:
        sizes = [int(v) for v in args.sizes.split(",")]
        curve = convergence(src, tgt, params, _kernel(args), model, sizes, args.n_draws,
                            args.seed, args.sampling, rec, **common)
        out["convergence"] = {"sizes": list(curve.library_sizes), "rho_mean": list(curve.rhos),
                              "rho_std": list(curve.rho_std)}
    _emit(out)
    return 0


def cmd_intervene(args) -> int:
    rec = _load(args)
    src = rec.channel(args.source)
    params = _params(args, src)
    pre, post = _window(args.pre), _window(args.post)
    if (pre is None) != (post is None):
        raise UsageError("give both --pre and --post or neither")
    if pre is None and rec.event_onset is None:
        raise UsageError("recording has no event onset; pass --onset or --pre/--post")
    model, dbn = None, None
    if args.mode == "dbn":
        if args.model or not args.retrain_post:
            train = rec
            if not args.model:
                i0, i1 = default_windows(rec, params)[0] if pre is None else (
                    int(round(pre[0] * rec.sample_rate)), int(round(pre[1] * rec.sample_rate)))
                train = segment_samples(rec, i0, i1)
            model = _model(args, train)
        else:
            dbn = DbnSettings(args.max_lag, args.lam)
    res = segmented_intervention(rec, args.source, args.target, params, _kernel(args), model,
                                 pre, post, dbn, args.retrain_post, args.exclusion_radius,
                                 args.allow_self_neighbor, args.seed)
    out = res.to_dict()
    out["pair"] = _direction(args, *res.direction)
    out["convention"] = args.convention
    _emit(out)
    return 0


def cmd_metrics(args) -> int:
    rec = _load(args)
    src, tgt = rec.channel(args.source), rec.channel(args.target)
    params = _params(args, src)
    model = _model(args, rec)
    common = dict(exclusion_radius=args.exclusion_radius,
                  allow_self_neighbor=args.allow_self_neighbor)
    rho = cross_map(src, tgt, params, _kernel(args), model, recording=rec, **common).rho
    sc = SurrogateConfig(args.surrogate_method, args.n_surrogates, args.seed)
    mean, std = shuffled_rho(src, tgt, params, _kernel(args), model, sc, rec, **common)
    _emit({"pair": _direction(args, src.label, tgt.label), "rho_pre": rho,
           "rho_shuffled_mean": mean, "rho_shuffled_std": std, "pc_norm": pc_norm(rho, mean),
           "surrogates": {"method": sc.method, "n": sc.n_surrogates, "seed": sc.seed}})
    return 0


def _run_config(args) -> PipelineConfig:
    values = {}
    if args.config:
        values.update(load_config(args.config))
    # explicit flags beat the config file
    for key in CONFIG_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    values.pop("synthetic", None)
    if args.stdin_spec:
        text = sys.stdin.read()
        if text.lstrip().startswith("{"):
            values["synthetic"] = json.loads(text)
            values["input"] = None
        else:
            out = values.get("output") or "ccm_out"
            os.makedirs(out, exist_ok=True)
            path = os.path.join(out, "input.csv")
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
            values["input"] = path
    if args.mode is not None:
        values["use_dbn"] = args.mode == "dbn"
    if args.input_file is not None:
        values["input"] = args.input_file
    return PipelineConfig(**values)


def cmd_run(args) -> int:
    try:
        cfg = _run_config(args)
    except (TypeError, ValueError) as exc:
        raise PipelineError("config", str(exc), 2) from None
    _emit(run_pipeline(cfg))
    return 0


def cmd_plot(args) -> int:
    written = plot_emit(args.report, args.out_dir or os.path.dirname(args.report) or ".",
                        args.convergence)
    _emit({"written": [os.path.basename(p) for p in written]})
    return 0


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

KEY_HELP = {
    "input": "CSV recording, one column per channel",
    "sample_rate": "samples per second (overrides the CSV sidecar)",
    "event_onset": "event onset in seconds; needed for pre/post windows",
    "channels": "comma-separated channel subset (default: all)",
    "bands": "comma-separated NAME:LO-HI Hz bands, or 'broadband'",
    "embed_dim": "embedding dimension E",
    "embed_tau": "embedding delay tau in samples",
    "auto_embed": "choose tau by mutual information and E by false neighbours",
    "max_embed_dim": "largest E tried by --auto-embed",
    "max_tau": "largest tau tried by --auto-embed",
    "bandwidth_mode": "per_query_mean, per_query_nearest or global_fixed",
    "fixed_sigma": "kernel bandwidth for global_fixed",
    "exclusion_radius": "temporal exclusion radius (default: embedding span)",
    "allow_self_neighbor": "let a point be its own neighbour",
    "use_dbn": "weight neighbours by the DBN density (same as --mode dbn)",
    "max_lag": "DBN lag order",
    "lam": "L1 penalty of the DBN lasso",
    "use_ccm_priors": "scale the penalty by pairwise cross-map skill",
    "surrogate_method": "circular_shift or full_permutation",
    "n_surrogates": "number of surrogate draws",
    "pre_window": "START,END seconds (default: before onset)",
    "post_window": "START,END seconds (default: after onset plus guard)",
    "retrain_post": "refit the DBN on the post window",
    "granger_lag": "lag order of the Granger baseline",
    "convergence_draws": "random libraries per size in convergence curves",
    "output": "output directory",
    "convention": "CCM pair labels: paper (manifold->target) or sugihara (cause->effect)",
    "seed": "master seed; per-task seeds derive from it",
    "workers": "parallel worker processes",
}


def _config_epilog() -> str:
    lines = ["config file: INI sections and keys (flags override the file)", ""]
    for sec, keys in CONFIG_SECTIONS.items():
        lines.append(f"[{sec}]")
        lines += [f"  {k:<20} {KEY_HELP.get(k, '')}" for k in keys]
    return "\n".join(lines)

def _common(p, pair=True, analysis=True):
    p.add_argument("input", help="CSV file, one column per channel")
    p.add_argument("--sample-rate", type=float)
    p.add_argument("--onset", type=float, help="event onset in seconds")
    if pair:
        p.add_argument("--source", required=True, help="channel whose manifold does the predicting")
        p.add_argument("--target", required=True, help="channel being predicted")
    if analysis:
        p.add_argument("--embed-dim", type=int, default=3)
        p.add_argument("--embed-tau", type=int, default=1)
        p.add_argument("--auto-embed", action="store_true")
        p.add_argument("--max-embed-dim", type=int, default=6)
        p.add_argument("--max-tau", type=int, default=20)
        p.add_argument("--mode", choices=("standard", "dbn"), default="dbn")
        p.add_argument("--model", help="DBN model JSON from learn-dbn")
        p.add_argument("--max-lag", type=int, default=2)
        p.add_argument("--lam", type=float, default=0.01)
        p.add_argument("--bandwidth-mode", default="per_query_mean",
                       choices=("per_query_mean", "per_query_nearest", "global_fixed"))
        p.add_argument("--fixed-sigma", type=float)
        p.add_argument("--exclusion-radius", type=int)
        p.add_argument("--allow-self-neighbor", action="store_true")
        p.add_argument("--convention", choices=("paper", "sugihara"), default="paper")
        p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ccmtool", description="Convergent cross mapping "
                                 "with optional DBN-weighted neighbours.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate a CSV recording and summarise it")
    _common(p, pair=False, analysis=False)
    p.add_argument("--out", help="rewrite as canonical CSV plus sidecar")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", help="simulate a preset or spec file")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--preset", choices=("unidirectional", "bidirectional", "independent", "var3"))
    g.add_argument("--spec", help="SyntheticSpec JSON file")
    p.add_argument("--n-samples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="CSV path (a .json sidecar is written next to it)")
    p.add_argument("--emit-spec", action="store_true", help="print the spec JSON and stop")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("embed", help="delay-embedding parameters for one channel")
    _common(p, pair=False)
    p.add_argument("--channel", required=True)
    p.add_argument("--mi-lags", type=int, default=0, help="also print the MI curve to this lag")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("learn-dbn", help="fit the sparse linear-Gaussian DBN")
    _common(p, pair=False)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="model JSON path")
    p.set_defaults(func=cmd_learn_dbn)

    p = sub.add_parser("ccm", help="cross-map skill for one direction")
    _common(p)
    p.add_argument("--sizes", help="comma-separated library sizes for a convergence curve")
    p.add_argument("--n-draws", type=int, default=10)
    p.add_argument("--sampling", choices=("uniform", "contiguous"), default="uniform")
    p.set_defaults(func=cmd_ccm)

    p = sub.add_parser("intervene", help="pre/post event change in cross-map skill")
    _common(p)
    p.add_argument("--pre", help="START,END seconds")
    p.add_argument("--post", help="START,END seconds")
    p.add_argument("--retrain-post", action="store_true")
    p.set_defaults(func=cmd_intervene)

    p = sub.add_parser("metrics", help="predictive consistency against surrogates")
    _common(p)
    p.add_argument("--surrogate-method", choices=("circular_shift", "full_permutation"),
                   default="circular_shift")
    p.add_argument("--n-surrogates", type=int, default=100)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("run", help="full pipeline over all pairs and bands",
                       epilog=_config_epilog(),
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("input_file", nargs="?", help="CSV recording (or use --config / --stdin-spec)")
    p.add_argument("--config", help="INI-style config file")
    p.add_argument("--stdin-spec", action="store_true",
                   help="read a CSV recording or a SyntheticSpec JSON from stdin")
    p.add_argument("--mode", choices=("standard", "dbn"))
    p.add_argument("--out", dest="output")
    types = {f.name: f.type for f in fields(PipelineConfig)}
    for key in CONFIG_KEYS:
        if key in ("input", "output"):
            continue
        flag = "--" + key.replace("_", "-")
        kind = str(types[key])
        if "bool" in kind:
            p.add_argument(flag, dest=key, action="store_const", const=True, default=None,
                           help=KEY_HELP.get(key))
        elif "int" in kind:
            p.add_argument(flag, dest=key, type=int, help=KEY_HELP.get(key))
        elif "float" in kind:
            p.add_argument(flag, dest=key, type=float, help=KEY_HELP.get(key))
        else:
            p.add_argument(flag, dest=key, help=KEY_HELP.get(key))
    p.add_argument("--onset", dest="event_onset", type=float)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("plot", help="render SVG figures from report.json")
    p.add_argument("report")
    p.add_argument("--out-dir")
    p.add_argument("--convergence", help="convergence.csv (default: next to the report)")
    p.set_defaults(func=cmd_plot)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose,
                        format="%(levelname)s %(name)s: %(message)s")
    stage = args.command
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except PipelineError as exc:
        return _fail(exc.stage, str(exc), exc.exit_code)
    except UsageError as exc:
        return _fail(stage, str(exc), 2)
    except (CcmError, np.linalg.LinAlgError) as exc:
        return _fail(stage, f"{type(exc).__name__}: {exc}", 1)
    except (OSError, ValueError, KeyError) as exc:
        # unreadable or malformed input, bad option values
        return _fail(stage, f"{type(exc).__name__}: {exc}", 2)


if __name__ == "__main__":
    sys.exit(main())
