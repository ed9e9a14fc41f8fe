"""
The eleven release criteria, each at its stated tolerance and seed count.

Every test records a one-line PASS/FAIL verdict that is printed in the
"acceptance criteria" section at the end of the pytest run.
"""

import json
import time

import numpy as np

from dbnccm.baselines import granger
from dbnccm.benchmark import run_benchmark
from dbnccm.crossmap import KernelConfig, convergence, cross_map, cross_map_manifold
from dbnccm.dbn import EdgePriorMatrix, lagged_design, lambda_max, lasso_ista, learn
from dbnccm.embedding import EmbeddingParams, ShadowManifold, embed
from dbnccm.intervention import segmented_intervention
from dbnccm.metrics import causal_impact, pc_norm
from dbnccm.neighbors import knn_batch
from dbnccm.pipeline import PipelineConfig, run_pipeline
from dbnccm.series import Recording, TimeSeries
from dbnccm.synthetic import CounterRng, _VAR3, coupled_logistic, generate, sparse_var


def _elapsed(t0):
    return time.perf_counter() - t0


# --------------------------------------------------------------------------
# 1. weighting properties
# --------------------------------------------------------------------------

def _random_instance(rng):
    n = int(rng.integers(20, 80))
    E = int(rng.integers(1, 5))
    tau = int(rng.integers(1, 3))
    x = rng.normal(size=n)
    y = rng.normal(size=n)
    m = embed(TimeSeries(x, label="x"), EmbeddingParams(E, tau))
    density = rng.uniform(1e-6, 1.0, size=n)
    return m, y, density


def test_weighting_properties(report_criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    cfg = KernelConfig()
    failures = {"simplex": 0, "hull": 0, "scale_pow2": 0, "scale_any": 0, "constant_p": 0}
    bitwise_any = 0
    n_inst = 1000
    for _ in range(n_inst):
        m, y, p = _random_instance(rng)
        out = cross_map_manifold(m, y, cfg, p, exclusion_radius=0, keep_details=True)
        w = out["weights"]
        if np.any(w < 0) or np.max(np.abs(w.sum(axis=1) - 1.0)) > 1e-12:
            failures["simplex"] += 1
        yn = y[m.time_index(out["neighbors"])]
        pred = out["predictions"]
        if np.any(pred < yn.min(axis=1)) or np.any(pred > yn.max(axis=1)):
            failures["hull"] += 1

        c2 = 2.0 ** int(rng.integers(-30, 30))
        s2 = cross_map_manifold(m, y, cfg, c2 * p, exclusion_radius=0, keep_details=True)
        if not (np.array_equal(s2["weights"], w) and np.array_equal(s2["predictions"], pred)
                and s2["rho"] == out["rho"]):
            failures["scale_pow2"] += 1

        c = float(rng.uniform(1e-3, 1e3))
        sc = cross_map_manifold(m, y, cfg, c * p, exclusion_radius=0, keep_details=True)
        if np.array_equal(sc["weights"], w):
            bitwise_any += 1
        if (np.max(np.abs(sc["weights"] - w)) > 1e-12
                or np.max(np.abs(sc["predictions"] - pred)) > 1e-12 * max(1, np.abs(pred).max())
                or abs(sc["rho"] - out["rho"]) > 1e-12):
            failures["scale_any"] += 1

        const = np.full_like(p, float(rng.uniform(0.1, 5.0)))
        sd = cross_map_manifold(m, y, cfg, const, exclusion_radius=0, keep_details=True)
        st = cross_map_manifold(m, y, cfg, None, exclusion_radius=0, keep_details=True)
        if not (np.array_equal(sd["weights"], st["weights"])
                and np.array_equal(sd["predictions"], st["predictions"])):
            failures["constant_p"] += 1
    dt = _elapsed(t0)
    ok = not any(failures.values()) and dt < 60
    report_criterion(1, ok, f"weighting properties over {n_inst} instances, failures={failures}, "
                     f"arbitrary-c bitwise {bitwise_any}/{n_inst} (1e-12 bound asserted), "
                     f"{dt:.1f}s")
    assert ok, failures


# --------------------------------------------------------------------------
# 2. direction detection
# --------------------------------------------------------------------------

def test_direction_detection(report_criterion):
    t0 = time.perf_counter()
    P = EmbeddingParams(2, 1)
    margins = []
    for seed in range(20):
        x, y = generate(coupled_logistic(0.32, 0.0, 1000, seed)).channels
        # x drives y, so y's manifold recovers x far better than the reverse
        forward = cross_map(y, x, P).rho
        backward = cross_map(x, y, P).rho
        margins.append(abs(forward) - abs(backward))
    hits = sum(m >= 0.2 for m in margins)
    dt = _elapsed(t0)
    ok = hits >= 18 and dt < 120
    report_criterion(2, ok, f"planted direction by margin >= 0.2 in {hits}/20 seeds "
                     f"(min margin {min(margins):.3f}), {dt:.1f}s")
    assert ok


# --------------------------------------------------------------------------
# 3. convergence
# --------------------------------------------------------------------------

def test_convergence(report_criterion):
    t0 = time.perf_counter()
    P = EmbeddingParams(2, 1)
    sizes = [100, 200, 400, 800]
    monotone = 0
    for seed in range(20):
        x, y = generate(coupled_logistic(0.32, 0.0, 1000, seed)).channels
        c = convergence(y, x, P, sizes=sizes, n_draws=10, seed=seed)
        if all(b >= a - sa for a, b, sa in zip(c.rhos, c.rhos[1:], c.rho_std)):
            monotone += 1
    in_band = 0
    worst = 0.0
    for seed in range(20):
        rng = CounterRng(seed)
        a = TimeSeries(rng.normal(1000), label="a")
        b = TimeSeries(rng.normal(1000), label="b")
        r = convergence(a, b, P, sizes=sizes, n_draws=10, seed=seed).rhos[-1]
        in_band += -0.1 <= r <= 0.1
        worst = max(worst, abs(r))
    dt = _elapsed(t0)
    ok = monotone == 20 and in_band == 20 and dt < 300
    report_criterion(3, ok, f"nondecreasing within 1 std in {monotone}/20 seeds; white-noise "
                     f"rho(800) in [-0.1,0.1] in {in_band}/20 (max |rho| {worst:.3f}), {dt:.1f}s")
    assert ok


# --------------------------------------------------------------------------
# 4. exact neighbour search
# --------------------------------------------------------------------------

def _full_scan(points, radius, k):
    """Exhaustive reference: every pair's distance, then a (distance, index) sort."""
    n = points.shape[0]
    d2 = np.zeros((n, n))
    for c in range(points.shape[1]):
        diff = points[:, c][:, None] - points[:, c][None, :]
        d2 += diff * diff
    idx = np.empty((n, k), dtype=np.int64)
    for q in range(n):
        j = np.array([j for j in range(n) if abs(j - q) > radius])
        order = np.lexsort((j, d2[q, j]))[:k]
        idx[q] = j[order]
    return idx, np.sqrt(np.take_along_axis(d2, idx, axis=1))


def test_knn_oracle(report_criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    mismatches = 0
    checked = 0
    for trial in range(100):
        n = int(rng.integers(30, 501))
        E = int(rng.integers(1, 5))
        pts = rng.normal(size=(n, E))
        if trial % 4 == 0:
            pts = np.round(pts, 1)  # force distance ties
        m = ShadowManifold(pts, 0, EmbeddingParams(E, 1))
        for radius in range(11):
            idx, dist = knn_batch(m, None, None, radius)
            ref_idx, ref_dist = _full_scan(pts, radius, E + 1)
            checked += n
            mismatches += int(np.sum(np.any((idx != ref_idx) | (dist != ref_dist), axis=1)))
    dt = _elapsed(t0)
    ok = mismatches == 0 and dt < 60
    report_criterion(4, ok, f"kNN equals full scan on {checked} queries over 100 manifolds "
                     f"x radii 0-10, mismatches={mismatches}, {dt:.1f}s")
    assert ok


# --------------------------------------------------------------------------
# 5. DBN recovery
# --------------------------------------------------------------------------

def _f1(est, true):
    tp = int(np.sum(est & true))
    fp = int(np.sum(est & ~true))
    fn = int(np.sum(~est & true))
    return 2 * tp / (2 * tp + fp + fn) if tp else 0.0


def test_dbn_recovery(report_criterion):
    t0 = time.perf_counter()
    rec = generate(sparse_var(_VAR3, 2000, seed=0, snr_db=10))
    true = np.transpose(np.array(_VAR3) != 0, (1, 2, 0))
    assert true.sum() == 4
    X, Y = lagged_design(rec.as_array(), 2)
    lmax = max(lambda_max(X, Y[:, c]) for c in range(3))
    grid = lmax * np.logspace(0, -3, 20)
    f1s = []
    descent = True
    for lam in grid:
        model = learn(rec, 2, lam)
        f1s.append(_f1(model.weights != 0, true))
        descent &= all(np.all(np.diff(tr) <= 0) for tr in model.objective_trace)

    # lambda = 0 against ordinary least squares
    ols_gap = 0.0
    for c in range(3):
        fit = lasso_ista(X, Y[:, c], 0.0, max_iter=100_000, rel_tol=1e-15)
        descent &= bool(np.all(np.diff(fit.objective) <= 0))
        A = np.hstack([np.ones((X.shape[0], 1)), X])
        beta = np.linalg.lstsq(A, Y[:, c], rcond=None)[0]
        ols_gap = max(ols_gap, float(np.max(np.abs(fit.coef - beta[1:]))))
    empty = learn(rec, 2, lmax)
    dt = _elapsed(t0)
    ok = (max(f1s) >= 0.9 and ols_gap <= 1e-6 and not np.any(empty.weights)
          and descent and dt < 120)
    report_criterion(5, ok, f"best F1 {max(f1s):.3f} on 20-point grid, |lasso(0)-OLS| "
                     f"{ols_gap:.1e}, empty at lambda_max={not np.any(empty.weights)}, "
                     f"descent every iteration={descent}, {dt:.1f}s")
    assert ok


# --------------------------------------------------------------------------
# 6. prior monotonicity
# --------------------------------------------------------------------------

def test_prior_monotonicity(report_criterion):
    t0 = time.perf_counter()
    # one true edge x -> y at lag 1
    rng = CounterRng(6)
    n = 600
    e = rng.normal(2 * n).reshape(n, 2)
    x = e[:, 0]
    y = np.zeros(n)
    for t in range(1, n):
        y[t] = 0.3 * x[t - 1] + e[t, 1]
    rec = Recording.from_array(np.column_stack([x, y]), labels=["x", "y"])
    weights = []
    for s in np.linspace(0.0, 1.0, 10):
        pri = EdgePriorMatrix(np.array([[0.0, 0.0], [s, 0.0]]))
        weights.append(float(abs(learn(rec, 1, 0.15, pri).weights[1, 0, 0])))
    dt = _elapsed(t0)
    mono = all(b >= a for a, b in zip(weights, weights[1:]))
    ok = mono and dt < 30
    report_criterion(6, ok, f"|w(x->y)| over prior 0..1 = "
                     f"{[round(w, 4) for w in weights]} monotone={mono}, {dt:.1f}s")
    assert ok


# --------------------------------------------------------------------------
# 7. intervention semantics
# --------------------------------------------------------------------------

def test_intervention_semantics(report_criterion):
    t0 = time.perf_counter()
    P = EmbeddingParams(2, 1)
    drops = 0
    null_ok = 0
    for seed in range(20):
        rec = generate(coupled_logistic(0.32, 0.0, 1000, seed, switch_at=500))
        rec = Recording(rec.channels, 500.0)
        drops += segmented_intervention(rec, "y", "x", P).delta_rho < 0
        rec = generate(coupled_logistic(0.0, 0.0, 1000, seed))
        rec = Recording(rec.channels, 500.0)
        null_ok += abs(segmented_intervention(rec, "y", "x", P).delta_rho) <= 0.15
    rec = generate(coupled_logistic(0.32, 0.0, 1000, 0))
    same = segmented_intervention(rec, "y", "x", P, pre_window=(0, 600), post_window=(0, 600))
    dt = _elapsed(t0)
    ok = drops >= 15 and null_ok >= 18 and same.delta_rho == 0.0 and dt < 180
    report_criterion(7, ok, f"switch-off gives delta<0 in {drops}/20; null |delta|<=0.15 in "
                     f"{null_ok}/20; identical windows delta={same.delta_rho}, {dt:.1f}s")
    assert ok


# --------------------------------------------------------------------------
# 8. metrics arithmetic
# --------------------------------------------------------------------------

def test_metrics_arithmetic(report_criterion):
    t0 = time.perf_counter()
    pc = pc_norm(0.8, 0.2)
    single = causal_impact([("A", 0.7, 0.4)])
    ci_a, ci_b = causal_impact([("A", 0.8, 0.7), ("B", 0.5, 0.3)])
    dt = _elapsed(t0)
    ok = (pc == 0.75 and single == [0.7] and abs(ci_a - 0.40) <= 1e-12
          and abs(ci_b - 0.50) <= 1e-12 and dt < 1)
    report_criterion(8, ok, f"pc_norm(0.8,0.2)={pc!r}; single CI={single[0]!r}; "
                     f"CI_A={ci_a!r} CI_B={ci_b!r}, {dt * 1e3:.2f}ms")
    assert ok


# --------------------------------------------------------------------------
# 9. method ordering on the synthetic benchmark
# --------------------------------------------------------------------------

def test_benchmark_ordering(report_criterion):
    t0 = time.perf_counter()
    rows = run_benchmark()
    mean = lambda method, sub: float(np.mean([r.pc[method] for r in sub]))
    nonlinear = [r for r in rows if r.config.nonlinear]
    dbn, std = mean("dbn_ccm", rows), mean("standard_ccm", rows)
    nl = {m: mean(m, nonlinear) for m in ("dbn_ccm", "standard_ccm", "granger")}
    noises = sorted({r.config.noise for r in rows})
    dt = _elapsed(t0)
    ok = (len(rows) == 10 and noises == [0.05, 0.1, 0.2] and dbn >= std
          and nl["dbn_ccm"] >= nl["granger"] and nl["standard_ccm"] >= nl["granger"]
          and dt < 600)
    report_criterion(9, ok, f"mean PC dbn {dbn:.4f} >= standard {std:.4f}; nonlinear dbn "
                     f"{nl['dbn_ccm']:.4f}, standard {nl['standard_ccm']:.4f} >= granger "
                     f"{nl['granger']:.4f}, {dt:.1f}s")
    assert ok


# --------------------------------------------------------------------------
# 10. Granger calibration
# --------------------------------------------------------------------------

def test_granger_calibration(report_criterion):
    t0 = time.perf_counter()
    rejections = 0
    for seed in range(200):
        z = CounterRng(seed).normal(2000)
        res = granger(TimeSeries(z[:1000], label="x"), TimeSeries(z[1000:], label="y"), 2)
        rejections += res.p_value < 0.05
    rate = rejections / 200
    z = CounterRng(999).normal(2000)
    x = z[:1000]
    y = np.concatenate([[0.0], 0.9 * x[:-1]]) + 0.1 * z[1000:]
    strong = granger(TimeSeries(x, label="x"), TimeSeries(y, label="y"), 1)
    dt = _elapsed(t0)
    ok = 0.01 <= rate <= 0.11 and strong.p_value < 1e-6 and dt < 120
    report_criterion(10, ok, f"false-positive rate {rate:.3f} over 200 seeds; coupled "
                     f"p={strong.p_value:.2e}, {dt:.1f}s")
    assert ok


# --------------------------------------------------------------------------
# 11. pipeline determinism
# --------------------------------------------------------------------------

def _tree(root):
    out = {}
    for path in sorted(root.rglob("*")):
        if path.is_file():
            out[str(path.relative_to(root))] = path.read_bytes()
    return out


def test_pipeline_determinism(report_criterion, tmp_path):
    t0 = time.perf_counter()
    spec = coupled_logistic(0.32, 0.0, 600, 3, switch_at=300).to_dict()
    base = dict(synthetic=spec, event_onset=300.0, bands="broadband,slow:0.05-0.2",
                n_surrogates=20, seed=11)
    run_pipeline(PipelineConfig(output=str(tmp_path / "a"), workers=1, **base))
    run_pipeline(PipelineConfig(output=str(tmp_path / "b"), workers=2, **base))
    a, b = _tree(tmp_path / "a"), _tree(tmp_path / "b")
    reports = [k for k in a if k.endswith((".csv", ".json"))]
    same = a.keys() == b.keys() and all(a[k] == b[k] for k in a)
    rows = json.loads(a["report.json"])["rows"]
    dt = _elapsed(t0)
    ok = same and len(rows) > 0 and dt < 300
    report_criterion(11, ok, f"two runs (1 and 2 workers) byte-identical over {len(a)} files "
                     f"({len(reports)} CSV/JSON), {dt:.1f}s")
    assert ok
