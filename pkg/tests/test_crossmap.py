import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from dbnccm.crossmap import (KernelConfig, convergence, cross_map, cross_map_manifold,
                             hybrid_weights, kernel_weight_matrix, kernel_weights, pearson)
from dbnccm.dbn import DbnModel, learn
from dbnccm.embedding import EmbeddingParams, embed
from dbnccm.errors import DegenerateNeighborhood, LengthMismatch
from dbnccm.neighbors import NeighborSet
from dbnccm.series import Recording, TimeSeries
from dbnccm.synthetic import CounterRng, coupled_logistic, generate

P2 = EmbeddingParams(2, 1)


def pair(seed=0, n=1000):
    return generate(coupled_logistic(0.32, 0.0, n, seed)).channels


class TestKernel:
    def test_zero_distance(self):
        u = kernel_weights(NeighborSet(0, np.array([1, 2]), np.array([0.0, 1.0])))
        assert u[0] == 1.0

    def test_one_sigma(self):
        cfg = KernelConfig("global_fixed", 2.0)
        u = kernel_weights(NeighborSet(0, np.array([1]), np.array([2.0])), cfg)
        assert u[0] == pytest.approx(math.exp(-0.5), rel=1e-15)

    def test_per_query_mean(self):
        u = kernel_weights(NeighborSet(0, np.arange(3), np.array([1.0, 2.0, 3.0])))
        np.testing.assert_allclose(u, np.exp([-1 / 8, -1 / 2, -9 / 8]), rtol=1e-15)

    def test_fixed_sigma_required(self):
        with pytest.raises(ValueError):
            KernelConfig("global_fixed")
        with pytest.raises(ValueError):
            KernelConfig("per_query_mean", 1.0)

    def test_all_zero_distances(self):
        u = kernel_weight_matrix(np.zeros((1, 3)), KernelConfig())
        assert np.all(u == 1.0)

    def test_zero_bandwidth_with_positive_distance(self):
        with pytest.raises(DegenerateNeighborhood):
            kernel_weight_matrix(np.array([[0.0, 1.0]]), KernelConfig("per_query_nearest"))

    @given(arrays(float, st.integers(2, 8), elements=st.floats(0, 50)))
    def test_non_increasing_in_distance(self, d):
        d = np.unique(d)
        if d.size < 2:
            return
        u = kernel_weight_matrix(d[None, :], KernelConfig("global_fixed", 10.0))[0]
        assert np.all(np.diff(u) <= 0)


class TestHybridWeights:
    @given(arrays(float, (4, 3), elements=st.floats(1e-3, 1.0)),
           arrays(float, (4, 3), elements=st.floats(1e-12, 1.0)))
    def test_simplex(self, u, p):
        w = hybrid_weights(u, p)
        assert np.all(w >= 0)
        assert np.max(np.abs(w.sum(axis=1) - 1)) <= 1e-12

    @given(arrays(float, (3, 4), elements=st.floats(1e-3, 1.0)), st.floats(1e-6, 1e6))
    def test_constant_p_reduces_to_kernel(self, u, c):
        assert np.array_equal(hybrid_weights(u, np.full_like(u, c)), hybrid_weights(u))


class TestPearson:
    def test_examples(self):
        a = np.array([1.0, 2.0, 3.0])
        assert pearson(a, a) == pytest.approx(1.0, abs=1e-15)
        assert pearson(a, -a) == pytest.approx(-1.0, abs=1e-15)
        assert pearson(a, [1.0, 2.0, 4.0]) == pytest.approx(0.9819805060619657, abs=1e-15)

    def test_degenerate(self):
        rho, flag = pearson([1.0, 1.0, 1.0], [1.0, 2.0, 3.0], return_flag=True)
        assert rho == 0.0 and flag

    @given(arrays(float, st.integers(3, 40), elements=st.floats(-1e3, 1e3)),
           st.integers(0, 2**31))
    def test_bounded(self, a, seed):
        b = np.random.default_rng(seed).normal(size=a.size)
        assert -1.0 <= pearson(a, b) <= 1.0


class TestCrossMap:
    def test_self_cross_map(self):
        x, _ = pair()
        assert cross_map(x, x, P2).rho >= 0.99

    def test_constant_density_model_matches_standard(self):
        x, y = pair(1, 400)
        rec = Recording((x, y))
        W = np.zeros((2, 2, 1))
        # zero weights, zero intercept, huge variance: density constant to rounding
        model = DbnModel(W, np.zeros(2), np.array([1e300, 1e300]), 1, 0.0, ("x", "y"))
        a = cross_map(y, x, P2, model=model, recording=rec, keep_details=True)
        b = cross_map(y, x, P2, keep_details=True)
        assert np.array_equal(a.weights, b.weights)
        assert np.array_equal(a.predictions, b.predictions)

    def test_dbn_mode_runs_and_labels(self):
        x, y = pair(2, 600)
        rec = Recording((x, y))
        res = cross_map(y, x, P2, model=learn(rec, 2, 0.01), recording=rec)
        assert res.mode == "dbn_informed" and res.direction == ("y", "x")
        assert -1 <= res.rho <= 1
        d = res.to_dict()
        assert d["embedding"] == {"E": 2, "tau": 1}

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            cross_map(TimeSeries(np.arange(10.0)), TimeSeries(np.arange(9.0)), P2)

    def test_constant_target_warns(self):
        x = TimeSeries(CounterRng(0).normal(100), label="x")
        with pytest.warns(RuntimeWarning):
            res = cross_map(x, TimeSeries(np.ones(100), label="c"), P2)
        assert res.rho == 0.0 and res.degenerate

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31), st.integers(1, 4))
    def test_convex_hull(self, seed, E):
        rng = np.random.default_rng(seed)
        x, y = rng.normal(size=60), rng.normal(size=60)
        m = embed(TimeSeries(x), EmbeddingParams(E, 1))
        out = cross_map_manifold(m, y, density=rng.uniform(0.01, 1, 60), keep_details=True)
        yn = y[m.time_index(out["neighbors"])]
        assert np.all(out["predictions"] >= yn.min(axis=1))
        assert np.all(out["predictions"] <= yn.max(axis=1))


class TestConvergence:
    def test_full_library_single_draw(self):
        x, y = pair(3, 300)
        c = convergence(y, x, P2, sizes=[299], n_draws=1)
        assert c.rhos[0] == cross_map(y, x, P2).rho

    def test_sizes_must_increase(self):
        x, y = pair(3, 300)
        with pytest.raises(ValueError):
            convergence(y, x, P2, sizes=[200, 100])

    def test_csv(self):
        x, y = pair(3, 300)
        c = convergence(y, x, P2, sizes=[50, 100], n_draws=2, seed=1)
        lines = c.to_csv().splitlines()
        assert lines[0] == "size,rho_mean,rho_std" and len(lines) == 3

    def test_contiguous_sampling_deterministic(self):
        x, y = pair(4, 300)
        a = convergence(y, x, P2, sizes=[50, 150], n_draws=3, seed=9, sampling="contiguous")
        b = convergence(y, x, P2, sizes=[50, 150], n_draws=3, seed=9, sampling="contiguous")
        assert a == b
