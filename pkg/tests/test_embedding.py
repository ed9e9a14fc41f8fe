import numpy as np
import pytest
from hypothesis import given, strategies as st

from dbnccm.embedding import (EmbeddingParams, embed, fnn_fraction, mutual_information_curve,
                              select_dimension, select_tau)
from dbnccm.errors import SeriesTooShort
from dbnccm.series import TimeSeries
from dbnccm.synthetic import CounterRng, SyntheticSpec, generate


def logistic(n=2000, r=3.8, x0=0.4):
    spec = SyntheticSpec("coupled_logistic", n, 1, params={"r": [r], "x0": [x0]})
    return generate(spec).channels[0]


class TestEmbed:
    def test_first_point(self):
        m = embed(TimeSeries(np.arange(10.0)), EmbeddingParams(3, 2))
        assert m.n_points == 6
        np.testing.assert_array_equal(m.points[0], [4.0, 2.0, 0.0])

    def test_identity_case(self):
        x = np.random.default_rng(0).normal(size=12)
        m = embed(TimeSeries(x), EmbeddingParams(1, 5))
        np.testing.assert_array_equal(m.points[:, 0], x)

    def test_index_arithmetic(self):
        m = embed(TimeSeries(np.arange(10.0)), EmbeddingParams(2, 3))
        np.testing.assert_array_equal(m.points[0], [3.0, 0.0])
        np.testing.assert_array_equal(m.points[6], [9.0, 6.0])

    def test_too_short(self):
        with pytest.raises(SeriesTooShort):
            embed(TimeSeries(np.arange(4.0)), EmbeddingParams(3, 2))

    def test_invalid_params(self):
        with pytest.raises(ValueError):
            EmbeddingParams(0, 1)

    @given(st.integers(1, 5), st.integers(1, 4), st.integers(20, 80))
    def test_reconstruction_and_row_count(self, E, tau, n):
        x = CounterRng(n).normal(n)
        p = EmbeddingParams(E, tau)
        m = embed(TimeSeries(x), p)
        assert m.n_points + (E - 1) * tau == n
        k = np.arange(m.n_points)
        for j in range(E):
            assert np.array_equal(m.points[:, j], x[m.source_index_offset + k - j * tau])
        assert np.array_equal(embed(TimeSeries(x), p).points, m.points)


class TestSelectTau:
    def test_sinusoid_quarter_period(self):
        t = np.arange(2000)
        tau = select_tau(TimeSeries(np.sin(2 * np.pi * t / 40)), 30)
        assert abs(tau - 10) <= 2

    @pytest.mark.parametrize("seed", range(20))
    def test_white_noise_falls_back_to_one(self, seed):
        assert select_tau(TimeSeries(CounterRng(seed).normal(1000)), 20) == 1

    @pytest.mark.parametrize("seed", range(5))
    def test_chaotic_map_gives_one(self, seed):
        spec = SyntheticSpec("coupled_logistic", 2000, 1, params={"r": [3.8]}, seed=seed)
        assert select_tau(generate(spec).channels[0], 20) == 1

    def test_single_candidate(self):
        assert select_tau(TimeSeries(np.random.default_rng(0).normal(size=50)), 1) == 1

    def test_too_short(self):
        with pytest.raises(SeriesTooShort):
            select_tau(TimeSeries(np.arange(10.0)), 5)

    def test_mi_curve_starts_at_entropy(self):
        mi = mutual_information_curve(np.random.default_rng(1).normal(size=500), 5)
        assert mi.shape == (6,) and mi[0] == mi.max()


class TestSelectDimension:
    def test_logistic_map(self):
        assert select_dimension(logistic(), 1, 6) in (2, 3)

    def test_sinusoid(self):
        t = np.arange(2000)
        assert select_dimension(TimeSeries(np.sin(2 * np.pi * t / 40)), 10, 6) == 2

    def test_single_candidate(self):
        assert select_dimension(logistic(200), 1, 1) == 1

    def test_fnn_unfolds_sinusoid(self):
        x = np.sin(2 * np.pi * np.arange(2000) / 40)
        assert fnn_fraction(x, 1, 10) > 0.3
        assert fnn_fraction(x, 2, 10) < 0.05

    def test_one_dimensional_map_has_no_false_neighbours(self):
        # the next value is a function of the present one
        assert fnn_fraction(logistic().values, 1, 1) < 0.05

    @pytest.mark.parametrize("period", [40.3, 41.7, 80])
    def test_tau_on_other_periods(self, period):
        x = np.sin(2 * np.pi * np.arange(4000) / period)
        assert abs(select_tau(TimeSeries(x), 60) - period / 4) <= 2
