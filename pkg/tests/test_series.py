import io
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from dbnccm.errors import InvalidBand, NonFiniteInput, OutOfRange, ZeroVariance
from dbnccm.series import (BandSpec, Recording, TimeSeries, bandpass, parse_bands, read_csv,
                           segment, standardize, write_csv)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def sine(freq, rate=100.0, seconds=10.0, amp=1.0):
    t = np.arange(int(rate * seconds)) / rate
    return TimeSeries(amp * np.sin(2 * np.pi * freq * t), rate, "s")


def rec_5s():
    data = np.arange(1000, dtype=float).reshape(500, 2)
    return Recording.from_array(data, 100.0, ["a", "b"])


class TestTimeSeries:
    def test_values_are_read_only(self):
        ts = TimeSeries([1.0, 2.0])
        with pytest.raises(ValueError):
            ts.values[0] = 3.0

    def test_rejects_nan(self):
        with pytest.raises(NonFiniteInput):
            TimeSeries([1.0, np.nan])

    def test_recording_channels_same_length(self):
        with pytest.raises(ValueError):
            Recording((TimeSeries([1.0, 2.0], label="a"), TimeSeries([1.0], label="b")))

    def test_onset_must_be_inside(self):
        with pytest.raises(OutOfRange):
            Recording.from_array(np.zeros((10, 2)) + np.arange(10)[:, None], 1.0, None, 10.0)


class TestStandardize:
    def test_three_points(self):
        out = standardize(TimeSeries([1.0, 2.0, 3.0]))
        np.testing.assert_array_equal(out.values, [-1.0, 0.0, 1.0])

    def test_constant(self):
        with pytest.raises(ZeroVariance):
            standardize(TimeSeries([5.0, 5.0, 5.0]))

    @given(arrays(float, st.integers(3, 60), elements=finite))
    def test_mean_zero_and_idempotent(self, x):
        if np.ptp(x) < 1e-6:
            return
        z = standardize(TimeSeries(x))
        assert abs(z.values.mean()) < 1e-12
        np.testing.assert_allclose(standardize(z).values, z.values, atol=1e-10)


class TestBandpass:
    def test_passband_amplitude(self):
        out = bandpass(sine(10.0), BandSpec("alpha", 8.0, 12.0))
        amp = np.sqrt(2) * out.values.std()
        assert abs(amp - 1.0) < 0.05

    def test_stopband_rms(self):
        x = sine(40.0)
        out = bandpass(x, BandSpec("alpha", 8.0, 12.0))
        assert np.sqrt(np.mean(out.values ** 2)) < 0.01 * np.sqrt(np.mean(x.values ** 2))

    def test_reversed_band(self):
        with pytest.raises(InvalidBand):
            bandpass(sine(10.0), BandSpec("bad", 12.0, 8.0))

    def test_above_nyquist(self):
        with pytest.raises(InvalidBand):
            bandpass(sine(10.0), BandSpec("bad", 10.0, 60.0))

    def test_zero_phase(self):
        out = bandpass(sine(10.0), BandSpec("alpha", 8.0, 12.0))
        # no delay: the filtered sinusoid stays in phase with the input
        assert np.corrcoef(out.values, sine(10.0).values)[0, 1] > 0.999

    @settings(max_examples=25)
    @given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 10_000))
    def test_linear(self, a, b, seed):
        rng = np.random.default_rng(seed)
        x, y = rng.normal(size=256), rng.normal(size=256)
        band = BandSpec("b", 5.0, 20.0)
        f = lambda v: bandpass(TimeSeries(v, 100.0), band).values
        lhs = f(a * x + b * y)
        rhs = a * f(x) + b * f(y)
        scale = max(1.0, np.abs(rhs).max())
        assert np.max(np.abs(lhs - rhs)) <= 1e-8 * scale


class TestSegment:
    def test_lengths(self):
        assert len(segment(rec_5s(), (0.0, 1.1))) == 110
        assert len(segment(rec_5s(), (1.1, 5.0))) == 390

    def test_out_of_range(self):
        with pytest.raises(OutOfRange):
            segment(rec_5s(), (4.0, 6.0))

    def test_composition(self):
        r = rec_5s()
        once = segment(r, (1.0, 3.5))
        twice = segment(segment(r, (0.5, 4.0)), (0.5, 3.0))
        np.testing.assert_array_equal(once.as_array(), twice.as_array())

    def test_onset_rereferenced(self):
        r = Recording(rec_5s().channels, 2.0)
        assert segment(r, (1.0, 3.0)).event_onset == pytest.approx(1.0)
        assert segment(r, (2.5, 3.0)).event_onset is None


class TestBands:
    def test_defaults_and_custom(self):
        bands = parse_bands("alpha,slow:0.5-2,broadband")
        assert bands[0].low_hz == 8.0 and bands[1] == BandSpec("slow", 0.5, 2.0)
        assert bands[2] is None

    def test_unknown(self):
        with pytest.raises(InvalidBand):
            parse_bands("kappa")

    def test_empty_is_broadband(self):
        assert parse_bands(None) == [None]


class TestCsv:
    def test_round_trip_with_sidecar(self, tmp_path):
        rng = np.random.default_rng(0)
        rec = Recording.from_array(rng.normal(size=(50, 3)), 250.0, ["c3", "c4", "emg"], 0.1)
        path = tmp_path / "r.csv"
        write_csv(rec, str(path))
        back = read_csv(str(path))
        np.testing.assert_array_equal(back.as_array(), rec.as_array())
        assert back.labels == rec.labels
        assert back.sample_rate == 250.0 and back.event_onset == 0.1
        assert json.loads((tmp_path / "r.csv.json").read_text())["sample_rate"] == 250.0

    def test_stream_and_override(self):
        rec = read_csv(io.StringIO("a,b\n1,2\n3,5\n4,4\n"), sample_rate=2.0)
        assert rec.sample_rate == 2.0 and rec.channel("b").values[1] == 5.0

    def test_non_numeric(self):
        with pytest.raises(ValueError):
            read_csv(io.StringIO("a,b\n1,x\n"))

    def test_nan_rejected(self):
        with pytest.raises(NonFiniteInput):
            read_csv(io.StringIO("a,b\n1,nan\n2,3\n"))
