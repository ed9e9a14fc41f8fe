import numpy as np
import pytest

from dbnccm.errors import InvalidSpec, Unstable
from dbnccm.synthetic import (CounterRng, SyntheticSpec, coupled_logistic, generate,
                              ground_truth, preset, sparse_var)


def test_logistic_first_step():
    rec = generate(coupled_logistic(0.0, 0.0, 3, 0, burn_in=0, x0=[0.4, 0.4]))
    assert rec.channel("x").values[1] == pytest.approx(0.912, abs=1e-15)


def test_uncoupled_channels_independent():
    rec = generate(coupled_logistic(0.0, 0.0, 2000, 1, r=(3.8, 3.7)))
    x, y = rec.channels
    assert abs(np.corrcoef(x.values, y.values)[0, 1]) < 0.1


def test_var_autocorrelation():
    rec = generate(sparse_var([np.eye(2) * 0.5], 5000, 2))
    for ch in rec.channels:
        v = ch.values - ch.values.mean()
        assert float(v[1:] @ v[:-1] / (v @ v)) == pytest.approx(0.5, abs=0.05)


def test_ground_truth_counts():
    truth = ground_truth(preset("var3"))
    assert truth.sum() == 4
    assert ground_truth(coupled_logistic(0.3, 0.0)).tolist() == [[False, False], [True, False]]


def test_deterministic():
    s = preset("bidirectional", 300, 7)
    assert np.array_equal(generate(s).as_array(), generate(s).as_array())
    assert not np.array_equal(generate(s).as_array(), generate(preset("bidirectional", 300, 8)).as_array())


def test_unstable_var():
    with pytest.raises(Unstable):
        sparse_var([np.eye(2) * 1.01], 100)


def test_invalid_specs():
    with pytest.raises(InvalidSpec):
        SyntheticSpec("lorenz", 100, 2)
    with pytest.raises(InvalidSpec):
        preset("nope")
    with pytest.raises(InvalidSpec):
        SyntheticSpec("coupled_logistic", 100, 2, ((0.0,),))


def test_spec_round_trip():
    s = coupled_logistic(0.2, 0.05, 500, 3, switch_at=200)
    assert SyntheticSpec.from_dict(s.to_dict()) == s


def test_counter_rng():
    a = CounterRng(0)
    first = a.uniform(3)
    assert np.array_equal(CounterRng(0, counter=1).uniform(2), first[1:])
    u = CounterRng(11).uniform(20000)
    assert 0 < u.min() and u.max() < 1 and abs(u.mean() - 0.5) < 0.01
    z = CounterRng(12).normal(20000)
    assert abs(z.mean()) < 0.03 and abs(z.std() - 1) < 0.03


def test_coupling_switch():
    before = generate(coupled_logistic(0.32, 0.0, 600, 0))
    after = generate(coupled_logistic(0.32, 0.0, 600, 0, switch_at=300))
    a, b = before.as_array(), after.as_array()
    assert np.array_equal(a[:, 0], b[:, 0])
    assert not np.array_equal(a[320:, 1], b[320:, 1])


def test_snr_noise():
    clean = generate(coupled_logistic(n_samples=2000, seed=1)).as_array()
    noisy = generate(coupled_logistic(n_samples=2000, seed=1, snr_db=20.0)).as_array()
    ratio = (noisy - clean).std(axis=0) / clean.std(axis=0)
    np.testing.assert_allclose(ratio, 0.1, rtol=0.1)


def test_intervention_clamp():
    s = SyntheticSpec("coupled_logistic", 400, 2, ((0, 0), (0.3, 0)), {"r": [3.8, 3.5]},
                      intervention={"channel": "x", "mode": "clamp", "value": 0.5, "onset": 200})
    x = generate(s).channel("x").values
    assert np.all(x[200:] == 0.5)
