import numpy as np
import pytest
from scipy import stats

from llrcomp.channel import NoiseModel, apply_channel, draw_channel, make_rng, snr_to_noise_var
from llrcomp.modem import build_constellation


@pytest.mark.parametrize("snr, nv", [(0, 1.0), (10, 0.1), (-10, 10.0)])
def test_snr_to_noise_var(snr, nv):
    assert snr_to_noise_var(snr) == pytest.approx(nv, rel=1e-12)
    assert NoiseModel(snr).noise_var == pytest.approx(nv, rel=1e-12)


def test_noise_model_rejects_nan():
    with pytest.raises(ValueError):
        NoiseModel(float("nan"))


def test_fixed_seed_reproduces():
    a = draw_channel(make_rng(5, "x"), 10)
    b = draw_channel(make_rng(5, "x"), 10)
    np.testing.assert_array_equal(a, b)


def test_streams_are_distinct():
    a = draw_channel(make_rng(5, "train"), 8)
    b = draw_channel(make_rng(5, "eval"), 8)
    c = draw_channel(make_rng(5, "eval", 1), 8)
    assert not np.allclose(a, b)
    assert not np.allclose(b, c)


def test_channel_power_and_distribution():
    h = draw_channel(make_rng(0, "h"), 1_000_000)
    assert 0.99 <= np.mean(np.abs(h) ** 2) <= 1.01
    ks = stats.kstest(np.abs(h), stats.rayleigh(scale=1 / np.sqrt(2)).cdf).statistic
    assert ks < 0.002
    assert np.var(h.real) == pytest.approx(0.5, rel=0.01)
    assert np.var(h.imag) == pytest.approx(0.5, rel=0.01)


def test_noise_variance():
    s = np.ones(1_000_000, dtype=complex)
    obs = apply_channel(s, NoiseModel(10.0), make_rng(2, "n"))
    n = obs.r - obs.h * s
    assert 0.099 <= np.mean(np.abs(n) ** 2) <= 0.101


def test_infinite_snr_is_noiseless():
    c = build_constellation(4)
    obs = apply_channel(c.points, NoiseModel(float("inf")), make_rng(0, "inf"))
    np.testing.assert_array_equal(obs.r, obs.h * c.points)


def test_mean_instantaneous_snr():
    snr = 12.0
    obs = apply_channel(np.ones(1_000_000), NoiseModel(snr), make_rng(1, "g"))
    g = np.abs(obs.h) ** 2 / obs.noise_var
    assert np.mean(g) == pytest.approx(10 ** (snr / 10), rel=0.02)


def test_scalar_symbol_gives_scalar_observation():
    obs = apply_channel(1 + 0j, NoiseModel(3.0), make_rng(0))
    assert isinstance(obs.r, complex) and isinstance(obs.h, complex)
    assert obs.noise_var == pytest.approx(10**-0.3)
