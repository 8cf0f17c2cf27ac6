import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from llrcomp.autonet import generate_dataset, init_params
from llrcomp.channel import make_rng
from llrcomp.errors import ConfigurationError
from llrcomp.ldpc import default_code
from llrcomp.modem import build_constellation
from llrcomp.pipeline import (
    BLER_COLUMNS,
    ExperimentConfig,
    LatentCodec,
    combine_llrs,
    compression_ratio,
    emit_latent_histograms,
    harq_split,
    rows_to_csv,
    run_harq,
    run_single,
    snr_at_bler,
    storage_bits,
)

MID = (6.0, 8.5)


def cfg(**kw):
    base = dict(k_bits=4, snr_db=MID, codewords_per_point=60, frames_per_chunk=20, seed=3)
    base.update(kw)
    return ExperimentConfig(**base)


@pytest.fixture(scope="module")
def reference():
    return run_single(cfg(method="full_precision"))


def test_noiseless_link_has_no_errors():
    res = run_single(cfg(snr_db=(60.0,), codewords_per_point=40))
    assert res.errors.tolist() == [0]


@pytest.mark.parametrize("method", ["scalar_llr", "max_mi", "stats"])
def test_bypass_reproduces_full_precision(reference, method):
    res = run_single(cfg(method=method, n_bits=None))
    np.testing.assert_array_equal(res.errors, reference.errors)


def test_deep_bypass_with_identity_codec(reference):
    res = run_single(cfg(method="deep", n_bits=None), LatentCodec.identity(4))
    np.testing.assert_array_equal(res.errors, reference.errors)


def test_thread_count_does_not_change_results(reference):
    res = run_single(cfg(method="full_precision", threads=3))
    np.testing.assert_array_equal(res.errors, reference.errors)


def test_coarser_quantizer_is_not_better():
    fine = run_single(cfg(method="scalar_llr", n_bits=4, snr_db=(8.5,), codewords_per_point=200))
    coarse = run_single(cfg(method="scalar_llr", n_bits=1, snr_db=(8.5,), codewords_per_point=200))
    assert coarse.errors[0] >= fine.errors[0]


def test_deep_model_dimension_mismatch():
    with pytest.raises(ConfigurationError, match="K=2"):
        run_single(cfg(method="deep"), init_params(2, make_rng(0)))


def test_deep_without_model():
    with pytest.raises(ConfigurationError):
        run_single(cfg(method="deep"))


@pytest.mark.parametrize("kw", [dict(method="lossy"), dict(method="scalar_llr", n_bits=0), dict(snr_db=()),
                                dict(codewords_per_point=0), dict(threads=0)])
def test_config_validation(kw):
    with pytest.raises(ConfigurationError):
        cfg(**kw)


def test_harq_split_648():
    t1, t2 = harq_split(648, make_rng(0, "split"))
    assert (t1.size, t2.size) == (432, 432)
    both = np.intersect1d(t1, t2)
    assert both.size == 216
    np.testing.assert_array_equal(np.union1d(t1, t2), np.arange(648))
    assert 324 / (t1.size + t2.size) == pytest.approx(3 / 8)


@given(st.integers(1, 200), st.integers(0, 1000))
def test_harq_split_cardinalities(n, seed):
    t1, t2 = harq_split(n, make_rng(seed, "split"))
    core = n - n % 6
    assert t1.size == 2 * core // 3 + (n % 6 + 1) // 2
    assert t2.size == 2 * core // 3 + (n % 6) // 2
    assert np.intersect1d(t1, t2).size == core // 3
    np.testing.assert_array_equal(np.union1d(t1, t2), np.arange(n))


def test_combine_examples():
    np.testing.assert_array_equal(combine_llrs([1.5, 0.0, -2.0], [0.5, -3.0, 0.0]), [2.0, -3.0, -2.0])


def test_harq_is_deterministic():
    c = cfg(method="scalar_llr", n_bits=3, snr_db=(4.0,), codewords_per_point=40)
    assert run_harq(c).errors.tolist() == run_harq(c).errors.tolist()


def test_harq_noiseless():
    assert run_harq(cfg(snr_db=(60.0,), codewords_per_point=20)).errors.tolist() == [0]


@pytest.mark.parametrize(
    "method, k, nb, bits",
    [("deep", 4, 5, 15), ("stats", 4, 3, 9), ("scalar_llr", 4, 5, 20), ("max_mi", 8, 2, 16)],
)
def test_storage_bits(method, k, nb, bits):
    assert storage_bits(method, k, nb) == bits


def test_compression_ratios():
    assert compression_ratio(8 * 5, storage_bits("deep", 8, 5)) == pytest.approx(40 / 15)
    assert compression_ratio(8 * 4, storage_bits("deep", 8, 5)) == pytest.approx(32 / 15)
    with pytest.raises(ConfigurationError):
        storage_bits("full_precision", 4, 5)


def test_bler_csv_columns(reference):
    lines = reference.to_csv().splitlines()
    assert lines[0] == ",".join(BLER_COLUMNS)
    assert len(lines) == 1 + len(MID)
    assert lines[1].split(",")[4:6] == ["full_precision", ""]
    assert rows_to_csv([]) == ",".join(BLER_COLUMNS) + "\n"


@pytest.mark.parametrize(
    "snr, bler, expected",
    [
        ((1, 2, 3), (1.0, 0.1, 0.01), 2.0),
        ((1, 2), (1.0, 0.01), 1.5),
        ((1, 2), (0.05, 0.01), float("nan")),
        ((1, 2), (0.5, 0.2), float("nan")),
    ],
)
def test_snr_at_bler(snr, bler, expected):
    got = snr_at_bler(snr, bler)
    if np.isnan(expected):
        assert np.isnan(got)
    else:
        assert got == pytest.approx(expected)


def test_histograms_count_every_sample():
    data = generate_dataset([9.0], 4, default_code(), build_constellation(4), seed=1)
    h = emit_latent_histograms(init_params(4, make_rng(5)), data, bins=20)
    n = data.samples.shape[0]
    assert h.n_samples == n
    np.testing.assert_array_equal(h.marginal_counts.sum(axis=1), n)
    assert h.joint_counts.sum() == n
    assert h.marginal_density().sum(axis=1) == pytest.approx(np.ones(3))
    assert len(h.marginal_csv().splitlines()) == 21
    assert len(h.joint_csv().splitlines()) == 401
