import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from llrcomp.autonet import (
    AdamState,
    LayerSpec,
    MlpParams,
    TrainConfig,
    adam_step,
    architecture,
    backward,
    decoder_forward,
    encoder_forward,
    generate_dataset,
    init_params,
    load_params,
    loss_and_grad,
    noise_layer,
    save_params,
    train,
    weighted_loss,
)
from llrcomp.channel import make_rng
from llrcomp.errors import ConfigurationError, ParamsFormatError, TrainingError
from llrcomp.ldpc import default_code
from llrcomp.modem import build_constellation
from oracles import gradient_check_draw, gradient_mismatch, numeric_gradients


def zero_params(k):
    p = init_params(k, make_rng(0))
    return p.like([np.zeros_like(a) for a in p.arrays()])


@pytest.fixture(scope="module")
def small_data():
    return generate_dataset((8.0, 10.0), 20, default_code(), build_constellation(4), seed=3)


def test_architecture_shapes():
    specs = architecture(8)
    dims = [(s.in_dim, s.out_dim, s.activation) for s in specs]
    assert dims == [
        (8, 32, "relu"), (32, 32, "relu"), (32, 3, "tanh"),
        (3, 32, "relu"), (32, 32, "relu"), (32, 8, "tanh"),
    ]


def test_layer_spec_validation():
    with pytest.raises(ValueError):
        LayerSpec(0, 3, "relu")
    with pytest.raises(ValueError):
        LayerSpec(3, 3, "sigmoid")


def test_params_shape_validation():
    p = init_params(4, make_rng(0))
    with pytest.raises(ValueError):
        MlpParams(p.specs, [w.T for w in p.weights], p.biases)


def test_zero_weights_give_zero_outputs():
    p = zero_params(4)
    x = np.tanh(make_rng(1).normal(size=(5, 4)))
    np.testing.assert_array_equal(encoder_forward(x, p), 0.0)
    np.testing.assert_array_equal(decoder_forward(np.ones((5, 3)), p), 0.0)


def test_hand_computed_chain():
    p = zero_params(1)
    # encoder 1 -> 4 -> 4 -> 3 and decoder 3 -> 4 -> 4 -> 1 with a few unit weights
    p.weights[0][0, 0] = 2.0
    p.biases[0][1] = -1.0
    p.weights[1][0, 0] = 0.5
    p.weights[2][0, 2] = 1.0
    p.biases[2][1] = 0.25
    x = np.array([[0.3]])
    h1 = max(2 * 0.3, 0)
    h2 = max(0.5 * h1, 0)
    expected = [0.0, np.tanh(0.25), np.tanh(h2)]
    np.testing.assert_allclose(encoder_forward(x, p), [expected], rtol=1e-15)
    p.weights[3][2, 1] = -3.0
    p.biases[3][1] = 1.0
    p.weights[4][1, 3] = 1.5
    p.weights[5][3, 0] = 0.7
    z = np.array([[0.1, 0.2, 0.1]])
    d1 = max(-3 * 0.1 + 1.0, 0)
    d2 = max(1.5 * d1, 0)
    np.testing.assert_allclose(decoder_forward(z, p), [[np.tanh(0.7 * d2)]], rtol=1e-15)


def test_width_mismatch():
    p = init_params(4, make_rng(0))
    with pytest.raises(ValueError):
        encoder_forward(np.zeros((2, 3)), p)
    with pytest.raises(ValueError):
        decoder_forward(np.zeros((2, 4)), p)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.1, 100))
def test_outputs_bounded(seed, scale):
    p = init_params(4, make_rng(seed))
    p = p.like([a * scale for a in p.arrays()])
    x = np.tanh(make_rng(seed, "x").normal(0, 5, size=(64, 4)))
    assert np.all(np.abs(encoder_forward(x, p)) <= 1)
    assert np.all(np.abs(decoder_forward(encoder_forward(x, p), p)) <= 1)


def test_noise_layer():
    z = np.zeros(1_000_000)
    np.testing.assert_array_equal(noise_layer(z, 0.0, make_rng(0)), z)
    np.testing.assert_array_equal(noise_layer(z, 1e-3, make_rng(0), training=False), z)
    n = noise_layer(z, 1e-3, make_rng(0, "noise"))
    assert 0.99e-3 <= np.std(n) <= 1.01e-3
    assert abs(np.mean(n)) <= 3e-3 / 1e3
    with pytest.raises(ValueError):
        noise_layer(z, -1.0, make_rng(0))


@pytest.mark.parametrize(
    "target, recon, expected",
    [([0.5], [0.4], 0.01 / 0.5001), ([0.0], [0.01], 1.0), ([0.3, -0.9], [0.3, -0.9], 0.0)],
)
def test_weighted_loss_examples(target, recon, expected):
    assert weighted_loss(target, recon, 1e-4) == pytest.approx(expected, rel=1e-12)


def test_weighted_loss_shape_mismatch():
    with pytest.raises(ValueError):
        weighted_loss(np.zeros(3), np.zeros(4))


@pytest.mark.parametrize("index", range(10))
def test_gradients_match_finite_differences(index):
    p, x, noise = gradient_check_draw(4, index)
    _, grads = loss_and_grad(p, x, noise, 1e-4)
    assert gradient_mismatch(grads.arrays(), numeric_gradients(p, x, noise, 1e-4)) <= 1.0


def test_output_bias_gradient_zero_at_minimum():
    # zero last layer reconstructs 0, which equals an all-zero target batch
    p = init_params(2, make_rng(4))
    p.weights[-1][:] = 0.0
    x = np.zeros((16, 2))
    np.testing.assert_array_equal(decoder_forward(encoder_forward(x, p), p), x)
    loss, grads = backward(p, x, 0.0, make_rng(0))
    assert loss == 0.0
    np.testing.assert_array_equal(grads.biases[-1], 0.0)


def test_duplicated_batch_doubles_gradients():
    p = init_params(4, make_rng(6))
    x = np.tanh(make_rng(7).normal(0, 2, size=(10, 4)))
    noise = 1e-3 * make_rng(8).standard_normal((10, 3))
    l1, g1 = loss_and_grad(p, x, noise)
    l2, g2 = loss_and_grad(p, np.vstack([x, x]), np.vstack([noise, noise]))
    assert l2 == pytest.approx(2 * l1, rel=1e-12)
    for a, b in zip(g1.arrays(), g2.arrays()):
        np.testing.assert_allclose(b, 2 * a, rtol=1e-10, atol=1e-14)


def test_adam_zero_gradient_is_noop():
    p = init_params(4, make_rng(0))
    zero = p.like([np.zeros_like(a) for a in p.arrays()])
    q, state = adam_step(p, zero, AdamState.zeros(p), 1e-3)
    for a, b in zip(p.arrays(), q.arrays()):
        np.testing.assert_array_equal(a, b)
    assert state.t == 1


def test_adam_first_step_is_sign_step():
    p = init_params(4, make_rng(0))
    g = p.like([np.full_like(a, c) for a, c in zip(p.arrays(), [0.3, -2.0, 5.0, -0.01] * 3)])
    q, _ = adam_step(p, g, AdamState.zeros(p), 1e-3)
    for a, b, ga in zip(p.arrays(), q.arrays(), g.arrays()):
        np.testing.assert_allclose(b - a, -1e-3 * np.sign(ga), rtol=1e-5)


def test_dataset_counts_and_range():
    data = generate_dataset((5.0, 10.0, 15.0, 20.0), 10, default_code(), build_constellation(8), seed=1)
    assert data.samples.shape == (4 * 10 * 81, 8)
    assert np.all(np.abs(data.samples) <= 1)
    assert set(np.unique(data.snr_db)) == {5.0, 10.0, 15.0, 20.0}
    again = generate_dataset((5.0, 10.0, 15.0, 20.0), 10, default_code(), build_constellation(8), seed=1)
    np.testing.assert_array_equal(data.samples, again.samples)


def test_dataset_thread_count_invariant():
    pm, c = default_code(), build_constellation(4)
    a = generate_dataset((9.0,), 600, pm, c, seed=2, threads=1)
    b = generate_dataset((9.0,), 600, pm, c, seed=2, threads=3)
    np.testing.assert_array_equal(a.samples, b.samples)


def test_train_reduces_loss_and_is_reproducible(small_data):
    cfg = TrainConfig(batch_size=512, epochs=200, seed=1)
    res = train(cfg, small_data)
    assert res.loss_history[-1] <= 0.1 * res.loss_history[0]
    window = np.convolve(res.loss_history, np.ones(100) / 100, mode="valid")
    assert np.all(np.diff(window) <= 1e-12)
    again = train(TrainConfig(batch_size=512, epochs=3, seed=1), small_data)
    np.testing.assert_array_equal(again.loss_history, res.loss_history[:3])


def test_identity_capacity():
    # latent width = K and no noise: the net can learn a near-identity map
    x = np.tanh(make_rng(3).normal(0, 1, size=(4096, 2)))
    res = train(TrainConfig(batch_size=256, epochs=150, noise_std=0.0, learning_rate=3e-3, seed=0),
                x, latent_dim=2)
    assert res.loss_history[-1] < 0.02 * res.loss_history[0]


def test_train_errors(small_data):
    with pytest.raises(ConfigurationError):
        train(TrainConfig(batch_size=10**7, epochs=1), small_data)
    with pytest.raises(ConfigurationError):
        train(TrainConfig(batch_size=8, epochs=1), small_data, k_bits=8)
    bad = init_params(4, make_rng(0))
    bad.weights[0][:] = np.nan
    with pytest.raises(TrainingError) as info:
        train(TrainConfig(batch_size=512, epochs=2), small_data, params=bad)
    assert info.value.epoch == 0


def test_train_config_validation():
    with pytest.raises(ConfigurationError):
        TrainConfig(learning_rate=0)
    with pytest.raises(ConfigurationError):
        TrainConfig(noise_std=-1)


def test_params_roundtrip():
    p = init_params(6, make_rng(2))
    q = load_params(save_params(p))
    assert q.specs == p.specs
    for a, b in zip(p.arrays(), q.arrays()):
        np.testing.assert_array_equal(a, b)
    assert save_params(q) == save_params(p)


def test_params_load_errors():
    blob = save_params(init_params(8, make_rng(0)))
    with pytest.raises(ParamsFormatError):
        load_params(blob[:-3])
    with pytest.raises(ParamsFormatError):
        load_params(blob + b"\0")
    with pytest.raises(ParamsFormatError):
        load_params(b"NOTAWF" + blob[6:])
    with pytest.raises(ParamsFormatError, match="K=8"):
        load_params(blob, expected_k=4)
