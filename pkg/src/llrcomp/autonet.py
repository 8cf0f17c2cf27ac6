"""Symmetric fully connected autoencoder for per-symbol soft bits, in plain numpy.

Encoder ``K -> 4K -> 4K -> 3`` (relu, relu, tanh) and decoder
``3 -> 4K -> 4K -> K`` (relu, relu, tanh). During training a Gaussian noise
layer perturbs the latent code, standing in for the quantizer that is applied
at inference time.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field

import numpy as np

from . import _link
from .channel import NoiseModel, make_rng
from .errors import ConfigurationError, ParamsFormatError, TrainingError
from .ldpc import ParityMatrix, make_permutation
from .modem import Constellation, compute_llr, sufficient_stats, to_soft_bits

__all__ = [
    "LayerSpec",
    "MlpParams",
    "TrainConfig",
    "Dataset",
    "AdamState",
    "TrainResult",
    "architecture",
    "init_params",
    "encoder_forward",
    "decoder_forward",
    "noise_layer",
    "weighted_loss",
    "loss_and_grad",
    "backward",
    "adam_step",
    "generate_dataset",
    "train",
    "save_params",
    "load_params",
]

logger = logging.getLogger(__name__)

ACTIVATIONS = ("relu", "tanh")


@dataclass(frozen=True)
class LayerSpec:
    in_dim: int
    out_dim: int
    activation: str

    def __post_init__(self):
        if self.in_dim < 1 or self.out_dim < 1:
            raise ValueError("layer dimensions must be positive")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


def architecture(k_bits: int, latent_dim: int = 3, hidden: int | None = None):
    """Layer chain of the encoder followed by the decoder."""
    w = 4 * k_bits if hidden is None else hidden
    return (
        LayerSpec(k_bits, w, "relu"),
        LayerSpec(w, w, "relu"),
        LayerSpec(w, latent_dim, "tanh"),
        LayerSpec(latent_dim, w, "relu"),
        LayerSpec(w, w, "relu"),
        LayerSpec(w, k_bits, "tanh"),
    )


@dataclass(eq=False)
class MlpParams:
    """Weights ``(in, out)`` and biases ``(out,)`` of every layer, encoder first."""

    specs: tuple
    weights: list
    biases: list

    def __post_init__(self):
        if len(self.specs) % 2 or len(self.specs) < 2:
            raise ValueError("a symmetric autoencoder needs an even number of layers")
        for s, w, b in zip(self.specs, self.weights, self.biases, strict=True):
            if w.shape != (s.in_dim, s.out_dim) or b.shape != (s.out_dim,):
                raise ValueError(f"array shapes do not match layer {s}")
        for a, b in zip(self.specs[:-1], self.specs[1:]):
            if a.out_dim != b.in_dim:
                raise ValueError("layer dimensions do not chain")
        if self.specs[0].in_dim != self.specs[-1].out_dim:
            raise ValueError("decoder output width differs from encoder input width")

    @property
    def k_bits(self) -> int:
        return self.specs[0].in_dim

    @property
    def n_encoder(self) -> int:
        return len(self.specs) // 2

    @property
    def latent_dim(self) -> int:
        return self.specs[self.n_encoder - 1].out_dim

    def arrays(self):
        """All parameter arrays in storage order ``W0, b0, W1, b1, ...``."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "MlpParams":
        return MlpParams(self.specs, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def like(self, arrays) -> "MlpParams":
        """New params of the same architecture from arrays in storage order."""
        return MlpParams(self.specs, list(arrays[0::2]), list(arrays[1::2]))


def init_params(k_bits: int, rng: np.random.Generator, latent_dim: int = 3, hidden=None) -> MlpParams:
    """Fan-in scaled uniform weights, variance ``1 / fan_in``; zero biases."""
    specs = architecture(k_bits, latent_dim, hidden)
    weights, biases = [], []
    for s in specs:
        bound = np.sqrt(3.0 / s.in_dim)
        weights.append(rng.uniform(-bound, bound, size=(s.in_dim, s.out_dim)))
        biases.append(np.zeros(s.out_dim))
    return MlpParams(specs, weights, biases)


def _act(x, name):
    if name == "relu":
        return np.maximum(x, 0.0)
    return np.tanh(x)


def _run(x, p: MlpParams, layers):
    for i in layers:
        x = _act(x @ p.weights[i] + p.biases[i], p.specs[i].activation)
    return x


def _check_width(x, width, what):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != width:
        raise ValueError(f"{what} has width {x.shape[-1]}, expected {width}")
    return x


def encoder_forward(soft, p: MlpParams) -> np.ndarray:
    """Latent code in ``[-1, 1]^latent_dim`` for a batch of soft-bit vectors."""
    soft = _check_width(soft, p.k_bits, "soft-bit input")
    return _run(soft, p, range(p.n_encoder))


def decoder_forward(z, p: MlpParams) -> np.ndarray:
    """Reconstructed soft bits for a batch of latent codes."""
    z = _check_width(z, p.latent_dim, "latent input")
    return _run(z, p, range(p.n_encoder, len(p.specs)))


def noise_layer(z, sigma: float, rng: np.random.Generator, training: bool = True) -> np.ndarray:
    """Additive i.i.d. ``N(0, sigma^2)`` noise; identity outside training."""
    if sigma < 0:
        raise ValueError("noise standard deviation must be nonnegative")
    z = np.asarray(z, dtype=float)
    if not training or sigma == 0:
        return z
    return z + sigma * rng.standard_normal(z.shape)


def weighted_loss(target, recon, eps: float = 1e-4) -> float:
    """``sum (target - recon)^2 / (|target| + eps)`` over samples and bits."""
    target = np.asarray(target, dtype=float)
    recon = np.asarray(recon, dtype=float)
    if target.shape != recon.shape:
        raise ValueError(f"shape mismatch {target.shape} vs {recon.shape}")
    if eps <= 0:
        raise ValueError("eps must be positive")
    return float(np.sum((target - recon) ** 2 / (np.abs(target) + eps)))


def loss_and_grad(p: MlpParams, batch, noise, eps: float = 1e-4):
    """Weighted loss and its exact gradient for a given latent noise realization.

    The weights ``1 / (|target| + eps)`` depend on the targets only and are
    held constant.

    Returns
    -------
    loss : float
    grads : MlpParams
        Same architecture as ``p``, holding the gradients.
    """
    x = np.asarray(batch, dtype=float)
    acts = [x]
    h = x
    for i, s in enumerate(p.specs):
        h = _act(h @ p.weights[i] + p.biases[i], s.activation)
        if i == p.n_encoder - 1:
            h = h + noise
        acts.append(h)
    y = acts[-1]
    w = 1.0 / (np.abs(x) + eps)
    diff = y - x
    loss = float(np.sum(diff * diff * w))

    g_w = [None] * len(p.specs)
    g_b = [None] * len(p.specs)
    delta = 2.0 * diff * w
    for i in range(len(p.specs) - 1, -1, -1):
        out = acts[i + 1]
        if i == p.n_encoder - 1:
            out = out - noise  # activation derivative uses the clean output
        if p.specs[i].activation == "tanh":
            delta = delta * (1.0 - out * out)
        else:
            delta = delta * (out > 0)
        g_w[i] = acts[i].T @ delta
        g_b[i] = delta.sum(axis=0)
        if i:
            delta = delta @ p.weights[i].T
    return loss, MlpParams(p.specs, g_w, g_b)


def backward(p: MlpParams, batch, sigma: float, rng: np.random.Generator, eps: float = 1e-4):
    """Loss and gradients with latent noise drawn from ``rng``."""
    batch = np.asarray(batch, dtype=float)
    noise = sigma * rng.standard_normal((batch.shape[0], p.latent_dim)) if sigma > 0 else 0.0
    return loss_and_grad(p, batch, noise, eps)


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0

    @classmethod
    def zeros(cls, p: MlpParams) -> "AdamState":
        return cls([np.zeros_like(a) for a in p.arrays()], [np.zeros_like(a) for a in p.arrays()], 0)


def adam_step(p: MlpParams, grads: MlpParams, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One bias-corrected Adam update; returns new ``(params, state)``."""
    t = state.t + 1
    new_p, new_m, new_v = [], [], []
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for a, g, m, v in zip(p.arrays(), grads.arrays(), state.m, state.v):
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        new_p.append(a - lr * (m / c1) / (np.sqrt(v / c2) + eps))
        new_m.append(m)
        new_v.append(v)
    return p.like(new_p), AdamState(new_m, new_v, t)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 65536
    epochs: int = 2000
    noise_std: float = 1e-3
    eps_loss: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        for name in ("learning_rate", "batch_size", "epochs", "eps_loss"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.noise_std < 0:
            raise ConfigurationError("noise_std must be nonnegative")


@dataclass(eq=False)
class Dataset:
    """Soft-bit training samples with their SNR tag and channel statistics."""

    samples: np.ndarray
    snr_db: np.ndarray
    g: np.ndarray = field(default=None)
    r_re: np.ndarray = field(default=None)
    r_im: np.ndarray = field(default=None)

    def __len__(self):
        return self.samples.shape[0]

    @property
    def k_bits(self) -> int:
        return self.samples.shape[1]

    def subset(self, idx) -> "Dataset":
        pick = (lambda a: None if a is None else a[idx])
        return Dataset(self.samples[idx], self.snr_db[idx], pick(self.g), pick(self.r_re), pick(self.r_im))


_DATA_CHUNK = 250


def generate_dataset(snr_list, codewords_per_snr: int, pm: ParityMatrix, constellation: Constellation,
                     seed: int, threads: int = 1, shuffle: bool = True) -> Dataset:
    """Soft bits from the full coded link at every SNR, concatenated and shuffled.

    Random payloads are LDPC encoded, interleaved, modulated and sent over
    i.i.d. Rayleigh fading; exact LLRs become ``tanh(L/2)``. No SNR feature is
    part of the samples.
    """
    k = constellation.bits_per_symbol
    perm = make_permutation(pm.n, make_rng(seed, "train-interleaver"))
    sizes = _link.chunk_sizes(codewords_per_snr, _DATA_CHUNK)
    parts = []
    for si, snr in enumerate(snr_list):
        nm = NoiseModel(float(snr))

        def one(ci, si=si, nm=nm):
            rng = make_rng(seed, "train", si, ci)
            _, code = _link.random_codewords(sizes[ci], pm, rng)
            obs = _link.transmit(code, perm, constellation, nm, rng)
            llr = compute_llr(obs, constellation).reshape(-1, k)
            st = sufficient_stats(obs)
            return to_soft_bits(llr), st.g.ravel(), st.r_re.ravel(), st.r_im.ravel()

        for soft, g, rr, ri in _link.run_chunks(one, len(sizes), threads):
            parts.append((soft, np.full(len(g), float(snr)), g, rr, ri))
    cols = [np.concatenate(c) for c in zip(*parts)]
    data = Dataset(*cols)
    if shuffle:
        data = data.subset(make_rng(seed, "train-shuffle").permutation(len(data)))
    return data


@dataclass
class TrainResult:
    params: MlpParams
    loss_history: np.ndarray


def train(config: TrainConfig, data: Dataset, k_bits: int | None = None, latent_dim: int = 3,
          params: MlpParams | None = None, callback=None) -> TrainResult:
    """Minibatch Adam on the weighted loss with the latent noise layer active.

    Each epoch is one pass over a fresh shuffle of the data; the incomplete
    trailing batch is dropped. The recorded loss is the per-sample average
    over the epoch.

    Raises
    ------
    TrainingError
        If the loss becomes non-finite.
    """
    x = np.asarray(data.samples if isinstance(data, Dataset) else data, dtype=float)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ConfigurationError("training data must be a nonempty (N, K) array")
    k = x.shape[1] if k_bits is None else k_bits
    if x.shape[1] != k:
        raise ConfigurationError(f"data has {x.shape[1]} bits per symbol, architecture expects {k}")
    if config.batch_size > x.shape[0]:
        raise ConfigurationError(
            f"batch size {config.batch_size} exceeds dataset size {x.shape[0]}"
        )
    rng = make_rng(config.seed, "train-loop")
    p = init_params(k, make_rng(config.seed, "train-init"), latent_dim) if params is None else params.copy()
    state = AdamState.zeros(p)
    n_batches = x.shape[0] // config.batch_size
    history = np.empty(config.epochs)
    for epoch in range(config.epochs):
        order = rng.permutation(x.shape[0])
        total = 0.0
        for b in range(n_batches):
            batch = x[order[b * config.batch_size:(b + 1) * config.batch_size]]
            loss, grads = backward(p, batch, config.noise_std, rng, config.eps_loss)
            if not np.isfinite(loss):
                raise TrainingError(f"loss became non-finite at epoch {epoch}", epoch=epoch)
            p, state = adam_step(p, grads, state, config.learning_rate)
            total += loss
        history[epoch] = total / (n_batches * config.batch_size)
        if callback is not None:
            callback(epoch, history[epoch])
        if epoch % 50 == 0 or epoch == config.epochs - 1:
            logger.info("epoch %d loss %.6g", epoch, history[epoch])
    return TrainResult(p, history)


# weight file: magic, u16 version, u32 header length, JSON header, float64 LE arrays
_MAGIC = b"LLRCAE"
_VERSION = 1
_PREFIX = struct.Struct("<6sHI")


def save_params(p: MlpParams) -> bytes:
    header = {
        "k_bits": p.k_bits,
        "latent_dim": p.latent_dim,
        "layers": [{"in": s.in_dim, "out": s.out_dim, "activation": s.activation} for s in p.specs],
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    body = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in p.arrays())
    return _PREFIX.pack(_MAGIC, _VERSION, len(head)) + head + body


def load_params(data: bytes, expected_k: int | None = None) -> MlpParams:
    """Inverse of :func:`save_params`.

    Raises
    ------
    ParamsFormatError
        On a bad magic/version, truncation, trailing bytes, or when the stored
        ``k_bits`` differs from ``expected_k``.
    """
    if len(data) < _PREFIX.size:
        raise ParamsFormatError("weight file is truncated")
    magic, version, hlen = _PREFIX.unpack_from(data)
    if magic != _MAGIC:
        raise ParamsFormatError("not a weight file (bad magic)")
    if version != _VERSION:
        raise ParamsFormatError(f"unsupported weight file version {version}")
    start = _PREFIX.size
    if len(data) < start + hlen:
        raise ParamsFormatError("weight file is truncated")
    try:
        header = json.loads(data[start:start + hlen].decode("utf-8"))
        specs = tuple(LayerSpec(l["in"], l["out"], l["activation"]) for l in header["layers"])
        k_bits = int(header["k_bits"])
    except (ValueError, KeyError, TypeError) as exc:
        raise ParamsFormatError(f"corrupt weight file header: {exc}") from exc
    if expected_k is not None and k_bits != expected_k:
        raise ParamsFormatError(f"weight file is for K={k_bits}, expected K={expected_k}")
    shapes = []
    for s in specs:
        shapes += [(s.in_dim, s.out_dim), (s.out_dim,)]
    need = sum(int(np.prod(sh)) for sh in shapes) * 8
    body = data[start + hlen:]
    if len(body) != need:
        raise ParamsFormatError(
            f"weight payload has {len(body)} bytes, expected {need}"
            + (" (truncated)" if len(body) < need else " (trailing data)")
        )
    arrays, off = [], 0
    for sh in shapes:
        count = int(np.prod(sh))
        arrays.append(np.frombuffer(body, dtype="<f8", count=count, offset=off).astype(float).reshape(sh))
        off += count * 8
    try:
        p = MlpParams(specs, arrays[0::2], arrays[1::2])
    except ValueError as exc:
        raise ParamsFormatError(str(exc)) from exc
    if p.k_bits != k_bits:
        raise ParamsFormatError("header K disagrees with layer shapes")
    return p
