"""End-to-end BLER experiments with quantized LLR storage.

Every method sees exactly the same payloads, channel realizations and noise
for a given ``(seed, SNR index, chunk index)``; only the stored-LLR path
differs. Training data uses different stream labels, so evaluation frames are
never training frames.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np

from . import _link
from .autonet import MlpParams, decoder_forward, encoder_forward, load_params
from .channel import NoiseModel, apply_channel, make_rng
from .errors import ConfigurationError
from .ldpc import ParityMatrix, decode_bp, default_code, deinterleave, load_alist_file, make_permutation
from .modem import (
    Constellation,
    ChannelObservation,
    SufficientStat,
    build_constellation,
    compute_llr,
    from_soft_bits,
    llr_from_stats,
    sufficient_stats,
    to_soft_bits,
)
from .quantizers import (
    StatsQuantizer,
    UniformQuantizerSpec,
    build_lut,
    fit_max_mi_per_bit,
    fit_rayleigh_quantizer,
    quantize_latent,
    quantize_uniform,
)

__all__ = [
    "METHODS",
    "BLER_COLUMNS",
    "ExperimentConfig",
    "BlerResult",
    "LatentCodec",
    "storage_bits",
    "compression_ratio",
    "make_reconstructor",
    "run_single",
    "harq_split",
    "combine_llrs",
    "run_harq",
    "LatentHistograms",
    "emit_latent_histograms",
    "snr_at_bler",
    "load_code",
]

logger = logging.getLogger(__name__)

METHODS = ("full_precision", "deep", "scalar_llr", "max_mi", "stats")
BLER_COLUMNS = ("snr_db", "trials", "errors", "bler", "method", "n_bits", "seed")


@dataclass(frozen=True)
class ExperimentConfig:
    """Settings of one BLER curve.

    ``n_bits=None`` bypasses quantization for every method, which then must
    reproduce the full-precision curve (exactly, except for ``deep`` whose
    autoencoder is still in the path).
    """

    k_bits: int = 4
    code_path: str | None = None
    snr_db: tuple = (10.0, 11.0, 12.0, 13.0, 14.0, 15.0)
    codewords_per_point: int = 1000
    method: str = "full_precision"
    n_bits: int | None = 5
    seed: int = 1
    max_iter: int = 50
    decoder: str = "sum_product"
    model_path: str | None = None
    delta_latent: float = 0.8
    delta_llr: float = 4.0
    stats_delta: float | None = None
    amp_distribution: str = "rayleigh"
    fold_saturation: bool = True
    use_lut: bool = True
    maxmi_samples: int = 200_000
    frames_per_chunk: int = 100
    threads: int = 1

    def __post_init__(self):
        object.__setattr__(self, "snr_db", tuple(float(s) for s in self.snr_db))
        if not self.snr_db:
            raise ConfigurationError("SNR grid is empty")
        if self.codewords_per_point < 1:
            raise ConfigurationError("codewords_per_point must be at least 1")
        if self.method not in METHODS:
            raise ConfigurationError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.method == "full_precision":
            object.__setattr__(self, "n_bits", None)
        if self.n_bits is not None and not 1 <= self.n_bits <= 16:
            raise ConfigurationError("n_bits must lie in 1..16")
        if self.frames_per_chunk < 1 or self.threads < 1 or self.max_iter < 1:
            raise ConfigurationError("frames_per_chunk, threads and max_iter must be positive")


@dataclass
class BlerResult:
    snr_db: np.ndarray
    trials: np.ndarray
    errors: np.ndarray
    method: str
    n_bits: int | None
    seed: int
    config: dict = field(default_factory=dict)

    @property
    def bler(self) -> np.ndarray:
        return self.errors / self.trials

    def rows(self):
        for s, t, e in zip(self.snr_db, self.trials, self.errors):
            yield {
                "snr_db": float(s),
                "trials": int(t),
                "errors": int(e),
                "bler": float(e) / float(t),
                "method": self.method,
                "n_bits": "" if self.n_bits is None else int(self.n_bits),
                "seed": int(self.seed),
            }

    def to_csv(self) -> str:
        return rows_to_csv(self.rows())


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=BLER_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def storage_bits(method: str, k_bits: int, n_bits: int, latent_dim: int = 3) -> int:
    """Stored bits per symbol: ``latent_dim * n_bits`` for the latent and
    statistic methods, ``k_bits * n_bits`` for per-LLR quantizers."""
    if method in ("deep", "stats"):
        return latent_dim * n_bits
    if method in ("scalar_llr", "max_mi"):
        return k_bits * n_bits
    raise ConfigurationError(f"method {method!r} has no finite storage cost")


def compression_ratio(reference_bits: int, compressed_bits: int) -> float:
    return reference_bits / compressed_bits


@dataclass(frozen=True, eq=False)
class LatentCodec:
    """Encoder/decoder pair acting on soft-bit batches."""

    encode: Callable
    decode: Callable
    latent_dim: int
    k_bits: int

    @classmethod
    def from_params(cls, p: MlpParams) -> "LatentCodec":
        return cls(lambda x: encoder_forward(x, p), lambda z: decoder_forward(z, p), p.latent_dim, p.k_bits)

    @classmethod
    def identity(cls, k_bits: int) -> "LatentCodec":
        """Stub whose latent code is the soft-bit vector itself."""
        return cls(lambda x: np.asarray(x, dtype=float), lambda z: np.asarray(z, dtype=float), k_bits, k_bits)


def load_code(config: ExperimentConfig) -> ParityMatrix:
    if config.code_path is None:
        return default_code()
    return load_alist_file(config.code_path)


def _resolve_model(config: ExperimentConfig, model) -> LatentCodec | None:
    if config.method != "deep":
        return None
    if model is None:
        if config.model_path is None:
            raise ConfigurationError("method 'deep' needs a model or model_path")
        with open(config.model_path, "rb") as f:
            model = load_params(f.read())
    codec = LatentCodec.from_params(model) if isinstance(model, MlpParams) else model
    if codec.k_bits != config.k_bits:
        raise ConfigurationError(
            f"model is for K={codec.k_bits} bits per symbol, config has K={config.k_bits}"
        )
    return codec


def _stats_delta(config: ExperimentConfig, c: Constellation) -> float:
    if config.stats_delta is not None:
        return config.stats_delta
    coords = np.unique(np.round(np.concatenate([c.points.real, c.points.imag]), 12))
    if coords.size < 2:
        return 2.0 * float(np.max(np.abs(coords)))
    # outermost point plus half the spacing between adjacent amplitudes
    return float(np.max(coords) + 0.5 * np.min(np.diff(coords)))


def _fit_samples(config, c, snr_db, snr_index, label):
    rng = make_rng(config.seed, label, snr_index)
    bits = rng.integers(0, 2, size=(config.maxmi_samples, c.bits_per_symbol), dtype=np.uint8)
    obs = apply_channel(c.points[c.label_index(bits)], NoiseModel(snr_db), rng)
    return compute_llr(obs, c), bits


def make_reconstructor(config: ExperimentConfig, snr_db: float, snr_index: int, c: Constellation,
                       codec: LatentCodec | None = None, lut=None):
    """Return ``f(llr, stats) -> llr`` applying the configured store/restore path.

    ``llr`` has shape ``(N, K)`` and ``stats`` is the matching
    :class:`SufficientStat` of flattened arrays.
    """
    method, nb = config.method, config.n_bits
    if method == "full_precision" or (nb is None and method != "deep"):
        return lambda llr, stats: llr

    if method == "scalar_llr":
        spec = UniformQuantizerSpec(config.delta_llr, nb, config.fold_saturation)
        return lambda llr, stats: quantize_uniform(llr, spec)[1]

    if method == "max_mi":
        llr_fit, bits_fit = _fit_samples(config, c, snr_db, snr_index, "fit-maxmi")
        book = fit_max_mi_per_bit(llr_fit, bits_fit, 1 << nb)
        return lambda llr, stats: book.apply(llr)

    if method == "stats":
        amp = fit_rayleigh_quantizer(1 << nb, seed=config.seed, distribution=config.amp_distribution)
        r_spec = UniformQuantizerSpec(_stats_delta(config, c), nb, config.fold_saturation)
        q = StatsQuantizer(amp, r_spec, NoiseModel(snr_db).noise_var)
        return lambda llr, stats: llr_from_stats(q.quantize(stats), c)

    if method == "deep":
        if codec is None:
            raise ConfigurationError("method 'deep' needs a latent codec")
        if nb is None:
            return lambda llr, stats: from_soft_bits(codec.decode(codec.encode(to_soft_bits(llr))))
        spec = UniformQuantizerSpec(config.delta_latent, nb, config.fold_saturation)
        if config.use_lut:
            table = lut if lut is not None else build_lut(codec.decode, spec, codec.latent_dim)

            def deep_lut(llr, stats):
                idx, _ = quantize_latent(codec.encode(to_soft_bits(llr)), spec)
                return from_soft_bits(table.lookup(idx))

            return deep_lut

        def deep(llr, stats):
            _, levels = quantize_latent(codec.encode(to_soft_bits(llr)), spec)
            return from_soft_bits(codec.decode(levels))

        return deep
    raise ConfigurationError(f"unknown method {method!r}")


def _flat_stats(obs: ChannelObservation) -> SufficientStat:
    st = sufficient_stats(obs)
    return SufficientStat(np.ravel(st.g), np.ravel(st.r_re), np.ravel(st.r_im))


def _receive(obs, c, recon, n_bits_tx, perm):
    """Stored/restored LLRs for one transmission, deinterleaved, shape (frames, n_bits_tx)."""
    k = c.bits_per_symbol
    frames = np.shape(obs.r)[0]
    llr = compute_llr(obs, c).reshape(-1, k)
    llr = recon(llr, _flat_stats(obs)).reshape(frames, -1)[:, :n_bits_tx]
    return deinterleave(llr, perm)


def _lut_for(config, codec):
    if config.method == "deep" and config.n_bits is not None and config.use_lut:
        spec = UniformQuantizerSpec(config.delta_latent, config.n_bits, config.fold_saturation)
        return build_lut(codec.decode, spec, codec.latent_dim)
    return None


def _result(config, snrs, trials, errors):
    return BlerResult(np.array(snrs, dtype=float), np.array(trials), np.array(errors),
                      config.method, config.n_bits, config.seed, asdict(config))


def run_single(config: ExperimentConfig, model=None) -> BlerResult:
    """Single-transmission BLER curve.

    Per frame: random payload, LDPC encoding, interleaving, QAM mapping,
    Rayleigh fading, exact LLRs, store/restore through the configured method,
    deinterleaving and BP decoding. A block error is any information-bit
    mismatch after decoding.

    ``model`` may be :class:`MlpParams` or a :class:`LatentCodec`; otherwise
    ``config.model_path`` is loaded for ``method="deep"``.
    """
    c = build_constellation(config.k_bits)
    pm = load_code(config)
    codec = _resolve_model(config, model)
    lut = _lut_for(config, codec)
    perm = make_permutation(pm.n, make_rng(config.seed, "interleaver"))
    sizes = _link.chunk_sizes(config.codewords_per_point, config.frames_per_chunk)
    info_pos = pm.info_positions
    errors = []
    for si, snr in enumerate(config.snr_db):
        nm = NoiseModel(snr)
        recon = make_reconstructor(config, snr, si, c, codec, lut)

        def one(ci):
            rng = make_rng(config.seed, "eval", si, ci)
            info, code = _link.random_codewords(sizes[ci], pm, rng)
            obs = _link.transmit(code, perm, c, nm, rng)
            llr = _receive(obs, c, recon, pm.n, perm)
            dec = decode_bp(llr, pm, config.max_iter, config.decoder)
            return int(np.any(dec.bits[:, info_pos] != info, axis=1).sum())

        e = sum(_link.run_chunks(one, len(sizes), config.threads))
        logger.info("%s n_bits=%s snr=%.2f dB: %d/%d block errors", config.method, config.n_bits,
                    snr, e, config.codewords_per_point)
        errors.append(e)
    return _result(config, config.snr_db, [config.codewords_per_point] * len(errors), errors)


def harq_split(n: int, rng: np.random.Generator):
    """Index sets of two overlapping transmissions.

    A random half ``H1`` plus a random third of the other half ``H2`` goes in
    the first transmission, ``H2`` plus a third of ``H1`` in the second. For
    ``n`` divisible by 6 each carries ``2n/3`` bits and ``n/3`` bits are sent
    twice. Otherwise the split uses the largest multiple-of-6 prefix of a
    random ordering and the remaining indices alternate between the
    transmissions, starting with the first.

    Returns
    -------
    (ndarray, ndarray)
        Sorted indices of each transmission.
    """
    order = rng.permutation(n)
    core = n - n % 6
    half, third = core // 2, core // 6
    h1, h2 = order[:half], order[half:core]
    extra1 = rng.choice(h2, size=third, replace=False) if third else h2[:0]
    extra2 = rng.choice(h1, size=third, replace=False) if third else h1[:0]
    rest = order[core:]
    t1 = np.concatenate([h1, extra1, rest[0::2]])
    t2 = np.concatenate([h2, extra2, rest[1::2]])
    return np.sort(t1), np.sort(t2)


def combine_llrs(l1, l2):
    """Equal-gain combining; a bit absent from a transmission contributes LLR 0."""
    return np.asarray(l1, dtype=float) + np.asarray(l2, dtype=float)


def run_harq(config: ExperimentConfig, model=None) -> BlerResult:
    """BLER with two overlapping transmissions, the first stored quantized.

    Each transmission is interleaved with its own fixed permutation, mapped to
    its own symbol stream and sees independent fading. LLRs of the first pass
    through the configured store/restore path, those of the second stay exact;
    both are placed on the codeword positions they cover, added, and decoded
    once.
    """
    c = build_constellation(config.k_bits)
    pm = load_code(config)
    codec = _resolve_model(config, model)
    lut = _lut_for(config, codec)
    t1, t2 = harq_split(pm.n, make_rng(config.seed, "harq-split"))
    perm1 = make_permutation(t1.size, make_rng(config.seed, "interleaver", 1))
    perm2 = make_permutation(t2.size, make_rng(config.seed, "interleaver", 2))
    exact = replace(config, method="full_precision")
    sizes = _link.chunk_sizes(config.codewords_per_point, config.frames_per_chunk)
    info_pos = pm.info_positions
    errors = []
    for si, snr in enumerate(config.snr_db):
        nm = NoiseModel(snr)
        recon1 = make_reconstructor(config, snr, si, c, codec, lut)
        recon2 = make_reconstructor(exact, snr, si, c)

        def one(ci):
            rng = make_rng(config.seed, "eval-harq", si, ci)
            info, code = _link.random_codewords(sizes[ci], pm, rng)
            obs1 = _link.transmit(code[:, t1], perm1, c, nm, rng)
            obs2 = _link.transmit(code[:, t2], perm2, c, nm, rng)
            l1 = np.zeros((sizes[ci], pm.n))
            l2 = np.zeros((sizes[ci], pm.n))
            l1[:, t1] = _receive(obs1, c, recon1, t1.size, perm1)
            l2[:, t2] = _receive(obs2, c, recon2, t2.size, perm2)
            dec = decode_bp(combine_llrs(l1, l2), pm, config.max_iter, config.decoder)
            return int(np.any(dec.bits[:, info_pos] != info, axis=1).sum())

        e = sum(_link.run_chunks(one, len(sizes), config.threads))
        logger.info("HARQ %s n_bits=%s snr=%.2f dB: %d/%d block errors", config.method,
                    config.n_bits, snr, e, config.codewords_per_point)
        errors.append(e)
    return _result(config, config.snr_db, [config.codewords_per_point] * len(errors), errors)


def snr_at_bler(snr_db, bler, target: float = 0.1) -> float:
    """SNR where the curve first crosses ``target``, interpolating log10 BLER linearly.

    Returns ``nan`` when the curve never crosses the target.
    """
    snr_db = np.asarray(snr_db, dtype=float)
    bler = np.asarray(bler, dtype=float)
    logb = np.log10(np.maximum(bler, 1e-300))
    lt = np.log10(target)
    for i in range(len(snr_db) - 1):
        a, b = logb[i], logb[i + 1]
        if a >= lt >= b and a != b:
            return float(snr_db[i] + (a - lt) / (a - b) * (snr_db[i + 1] - snr_db[i]))
        if a == lt:
            return float(snr_db[i])
    if logb[-1] == lt:
        return float(snr_db[-1])
    return float("nan")


@dataclass
class LatentHistograms:
    """Marginal histograms of every latent component and the joint of ``(log10 G, z_d)``."""

    z_edges: np.ndarray
    marginal_counts: np.ndarray
    log_g_edges: np.ndarray
    joint_counts: np.ndarray
    joint_component: int
    n_samples: int
    z_mean: np.ndarray
    z_var: np.ndarray

    def marginal_density(self) -> np.ndarray:
        return self.marginal_counts / self.n_samples

    def joint_density(self) -> np.ndarray:
        return self.joint_counts / self.n_samples

    def marginal_csv(self) -> str:
        d = self.marginal_counts.shape[0]
        lines = ["bin_lo,bin_hi," + ",".join(f"count_z{i + 1}" for i in range(d))]
        for b in range(self.z_edges.size - 1):
            vals = [repr(float(self.z_edges[b])), repr(float(self.z_edges[b + 1]))]
            vals += [str(int(self.marginal_counts[i, b])) for i in range(d)]
            lines.append(",".join(vals))
        return "\n".join(lines) + "\n"

    def joint_csv(self) -> str:
        zc = self.joint_component + 1
        lines = [f"log10g_lo,log10g_hi,z{zc}_lo,z{zc}_hi,count"]
        for i in range(self.log_g_edges.size - 1):
            for j in range(self.z_edges.size - 1):
                lines.append(",".join([
                    repr(float(self.log_g_edges[i])), repr(float(self.log_g_edges[i + 1])),
                    repr(float(self.z_edges[j])), repr(float(self.z_edges[j + 1])),
                    str(int(self.joint_counts[i, j])),
                ]))
        return "\n".join(lines) + "\n"


def emit_latent_histograms(model, dataset, bins: int = 50, component: int = 2,
                           log_g_range=None) -> LatentHistograms:
    """Histograms of the encoder output over a dataset with channel provenance.

    Latent bins cover ``[-1, 1]``; the joint histogram pairs ``log10 G`` with
    latent component ``component`` (0-based; the default is the third).
    """
    codec = LatentCodec.from_params(model) if isinstance(model, MlpParams) else model
    z = codec.encode(dataset.samples)
    edges = np.linspace(-1.0, 1.0, bins + 1)
    marg = np.stack([np.histogram(z[:, d], bins=edges)[0] for d in range(z.shape[1])])
    if dataset.g is None:
        raise ConfigurationError("dataset lacks the instantaneous SNR needed for the joint histogram")
    log_g = np.log10(np.maximum(dataset.g, 1e-300))
    if log_g_range is None:
        log_g_range = (float(np.floor(log_g.min())), float(np.ceil(log_g.max())))
    g_edges = np.linspace(log_g_range[0], log_g_range[1], bins + 1)
    joint = np.histogram2d(np.clip(log_g, g_edges[0], g_edges[-1]), z[:, component],
                           bins=[g_edges, edges])[0].astype(np.int64)
    return LatentHistograms(edges, marg, g_edges, joint, component, z.shape[0],
                            z.mean(axis=0), z.var(axis=0))
