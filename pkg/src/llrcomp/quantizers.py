"""Scalar quantizers: the latent clip-and-uniform quantizer, LLR baselines and LUTs.

Uniform quantizer with clipping threshold ``delta`` and ``N`` bits: values with
``|x| >= delta`` saturate to ``sgn(x) * delta``; otherwise ``x`` falls in one
of ``2**N`` cells of width ``delta / 2**(N-1)`` spanning ``[-delta, delta)``
and is replaced by the cell center ``delta * (2k + 1 - 2**N) / 2**N``. A value
on a shared cell edge belongs to the upper cell.

Axis indices enumerate the ``2**N + 2`` possible outputs in increasing order:
0 is ``-delta``, ``1 .. 2**N`` the interior cells and ``2**N + 1`` is
``+delta``. With ``fold=True`` saturation maps to the extreme interior cells
instead, so every output fits in exactly ``N`` bits.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .channel import make_rng
from .errors import ConfigurationError, FitError
from .modem import Constellation, SufficientStat, llr_from_stats

__all__ = [
    "UniformQuantizerSpec",
    "ScalarCodebook",
    "MaxMiCodebook",
    "ReconstructionLut",
    "quantize_uniform",
    "quantize_latent",
    "scalar_llr_baseline",
    "mutual_information",
    "llr_mutual_information",
    "fit_max_mi",
    "fit_max_mi_per_bit",
    "apply_codebook",
    "fit_lloyd",
    "fit_rayleigh_quantizer",
    "quantize_stats_baseline",
    "StatsQuantizer",
    "build_lut",
    "lut_memory_bytes",
    "LUT_MAX_BITS",
]

LUT_MAX_BITS = 8


@dataclass(frozen=True)
class UniformQuantizerSpec:
    delta: float = 0.8
    n_bits: int = 5
    fold: bool = False

    def __post_init__(self):
        if not self.delta > 0:
            raise ConfigurationError("clipping threshold must be positive")
        if not 1 <= self.n_bits <= 16:
            raise ConfigurationError("n_bits must lie in 1..16")

    @property
    def n_cells(self) -> int:
        return 1 << self.n_bits

    @property
    def n_axis_levels(self) -> int:
        return self.n_cells + 2

    @property
    def step(self) -> float:
        return self.delta / (1 << (self.n_bits - 1))

    def axis_levels(self) -> np.ndarray:
        """All ``2**N + 2`` output values in axis-index order."""
        k = np.arange(self.n_cells)
        interior = self.delta * (2 * k + 1 - self.n_cells) / self.n_cells
        return np.concatenate(([-self.delta], interior, [self.delta]))


def quantize_uniform(x, spec: UniformQuantizerSpec):
    """Quantize ``x`` elementwise.

    Returns
    -------
    index : ndarray of int
        Axis index in ``0 .. 2**N + 1``.
    level : ndarray of float
        Reconstruction value.
    """
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("cannot quantize non-finite values")
    cells = spec.n_cells
    # offset after the division keeps the sign of tiny inputs
    cell = np.floor(x / spec.step) + cells // 2
    index = np.clip(cell, 0, cells - 1).astype(np.int64) + 1
    if spec.fold:
        # saturated inputs take the nearest interior cell
        index = np.where(x >= spec.delta, cells, np.where(x <= -spec.delta, 1, index))
    else:
        index = np.where(x >= spec.delta, cells + 1, np.where(x <= -spec.delta, 0, index))
    return index, spec.axis_levels()[index]


def quantize_latent(z, spec: UniformQuantizerSpec):
    """Elementwise quantization of latent vectors; costs ``latent_dim * N`` bits each."""
    return quantize_uniform(z, spec)


def scalar_llr_baseline(llr, n_bits: int, delta: float = 4.0, fold: bool = False) -> np.ndarray:
    """Clip LLRs to ``[-delta, delta]`` and quantize each uniformly with ``n_bits``."""
    return quantize_uniform(llr, UniformQuantizerSpec(delta, n_bits, fold))[1]


@dataclass(frozen=True, eq=False)
class ScalarCodebook:
    """Sorted thresholds and one reconstruction level per cell.

    ``trace`` records the objective after each fitting iteration (mutual
    information in bits, or mean squared error).
    """

    thresholds: np.ndarray
    levels: np.ndarray
    trace: np.ndarray = field(default_factory=lambda: np.zeros(0))
    kind: str = "scalar"

    def __post_init__(self):
        if self.levels.size != self.thresholds.size + 1:
            raise ValueError("need exactly one more level than thresholds")
        if np.any(np.diff(self.thresholds) <= 0):
            raise ValueError("thresholds must be strictly increasing")

    @property
    def n_levels(self) -> int:
        return self.levels.size

    def cell_index(self, x) -> np.ndarray:
        return np.searchsorted(self.thresholds, np.asarray(x, dtype=float), side="right")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "thresholds": [float(t) for t in self.thresholds],
            "levels": [float(v) for v in self.levels],
            "trace": [float(t) for t in self.trace],
        }

    @classmethod
    def from_dict(cls, d) -> "ScalarCodebook":
        return cls(np.array(d["thresholds"], dtype=float), np.array(d["levels"], dtype=float),
                   np.array(d.get("trace", []), dtype=float), d.get("kind", "scalar"))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


def apply_codebook(x, cb: ScalarCodebook) -> np.ndarray:
    """Level of the cell containing ``x``; thresholds belong to the upper cell."""
    return cb.levels[cb.cell_index(x)]


@dataclass(frozen=True, eq=False)
class MaxMiCodebook:
    """One max-MI codebook per bit position of the constellation label."""

    codebooks: tuple

    def apply(self, llr) -> np.ndarray:
        llr = np.asarray(llr, dtype=float)
        if llr.shape[-1] != len(self.codebooks):
            raise ValueError("LLR width does not match the number of codebooks")
        out = np.empty_like(llr)
        for i, cb in enumerate(self.codebooks):
            out[..., i] = apply_codebook(llr[..., i], cb)
        return out

    def to_json(self) -> str:
        return json.dumps({"kind": "max_mi", "per_bit": [cb.to_dict() for cb in self.codebooks]}, indent=1)

    @classmethod
    def from_json(cls, text) -> "MaxMiCodebook":
        d = json.loads(text)
        return cls(tuple(ScalarCodebook.from_dict(c) for c in d["per_bit"]))


def _h2(p):
    p = np.clip(p, 1e-300, 1.0)
    q = np.clip(1.0 - p, 1e-300, 1.0)
    return -(p * np.log2(p) + q * np.log2(q))


def _posterior(llr):
    # P(b = 1 | L) for a consistent LLR
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(llr, dtype=float)))


class _SortedSamples:
    """LLR samples sorted once, with prefix sums of their bit-1 posteriors."""

    def __init__(self, llr):
        self.x = np.sort(np.asarray(llr, dtype=float).ravel())
        self.csum = np.concatenate(([0.0], np.cumsum(_posterior(self.x))))
        self.n = self.x.size
        self.p_bar = self.csum[-1] / self.n

    def cell_stats(self, thresholds):
        """Count and posterior mass of each cell (thresholds in the upper cell)."""
        edges = np.concatenate(([0], np.searchsorted(self.x, thresholds, side="left"), [self.n]))
        count = np.diff(edges)
        mass = np.diff(self.csum[edges])
        return count, mass

    def mi(self, thresholds) -> float:
        count, mass = self.cell_stats(thresholds)
        nz = count > 0
        p_cell = mass[nz] / count[nz]
        return float(_h2(self.p_bar) - np.sum(count[nz] / self.n * _h2(p_cell)))


def mutual_information(llr, thresholds) -> float:
    """Plug-in estimate of I(b; Q(L)) in bits, using ``P(b=1|L) = 1/(1+e^-L)``."""
    return _SortedSamples(llr).mi(np.asarray(thresholds, dtype=float))


def llr_mutual_information(llr) -> float:
    """Estimate of I(b; L) in bits from consistent LLR samples."""
    p = _posterior(llr)
    return float(_h2(np.mean(p)) - np.mean(_h2(p)))


def _kl_boundaries(levels):
    """Points where the binary KL divergence to adjacent levels is equal."""
    qa = _posterior(levels[:-1])
    qb = _posterior(levels[1:])
    num = np.log((1.0 - qa) / (1.0 - qb))
    den = num + np.log(qb / qa)
    p = num / den
    return np.log(p) - np.log1p(-p)


def fit_max_mi(llr, bits=None, n_levels: int = 8, init_range=(-3.0, 3.0),
               tol: float = 1e-9, max_iter: int = 500) -> ScalarCodebook:
    """Scalar LLR quantizer maximizing the mutual information with the bit.

    Alternates between assigning each sample to the reconstruction level
    nearest in binary KL divergence and moving every level to the conditional
    LLR of its cell, starting from levels spread uniformly over
    ``init_range``. Stops when the gain drops below ``tol`` bits.

    Parameters
    ----------
    llr : array_like
        Consistent LLR samples.
    bits : array_like, optional
        Transmitted bits; only used to reject degenerate sample sets.
    n_levels : int
        Number of reconstruction levels.

    Returns
    -------
    ScalarCodebook
        The best codebook seen, with the MI trace (bits) of all iterations.
    """
    llr = np.asarray(llr, dtype=float).ravel()
    if bits is not None:
        bits = np.asarray(bits).ravel()
        if bits.size != llr.size:
            raise FitError("bits and LLRs differ in length")
        if np.all(bits == bits[0]):
            raise FitError("samples contain a single bit value")
    if llr.size < n_levels or n_levels < 1:
        raise FitError("need at least as many samples as levels")
    data = _SortedSamples(llr)
    if data.p_bar < 1e-12 or data.p_bar > 1 - 1e-12:
        raise FitError("samples carry (almost) a single bit value")
    if n_levels == 1:
        lvl = np.log(data.p_bar) - np.log1p(-data.p_bar)
        return ScalarCodebook(np.zeros(0), np.array([lvl]), np.array([0.0]), "max_mi")

    levels = np.linspace(init_range[0], init_range[1], n_levels)
    best, best_mi, trace = None, -np.inf, []
    for _ in range(max_iter):
        thresholds = _kl_boundaries(levels)
        count, mass = data.cell_stats(thresholds)
        keep = count > 0
        if not keep.all():
            # an empty cell is dropped; its neighbours absorb the range
            levels = levels[keep]
            if levels.size < 2:
                break
            continue
        p_cell = np.clip(mass / count, 1e-300, 1 - 1e-16)
        levels = np.log(p_cell) - np.log1p(-p_cell)
        mi = data.mi(thresholds)
        trace.append(mi)
        if mi > best_mi:
            gain = mi - best_mi
            best, best_mi = (thresholds.copy(), levels.copy()), mi
            if gain < tol:
                break
        else:
            break
    if best is None:
        raise FitError("max-MI iteration produced no valid codebook")
    return ScalarCodebook(best[0], best[1], np.array(trace), "max_mi")


def fit_max_mi_per_bit(llr, bits=None, n_levels: int = 8, **kwargs) -> MaxMiCodebook:
    """Fit an independent max-MI codebook for each column of ``llr`` (shape ``(N, K)``)."""
    llr = np.asarray(llr, dtype=float)
    cbs = []
    for i in range(llr.shape[1]):
        b = None if bits is None else np.asarray(bits)[:, i]
        cbs.append(fit_max_mi(llr[:, i], b, n_levels, **kwargs))
    return MaxMiCodebook(tuple(cbs))


def fit_lloyd(samples, n_levels: int, tol: float = 1e-12, max_iter: int = 500, kind="lloyd") -> ScalarCodebook:
    """MSE-optimal scalar quantizer by Lloyd iteration on samples.

    Starts from equiprobable cells; midpoint thresholds alternate with
    cell-mean levels until the relative distortion decrease drops below ``tol``.
    """
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    if n_levels < 1 or x.size < n_levels:
        raise FitError("need at least as many samples as levels")
    csum = np.concatenate(([0.0], np.cumsum(x)))
    csq = np.concatenate(([0.0], np.cumsum(x * x)))

    def stats(thresholds):
        edges = np.concatenate(([0], np.searchsorted(x, thresholds, side="left"), [x.size]))
        cnt = np.diff(edges)
        s1 = np.diff(csum[edges])
        s2 = np.diff(csq[edges])
        return cnt, s1, s2

    thresholds = np.quantile(x, np.arange(1, n_levels) / n_levels)
    levels = None
    trace = []
    for _ in range(max_iter):
        cnt, s1, s2 = stats(thresholds)
        nz = cnt > 0
        new_levels = np.where(nz, s1 / np.maximum(cnt, 1), np.nan)
        if not nz.all():
            new_levels = new_levels[nz]
        levels = new_levels
        distortion = float(np.sum(s2[nz] - s1[nz] ** 2 / cnt[nz]) / x.size)
        trace.append(distortion)
        if len(trace) > 1 and trace[-2] - distortion <= tol * max(trace[-2], 1e-300):
            break
        thresholds = 0.5 * (levels[:-1] + levels[1:])
    thresholds = 0.5 * (levels[:-1] + levels[1:])
    cnt, s1, _ = stats(thresholds)
    levels = np.where(cnt > 0, s1 / np.maximum(cnt, 1), levels)
    return ScalarCodebook(thresholds, levels, np.array(trace), kind)


def fit_rayleigh_quantizer(n_levels: int, n_samples: int = 1_000_000, seed: int = 0,
                           distribution: str = "rayleigh") -> ScalarCodebook:
    """Lloyd-Max quantizer for the unit-power fading amplitude ``|h|``.

    ``distribution="rayleigh"`` fits ``|h|`` (Rayleigh with scale ``1/sqrt(2)``);
    ``"exponential"`` fits ``|h|^2`` directly. Scale the levels by
    ``1 / sigma_n`` (respectively ``1 / sigma_n^2``) to quantize the
    amplitude ``sqrt(G)`` (respectively ``G``) at a given SNR.
    """
    rng = make_rng(seed, "fit-rayleigh")
    amp = np.abs((rng.standard_normal(n_samples) + 1j * rng.standard_normal(n_samples)) * np.sqrt(0.5))
    if distribution == "rayleigh":
        return fit_lloyd(amp, n_levels, kind="rayleigh")
    if distribution == "exponential":
        return fit_lloyd(amp**2, n_levels, kind="exponential")
    raise ConfigurationError(f"unknown fading statistic distribution {distribution!r}")


@dataclass(frozen=True, eq=False)
class StatsQuantizer:
    """Scalar quantization of ``(G, Re r~, Im r~)`` at a fixed noise variance.

    ``amp_cb`` is fitted on unit-power fading (see :func:`fit_rayleigh_quantizer`);
    ``None`` (or an ``r_spec`` of ``None``) keeps that statistic exact.
    """

    amp_cb: ScalarCodebook | None
    r_spec: UniformQuantizerSpec | None
    noise_var: float = 1.0

    def quantize(self, s: SufficientStat) -> SufficientStat:
        g = np.asarray(s.g, dtype=float)
        if self.amp_cb is not None:
            if self.amp_cb.kind == "exponential":
                scale = 1.0 / self.noise_var
                g = apply_codebook(g / scale, self.amp_cb) * scale
            else:
                scale = 1.0 / np.sqrt(self.noise_var)
                g = (apply_codebook(np.sqrt(g) / scale, self.amp_cb) * scale) ** 2
        rr, ri = np.asarray(s.r_re, dtype=float), np.asarray(s.r_im, dtype=float)
        if self.r_spec is not None:
            rr = quantize_uniform(rr, self.r_spec)[1]
            ri = quantize_uniform(ri, self.r_spec)[1]
        return SufficientStat(g, rr, ri)


def quantize_stats_baseline(s: SufficientStat, quantizer: StatsQuantizer, c: Constellation) -> np.ndarray:
    """LLRs recomputed from the quantized sufficient statistic."""
    return llr_from_stats(quantizer.quantize(s), c)


@dataclass(frozen=True, eq=False)
class ReconstructionLut:
    """Decoder output for every quantized latent cell.

    ``table[i]`` holds the soft bits for the axis-index tuple ``(i0, i1, ...)``
    with ``i = sum(i_d * S**(D-1-d))`` and ``S = 2**N + 2``.
    """

    spec: UniformQuantizerSpec
    table: np.ndarray
    latent_dim: int = 3

    @property
    def size(self) -> int:
        return self.table.shape[0]

    def flat_index(self, axis_index) -> np.ndarray:
        axis_index = np.asarray(axis_index)
        s = self.spec.n_axis_levels
        weights = s ** np.arange(self.latent_dim - 1, -1, -1)
        return axis_index @ weights

    def lookup(self, axis_index) -> np.ndarray:
        return self.table[self.flat_index(axis_index)]

    def cells(self) -> np.ndarray:
        """Axis indices of every entry, shape ``(size, latent_dim)``."""
        s = self.spec.n_axis_levels
        grids = np.meshgrid(*[np.arange(s)] * self.latent_dim, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def to_csv(self) -> str:
        levels = self.spec.axis_levels()
        k = self.table.shape[1]
        head = ["index"] + [f"i{d + 1}" for d in range(self.latent_dim)] + \
               [f"z{d + 1}" for d in range(self.latent_dim)] + [f"soft{j + 1}" for j in range(k)]
        lines = [",".join(head)]
        for i, (cell, row) in enumerate(zip(self.cells(), self.table)):
            vals = [str(i)] + [str(int(c)) for c in cell] + [repr(float(levels[c])) for c in cell] + \
                   [repr(float(v)) for v in row]
            lines.append(",".join(vals))
        return "\n".join(lines) + "\n"


def lut_memory_bytes(n_bits: int, k_bits: int, latent_dim: int = 3) -> int:
    return ((1 << n_bits) + 2) ** latent_dim * k_bits * 8


def build_lut(decode, spec: UniformQuantizerSpec, latent_dim: int = 3) -> ReconstructionLut:
    """Tabulate ``decode`` over all ``(2**N + 2) ** latent_dim`` quantized latent cells.

    ``decode`` is either :class:`~llrcomp.autonet.MlpParams` or a callable
    mapping latent batches to soft bits.
    """
    if spec.n_bits > LUT_MAX_BITS:
        entries = spec.n_axis_levels**latent_dim
        raise ConfigurationError(
            f"LUT with N_b={spec.n_bits} needs {entries} entries, about "
            f"{entries * 8 / 2**20:.0f} MiB per reconstructed bit; the limit is N_b <= {LUT_MAX_BITS}"
        )
    if not callable(decode):
        from .autonet import decoder_forward

        params = decode
        latent_dim = params.latent_dim
        decode = lambda z: decoder_forward(z, params)  # noqa: E731
    lut = ReconstructionLut(spec, np.zeros((0, 0)), latent_dim)
    levels = spec.axis_levels()[lut.cells()]
    table = np.asarray(decode(levels), dtype=float)
    table.setflags(write=False)
    return ReconstructionLut(spec, table, latent_dim)
