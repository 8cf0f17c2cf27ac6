"""Gray-mapped QAM constellations and exact per-bit log-likelihood ratios.

LLRs follow the convention ``L = log P(r | b=1) / P(r | b=0)`` and label bit 0
is mapped to the negative half of its axis. Square QAM is labeled per axis:
the first ``K/2`` bits select the in-phase amplitude, the rest the quadrature
amplitude, each through a binary-reflected Gray code.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import logsumexp

from .errors import ConfigurationError, DegenerateChannelError

__all__ = [
    "LLR_MAX",
    "SUPPORTED_BITS",
    "Constellation",
    "ChannelObservation",
    "SufficientStat",
    "build_constellation",
    "modulate",
    "modulate_bits",
    "demodulate_hard",
    "compute_llr",
    "sufficient_stats",
    "llr_from_stats",
    "to_soft_bits",
    "from_soft_bits",
]

LLR_MAX = 40.0
SUPPORTED_BITS = (1, 2, 4, 6, 8)

# rows per block in the vectorized LLR evaluation; bounds memory at K=8
_CHUNK = 8192


@dataclass(frozen=True, eq=False)
class Constellation:
    """A unit-energy constellation indexed by the integer value of its label.

    Attributes
    ----------
    bits_per_symbol : int
        Number of label bits ``K``.
    points : ndarray of complex, shape (2**K,)
        ``points[v]`` is the symbol whose label, read MSB first, equals ``v``.
    labels : ndarray of uint8, shape (2**K, K)
        Bit expansion of ``arange(2**K)``, MSB first.
    """

    bits_per_symbol: int
    points: np.ndarray
    labels: np.ndarray

    @property
    def order(self) -> int:
        return self.points.size

    def label_index(self, bits) -> np.ndarray:
        """Integer label value of each row of ``bits`` (shape ``(..., K)``)."""
        bits = np.asarray(bits)
        weights = 1 << np.arange(self.bits_per_symbol - 1, -1, -1)
        return bits.astype(np.int64) @ weights


def _gray(n: int) -> np.ndarray:
    i = np.arange(1 << n)
    return i ^ (i >> 1)


def _pam_axis(m_bits: int) -> np.ndarray:
    """Amplitude for each m-bit axis label, Gray ordered along the axis."""
    size = 1 << m_bits
    amplitude = np.empty(size)
    # position j along the axis (most negative first) carries label gray(j)
    amplitude[_gray(m_bits)] = 2.0 * np.arange(size) - (size - 1)
    return amplitude


@lru_cache(maxsize=None)
def build_constellation(k_bits: int) -> Constellation:
    """Return the Gray-labeled BPSK or square QAM constellation with ``k_bits`` bits.

    Repeated calls with the same ``k_bits`` return the same object.
    """
    if k_bits not in SUPPORTED_BITS:
        raise ConfigurationError(
            f"unsupported bits per symbol {k_bits!r}; expected one of {SUPPORTED_BITS}"
        )
    values = np.arange(1 << k_bits)
    labels = ((values[:, None] >> np.arange(k_bits - 1, -1, -1)) & 1).astype(np.uint8)
    if k_bits == 1:
        points = np.array([-1.0, 1.0], dtype=complex)
    else:
        half = k_bits // 2
        axis = _pam_axis(half)
        i_part = axis[values >> half]
        q_part = axis[values & ((1 << half) - 1)]
        points = i_part + 1j * q_part
        points = points / np.sqrt(np.mean(np.abs(points) ** 2))
    points.setflags(write=False)
    labels.setflags(write=False)
    return Constellation(k_bits, points, labels)


def modulate(bits, c: Constellation) -> complex:
    """Map one K-bit label to its constellation point."""
    bits = np.asarray(bits)
    if bits.shape != (c.bits_per_symbol,):
        raise ValueError(
            f"label has shape {bits.shape}, expected ({c.bits_per_symbol},)"
        )
    return complex(c.points[c.label_index(bits)])


def modulate_bits(bits, c: Constellation) -> np.ndarray:
    """Map a bit array of shape ``(..., n)`` to symbols of shape ``(..., n // K)``."""
    bits = np.asarray(bits)
    k = c.bits_per_symbol
    if bits.shape[-1] % k:
        raise ValueError(f"bit length {bits.shape[-1]} is not a multiple of {k}")
    groups = bits.reshape(*bits.shape[:-1], bits.shape[-1] // k, k)
    return c.points[c.label_index(groups)]


def demodulate_hard(symbols, c: Constellation) -> np.ndarray:
    """Nearest-point hard decision, returning label bits of shape ``(..., K)``."""
    symbols = np.asarray(symbols)
    idx = np.argmin(np.abs(symbols[..., None] - c.points) ** 2, axis=-1)
    return c.labels[idx]


@dataclass(frozen=True)
class ChannelObservation:
    """Received sample(s) ``r = h s + n`` with the channel state.

    Fields may be scalars or equally shaped arrays.
    """

    r: np.ndarray | complex
    h: np.ndarray | complex
    noise_var: np.ndarray | float


@dataclass(frozen=True)
class SufficientStat:
    """Instantaneous SNR ``g`` and the equalized sample ``r / h`` split in two."""

    g: np.ndarray | float
    r_re: np.ndarray | float
    r_im: np.ndarray | float

    @property
    def r_eq(self):
        return np.asarray(self.r_re) + 1j * np.asarray(self.r_im)


def _llr_from_metrics(metric: np.ndarray, k: int) -> np.ndarray:
    """Per-bit LLRs from log-likelihood metrics of shape (N, 2**K)."""
    n = metric.shape[0]
    out = np.empty((n, k))
    for i in range(k):
        # label index = (high bits, bit i, low bits), MSB first
        split = metric.reshape(n, 1 << i, 2, 1 << (k - i - 1))
        out[:, i] = logsumexp(split[:, :, 1, :], axis=(1, 2)) - logsumexp(
            split[:, :, 0, :], axis=(1, 2)
        )
    return out


def _blocked_llr(metric_fn, n: int, k: int) -> np.ndarray:
    out = np.empty((n, k))
    for start in range(0, n, _CHUNK):
        stop = min(start + _CHUNK, n)
        out[start:stop] = _llr_from_metrics(metric_fn(start, stop), k)
    np.clip(out, -LLR_MAX, LLR_MAX, out=out)
    return out


def compute_llr(obs: ChannelObservation, c: Constellation) -> np.ndarray:
    """Exact LLRs of all K label bits from the unequalized observation.

    Evaluates ``log sum exp(-|r - h s|^2 / noise_var)`` over each bit subset
    with max subtraction, then clamps to ``[-LLR_MAX, LLR_MAX]``.

    Returns
    -------
    ndarray, shape ``r.shape + (K,)``
    """
    r, h, nv = np.broadcast_arrays(
        np.asarray(obs.r, dtype=complex),
        np.asarray(obs.h, dtype=complex),
        np.asarray(obs.noise_var, dtype=float),
    )
    if np.any(h == 0):
        raise DegenerateChannelError("channel coefficient h = 0")
    if np.any(nv <= 0):
        raise ValueError("noise variance must be positive")
    shape = r.shape
    r, h, nv = r.ravel(), h.ravel(), nv.ravel()
    pts = c.points

    def metric(a, b):
        d = r[a:b, None] - h[a:b, None] * pts
        return -(d.real**2 + d.imag**2) / nv[a:b, None]

    out = _blocked_llr(metric, r.size, c.bits_per_symbol)
    return out.reshape(*shape, c.bits_per_symbol)


def sufficient_stats(obs: ChannelObservation) -> SufficientStat:
    """Return ``(|h|^2 / noise_var, Re(r/h), Im(r/h))``."""
    r = np.asarray(obs.r, dtype=complex)
    h = np.asarray(obs.h, dtype=complex)
    nv = np.asarray(obs.noise_var, dtype=float)
    if np.any(h == 0):
        raise DegenerateChannelError("channel coefficient h = 0")
    r_eq = r / h
    g = np.abs(h) ** 2 / nv
    if g.ndim == 0:
        return SufficientStat(float(g), float(r_eq.real), float(r_eq.imag))
    return SufficientStat(g, r_eq.real, r_eq.imag)


def llr_from_stats(s: SufficientStat, c: Constellation) -> np.ndarray:
    """Exact LLRs from the sufficient statistic, using ``-G |r_eq - s|^2`` metrics."""
    g, rr, ri = np.broadcast_arrays(
        np.asarray(s.g, dtype=float),
        np.asarray(s.r_re, dtype=float),
        np.asarray(s.r_im, dtype=float),
    )
    if np.any(g < 0):
        raise ValueError("instantaneous SNR must be nonnegative")
    shape = g.shape
    g, rr, ri = g.ravel(), rr.ravel(), ri.ravel()
    pr, pi = c.points.real, c.points.imag

    def metric(a, b):
        dr = rr[a:b, None] - pr
        di = ri[a:b, None] - pi
        return -g[a:b, None] * (dr * dr + di * di)

    out = _blocked_llr(metric, g.size, c.bits_per_symbol)
    return out.reshape(*shape, c.bits_per_symbol)


def to_soft_bits(llr) -> np.ndarray:
    """Soft bits ``tanh(L / 2)``."""
    return np.tanh(np.asarray(llr, dtype=float) / 2.0)


def from_soft_bits(soft) -> np.ndarray:
    """Inverse of :func:`to_soft_bits`, clamped to ``[-LLR_MAX, LLR_MAX]``.

    Saturated soft bits (exactly +-1) map to +-LLR_MAX.
    """
    soft = np.asarray(soft, dtype=float)
    if not np.all(np.abs(soft) <= 1.0):
        raise ValueError("soft bits must lie in [-1, 1]")
    with np.errstate(divide="ignore"):
        llr = 2.0 * np.arctanh(soft)
    return np.clip(llr, -LLR_MAX, LLR_MAX)
