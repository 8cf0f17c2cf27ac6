"""I.i.d. Rayleigh fading with complex Gaussian noise, and seeded RNG streams.

SNR is ``E|h|^2 E_s / noise_var`` with ``E|h|^2 = E_s = 1``, so
``noise_var = 10 ** (-snr_db / 10)``.

Every random draw in the package goes through :func:`make_rng`, which derives an
independent ``numpy.random.Generator`` from ``(seed, label, *indices)``. Work
split into chunks keyed by index gives the same numbers regardless of how many
workers process the chunks.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from .modem import ChannelObservation

__all__ = [
    "NoiseModel",
    "make_rng",
    "snr_to_noise_var",
    "draw_channel",
    "apply_channel",
]

RngStream = np.random.Generator


def make_rng(seed: int, label: str = "", *indices: int) -> np.random.Generator:
    """Independent generator for stream ``label`` and substream ``indices``.

    Distinct labels (e.g. ``"train"`` and ``"eval"``) never share a stream.
    """
    key = (zlib.crc32(label.encode("utf-8")),) + tuple(int(i) for i in indices)
    ss = np.random.SeedSequence(entropy=int(seed) & ((1 << 64) - 1), spawn_key=key)
    return np.random.Generator(np.random.PCG64(ss))


def snr_to_noise_var(snr_db: float) -> float:
    """Noise variance for unit signal and channel energy."""
    return float(10.0 ** (-float(snr_db) / 10.0))


@dataclass(frozen=True)
class NoiseModel:
    """Complex AWGN at a given SNR; ``snr_db = inf`` suppresses the noise."""

    snr_db: float

    def __post_init__(self):
        if np.isnan(self.snr_db) or self.snr_db == -np.inf:
            raise ValueError(f"invalid SNR {self.snr_db!r}")

    @property
    def noise_var(self) -> float:
        return snr_to_noise_var(self.snr_db)


def draw_channel(rng: np.random.Generator, size=None):
    """Draw ``h ~ CN(0, 1)``: independent real and imaginary parts of variance 1/2."""
    re = rng.standard_normal(size)
    im = rng.standard_normal(size)
    return (re + 1j * im) * np.sqrt(0.5)


def apply_channel(s, nm: NoiseModel, rng: np.random.Generator) -> ChannelObservation:
    """Pass symbol(s) ``s`` through a fresh fading coefficient per symbol plus noise.

    All channel coefficients are drawn before the noise samples.
    """
    s = np.asarray(s, dtype=complex)
    h = draw_channel(rng, s.shape)
    nv = nm.noise_var
    n = draw_channel(rng, s.shape) * np.sqrt(nv)
    r = h * s + n
    if s.ndim == 0:
        return ChannelObservation(complex(r), complex(h), nv)
    return ChannelObservation(r, h, np.full(s.shape, nv))
