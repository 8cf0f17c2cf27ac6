"""Shared transmit chain: payload -> LDPC -> interleave -> QAM -> Rayleigh channel."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .channel import NoiseModel, apply_channel
from .ldpc import encode, interleave
from .modem import ChannelObservation, Constellation, modulate_bits


def pad_bits(bits: np.ndarray, k: int) -> np.ndarray:
    """Zero-pad the last axis to a multiple of ``k``."""
    extra = (-bits.shape[-1]) % k
    if extra == 0:
        return bits
    pad = np.zeros(bits.shape[:-1] + (extra,), dtype=bits.dtype)
    return np.concatenate([bits, pad], axis=-1)


def transmit(bits, perm, c: Constellation, nm: NoiseModel, rng) -> ChannelObservation:
    """Interleave, modulate and fade a ``(frames, L)`` bit array.

    Bits are zero padded to whole symbols; observations have shape
    ``(frames, ceil(L / K))``.
    """
    sym = modulate_bits(pad_bits(interleave(bits, perm), c.bits_per_symbol), c)
    return apply_channel(sym, nm, rng)


def random_codewords(n_frames: int, pm, rng):
    info = rng.integers(0, 2, size=(n_frames, pm.k), dtype=np.uint8)
    return info, encode(info, pm)


def chunk_sizes(total: int, chunk: int):
    return [min(chunk, total - s) for s in range(0, total, chunk)]


def run_chunks(fn, n_chunks: int, threads: int = 1):
    """Evaluate ``fn(i)`` for every chunk index, in order, optionally threaded."""
    if threads <= 1 or n_chunks <= 1:
        return [fn(i) for i in range(n_chunks)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n_chunks)))
