"""
Scalar quantizers for LLRs and channel statistics
=================================================

Three reference quantizers: a clipped uniform one, a max-mutual-information
codebook fitted to LLR samples, and a Lloyd-Max quantizer for the fading
amplitude.
"""

import numpy as np

from llrcomp.channel import make_rng
from llrcomp.quantizers import (
    UniformQuantizerSpec,
    fit_max_mi,
    fit_rayleigh_quantizer,
    llr_mutual_information,
    mutual_information,
    quantize_uniform,
)

# uniform: 2 bits on [-0.8, 0.8], inputs at or beyond the edge saturate
spec = UniformQuantizerSpec(delta=0.8, n_bits=2)
x = np.array([-1.0, -0.8, -0.3, 0.0, 0.3, 0.9])
idx, q = quantize_uniform(x, spec)
print("uniform", dict(zip(x.tolist(), q.tolist())))

# max-MI: BPSK LLRs at 0 dB, four cells
rng = make_rng(0, "demo-maxmi")
bits = rng.integers(0, 2, size=200_000)
y = 2.0 * bits - 1 + rng.normal(size=bits.size)
llr = 2 * y
for levels in (2, 4, 8):
    cb = fit_max_mi(llr, bits, n_levels=levels)
    print(f"max-MI {levels} levels: thresholds {np.round(cb.thresholds, 2)}, "
          f"I = {mutual_information(llr, cb.thresholds):.4f} of {llr_mutual_information(llr):.4f} bits")

# Lloyd-Max for a unit-power Rayleigh amplitude
amp = fit_rayleigh_quantizer(4, n_samples=200_000)
print("Lloyd-Max Rayleigh levels", np.round(amp.levels, 3), "final MSE", f"{amp.trace[-1]:.4f}")
