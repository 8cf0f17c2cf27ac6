"""
Compressing K LLRs into a 3-dimensional latent code
===================================================

Train the autoencoder briefly on link-level soft bits, look at its latent
distribution, quantize the latent with 4 bits per component and tabulate the
decoder so that decompression becomes a table lookup.
"""

import numpy as np

from llrcomp.autonet import TrainConfig, encoder_forward, generate_dataset, train
from llrcomp.ldpc import default_code
from llrcomp.modem import build_constellation, from_soft_bits, to_soft_bits
from llrcomp.pipeline import emit_latent_histograms, storage_bits
from llrcomp.quantizers import UniformQuantizerSpec, build_lut, quantize_latent

pm, c = default_code(), build_constellation(4)
data = generate_dataset((8.0, 10.0), 200, pm, c, seed=2)
print(len(data), "training symbols")

res = train(TrainConfig(learning_rate=1e-3, batch_size=1024, epochs=150, seed=2), data, k_bits=4)
print("loss per sample: first", f"{res.loss_history[0]:.4f}", "last", f"{res.loss_history[-1]:.4f}")

hist = emit_latent_histograms(res.params, data, bins=20)
print("latent means", np.round(hist.z_mean, 3), "variances", np.round(hist.z_var, 3))

spec = UniformQuantizerSpec(0.8, 4, fold=True)
lut = build_lut(res.params, spec)
print("lookup table:", lut.size, "entries")

llr = from_soft_bits(data.samples[:5])
idx, _ = quantize_latent(encoder_forward(to_soft_bits(llr), res.params), spec)
print("original vs restored LLRs:")
for a, b in zip(llr, from_soft_bits(lut.lookup(idx))):
    print(" ", np.round(a, 2), "->", np.round(b, 2))

print("storage:", storage_bits("deep", 4, 4), "bits per symbol instead of", storage_bits("scalar_llr", 4, 5))
