"""
Two-transmission HARQ with a quantized first pass
=================================================

The first transmission's LLRs are stored with a few bits and combined with the
exact LLRs of the second transmission. Both carry two thirds of the codeword,
so a third of the bits is seen twice.
"""

import numpy as np

from llrcomp.channel import make_rng
from llrcomp.pipeline import ExperimentConfig, harq_split, run_harq, run_single

t1, t2 = harq_split(648, make_rng(1, "harq-split"))
print("bits per transmission", t1.size, t2.size, "sent twice", np.intersect1d(t1, t2).size)
print("effective rate", 324 / (t1.size + t2.size))

grid = (6.0, 7.0, 8.0)
single = run_single(ExperimentConfig(k_bits=4, snr_db=grid, codewords_per_point=200, method="full_precision"))
print("single transmission     ", np.round(single.bler, 3))
for method, nb in (("full_precision", None), ("scalar_llr", 3), ("scalar_llr", 1)):
    res = run_harq(ExperimentConfig(k_bits=4, snr_db=grid, codewords_per_point=200, method=method, n_bits=nb))
    print(f"HARQ {method:14s} {str(nb):4s}", np.round(res.bler, 3))
