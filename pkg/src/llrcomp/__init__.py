"""Storage-efficient quantization of bit log-likelihood ratios.

Submodules
----------
modem
    Gray-mapped QAM, exact LLRs and the sufficient statistic ``(G, r~)``.
channel
    Rayleigh fading with reproducible random streams.
ldpc
    Alist parity matrices, systematic encoding, belief propagation, interleaving.
autonet
    The soft-bit autoencoder, its training loop and weight files.
quantizers
    Latent uniform quantizer, scalar and max-MI LLR quantizers, the
    sufficient-statistic baseline and reconstruction lookup tables.
pipeline
    Single-transmission and HARQ BLER experiments.
"""

__version__ = "0.1.0"
