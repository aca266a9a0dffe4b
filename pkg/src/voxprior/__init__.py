"""voxprior: autoregressive shape priors over quantized TSDF latent grids.

Learns a patch-wise vector-quantized autoencoder over truncated signed
distance grids, a non-sequential autoregressive transformer prior over the
resulting token grids, and per-location conditional heads fused with the
prior by an alpha-weighted product rule. Supports shape completion from
arbitrary observed regions, unconditional generation, and condition-guided
generation, all on CPU at desk scale.
"""

__version__ = "0.1.0"
