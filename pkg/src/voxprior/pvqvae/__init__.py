"""Patch-wise encoding VQ-VAE: independent patch encoding, joint decoding."""

from .model import (
    PVQVAE,
    LatentDecoder,
    PatchBatch,
    PatchEncoder,
    assemble_patches_array,
    patch_locations,
    split_patches,
    split_patches_array,
    vector_quantize,
    vqvae_loss,
)
from .trainer import reconstruction_iou, train_pvqvae

__all__ = [
    "LatentDecoder",
    "PVQVAE",
    "PatchBatch",
    "PatchEncoder",
    "assemble_patches_array",
    "patch_locations",
    "reconstruction_iou",
    "split_patches",
    "split_patches_array",
    "train_pvqvae",
    "vector_quantize",
    "vqvae_loss",
]
