"""Patch-wise encoding VQ-VAE over TSDF grids.

The encoder maps each P^3 patch *independently* to an embedding, which is
quantized to the nearest codebook entry; the decoder maps the full d^3 grid
of embeddings *jointly* back to a D^3 TSDF (d = D/P). Patch independence is
what lets partial shape observations become partial latent observations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..checkpoint import load_checkpoint, save_checkpoint
from ..config import DataConfig, VqvaeConfig
from ..diffcore import (
    AttentionBlock3d,
    Conv3d,
    GroupNormSwish,
    Module,
    Parameter,
    ResBlock3d,
    Tensor,
    no_grad,
    straight_through,
    upsample_nearest3_cl,
)
from ..errors import ConfigurationError, DataError, StateError
from ..latent import LatentGrid, ObservationSet
from ..shapegen.grid import TsdfGrid


@dataclass
class PatchBatch:
    """Patches of one grid plus their latent-cell locations."""

    patches: np.ndarray    # [n, P, P, P] float32
    locations: np.ndarray  # [n, 3] int, each in [0, d)^3

    def __len__(self) -> int:
        return self.patches.shape[0]


def split_patches_array(values: np.ndarray, patch: int) -> np.ndarray:
    """[..., D, D, D] -> [..., d^3, P, P, P] non-overlapping tiling in
    lexicographic (x, y, z) patch order."""
    d_res = values.shape[-1]
    if d_res % patch != 0:
        raise ConfigurationError(
            f"split_patches: resolution {d_res} not divisible by patch {patch}"
        )
    d = d_res // patch
    lead = values.shape[:-3]
    v = values.reshape(lead + (d, patch, d, patch, d, patch))
    axes = tuple(range(len(lead)))
    n = len(lead)
    v = v.transpose(axes + (n, n + 2, n + 4, n + 1, n + 3, n + 5))
    return np.ascontiguousarray(v).reshape(lead + (d**3, patch, patch, patch))


def assemble_patches_array(patches: np.ndarray, patch: int) -> np.ndarray:
    """Inverse of :func:`split_patches_array`."""
    lead = patches.shape[:-4]
    d = round(patches.shape[-4] ** (1 / 3))
    n = len(lead)
    v = patches.reshape(lead + (d, d, d, patch, patch, patch))
    v = v.transpose(tuple(range(n)) + (n, n + 3, n + 1, n + 4, n + 2, n + 5))
    return np.ascontiguousarray(v).reshape(lead + (d * patch,) * 3)


def patch_locations(d: int) -> np.ndarray:
    """All d^3 cell locations in lexicographic (x, y, z) order."""
    grid = np.stack(
        np.meshgrid(np.arange(d), np.arange(d), np.arange(d), indexing="ij"),
        axis=-1,
    )
    return grid.reshape(-1, 3)


def split_patches(grid: TsdfGrid, patch: int) -> PatchBatch:
    """All d^3 patches of ``grid`` in lexicographic order."""
    patches = split_patches_array(grid.values, patch)
    return PatchBatch(patches, patch_locations(grid.resolution // patch))


def vector_quantize(
    z_hat: np.ndarray, codebook: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Nearest codebook row per input row (squared Euclidean), ties to the
    lowest index. Returns (indices [n], quantized rows [n, e])."""
    n = z_hat.shape[0]
    indices = np.empty(n, dtype=np.int64)
    step = max(1, 2_000_000 // max(1, codebook.shape[0] * codebook.shape[1]))
    for lo in range(0, n, step):
        chunk = z_hat[lo : lo + step]
        d2 = ((chunk[:, None, :] - codebook[None, :, :]) ** 2).sum(axis=-1)
        indices[lo : lo + step] = d2.argmin(axis=1)
    return indices, codebook[indices]


def _dedupe_rows(flat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """First-occurrence dedupe of [n, m] rows by content.

    Returns (unique row indices in first-seen order, inverse map). Encoding
    is a pure per-patch function, so duplicates can be computed once.
    """
    seen: dict[bytes, int] = {}
    uniques: list[int] = []
    inverse = np.empty(flat.shape[0], dtype=np.int64)
    for i in range(flat.shape[0]):
        key = flat[i].tobytes()
        slot = seen.get(key)
        if slot is None:
            slot = len(uniques)
            seen[key] = slot
            uniques.append(i)
        inverse[i] = slot
    return np.array(uniques, dtype=np.int64), inverse


class PatchEncoder(Module):
    """P^3 -> 1^3 convolutional stack; widths per spatial level."""

    def __init__(self, widths: tuple[int, ...], embed_dim: int, groups: int,
                 rng: np.random.Generator):
        self.conv_in = Conv3d(1, widths[0], 3, rng, padding=1)
        self.stages = [ResBlock3d(widths[0], widths[0], groups, rng)]
        for i in range(len(widths) - 1):
            # downsample keeps channels; the following res block changes them
            self.stages.append(
                Conv3d(widths[i], widths[i], 3, rng, stride=2, padding=1)
            )
            self.stages.append(ResBlock3d(widths[i], widths[i + 1], groups, rng))
        self.attn = AttentionBlock3d(widths[-1], groups, rng)
        self.res_out = ResBlock3d(widths[-1], widths[-1], groups, rng)
        self.norm_out = GroupNormSwish(widths[-1], groups)
        self.conv_out = Conv3d(widths[-1], embed_dim, 3, rng, padding=1)
        # start embeddings near the codebook's init scale; the decoder's
        # group norms are scale-invariant, so this costs nothing downstream
        self.conv_out.weight.data *= 0.05

    def forward(self, patches: Tensor) -> Tensor:
        """[n, P, P, P, 1] -> [n, e]"""
        h = self.conv_in(patches)
        for stage in self.stages:
            h = stage(h)
        h = self.res_out(self.attn(h))
        h = self.conv_out(self.norm_out(h))
        return h.reshape(h.shape[0], h.shape[-1])


class LatentDecoder(Module):
    """d^3 embedding volume -> D^3 TSDF; one up-doubling per width entry,
    final tanh scaled to the truncation threshold."""

    def __init__(self, embed_dim: int, widths: tuple[int, ...], groups: int,
                 tau: float, rng: np.random.Generator):
        self.tau = tau
        self.conv_in = Conv3d(embed_dim, widths[0], 3, rng, padding=1)
        self.res_a = ResBlock3d(widths[0], widths[0], groups, rng)
        self.attn = AttentionBlock3d(widths[0], groups, rng)
        self.res_b = ResBlock3d(widths[0], widths[0], groups, rng)
        self.up_blocks = []
        for i in range(len(widths) - 1):
            self.up_blocks.append(ResBlock3d(widths[i], widths[i + 1], groups, rng))
        self.norm_out = GroupNormSwish(widths[-1], groups)
        self.conv_out = Conv3d(widths[-1], 1, 3, rng, padding=1)

    def forward(self, volume: Tensor) -> Tensor:
        """[B, d, d, d, e] -> [B, D, D, D] with values in [-tau, tau]."""
        h = self.conv_in(volume)
        h = self.res_b(self.attn(self.res_a(h)))
        for block in self.up_blocks:
            h = block(upsample_nearest3_cl(h))
        h = upsample_nearest3_cl(h)
        h = self.conv_out(self.norm_out(h))
        out = h.reshape(h.shape[:-1])
        return out.tanh() * self.tau


def vqvae_loss(
    x: np.ndarray,
    x_recon: Tensor,
    z_hat: Tensor,
    z_q: Tensor,
    beta: float,
    recon_loss: str = "mse",
) -> Tensor:
    """Reconstruction + codebook + beta * commitment.

    The codebook term stops gradients into ``z_hat``; the commitment term
    stops gradients into ``z_q``; both are means over all elements.
    """
    target = Tensor(np.asarray(x, dtype=x_recon.data.dtype))
    if recon_loss == "mse":
        recon = ((x_recon - target) ** 2.0).mean()
    elif recon_loss == "l1":
        recon = (x_recon - target).abs().mean()
    else:
        raise ConfigurationError(f"unknown recon_loss {recon_loss!r}")
    codebook_term = ((z_q - Tensor(z_hat.data)) ** 2.0).mean()
    commit_term = ((z_hat - Tensor(z_q.data)) ** 2.0).mean()
    return recon + codebook_term + beta * commit_term


class PVQVAE(Module):
    """Codebook + patch encoder + joint decoder, with encode/decode APIs."""

    def __init__(self, config: VqvaeConfig, data: DataConfig,
                 rng: np.random.Generator):
        k, e = config.codebook_size, config.embed_dim
        self.codebook = Parameter(
            rng.uniform(-1.0 / k, 1.0 / k, size=(k, e)).astype(np.float32),
            "codebook",
        )
        self.encoder = PatchEncoder(
            tuple(config.enc_widths), e, config.groups, rng
        )
        self.decoder = LatentDecoder(
            e, tuple(config.dec_widths), config.groups, data.tau, rng
        )
        self.config = config
        self.data_config = data
        self.trained = False
        self.assign_names()

    @property
    def d(self) -> int:
        return self.data_config.resolution // self.config.patch

    # -- forward pieces --------------------------------------------------------

    def encode_patches(self, patches: Tensor) -> Tensor:
        """[n, P, P, P, 1] -> pre-quantization embeddings [n, e]."""
        return self.encoder(patches)

    def embed_tokens(self, tokens: np.ndarray) -> Tensor:
        """[B, d^3] tokens -> [B, d, d, d, e] embedding volume (codebook grad)."""
        k = self.config.codebook_size
        if tokens.min() < 0 or tokens.max() >= k:
            raise IndexError(
                f"token {int(tokens.flat[np.argmax((tokens < 0) | (tokens >= k))])} "
                f"outside [0, {k})"
            )
        b = tokens.shape[0]
        d = self.d
        emb = self.codebook[tokens.reshape(-1)]
        return emb.reshape(b, d, d, d, -1)

    def decode_tokens(self, tokens: np.ndarray) -> Tensor:
        """[B, d^3] -> [B, D, D, D]."""
        return self.decoder(self.embed_tokens(tokens))

    def forward(self, grids: np.ndarray):
        """Training pass over [B, D, D, D] grids.

        Returns (reconstruction [B, D, D, D], z_hat [B*d^3, e],
        z_q gathered rows [B*d^3, e], tokens [B, d^3]). Identical patches
        across the batch are encoded once and scattered back, which leaves
        values and gradients unchanged.
        """
        b = grids.shape[0]
        p = self.config.patch
        patches = split_patches_array(grids, p).reshape(-1, p, p, p, 1)
        uniq, inverse = _dedupe_rows(patches.reshape(patches.shape[0], -1))
        z_unique = self.encode_patches(Tensor(patches[uniq]))
        z_hat = z_unique[inverse]
        tokens_u, _ = vector_quantize(z_unique.data, self.codebook.data)
        tokens = tokens_u[inverse]
        z_q = self.codebook[tokens]
        st = straight_through(z_hat, z_q.data)
        volume = st.reshape(b, self.d, self.d, self.d, -1)
        recon = self.decoder(volume)
        return recon, z_hat, z_q, tokens.reshape(b, -1)

    # -- inference APIs ----------------------------------------------------------

    def _require_trained(self, op: str) -> None:
        if not self.trained:
            raise StateError(f"{op}: model has not been trained or loaded")

    def encode_grids(self, grids: np.ndarray) -> np.ndarray:
        """[B, D, D, D] -> token grids [B, d^3] (no gradients)."""
        self._require_trained("encode_grids")
        p = self.config.patch
        patches = split_patches_array(grids, p).reshape(-1, p, p, p, 1)
        uniq, inverse = _dedupe_rows(patches.reshape(patches.shape[0], -1))
        with no_grad():
            z = self.encode_patches(Tensor(patches[uniq])).data
        tokens_u, _ = vector_quantize(z, self.codebook.data)
        return tokens_u[inverse].reshape(grids.shape[0], -1)

    def encode_shape(self, grid: TsdfGrid) -> LatentGrid:
        """Full-shape encoding to a LatentGrid."""
        tokens = self.encode_grids(grid.values[None])[0]
        return LatentGrid.from_flat(self.d, tokens)

    def encode_observed(self, grid: TsdfGrid, locations: np.ndarray) -> ObservationSet:
        """Encode only the patches at ``locations`` ([n, 3] latent cells).

        Patch independence makes this identical to slicing a full encoding.
        """
        self._require_trained("encode_observed")
        locations = np.asarray(locations, dtype=np.int64).reshape(-1, 3)
        if locations.shape[0] == 0:
            return ObservationSet()
        p = self.config.patch
        d = self.d
        if locations.min() < 0 or locations.max() >= d:
            raise DataError(f"encode_observed: locations outside [0, {d})^3")
        patches = np.stack([
            grid.values[
                x * p : (x + 1) * p, y * p : (y + 1) * p, z * p : (z + 1) * p
            ]
            for x, y, z in locations
        ])
        uniq, inverse = _dedupe_rows(patches.reshape(patches.shape[0], -1))
        with no_grad():
            z = self.encode_patches(
                Tensor(patches[uniq][..., None].astype(np.float32))
            ).data
        tokens_u, _ = vector_quantize(z, self.codebook.data)
        return ObservationSet(locations, tokens_u[inverse])

    def decode_latent(self, latent: LatentGrid) -> TsdfGrid:
        self._require_trained("decode_latent")
        with no_grad():
            values = self.decode_tokens(latent.flat()[None]).data[0]
        return TsdfGrid(self.data_config.resolution, self.data_config.tau, values)

    # -- persistence ----------------------------------------------------------

    def save(self, path) -> None:
        config = {
            "vqvae": {**vars(self.config),
                      "enc_widths": list(self.config.enc_widths),
                      "dec_widths": list(self.config.dec_widths)},
            "data": vars(self.data_config),
        }
        save_checkpoint(
            path, "pvqvae", config,
            {name: p.data for name, p in self.named_parameters()},
        )

    @classmethod
    def load(cls, path) -> "PVQVAE":
        kind, config, tensors = load_checkpoint(path)
        if kind != "pvqvae":
            raise DataError(f"{path}: expected pvqvae checkpoint, got {kind}")
        vq_cfg = VqvaeConfig(**{
            **config["vqvae"],
            "enc_widths": tuple(config["vqvae"]["enc_widths"]),
            "dec_widths": tuple(config["vqvae"]["dec_widths"]),
        })
        model = cls(vq_cfg, DataConfig(**config["data"]), np.random.default_rng(0))
        for name, p in model.named_parameters():
            if name not in tensors:
                raise DataError(f"{path}: missing tensor {name}")
            if tensors[name].shape != p.data.shape:
                raise DataError(
                    f"{path}: tensor {name} shape {tensors[name].shape} != "
                    f"{p.data.shape}"
                )
            p.data = tensors[name].copy()
        model.trained = True
        return model
