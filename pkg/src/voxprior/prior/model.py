"""Non-sequential autoregressive transformer over latent token grids.

The joint distribution over a d^3 token grid factorizes along a permuted
cell order: each causal position receives the previous cell's token
embedding, the previous cell's positional embedding, and the positional
embedding of the *query* cell it must predict, so the same weights serve any
ordering of the cells. Positional embeddings are Fourier features of the
normalized cell coordinates, linearly projected to the model width.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..checkpoint import load_checkpoint, save_checkpoint
from ..config import PriorConfig
from ..diffcore import (
    LayerNorm,
    Linear,
    Module,
    Parameter,
    Tensor,
    TransformerLayer,
    causal_mask,
    concat,
    no_grad,
    softmax_cross_entropy,
)
from ..errors import DataError
from ..latent import LatentGrid, ObservationSet


def fourier_features(locations: np.ndarray, d: int, bands: int) -> np.ndarray:
    """Fourier positional features for integer cell locations in [0, d)^3.

    Per axis the coordinate is normalized to c in [0, 1) and expanded to
    [sin(2 pi 2^f c), cos(2 pi 2^f c)] for f = 0..bands-1; axes are
    concatenated. Output is [n, 6 * bands] float32.
    """
    locations = np.asarray(locations, dtype=np.float64).reshape(-1, 3)
    c = locations / d  # [n, 3] in [0, 1)
    freqs = 2.0 ** np.arange(bands)  # [F]
    angles = 2.0 * np.pi * c[:, :, None] * freqs[None, None, :]  # [n, 3, F]
    feats = np.stack([np.sin(angles), np.cos(angles)], axis=-1)  # [n, 3, F, 2]
    return feats.reshape(locations.shape[0], -1).astype(np.float32)


@dataclass(frozen=True)
class PermutationOrder:
    """A bijection over the d^3 cells, stored as flat indices in visit order."""

    d: int
    flat: np.ndarray  # [d^3] int64, a permutation of range(d^3)

    def __post_init__(self):
        t = self.d**3
        if sorted(self.flat.tolist()) != list(range(t)):
            raise DataError("PermutationOrder: not a bijection over the cells")

    def locations(self) -> np.ndarray:
        """[T, 3] location triples in visit order."""
        x, rem = np.divmod(self.flat, self.d * self.d)
        y, z = np.divmod(rem, self.d)
        return np.stack([x, y, z], axis=1)


def sample_order(d: int, seed: int) -> PermutationOrder:
    """A uniformly random cell order from the seed-determined stream."""
    rng = np.random.default_rng(seed)
    return PermutationOrder(d, rng.permutation(d**3).astype(np.int64))


def raster_order(d: int) -> PermutationOrder:
    return PermutationOrder(d, np.arange(d**3, dtype=np.int64))


class PriorModel(Module):
    """Transformer prior; reuses the autoencoder codebook as token embedding."""

    def __init__(self, config: PriorConfig, codebook: np.ndarray, d: int,
                 rng: np.random.Generator):
        self.config = config
        self.d = d
        self.vocab = codebook.shape[0]
        w = config.width
        self.token_embed = Parameter(codebook.astype(np.float32).copy(), "token_embed")
        self.tok_proj = Linear(codebook.shape[1], w, rng)
        self.pos_proj = Linear(6 * config.fourier_bands, w, rng)
        self.start_emb = Parameter(
            (rng.normal(0.0, 0.02, size=w)).astype(np.float32), "start_emb"
        )
        self.layers = [
            TransformerLayer(w, config.heads, rng) for _ in range(config.layers)
        ]
        self.ln_f = LayerNorm(w)
        self.head = Linear(w, self.vocab, rng)
        # zero-initialized head: an untrained model is exactly uniform
        self.head.weight.data[:] = 0.0
        self.head.bias.data[:] = 0.0
        self._pos_feats = fourier_features(
            _all_locations(d), d, config.fourier_bands
        )
        self.assign_names()

    @property
    def cells(self) -> int:
        return self.d**3

    # -- sequence assembly -------------------------------------------------------

    def _input_rows(self, order_flat: np.ndarray, tokens_in_order: np.ndarray) -> Tensor:
        """Inputs for causal positions 0..t of one or more chains.

        ``order_flat``: [B, t+1] flat cell indices (prefix cells then query);
        ``tokens_in_order``: [B, t] tokens of the prefix cells. Position 0
        uses the learned start embedding in place of a previous token.
        """
        b, length = order_flat.shape
        query_feat = Tensor(self._pos_feats[order_flat])  # [B, L, 6F]
        x = self.pos_proj(query_feat)
        if length > 1:
            prev_feat = Tensor(self._pos_feats[order_flat[:, :-1]])
            prev_pos = self.pos_proj(prev_feat)  # [B, L-1, w]
            tok = self.token_embed[tokens_in_order.reshape(-1)]
            tok = self.tok_proj(tok).reshape(b, length - 1, -1)
            start = self.start_emb.reshape(1, 1, -1) * np.ones(
                (b, 1, 1), dtype=np.float32
            )
            x = x + concat([start, tok + prev_pos], axis=1)
        else:
            x = x + self.start_emb.reshape(1, 1, -1)
        return x

    def forward_sequence(self, orders: np.ndarray, tokens: np.ndarray) -> Tensor:
        """Parallel training pass.

        ``orders``: [B, T] permutations (flat indices); ``tokens``: [B, T]
        tokens already arranged in that order. Returns [B, T, K] logits where
        position t conditions only on positions < t (triangular mask) plus
        its own query location.
        """
        b, t = orders.shape
        x = self._input_rows(orders, tokens[:, :-1])
        mask = causal_mask(t)
        for layer in self.layers:
            x = layer(x, mask)
        return self.head(self.ln_f(x))

    def logits_for_queries(
        self,
        prefix_flat: np.ndarray,
        prefix_tokens: np.ndarray,
        queries_flat: np.ndarray,
    ) -> np.ndarray:
        """Inference: K logits for each query cell given an explicit prefix.

        ``prefix_flat``/``prefix_tokens``: [t] arrays (possibly empty);
        ``queries_flat``: [q] cells to predict. Queries must not collide
        with prefix cells. Returns [q, K] float32.
        """
        prefix_flat = np.asarray(prefix_flat, dtype=np.int64).reshape(-1)
        queries_flat = np.asarray(queries_flat, dtype=np.int64).reshape(-1)
        if len(set(prefix_flat.tolist())) != prefix_flat.size:
            raise DataError("prior: duplicate locations in prefix")
        if set(prefix_flat.tolist()) & set(queries_flat.tolist()):
            raise DataError("prior: query location already in prefix")
        t = prefix_flat.size
        q = queries_flat.size
        rows = np.empty((q, t + 1), dtype=np.int64)
        rows[:, :t] = prefix_flat
        rows[:, t] = queries_flat
        tokens = np.broadcast_to(prefix_tokens, (q, t)).astype(np.int64)
        with no_grad():
            x = self._input_rows(rows, tokens)
            mask = causal_mask(t + 1)
            for layer in self.layers:
                x = layer(x, mask)
            logits = self.head(self.ln_f(x))
        return logits.data[:, t, :]

    # -- persistence --------------------------------------------------------------

    def save(self, path) -> None:
        config = {
            "prior": vars(self.config),
            "d": self.d,
            "embed_dim": int(self.token_embed.shape[1]),
        }
        save_checkpoint(
            path, "prior", config,
            {name: p.data for name, p in self.named_parameters()},
        )

    @classmethod
    def load(cls, path) -> "PriorModel":
        kind, config, tensors = load_checkpoint(path)
        if kind != "prior":
            raise DataError(f"{path}: expected prior checkpoint, got {kind}")
        cfg = PriorConfig(**config["prior"])
        codebook = tensors["token_embed"]
        model = cls(cfg, codebook, config["d"], np.random.default_rng(0))
        for name, p in model.named_parameters():
            if name not in tensors:
                raise DataError(f"{path}: missing tensor {name}")
            p.data = tensors[name].copy()
        return model


def _all_locations(d: int) -> np.ndarray:
    grid = np.stack(
        np.meshgrid(np.arange(d), np.arange(d), np.arange(d), indexing="ij"),
        axis=-1,
    )
    return grid.reshape(-1, 3)


def prior_nll(model: PriorModel, latent: LatentGrid, order: PermutationOrder) -> float:
    """Mean per-token negative log-likelihood of ``latent`` along ``order``."""
    flat = latent.flat().astype(np.int64)
    if flat.min() < 0 or flat.max() >= model.vocab:
        raise DataError(
            f"prior_nll: token outside [0, {model.vocab})"
        )
    tokens = flat[order.flat][None]
    with no_grad():
        logits = model.forward_sequence(order.flat[None], tokens)
        loss = softmax_cross_entropy(
            logits.reshape(-1, model.vocab), tokens.reshape(-1)
        )
    return float(loss.item())


def chain_log_prob(
    model: PriorModel, latent: LatentGrid, order: PermutationOrder
) -> float:
    """Total log probability of the grid along ``order`` (sum, not mean)."""
    return -prior_nll(model, latent, order) * model.cells


def observation_from_latent(latent: LatentGrid, locations: np.ndarray) -> ObservationSet:
    locations = np.asarray(locations, dtype=np.int64).reshape(-1, 3)
    tokens = latent.tokens[locations[:, 0], locations[:, 1], locations[:, 2]]
    return ObservationSet(locations, tokens)
