"""Per-location conditional heads: p(token at cell | conditioning).

Each head maps its conditioning (class label, attribute vector, or
silhouette image) to an independent K-way categorical per latent cell. All
heads share the same volumetric trunk: the conditioning is lifted to a d^3
feature volume, refined by three residual blocks, and projected to K logits
per cell. The output projection starts at zero, so an untrained head is
exactly uniform.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..checkpoint import load_checkpoint, save_checkpoint
from ..config import CondConfig
from ..diffcore import (
    Conv3d,
    GroupNormSwish,
    Linear,
    Module,
    Parameter,
    ResBlock3d,
    Tensor,
    no_grad,
)
from ..errors import ConfigurationError, DataError
from ..shapegen.grid import Silhouette

KINDS = ("label", "attributes", "silhouette")

KIND_TO_MODEL = {
    "label": "cond_label", "attributes": "cond_attr", "silhouette": "cond_sil",
}
MODEL_TO_KIND = {v: k for k, v in KIND_TO_MODEL.items()}


@dataclass
class Conditioning:
    """One conditioning input; ``payload`` must match ``kind``."""

    kind: str
    payload: object  # int | np.ndarray | Silhouette

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown conditioning kind {self.kind!r}")
        if self.kind == "label" and not isinstance(self.payload, (int, np.integer)):
            raise ConfigurationError("label conditioning needs an integer payload")
        if self.kind == "attributes":
            self.payload = np.asarray(self.payload, dtype=np.float32).reshape(-1)
        if self.kind == "silhouette":
            if isinstance(self.payload, Silhouette):
                self.payload = self.payload.pixels
            self.payload = np.asarray(self.payload).astype(np.float32)


@dataclass
class CategoricalField:
    """A d^3 grid of K-way distributions (logits unless ``normalized``)."""

    d: int
    values: np.ndarray  # [d^3, K]
    normalized: bool = False

    def probabilities(self) -> np.ndarray:
        """[d^3, K] float64 rows summing to 1."""
        v = self.values.astype(np.float64)
        if self.normalized:
            return v
        v = v - v.max(axis=1, keepdims=True)
        ev = np.exp(v)
        return ev / ev.sum(axis=1, keepdims=True)


class ConditionalHead(Module):
    """Trunk shared by all kinds; the lift differs per conditioning."""

    def __init__(self, kind: str, d: int, vocab: int, config: CondConfig,
                 rng: np.random.Generator, num_labels: int = 5,
                 attr_dim: int = 4, sil_resolution: int = 32):
        if kind not in KINDS:
            raise ConfigurationError(f"unknown conditioning kind {kind!r}")
        self.kind = kind
        self.d = d
        self.vocab = vocab
        self.config = config
        self.num_labels = num_labels
        self.attr_dim = attr_dim
        self.sil_resolution = sil_resolution
        w = config.trunk_width
        groups = 8

        if kind == "label":
            self.embed = Parameter(
                (rng.normal(0.0, 0.1, size=(num_labels, w))).astype(np.float32),
                "embed",
            )
        elif kind == "attributes":
            self.lift = Linear(attr_dim, w, rng)
        else:
            # stride-2 "2D" convs realized as 3D convs over depth-1 volumes
            n_down = max(0, sil_resolution.bit_length() - d.bit_length())
            self.sil_convs = []
            c = 1
            for i in range(n_down):
                c_out = min(w, 16 * 2**i)
                self.sil_convs.append(Conv3d(c, c_out, 3, rng, stride=2, padding=1))
                self.sil_convs.append(GroupNormSwish(c_out, min(groups, c_out)))
                c = c_out
            flat = (sil_resolution // 2**n_down) ** 2 * c
            self.sil_lift = Linear(flat, d**3 * w, rng)

        self.trunk = [ResBlock3d(w, w, groups, rng) for _ in range(3)]
        self.norm_out = GroupNormSwish(w, groups)
        self.conv_out = Conv3d(w, vocab, 3, rng, padding=1)
        # zero output projection: untrained head is exactly uniform
        self.conv_out.weight.data[:] = 0.0
        self.conv_out.bias.data[:] = 0.0
        self.assign_names()

    def _lift_volume(self, payloads: np.ndarray) -> Tensor:
        """Batched conditioning -> [B, d, d, d, W] feature volume."""
        d, w = self.d, self.config.trunk_width
        if self.kind == "label":
            labels = np.asarray(payloads, dtype=np.int64).reshape(-1)
            if labels.min() < 0 or labels.max() >= self.num_labels:
                raise DataError(
                    f"label outside [0, {self.num_labels})"
                )
            rows = self.embed[labels]  # [B, W]
            b = labels.shape[0]
            ones = np.ones((b, d, d, d, 1), dtype=np.float32)
            return rows.reshape(b, 1, 1, 1, w) * Tensor(ones)
        if self.kind == "attributes":
            attrs = np.asarray(payloads, dtype=np.float32).reshape(-1, self.attr_dim)
            rows = self.lift(Tensor(attrs))
            b = attrs.shape[0]
            ones = np.ones((b, d, d, d, 1), dtype=np.float32)
            return rows.reshape(b, 1, 1, 1, w) * Tensor(ones)
        pixels = np.asarray(payloads, dtype=np.float32)
        if pixels.ndim == 2:
            pixels = pixels[None]
        b, r = pixels.shape[0], self.sil_resolution
        h = Tensor(pixels.reshape(b, r, r, 1, 1))
        for stage in self.sil_convs:
            h = stage(h)
        h = self.sil_lift(h.reshape(b, -1))
        return h.reshape(b, d, d, d, w)

    def forward(self, payloads: np.ndarray) -> Tensor:
        """Batched conditioning -> [B, d^3, K] logits."""
        h = self._lift_volume(payloads)
        for block in self.trunk:
            h = block(h)
        logits = self.conv_out(self.norm_out(h))
        b = logits.shape[0]
        return logits.reshape(b, self.d**3, self.vocab)

    # -- persistence --------------------------------------------------------------

    def save(self, path) -> None:
        config = {
            "kind": self.kind, "d": self.d, "vocab": self.vocab,
            "cond": vars(self.config), "num_labels": self.num_labels,
            "attr_dim": self.attr_dim, "sil_resolution": self.sil_resolution,
        }
        save_checkpoint(
            path, KIND_TO_MODEL[self.kind], config,
            {name: p.data for name, p in self.named_parameters()},
        )

    @classmethod
    def load(cls, path) -> "ConditionalHead":
        kind_tag, config, tensors = load_checkpoint(path)
        if kind_tag not in MODEL_TO_KIND:
            raise DataError(f"{path}: not a conditional head checkpoint ({kind_tag})")
        head = cls(
            MODEL_TO_KIND[kind_tag], config["d"], config["vocab"],
            CondConfig(**config["cond"]), np.random.default_rng(0),
            num_labels=config["num_labels"], attr_dim=config["attr_dim"],
            sil_resolution=config["sil_resolution"],
        )
        for name, p in head.named_parameters():
            if name not in tensors:
                raise DataError(f"{path}: missing tensor {name}")
            p.data = tensors[name].copy()
        return head


def conditional_field(head: ConditionalHead, conditioning: Conditioning) -> CategoricalField:
    """Evaluate the head once for one conditioning input."""
    if conditioning.kind != head.kind:
        raise ConfigurationError(
            f"conditioning kind {conditioning.kind!r} does not match head "
            f"kind {head.kind!r}"
        )
    payload = conditioning.payload
    batch = np.asarray([payload]) if head.kind == "label" else payload
    with no_grad():
        logits = head.forward(batch).data[0]
    return CategoricalField(head.d, logits.copy(), normalized=False)
