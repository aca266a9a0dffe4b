"""Parameterized building blocks: linear, conv, norm, residual and attention
blocks, and a pre-LN transformer encoder layer.

Modules own Parameters and expose them through ``parameters()`` /
``named_parameters()``. Weight initialization draws from the generator passed
to each constructor, so models are reproducible from a seed.
"""

from __future__ import annotations

import numpy as np

from .functional import (
    conv3d,
    conv3d_cl,
    gelu,
    group_norm_swish,
    group_norm_swish_cl,
    layer_norm,
    multi_head_attention,
)
from .tensor import DEFAULT_DTYPE, Parameter, Tensor


class Module:
    """Base class with recursive parameter discovery."""

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def named_parameters(self, prefix: str = "") -> list[tuple[str, Parameter]]:
        found: list[tuple[str, Parameter]] = []
        for attr, value in vars(self).items():
            path = f"{prefix}.{attr}" if prefix else attr
            if isinstance(value, Parameter):
                found.append((path, value))
            elif isinstance(value, Module):
                found.extend(value.named_parameters(path))
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        found.extend(item.named_parameters(f"{path}.{i}"))
                    elif isinstance(item, Parameter):
                        found.append((f"{path}.{i}", item))
        return found

    def assign_names(self, prefix: str = "") -> None:
        """Rewrite every parameter's name to its dotted attribute path."""
        for path, p in self.named_parameters(prefix):
            p.name = path

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class Linear(Module):
    def __init__(self, in_features: int, out_features: int,
                 rng: np.random.Generator, bias: bool = True):
        limit = np.sqrt(6.0 / (in_features + out_features))
        w = rng.uniform(-limit, limit, size=(in_features, out_features))
        self.weight = Parameter(w.astype(DEFAULT_DTYPE), "weight")
        self.bias = (
            Parameter(np.zeros(out_features, dtype=DEFAULT_DTYPE), "bias")
            if bias else None
        )

    def forward(self, x: Tensor) -> Tensor:
        out = x @ self.weight
        if self.bias is not None:
            out = out + self.bias
        return out


class Conv3d(Module):
    """3D convolution layer over channels-last volumes [B, D, H, W, C]."""

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int,
                 rng: np.random.Generator, stride: int = 1, padding: int = 0):
        fan_in = in_channels * kernel_size**3
        std = np.sqrt(2.0 / fan_in)
        w = rng.normal(0.0, std, size=(
            out_channels, in_channels, kernel_size, kernel_size, kernel_size))
        self.weight = Parameter(w.astype(DEFAULT_DTYPE), "weight")
        self.bias = Parameter(np.zeros(out_channels, dtype=DEFAULT_DTYPE), "bias")
        self.stride = stride
        self.padding = padding

    def forward(self, x: Tensor) -> Tensor:
        return conv3d_cl(x, self.weight, self.bias, self.stride, self.padding)


class GroupNormSwish(Module):
    def __init__(self, channels: int, groups: int, eps: float = 1e-6,
                 channels_last: bool = True):
        self.scale = Parameter(np.ones(channels, dtype=DEFAULT_DTYPE), "scale")
        self.shift = Parameter(np.zeros(channels, dtype=DEFAULT_DTYPE), "shift")
        self.groups = groups
        self.eps = eps
        self.channels_last = channels_last

    def forward(self, x: Tensor) -> Tensor:
        if self.channels_last:
            return group_norm_swish_cl(x, self.groups, self.scale, self.shift, self.eps)
        return group_norm_swish(x, self.groups, self.scale, self.shift, self.eps)


class ResBlock3d(Module):
    """norm/swish/conv twice, plus a 1x1x1 shortcut when channels change.

    Volumes are channels-last: [B, D, H, W, C].
    """

    def __init__(self, in_channels: int, out_channels: int, groups: int,
                 rng: np.random.Generator):
        self.norm1 = GroupNormSwish(in_channels, groups)
        self.conv1 = Conv3d(in_channels, out_channels, 3, rng, padding=1)
        self.norm2 = GroupNormSwish(out_channels, groups)
        self.conv2 = Conv3d(out_channels, out_channels, 3, rng, padding=1)
        self.shortcut = (
            Conv3d(in_channels, out_channels, 1, rng)
            if in_channels != out_channels else None
        )

    def forward(self, x: Tensor) -> Tensor:
        h = self.conv1(self.norm1(x))
        h = self.conv2(self.norm2(h))
        skip = self.shortcut(x) if self.shortcut is not None else x
        return skip + h


class AttentionBlock3d(Module):
    """Single-head self-attention over all spatial positions of a volume
    ([B, D, H, W, C])."""

    def __init__(self, channels: int, groups: int, rng: np.random.Generator):
        self.norm = GroupNormSwish(channels, groups)
        self.to_q = Linear(channels, channels, rng)
        self.to_k = Linear(channels, channels, rng)
        self.to_v = Linear(channels, channels, rng)
        self.proj = Linear(channels, channels, rng)

    def forward(self, x: Tensor) -> Tensor:
        b, c = x.shape[0], x.shape[-1]
        h = self.norm(x)
        seq = h.reshape(b, -1, c)  # [B, T, C]
        q, k, v = self.to_q(seq), self.to_k(seq), self.to_v(seq)
        ctx = multi_head_attention(q, k, v, mask=None, num_heads=1)
        return x + self.proj(ctx).reshape(x.shape)


class LayerNorm(Module):
    def __init__(self, width: int, eps: float = 1e-5):
        self.scale = Parameter(np.ones(width, dtype=DEFAULT_DTYPE), "scale")
        self.shift = Parameter(np.zeros(width, dtype=DEFAULT_DTYPE), "shift")
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.scale, self.shift, self.eps)


class TransformerLayer(Module):
    """Pre-LN encoder layer: masked self-attention, then a GELU MLP."""

    def __init__(self, width: int, heads: int, rng: np.random.Generator,
                 mlp_ratio: int = 4):
        self.heads = heads
        self.ln1 = LayerNorm(width)
        self.to_q = Linear(width, width, rng)
        self.to_k = Linear(width, width, rng)
        self.to_v = Linear(width, width, rng)
        self.proj = Linear(width, width, rng)
        self.ln2 = LayerNorm(width)
        self.mlp_in = Linear(width, width * mlp_ratio, rng)
        self.mlp_out = Linear(width * mlp_ratio, width, rng)

    def forward(self, x: Tensor, mask: np.ndarray | None) -> Tensor:
        h = self.ln1(x)
        ctx = multi_head_attention(
            self.to_q(h), self.to_k(h), self.to_v(h), mask, self.heads,
            w_out=self.proj.weight, b_out=self.proj.bias,
        )
        x = x + ctx
        x = x + self.mlp_out(gelu(self.mlp_in(self.ln2(x))))
        return x
