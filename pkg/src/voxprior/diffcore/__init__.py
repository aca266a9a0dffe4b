"""Differentiable numeric core: tensors, ops, modules, Adam, grad checking."""

from .adam import Adam
from .functional import (
    MASK_NEG,
    causal_mask,
    conv3d,
    conv3d_cl,
    gelu,
    group_norm_swish,
    group_norm_swish_cl,
    layer_norm,
    multi_head_attention,
    softmax,
    softmax_cross_entropy,
    straight_through,
    upsample_nearest3,
    upsample_nearest3_cl,
)
from .gradcheck import grad_check
from .modules import (
    AttentionBlock3d,
    Conv3d,
    GroupNormSwish,
    LayerNorm,
    Linear,
    Module,
    ResBlock3d,
    TransformerLayer,
)
from .tensor import (
    DEFAULT_DTYPE,
    Parameter,
    Tensor,
    concat,
    no_grad,
    stack,
    zero_grads,
)

__all__ = [
    "Adam",
    "AttentionBlock3d",
    "Conv3d",
    "DEFAULT_DTYPE",
    "GroupNormSwish",
    "LayerNorm",
    "Linear",
    "MASK_NEG",
    "Module",
    "Parameter",
    "ResBlock3d",
    "Tensor",
    "TransformerLayer",
    "causal_mask",
    "concat",
    "conv3d",
    "conv3d_cl",
    "gelu",
    "grad_check",
    "group_norm_swish",
    "group_norm_swish_cl",
    "layer_norm",
    "multi_head_attention",
    "no_grad",
    "softmax",
    "softmax_cross_entropy",
    "stack",
    "straight_through",
    "upsample_nearest3",
    "upsample_nearest3_cl",
    "zero_grads",
]
