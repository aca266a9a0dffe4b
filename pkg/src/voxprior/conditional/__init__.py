"""Naive conditional heads and product-of-experts guided sampling."""

from .heads import (
    KINDS,
    CategoricalField,
    Conditioning,
    ConditionalHead,
    conditional_field,
)
from .poe import (
    PoeConfig,
    poe_combine,
    poe_step_distribution,
    sample_conditional,
    sample_with_field,
)
from .trainer import head_nll, train_head

__all__ = [
    "CategoricalField",
    "Conditioning",
    "ConditionalHead",
    "KINDS",
    "PoeConfig",
    "conditional_field",
    "head_nll",
    "poe_combine",
    "poe_step_distribution",
    "sample_conditional",
    "sample_with_field",
    "train_head",
]
