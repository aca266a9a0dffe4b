"""Alpha-weighted product of the shape prior and a naive conditional.

Per sampling step the categorical over tokens becomes
p(k) ~ prior(k)^(1-alpha) * conditional(k)^alpha, renormalized. Endpoints
are exact: alpha=0 returns the prior distribution object unchanged and
alpha=1 the conditional's, so conditional sampling at alpha=0 is
bit-identical to plain completion. The combination runs in float64 log
space. Temperature applies to the prior logits before the product.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import NumericError, ParameterError
from ..latent import LatentGrid, ObservationSet
from ..prior.model import PriorModel
from ..prior.sampling import run_chain, step_distribution
from .heads import CategoricalField, Conditioning, ConditionalHead, conditional_field


@dataclass
class PoeConfig:
    alpha: float
    temperature: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ParameterError(f"alpha={self.alpha} outside [0, 1]")


def poe_combine(
    prior_probs: np.ndarray, cond_probs: np.ndarray, alpha: float
) -> np.ndarray:
    """Combine two normalized categoricals; float64, exact endpoints."""
    if alpha == 0.0:
        return prior_probs
    if alpha == 1.0:
        return np.asarray(cond_probs, dtype=np.float64)
    p = np.asarray(prior_probs, dtype=np.float64)
    c = np.asarray(cond_probs, dtype=np.float64)
    with np.errstate(divide="ignore"):
        log_mix = (1.0 - alpha) * np.log(p) + alpha * np.log(c)
    log_mix -= log_mix.max()
    mix = np.exp(log_mix)
    total = mix.sum()
    if not total > 0.0:
        raise NumericError("poe: product distribution has zero mass")
    return mix / total


def poe_step_distribution(
    prior_logits: np.ndarray, cond_cell: np.ndarray, alpha: float
) -> np.ndarray:
    """Per-step product rule from raw prior logits and normalized
    conditional probabilities."""
    if not 0.0 <= alpha <= 1.0:
        raise ParameterError(f"alpha={alpha} outside [0, 1]")
    return poe_combine(step_distribution(prior_logits, 1.0), cond_cell, alpha)


def sample_conditional(
    prior: PriorModel,
    head: ConditionalHead,
    conditioning: Conditioning,
    observed: ObservationSet,
    poe: PoeConfig,
) -> LatentGrid:
    """Run the prior's sampling chain with each step's categorical replaced
    by the product rule; supports simultaneous partial observation.

    The conditional field is evaluated once per conditioning and reused for
    the whole chain (it does not depend on sampled tokens).
    """
    field = conditional_field(head, conditioning)
    return sample_with_field(prior, field, observed, poe)


def sample_with_field(
    prior: PriorModel,
    field: CategoricalField,
    observed: ObservationSet,
    poe: PoeConfig,
) -> LatentGrid:
    """As :func:`sample_conditional`, with a precomputed field."""
    cond = field.probabilities()

    def step(prior_probs: np.ndarray, cell: int) -> np.ndarray:
        return poe_combine(prior_probs, cond[cell], poe.alpha)

    return run_chain(
        prior, observed, poe.seed, poe.temperature, step_probs=step
    )
