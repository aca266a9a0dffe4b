"""Autoregressive sampling chains: completion and unconditional generation.

Observed tokens are placed first in the chain (randomly ordered among
themselves), then the remaining cells are visited in a random order and
sampled one at a time. The per-step categorical comes from the prior's
logits after temperature scaling; a ``step_probs`` hook can replace it
(the conditional module uses this for the product rule). Everything is
a deterministic function of (model, observed, seed, temperature).
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from ..errors import DataError
from ..latent import LatentGrid, ObservationSet
from .model import PriorModel

StepProbs = Callable[[np.ndarray, int], np.ndarray]


def step_distribution(logits: np.ndarray, temperature: float) -> np.ndarray:
    """Float64 categorical from prior logits at ``temperature``.

    ``temperature == 0`` is the greedy limit: a point mass on the argmax
    (ties to the lowest index).
    """
    z = np.asarray(logits, dtype=np.float64)
    if temperature == 0.0:
        probs = np.zeros_like(z)
        probs[int(z.argmax())] = 1.0
        return probs
    z = z / temperature
    z = z - z.max()
    ez = np.exp(z)
    return ez / ez.sum()


def draw_categorical(probs: np.ndarray, rng: np.random.Generator) -> int:
    """Inverse-CDF draw; deterministic given the generator state."""
    u = rng.random()
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    return int(np.searchsorted(cdf, u, side="right"))


def run_chain(
    model: PriorModel,
    observed: ObservationSet,
    seed: int,
    temperature: float = 1.0,
    step_probs: StepProbs | None = None,
) -> LatentGrid:
    """Sample a full LatentGrid conditioned on ``observed``.

    ``step_probs(prior_probs, flat_cell)`` may replace each step's
    categorical (it receives the temperature-scaled prior distribution and
    the flat index of the cell being predicted).
    """
    d = model.d
    t_total = model.cells
    rng = np.random.default_rng(seed)

    obs_flat = (
        (observed.locations[:, 0] * d + observed.locations[:, 1]) * d
        + observed.locations[:, 2]
    ).astype(np.int64)
    if obs_flat.size and (observed.tokens.min() < 0 or observed.tokens.max() >= model.vocab):
        raise DataError(f"run_chain: observed token outside [0, {model.vocab})")

    # observed cells first, randomly ordered among themselves
    if obs_flat.size:
        shuffle = rng.permutation(obs_flat.size)
        prefix_flat = obs_flat[shuffle]
        prefix_tokens = observed.tokens[shuffle].astype(np.int64)
    else:
        prefix_flat = np.zeros(0, dtype=np.int64)
        prefix_tokens = np.zeros(0, dtype=np.int64)

    remaining = np.setdiff1d(np.arange(t_total, dtype=np.int64), obs_flat)
    remaining = remaining[rng.permutation(remaining.size)]

    chain_flat = np.empty(t_total, dtype=np.int64)
    chain_tokens = np.empty(t_total, dtype=np.int64)
    n_obs = prefix_flat.size
    chain_flat[:n_obs] = prefix_flat
    chain_tokens[:n_obs] = prefix_tokens

    for step, cell in enumerate(remaining):
        t = n_obs + step
        logits = model.logits_for_queries(
            chain_flat[:t], chain_tokens[:t], np.array([cell])
        )[0]
        probs = step_distribution(logits, temperature)
        if step_probs is not None:
            probs = step_probs(probs, int(cell))
        chain_flat[t] = cell
        chain_tokens[t] = draw_categorical(probs, rng)

    tokens = np.empty(t_total, dtype=np.int64)
    tokens[chain_flat] = chain_tokens
    return LatentGrid.from_flat(d, tokens)


def sample_completion(
    model: PriorModel,
    observed: ObservationSet,
    seed: int,
    temperature: float = 1.0,
) -> LatentGrid:
    """Complete ``observed`` into a full grid (empty set: unconditional).

    Observed tokens appear unchanged in the output.
    """
    return run_chain(model, observed, seed, temperature)
