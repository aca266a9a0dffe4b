"""Non-sequential autoregressive prior over latent token grids."""

from .model import (
    PermutationOrder,
    PriorModel,
    chain_log_prob,
    fourier_features,
    observation_from_latent,
    prior_nll,
    raster_order,
    sample_order,
)
from .sampling import (
    draw_categorical,
    run_chain,
    sample_completion,
    step_distribution,
)
from .trainer import (
    eval_nll,
    read_tokens_file,
    train_prior,
    write_tokens_file,
)

__all__ = [
    "PermutationOrder",
    "PriorModel",
    "chain_log_prob",
    "draw_categorical",
    "eval_nll",
    "fourier_features",
    "observation_from_latent",
    "prior_nll",
    "raster_order",
    "read_tokens_file",
    "run_chain",
    "sample_completion",
    "sample_order",
    "step_distribution",
    "train_prior",
    "write_tokens_file",
]
