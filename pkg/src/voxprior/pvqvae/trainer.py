"""Training loop for the patch-wise VQ-VAE."""

from __future__ import annotations

import math

import numpy as np

from ..config import DataConfig, VqvaeConfig
from ..diffcore import Adam, no_grad
from ..errors import TrainingError
from ..metrics import occupancy_iou_arrays
from ..seeding import rng_for
from ..shapegen.dataset import Dataset
from .model import PVQVAE, vqvae_loss


def reconstruction_iou(model: PVQVAE, grids: np.ndarray, batch: int = 8) -> float:
    """Mean occupancy IoU of decode(encode(X)) against X over ``grids``."""
    scores = []
    for lo in range(0, grids.shape[0], batch):
        chunk = grids[lo : lo + batch]
        tokens = model.encode_grids(chunk)
        with no_grad():
            recon = model.decode_tokens(tokens).data
        for i in range(chunk.shape[0]):
            scores.append(occupancy_iou_arrays(chunk[i], recon[i]))
    return float(np.mean(scores))


def train_pvqvae(
    dataset: Dataset,
    config: VqvaeConfig,
    log=None,
) -> tuple[PVQVAE, list[dict]]:
    """Minimize the VQ-VAE objective with Adam over the train split.

    Returns the trained model and a per-epoch history of
    {epoch, train_loss, val_iou}. Deterministic for a fixed config seed.
    """
    data_cfg = DataConfig(
        resolution=dataset.resolution, tau=dataset.tau,
        count=dataset.count, seed=0,
    )
    model = PVQVAE(config, data_cfg, rng_for(config.seed, "vqvae-init"))
    optimizer = Adam(model.parameters(), lr=config.lr)
    shuffle_rng = rng_for(config.seed, "vqvae-shuffle")

    train_idx, val_idx, _ = dataset.splits()
    train_idx = np.array(train_idx)
    val_grids = dataset.grids[np.array(val_idx)] if len(val_idx) else None

    history: list[dict] = []
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(train_idx)
        epoch_losses = []
        for lo in range(0, len(order), config.batch):
            batch = dataset.grids[order[lo : lo + config.batch]]
            recon, z_hat, z_q, _ = model.forward(batch)
            loss = vqvae_loss(
                batch, recon, z_hat, z_q, config.beta, config.recon_loss
            )
            value = loss.item()
            if math.isnan(value) or math.isinf(value):
                raise TrainingError(f"vqvae loss diverged at epoch {epoch}")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            epoch_losses.append(value)
        model.trained = True
        val_iou = (
            reconstruction_iou(model, val_grids) if val_grids is not None else None
        )
        entry = {
            "epoch": epoch,
            "train_loss": float(np.mean(epoch_losses)),
            "val_iou": val_iou,
        }
        history.append(entry)
        if log is not None:
            log(entry)
    model.trained = True
    return model, history
