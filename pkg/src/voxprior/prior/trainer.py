"""Prior training over pre-tokenized shape datasets, plus the token cache."""

from __future__ import annotations

import math
import struct
from pathlib import Path

import numpy as np

from ..config import PriorConfig
from ..diffcore import Adam, no_grad, softmax_cross_entropy
from ..errors import DataError, TrainingError
from ..seeding import rng_for
from .model import PriorModel

TOKENS_MAGIC = b"TOKS"
TOKENS_VERSION = 1


def write_tokens_file(path: Path, tokens: np.ndarray, d: int, vocab: int) -> None:
    """``tokens``: [count, d^3] integers in [0, vocab)."""
    if tokens.min() < 0 or tokens.max() >= vocab:
        raise DataError(f"write_tokens_file: token outside [0, {vocab})")
    header = struct.pack(
        "<4sIIII", TOKENS_MAGIC, TOKENS_VERSION, d, vocab, tokens.shape[0]
    )
    try:
        with open(path, "wb") as f:
            f.write(header)
            f.write(np.ascontiguousarray(tokens, dtype="<u2").tobytes())
    except OSError as e:
        raise DataError(f"cannot write token cache {path}: {e}") from e


def read_tokens_file(path: Path) -> tuple[np.ndarray, int, int]:
    """Returns ([count, d^3] int64 tokens, d, vocab)."""
    try:
        blob = Path(path).read_bytes()
    except OSError as e:
        raise DataError(f"cannot read token cache {path}: {e}") from e
    head = struct.calcsize("<4sIIII")
    magic, version, d, vocab, count = struct.unpack("<4sIIII", blob[:head])
    if magic != TOKENS_MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}")
    if version != TOKENS_VERSION:
        raise DataError(f"{path}: unsupported version {version}")
    tokens = np.frombuffer(blob[head:], dtype="<u2")[: count * d**3]
    return tokens.astype(np.int64).reshape(count, d**3), d, vocab


def _orders_for_batch(
    n: int, t: int, mode: str, rng: np.random.Generator
) -> np.ndarray:
    """[n, t] cell orders: fresh uniform permutations, or raster."""
    if mode == "raster":
        return np.broadcast_to(np.arange(t, dtype=np.int64), (n, t)).copy()
    return rng.random((n, t)).argsort(axis=1).astype(np.int64)


def eval_nll(
    model: PriorModel, tokens: np.ndarray, mode: str, seed: int, batch: int = 32
) -> float:
    """Mean per-token NLL over ``tokens`` with one seeded order per sample."""
    rng = np.random.default_rng(seed)
    total, count = 0.0, 0
    for lo in range(0, tokens.shape[0], batch):
        chunk = tokens[lo : lo + batch]
        orders = _orders_for_batch(chunk.shape[0], chunk.shape[1], mode, rng)
        permuted = np.take_along_axis(chunk, orders, axis=1)
        with no_grad():
            logits = model.forward_sequence(orders, permuted)
            loss = softmax_cross_entropy(
                logits.reshape(-1, model.vocab), permuted.reshape(-1)
            )
        total += loss.item() * chunk.size
        count += chunk.size
    return total / count


def train_prior(
    tokens: np.ndarray,
    codebook: np.ndarray,
    d: int,
    config: PriorConfig,
    val_tokens: np.ndarray | None = None,
    log=None,
) -> tuple[PriorModel, list[dict]]:
    """Maximize chain log-likelihood with a fresh random order per sample per
    step (or the fixed raster order in ``raster`` mode)."""
    vocab = codebook.shape[0]
    if tokens.min() < 0 or tokens.max() >= vocab:
        raise DataError(f"train_prior: token outside [0, {vocab})")
    model = PriorModel(config, codebook, d, rng_for(config.seed, "prior-init"))
    optimizer = Adam(model.parameters(), lr=config.lr)
    shuffle_rng = rng_for(config.seed, "prior-shuffle")
    order_rng = rng_for(config.seed, "prior-orders")

    n, t = tokens.shape
    history: list[dict] = []
    for epoch in range(config.epochs):
        perm = shuffle_rng.permutation(n)
        epoch_losses = []
        for lo in range(0, n, config.batch):
            idx = perm[lo : lo + config.batch]
            batch_tokens = tokens[idx]
            orders = _orders_for_batch(
                idx.size, t, config.order_mode, order_rng
            )
            permuted = np.take_along_axis(batch_tokens, orders, axis=1)
            logits = model.forward_sequence(orders, permuted)
            loss = softmax_cross_entropy(
                logits.reshape(-1, vocab), permuted.reshape(-1)
            )
            value = loss.item()
            if math.isnan(value) or math.isinf(value):
                raise TrainingError(f"prior loss diverged at epoch {epoch}")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            epoch_losses.append(value)
        entry = {"epoch": epoch, "train_nll": float(np.mean(epoch_losses))}
        if val_tokens is not None and val_tokens.size:
            entry["val_nll"] = eval_nll(
                model, val_tokens, config.order_mode, seed=config.seed
            )
        history.append(entry)
        if log is not None:
            log(entry)
    return model, history
