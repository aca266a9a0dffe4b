"""Training for the naive conditional heads."""

from __future__ import annotations

import math

import numpy as np

from ..config import CondConfig
from ..diffcore import Adam, no_grad, softmax_cross_entropy
from ..errors import DataError, TrainingError
from ..seeding import rng_for
from .heads import ConditionalHead


def head_nll(head: ConditionalHead, payloads: np.ndarray,
             tokens: np.ndarray, batch: int = 16) -> float:
    """Mean per-cell cross-entropy of ``tokens`` under the head."""
    total, count = 0.0, 0
    for lo in range(0, tokens.shape[0], batch):
        chunk_p = payloads[lo : lo + batch]
        chunk_t = tokens[lo : lo + batch]
        with no_grad():
            logits = head.forward(chunk_p)
            loss = softmax_cross_entropy(
                logits.reshape(-1, head.vocab), chunk_t.reshape(-1)
            )
        total += loss.item() * chunk_t.size
        count += chunk_t.size
    return total / count


def train_head(
    kind: str,
    payloads: np.ndarray,
    tokens: np.ndarray,
    d: int,
    vocab: int,
    config: CondConfig,
    val_payloads: np.ndarray | None = None,
    val_tokens: np.ndarray | None = None,
    log=None,
    **head_kwargs,
) -> tuple[ConditionalHead, list[dict]]:
    """Minimize per-cell cross-entropy between the head's field and the
    encoded target tokens; pairs are aligned by index."""
    if payloads.shape[0] != tokens.shape[0]:
        raise DataError(
            f"train_head: {payloads.shape[0]} conditionings vs "
            f"{tokens.shape[0]} token grids (pairs must align by index)"
        )
    if tokens.min() < 0 or tokens.max() >= vocab:
        raise DataError(f"train_head: token outside [0, {vocab})")
    head = ConditionalHead(
        kind, d, vocab, config, rng_for(config.seed, "cond-init", _kind_tag(kind)),
        **head_kwargs,
    )
    optimizer = Adam(head.parameters(), lr=config.lr)
    shuffle_rng = rng_for(config.seed, "cond-shuffle", _kind_tag(kind))

    n = tokens.shape[0]
    history: list[dict] = []
    for epoch in range(config.epochs):
        perm = shuffle_rng.permutation(n)
        losses = []
        for lo in range(0, n, config.batch):
            idx = perm[lo : lo + config.batch]
            logits = head.forward(payloads[idx])
            loss = softmax_cross_entropy(
                logits.reshape(-1, vocab), tokens[idx].reshape(-1)
            )
            value = loss.item()
            if math.isnan(value) or math.isinf(value):
                raise TrainingError(f"head loss diverged at epoch {epoch}")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            losses.append(value)
        entry = {"epoch": epoch, "train_nll": float(np.mean(losses))}
        if val_tokens is not None and val_tokens.size:
            entry["val_nll"] = head_nll(head, val_payloads, val_tokens)
        history.append(entry)
        if log is not None:
            log(entry)
    return head, history


def _kind_tag(kind: str) -> int:
    return {"label": 0, "attributes": 1, "silhouette": 2}[kind]
