"""Finite-difference verification of analytic gradients.

``grad_check`` compares the gradient produced by the autodiff backward pass
against central differences (f(x+eps) - f(x-eps)) / 2*eps on a random
subsample of coordinates. The difference quotients are evaluated with the
parameters promoted to float64, which removes finite-difference cancellation
noise and leaves the float32 backward pass as the only error source under
test.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from ..errors import CheckError
from .tensor import Parameter, Tensor


def grad_check(
    fn: Callable[[], Tensor],
    params: list[Parameter],
    epsilon: float = 1e-3,
    max_coords: int = 24,
    seed: int = 0,
) -> float:
    """Return the max relative error between analytic and numeric gradients.

    ``fn`` must be a deterministic scalar-valued closure over ``params``;
    it is re-evaluated for every probed coordinate. At most ``max_coords``
    coordinates per parameter are probed, chosen by a seeded draw. Relative
    error uses a small denominator floor so near-zero coordinates compare
    on an absolute scale.
    """
    first = fn()
    if first.size != 1:
        raise CheckError("grad_check: function must be scalar-valued")
    second = fn()
    if first.data != second.data:
        raise CheckError(
            "grad_check: function is not deterministic "
            f"({first.item()} vs {second.item()})"
        )

    for p in params:
        p.zero_grad()
    loss = fn()
    loss.backward()
    analytic = [p.grad.copy().astype(np.float64) for p in params]

    rng = np.random.default_rng(seed)
    originals = [p.data for p in params]
    worst = 0.0
    try:
        for p in params:
            p.data = p.data.astype(np.float64)
        for pi, p in enumerate(params):
            flat = p.data.reshape(-1)
            n = flat.size
            coords = (
                np.arange(n) if n <= max_coords
                else np.sort(rng.choice(n, size=max_coords, replace=False))
            )
            for ci in coords:
                saved = flat[ci]
                flat[ci] = saved + epsilon
                f_plus = float(fn().data)
                flat[ci] = saved - epsilon
                f_minus = float(fn().data)
                flat[ci] = saved
                numeric = (f_plus - f_minus) / (2.0 * epsilon)
                a = float(analytic[pi].reshape(-1)[ci])
                denom = max(abs(a), abs(numeric), 1e-3)
                worst = max(worst, abs(a - numeric) / denom)
    finally:
        for p, orig in zip(params, originals):
            p.data = orig
            p.zero_grad()
    return worst
