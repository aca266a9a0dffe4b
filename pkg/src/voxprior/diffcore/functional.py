"""Differentiable operations the shape models are built from.

Heavy ops (conv3d, group norm) carry hand-written backward passes; the
3D convolution lowers to matrix products over unfolded patches, chunked so
the unfolded buffer stays within a fixed memory budget. Everything here is
deterministic for a fixed thread-count configuration.
"""

from __future__ import annotations

import threading

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ConfigurationError, DimensionError, NumericError
from .tensor import Array, Tensor, _sigmoid

# Most negative finite float32; stands in for -inf in additive attention masks.
MASK_NEG = float(np.finfo(np.float32).min)

# Upper bound on one unfolded-patch buffer; keeps conv3d within RAM.
_CHUNK_BYTES = 128 * 1024 * 1024

_scratch = threading.local()


def _scratch_array(slot: str, shape: tuple[int, ...], dtype) -> Array:
    """A reusable per-thread buffer; avoids re-faulting fresh pages on every
    conv unfold."""
    nbytes = int(np.prod(shape)) * np.dtype(dtype).itemsize
    store = getattr(_scratch, "buffers", None)
    if store is None:
        store = _scratch.buffers = {}
    buf = store.get(slot)
    if buf is None or buf.nbytes < nbytes:
        buf = store[slot] = np.empty(nbytes, dtype=np.uint8)
    return np.ndarray(shape, dtype=dtype, buffer=buf.data)

_AXIS_NAMES = ("depth", "height", "width")


def _conv_out_size(extent: int, k: int, stride: int, padding: int, axis: int) -> int:
    padded = extent + 2 * padding
    if k > padded:
        raise DimensionError(
            f"conv3d: kernel {k} exceeds padded extent {padded} on spatial "
            f"axis {axis} ({_AXIS_NAMES[axis]})"
        )
    return (padded - k) // stride + 1


def _unfold(xp: Array, ks: tuple[int, int, int], stride: int) -> Array:
    """[B, C, P1, P2, P3] -> [B, O1, O2, O3, C, k1, k2, k3] view-then-copy."""
    v = sliding_window_view(xp, ks, axis=(2, 3, 4))
    v = v[:, :, ::stride, ::stride, ::stride]
    return np.ascontiguousarray(v.transpose(0, 2, 3, 4, 1, 5, 6, 7))


def conv3d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor | None = None,
    stride: int = 1,
    padding: int = 0,
) -> Tensor:
    """3D convolution. ``x``: [B, C_in, D, H, W] or unbatched [C_in, D, H, W];
    ``weight``: [C_out, C_in, k, k, k]. Output spatial size per axis is
    floor((in + 2*padding - k)/stride) + 1.
    """
    if stride < 1:
        raise ConfigurationError(f"conv3d: stride must be >= 1, got {stride}")
    unbatched = x.ndim == 4
    xb = x.reshape((1,) + x.shape) if unbatched else x
    if xb.ndim != 5:
        raise DimensionError(f"conv3d: expected 4D or 5D input, got shape {x.shape}")
    B, C_in, D1, D2, D3 = xb.shape
    C_out, C_w, k1, k2, k3 = weight.shape
    if C_w != C_in:
        raise DimensionError(
            f"conv3d: channel axis mismatch, input has {C_in} channels but "
            f"weight expects {C_w}"
        )
    outs = tuple(
        _conv_out_size(e, k, stride, padding, i)
        for i, (e, k) in enumerate(zip((D1, D2, D3), (k1, k2, k3)))
    )
    O1, O2, O3 = outs
    n_out = O1 * O2 * O3
    col_width = C_in * k1 * k2 * k3
    itemsize = xb.data.dtype.itemsize
    chunk = max(1, _CHUNK_BYTES // max(1, n_out * col_width * itemsize))

    pad_spec = ((0, 0), (0, 0), (padding,) * 2, (padding,) * 2, (padding,) * 2)
    xp = np.pad(xb.data, pad_spec) if padding else xb.data
    w_mat = weight.data.reshape(C_out, col_width)

    out = np.empty((B, O1, O2, O3, C_out), dtype=xb.data.dtype)
    for lo in range(0, B, chunk):
        hi = min(lo + chunk, B)
        cols = _unfold(xp[lo:hi], (k1, k2, k3), stride).reshape(-1, col_width)
        out[lo:hi] = (cols @ w_mat.T).reshape(hi - lo, O1, O2, O3, C_out)
    if bias is not None:
        out += bias.data
    out = np.ascontiguousarray(out.transpose(0, 4, 1, 2, 3))

    parents = (xb, weight) if bias is None else (xb, weight, bias)
    result = Tensor._from_op(out, parents, None)
    if result.requires_grad:
        def backward(grad):
            # grad: [B, C_out, O1, O2, O3]
            g_flat_all = grad.transpose(0, 2, 3, 4, 1)
            if bias is not None and bias.requires_grad:
                bias._accumulate(g_flat_all.reshape(-1, C_out).sum(axis=0))
            need_x = xb.requires_grad
            need_w = weight.requires_grad
            if not (need_x or need_w):
                return
            dw = np.zeros((C_out, col_width), dtype=weight.data.dtype) if need_w else None
            dxp = np.zeros_like(xp) if need_x else None
            for lo in range(0, B, chunk):
                hi = min(lo + chunk, B)
                g_flat = g_flat_all[lo:hi].reshape(-1, C_out)
                if need_w:
                    cols = _unfold(xp[lo:hi], (k1, k2, k3), stride).reshape(-1, col_width)
                    dw += g_flat.T @ cols
                if need_x:
                    dcols = (g_flat @ w_mat).reshape(
                        hi - lo, O1, O2, O3, C_in, k1, k2, k3
                    )
                    dcols = dcols.transpose(0, 4, 5, 6, 7, 1, 2, 3)
                    for a in range(k1):
                        for b in range(k2):
                            for c in range(k3):
                                dxp[
                                    lo:hi,
                                    :,
                                    a : a + stride * O1 : stride,
                                    b : b + stride * O2 : stride,
                                    c : c + stride * O3 : stride,
                                ] += dcols[:, :, a, b, c]
            if need_w:
                weight._accumulate(dw.reshape(weight.shape))
            if need_x:
                if padding:
                    dxp = dxp[
                        :, :, padding : padding + D1, padding : padding + D2,
                        padding : padding + D3,
                    ]
                xb._accumulate(dxp)
        result._backward = backward
    return result.reshape(result.shape[1:]) if unbatched else result


def conv3d_cl(
    x: Tensor,
    weight: Tensor,
    bias: Tensor | None = None,
    stride: int = 1,
    padding: int = 0,
) -> Tensor:
    """Channels-last 3D convolution: ``x`` is [B, D, H, W, C_in].

    Same contract as :func:`conv3d` but with the channel axis last. The
    unfolded-patch buffer is built by sliding a (k, k, k*C)-wide window over
    the (W, C)-flattened volume, so every copied run is k*C contiguous
    elements; input gradients accumulate straight into strided slices, one
    small GEMM per kernel offset. ``weight`` stays [C_out, C_in, k, k, k].
    """
    if stride < 1:
        raise ConfigurationError(f"conv3d: stride must be >= 1, got {stride}")
    B, D1, D2, D3, C_in = x.shape
    C_out, C_w, k1, k2, k3 = weight.shape
    if C_w != C_in:
        raise DimensionError(
            f"conv3d: channel axis mismatch, input has {C_in} channels but "
            f"weight expects {C_w}"
        )
    O1, O2, O3 = (
        _conv_out_size(e, k, stride, padding, i)
        for i, (e, k) in enumerate(zip((D1, D2, D3), (k1, k2, k3)))
    )
    n_out = O1 * O2 * O3
    col_width = k1 * k2 * k3 * C_in
    itemsize = x.data.dtype.itemsize
    chunk = max(1, _CHUNK_BYTES // max(1, n_out * col_width * itemsize))

    pad_spec = ((0, 0), (padding,) * 2, (padding,) * 2, (padding,) * 2, (0, 0))
    xp = np.pad(x.data, pad_spec) if padding else x.data
    # unfold column order is (k1, k2, k3, C_in); the weight matrix matches
    w_mat = np.ascontiguousarray(
        weight.data.transpose(2, 3, 4, 1, 0)
    ).reshape(col_width, C_out)

    def unfold(block: Array) -> Array:
        flat = block.reshape(block.shape[0], block.shape[1], block.shape[2], -1)
        v = sliding_window_view(flat, (k1, k2, k3 * C_in), axis=(1, 2, 3))
        v = v[:, ::stride, ::stride, :: (C_in * stride)]
        cols = _scratch_array("cols", v.shape, v.dtype)
        np.copyto(cols, v)
        return cols.reshape(-1, col_width)

    out = np.empty((B, O1, O2, O3, C_out), dtype=x.data.dtype)
    for lo in range(0, B, chunk):
        hi = min(lo + chunk, B)
        np.matmul(
            unfold(xp[lo:hi]), w_mat,
            out=out[lo:hi].reshape(-1, C_out),
        )
    if bias is not None:
        out += bias.data

    parents = (x, weight) if bias is None else (x, weight, bias)
    result = Tensor._from_op(out, parents, None)
    if result.requires_grad:
        def backward(grad):
            if bias is not None and bias.requires_grad:
                bias._accumulate(grad.reshape(-1, C_out).sum(axis=0))
            need_x = x.requires_grad
            need_w = weight.requires_grad
            if not (need_x or need_w):
                return
            dw = np.zeros((col_width, C_out), dtype=weight.data.dtype) if need_w else None
            dxp = np.zeros_like(xp) if need_x else None
            w_taps_t = np.ascontiguousarray(
                w_mat.reshape(k1, k2, k3, C_in, C_out).transpose(0, 1, 2, 4, 3)
            ) if need_x else None
            for lo in range(0, B, chunk):
                hi = min(lo + chunk, B)
                g_flat = grad[lo:hi].reshape(-1, C_out)
                if need_w:
                    dw += unfold(xp[lo:hi]).T @ g_flat
                if need_x:
                    contrib = _scratch_array(
                        "contrib", (g_flat.shape[0], C_in), g_flat.dtype
                    )
                    for a in range(k1):
                        for b in range(k2):
                            for c in range(k3):
                                np.matmul(g_flat, w_taps_t[a, b, c], out=contrib)
                                dxp[
                                    lo:hi,
                                    a : a + stride * O1 : stride,
                                    b : b + stride * O2 : stride,
                                    c : c + stride * O3 : stride,
                                ] += contrib.reshape(hi - lo, O1, O2, O3, C_in)
            if need_w:
                weight._accumulate(
                    dw.reshape(k1, k2, k3, C_in, C_out).transpose(4, 3, 0, 1, 2)
                )
            if need_x:
                dx = dxp
                if padding:
                    dx = dxp[
                        :, padding : padding + D1, padding : padding + D2,
                        padding : padding + D3,
                    ]
                x._accumulate(dx)
        result._backward = backward
    return result


def group_norm_swish(
    x: Tensor,
    groups: int,
    scale: Tensor,
    shift: Tensor,
    eps: float = 1e-6,
    batched: bool = True,
) -> Tensor:
    """Group normalization, per-channel affine, then swish (x * sigmoid(x)).

    ``x`` is [B, C, ...] when batched, else [C, ...]. Each group of C/groups
    channels is normalized to mean 0 / variance 1 over its channels and all
    spatial positions before the affine.
    """
    xb = x.reshape((1,) + x.shape) if not batched else x
    B, C = xb.shape[0], xb.shape[1]
    if C % groups != 0:
        raise ConfigurationError(
            f"group_norm_swish: {C} channels not divisible by {groups} groups"
        )
    spatial = xb.shape[2:]
    xg = xb.data.reshape(B, groups, -1)
    mu = xg.mean(axis=2, keepdims=True)
    var = xg.var(axis=2, keepdims=True)
    inv = 1.0 / np.sqrt(var + np.asarray(eps, dtype=xg.dtype))
    xhat = ((xg - mu) * inv).reshape(xb.shape)

    affine_shape = (1, C) + (1,) * len(spatial)
    gamma = scale.data.reshape(affine_shape)
    beta = shift.data.reshape(affine_shape)
    s = xhat * gamma + beta
    sig = _sigmoid(s)
    out_data = s * sig

    result = Tensor._from_op(out_data, (xb, scale, shift), None)
    if result.requires_grad:
        def backward(grad):
            ds = grad * (sig + out_data * (1.0 - sig))
            reduce_axes = (0,) + tuple(range(2, xb.ndim))
            if shift.requires_grad:
                shift._accumulate(ds.sum(axis=reduce_axes))
            if scale.requires_grad:
                scale._accumulate((ds * xhat).sum(axis=reduce_axes))
            if xb.requires_grad:
                dxhat = (ds * gamma).reshape(B, groups, -1)
                xh = xhat.reshape(B, groups, -1)
                n = xh.shape[2]
                dot = (dxhat * xh).sum(axis=2, keepdims=True)
                tot = dxhat.sum(axis=2, keepdims=True)
                dx = inv / n * (n * dxhat - tot - xh * dot)
                xb._accumulate(dx.reshape(xb.shape))
        result._backward = backward
    return result.reshape(result.shape[1:]) if not batched else result


def group_norm_swish_cl(
    x: Tensor,
    groups: int,
    scale: Tensor,
    shift: Tensor,
    eps: float = 1e-6,
) -> Tensor:
    """Channels-last group norm + affine + swish; ``x`` is [B, ..., C]."""
    B, C = x.shape[0], x.shape[-1]
    if C % groups != 0:
        raise ConfigurationError(
            f"group_norm_swish: {C} channels not divisible by {groups} groups"
        )
    cg = C // groups
    xg = x.data.reshape(B, -1, groups, cg)
    mu = xg.mean(axis=(1, 3), keepdims=True)
    var = xg.var(axis=(1, 3), keepdims=True)
    inv = 1.0 / np.sqrt(var + np.asarray(eps, dtype=xg.dtype))
    xhat = ((xg - mu) * inv).reshape(x.shape)
    s = xhat * scale.data + shift.data
    sig = _sigmoid(s)
    out_data = s * sig

    result = Tensor._from_op(out_data, (x, scale, shift), None)
    if result.requires_grad:
        def backward(grad):
            # d(swish)/ds = sig + out * (1 - sig); out_data is result.data
            ds = grad * (sig + out_data * (1.0 - sig))
            flat_axes = tuple(range(grad.ndim - 1))
            if shift.requires_grad:
                shift._accumulate(ds.sum(axis=flat_axes))
            if scale.requires_grad:
                scale._accumulate((ds * xhat).sum(axis=flat_axes))
            if x.requires_grad:
                dxhat = (ds * scale.data).reshape(B, -1, groups, cg)
                xh = xhat.reshape(B, -1, groups, cg)
                n = xh.shape[1] * cg
                dot = (dxhat * xh).sum(axis=(1, 3), keepdims=True)
                tot = dxhat.sum(axis=(1, 3), keepdims=True)
                dx = inv / n * (n * dxhat - tot - xh * dot)
                x._accumulate(dx.reshape(x.shape))
        result._backward = backward
    return result


def upsample_nearest3_cl(x: Tensor) -> Tensor:
    """Double the three spatial axes of [B, D, H, W, C] by repetition."""
    B, D, H, W, C = x.shape
    data = np.repeat(np.repeat(np.repeat(x.data, 2, axis=1), 2, axis=2), 2, axis=3)
    result = Tensor._from_op(data, (x,), None)
    if result.requires_grad:
        def backward(grad):
            x._accumulate(
                grad.reshape(B, D, 2, H, 2, W, 2, C).sum(axis=(2, 4, 6))
            )
        result._backward = backward
    return result


def layer_norm(x: Tensor, scale: Tensor, shift: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then per-feature affine."""
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + np.asarray(eps, dtype=x.data.dtype))
    xhat = (x.data - mu) * inv
    out_data = xhat * scale.data + shift.data

    result = Tensor._from_op(out_data, (x, scale, shift), None)
    if result.requires_grad:
        def backward(grad):
            axes = tuple(range(grad.ndim - 1))
            if shift.requires_grad:
                shift._accumulate(grad.sum(axis=axes))
            if scale.requires_grad:
                scale._accumulate((grad * xhat).sum(axis=axes))
            if x.requires_grad:
                dxhat = grad * scale.data
                n = x.shape[-1]
                dot = (dxhat * xhat).sum(axis=-1, keepdims=True)
                tot = dxhat.sum(axis=-1, keepdims=True)
                x._accumulate(inv / n * (n * dxhat - tot - xhat * dot))
        result._backward = backward
    return result


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    ex = np.exp(shifted)
    probs = ex / ex.sum(axis=axis, keepdims=True)
    result = Tensor._from_op(probs, (x,), None)
    if result.requires_grad:
        def backward(grad):
            dot = (grad * probs).sum(axis=axis, keepdims=True)
            x._accumulate((grad - dot) * probs)
        result._backward = backward
    return result


def softmax_cross_entropy(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean of -log softmax(logits)[target] over rows.

    ``logits``: [N, K]; ``targets``: N integer class indices. The gradient is
    (softmax - one_hot) / N.
    """
    targets = np.asarray(targets)
    if targets.ndim != 1 or targets.shape[0] != logits.shape[0]:
        raise DimensionError(
            f"softmax_cross_entropy: targets shape {targets.shape} does not "
            f"match logits rows {logits.shape[0]}"
        )
    n, k = logits.shape
    if targets.size and (targets.min() < 0 or targets.max() >= k):
        bad = int(targets[(targets < 0) | (targets >= k)][0])
        raise IndexError(
            f"softmax_cross_entropy: target {bad} outside [0, {k})"
        )
    z = logits.data
    zmax = z.max(axis=1, keepdims=True)
    ex = np.exp(z - zmax)
    sumex = ex.sum(axis=1, keepdims=True)
    log_probs = (z - zmax) - np.log(sumex)
    rows = np.arange(n)
    loss = -log_probs[rows, targets].mean(dtype=z.dtype)

    result = Tensor._from_op(np.asarray(loss, dtype=z.dtype), (logits,), None)
    if result.requires_grad:
        def backward(grad):
            g = ex / sumex
            g[rows, targets] -= 1.0
            logits._accumulate(g * (grad / n))
        result._backward = backward
    return result


def multi_head_attention(
    queries: Tensor,
    keys: Tensor,
    values: Tensor,
    mask: np.ndarray | None,
    num_heads: int,
    w_out: Tensor | None = None,
    b_out: Tensor | None = None,
) -> Tensor:
    """Scaled dot-product attention over ``num_heads`` heads.

    Inputs are [T, h*dk] or [B, T, h*dk]; ``mask`` is an additive [T, T]
    matrix whose blocked entries hold the most negative finite float
    (``MASK_NEG``). Heads are concatenated and, when ``w_out`` is given,
    linearly projected.
    """
    unbatched = queries.ndim == 2
    q = queries.reshape((1,) + queries.shape) if unbatched else queries
    k = keys.reshape((1,) + keys.shape) if unbatched else keys
    v = values.reshape((1,) + values.shape) if unbatched else values
    B, T, width = q.shape
    if width % num_heads != 0:
        raise ConfigurationError(
            f"attention: width {width} not divisible by {num_heads} heads"
        )
    dk = width // num_heads

    def split(t: Tensor) -> Tensor:
        return t.reshape(B, -1, num_heads, dk).transpose(0, 2, 1, 3)

    qh, kh, vh = split(q), split(k), split(v)  # [B, h, T, dk]
    scores = qh @ kh.transpose(0, 1, 3, 2) * (1.0 / np.sqrt(dk))
    if not np.isfinite(scores.data).all():
        raise NumericError("attention: non-finite logits before masking")
    if mask is not None:
        scores = scores + Tensor(mask.astype(scores.dtype))
    attn = softmax(scores, axis=-1)
    ctx = attn @ vh  # [B, h, T, dk]
    merged = ctx.transpose(0, 2, 1, 3).reshape(B, T, width)
    if w_out is not None:
        merged = merged @ w_out
        if b_out is not None:
            merged = merged + b_out
    return merged.reshape(merged.shape[1:]) if unbatched else merged


def causal_mask(t: int, dtype=np.float32) -> np.ndarray:
    """Additive [t, t] mask: 0 on and below the diagonal, MASK_NEG above."""
    mask = np.zeros((t, t), dtype=dtype)
    mask[np.triu_indices(t, k=1)] = MASK_NEG
    return mask


def gelu(x: Tensor) -> Tensor:
    """Gaussian error linear unit (tanh approximation)."""
    c = np.asarray(np.sqrt(2.0 / np.pi), dtype=x.data.dtype)
    a = np.asarray(0.044715, dtype=x.data.dtype)
    inner = c * (x.data + a * x.data**3)
    t = np.tanh(inner)
    out_data = 0.5 * x.data * (1.0 + t)
    result = Tensor._from_op(out_data, (x,), None)
    if result.requires_grad:
        def backward(grad):
            dinner = c * (1.0 + 3.0 * a * x.data**2)
            dx = 0.5 * (1.0 + t) + 0.5 * x.data * (1.0 - t * t) * dinner
            x._accumulate(grad * dx)
        result._backward = backward
    return result


def upsample_nearest3(x: Tensor) -> Tensor:
    """Double each spatial axis of [B, C, D, H, W] by nearest-neighbor repeat."""
    B, C, D, H, W = x.shape
    data = np.repeat(np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3), 2, axis=4)
    result = Tensor._from_op(data, (x,), None)
    if result.requires_grad:
        def backward(grad):
            x._accumulate(
                grad.reshape(B, C, D, 2, H, 2, W, 2).sum(axis=(3, 5, 7))
            )
        result._backward = backward
    return result


def straight_through(upstream: Tensor, replacement: np.ndarray) -> Tensor:
    """Forward ``replacement``; route gradients to ``upstream`` unchanged."""
    if upstream.shape != replacement.shape:
        raise DimensionError(
            f"straight_through: shapes differ, {upstream.shape} vs "
            f"{replacement.shape}"
        )
    result = Tensor._from_op(
        replacement.astype(upstream.data.dtype, copy=True), (upstream,), None
    )
    if result.requires_grad:
        result._backward = lambda grad: upstream._accumulate(grad)
    return result
