"""
Differentiable tensor operations.

Each op computes its forward value with numpy and records a closure that
maps the output gradient to one gradient per tensor input.
"""

import math
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy import special

from core.exceptions import (
    ConfigurationError,
    ContractError,
    DegenerateRowError,
    DimensionError,
    VocabularyError,
)
from engine.tensor import Tensor, default_dtype, make_result

Operand = Union[Tensor, float, int, np.ndarray]

_INV_SQRT_2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def as_tensor(value: Operand) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(op, a.shape, b.shape) from None


# ---------------------------------------------------------------------------
# Elementwise
# ---------------------------------------------------------------------------


def add(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)
    return make_result(a.data + b.data, (a, b), "add", lambda g: (g, g))


def sub(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)
    return make_result(a.data - b.data, (a, b), "sub", lambda g: (g, -g))


def mul(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)
    return make_result(
        a.data * b.data, (a, b), "mul", lambda g: (g * b.data, g * a.data)
    )


def scale(a: Tensor, factor: float) -> Tensor:
    c = float(factor)
    return make_result(a.data * c, (a,), "scale", lambda g: (g * c,))


def gelu(x: Tensor) -> Tensor:
    """Exact GELU, x * Phi(x)"""
    cdf = 0.5 * (1.0 + special.erf(x.data * _INV_SQRT_2))

    def backward_fn(g: np.ndarray) -> Tuple[np.ndarray]:
        pdf = np.exp(-0.5 * x.data * x.data) * _INV_SQRT_2PI
        return (g * (cdf + x.data * pdf),)

    return make_result(x.data * cdf, (x,), "gelu", backward_fn)


# ---------------------------------------------------------------------------
# Shape manipulation
# ---------------------------------------------------------------------------


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    original = a.shape
    try:
        data = a.data.reshape(tuple(shape))
    except ValueError:
        raise DimensionError("reshape", original, tuple(shape)) from None
    return make_result(data, (a,), "reshape", lambda g: (g.reshape(original),))


def transpose(a: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    axes = tuple(reversed(range(a.ndim))) if axes is None else tuple(axes)
    inverse = tuple(np.argsort(axes))
    return make_result(
        np.transpose(a.data, axes), (a,), "transpose", lambda g: (np.transpose(g, inverse),)
    )


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ContractError("concat needs at least one tensor")
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise DimensionError("concat", *(t.shape for t in tensors)) from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward_fn(g: np.ndarray) -> Sequence[np.ndarray]:
        return np.split(g, bounds, axis=axis)

    return make_result(data, tuple(tensors), "concat", backward_fn)


# ---------------------------------------------------------------------------
# Reductions
# ---------------------------------------------------------------------------


def sum(a: Tensor, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    shape = a.shape

    def backward_fn(g: np.ndarray) -> Tuple[np.ndarray]:
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape),)

    return make_result(a.data.sum(axis=axis, keepdims=keepdims), (a,), "sum", backward_fn)


def mean(a: Tensor, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    count = a.size if axis is None else a.shape[axis]
    return scale(sum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def mean_over_valid(x: Tensor, valid: np.ndarray) -> Tensor:
    """
    Mean of ``x[B, L, D]`` over positions where ``valid[B, L]`` is true.

    Returns a ``[B, D]`` tensor.
    """
    valid = np.asarray(valid, dtype=bool)
    if valid.shape != x.shape[:2]:
        raise DimensionError("mean_over_valid", x.shape, valid.shape)
    counts = valid.sum(axis=1)
    if np.any(counts == 0):
        raise ContractError("mean_over_valid: a row has no valid positions")
    weights = (valid / counts[:, None]).astype(x.data.dtype)[..., None]
    data = (x.data * weights).sum(axis=1)

    def backward_fn(g: np.ndarray) -> Tuple[np.ndarray]:
        return (g[:, None, :] * weights,)

    return make_result(data, (x,), "mean_over_valid", backward_fn)


# ---------------------------------------------------------------------------
# Linear algebra
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes, batch axes broadcast"""
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError("matmul", a.shape, b.shape)
    try:
        data = np.matmul(a.data, b.data)
    except ValueError:
        raise DimensionError("matmul", a.shape, b.shape) from None

    def backward_fn(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return (
            np.matmul(g, np.swapaxes(b.data, -1, -2)),
            np.matmul(np.swapaxes(a.data, -1, -2), g),
        )

    return make_result(data, (a, b), "matmul", backward_fn)


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """x @ weight (+ bias); weight is stored [in, out]"""
    out = matmul(x, weight)
    return add(out, bias) if bias is not None else out


def embedding(ids: np.ndarray, table: Tensor) -> Tensor:
    ids = np.asarray(ids, dtype=np.int64)
    vocab = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= vocab):
        bad = int(ids[(ids < 0) | (ids >= vocab)][0])
        raise VocabularyError(f"token id {bad} outside vocabulary of size {vocab}")

    def backward_fn(g: np.ndarray) -> Tuple[np.ndarray]:
        grad = np.zeros_like(table.data)
        np.add.at(grad, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        return (grad,)

    return make_result(table.data[ids], (table,), "embedding", backward_fn)


# ---------------------------------------------------------------------------
# Normalization and attention
# ---------------------------------------------------------------------------


def softmax(x: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
    """
    Softmax over the last axis.

    ``mask`` (broadcastable to x) marks entries that may receive weight;
    masked-out entries get exactly zero.
    """
    logits = x.data
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), logits.shape)
        if not mask.any(axis=-1).all():
            raise DegenerateRowError("softmax: a row has every entry masked out")
        logits = np.where(mask, logits, -np.inf)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    weights = np.exp(shifted)
    weights = weights / weights.sum(axis=-1, keepdims=True)

    def backward_fn(g: np.ndarray) -> Tuple[np.ndarray]:
        dot = (g * weights).sum(axis=-1, keepdims=True)
        return (weights * (g - dot),)

    return make_result(weights, (x,), "softmax", backward_fn)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    if x.shape[-1] != gamma.shape[-1] or gamma.shape != beta.shape:
        raise DimensionError("layer_norm", x.shape, gamma.shape, beta.shape)
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    inv_std = 1.0 / np.sqrt((centered * centered).mean(axis=-1, keepdims=True) + eps)
    xhat = centered * inv_std
    lead = tuple(range(x.ndim - 1))

    def backward_fn(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        gxhat = g * gamma.data
        gx = inv_std * (
            gxhat
            - gxhat.mean(axis=-1, keepdims=True)
            - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True)
        )
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return make_result(xhat * gamma.data + beta.data, (x, gamma, beta), "layer_norm", backward_fn)


def multi_head_attention(
    q: Tensor,
    k: Tensor,
    v: Tensor,
    key_pad_mask: np.ndarray,
    heads: int,
    w_out: Optional[Tensor] = None,
    b_out: Optional[Tensor] = None,
) -> Tensor:
    """
    Scaled dot-product attention over already-projected q, k, v.

    Args:
        q: [B, Lq, D] queries
        k, v: [B, Lk, D] keys and values
        key_pad_mask: [B, Lk], true where the key is padding
        heads: number of heads; D must be divisible by it
        w_out, b_out: optional output projection applied to the concatenated heads

    Returns:
        [B, Lq, D]
    """
    if q.ndim != 3 or k.ndim != 3 or v.ndim != 3:
        raise DimensionError("multi_head_attention", q.shape, k.shape, v.shape)
    batch, lq, dim = q.shape
    lk = k.shape[1]
    if k.shape != v.shape or k.shape[0] != batch or k.shape[2] != dim:
        raise DimensionError("multi_head_attention", q.shape, k.shape, v.shape)
    if heads < 1 or dim % heads != 0:
        raise ConfigurationError(f"hidden dim {dim} is not divisible by {heads} heads")
    pad = np.asarray(key_pad_mask, dtype=bool)
    if pad.shape != (batch, lk):
        raise DimensionError("multi_head_attention", k.shape, pad.shape)

    head_dim = dim // heads
    qh = transpose(reshape(q, (batch, lq, heads, head_dim)), (0, 2, 1, 3))
    kh = transpose(reshape(k, (batch, lk, heads, head_dim)), (0, 2, 3, 1))
    vh = transpose(reshape(v, (batch, lk, heads, head_dim)), (0, 2, 1, 3))

    scores = scale(matmul(qh, kh), 1.0 / math.sqrt(head_dim))
    attn = softmax(scores, mask=~pad[:, None, None, :])
    context = matmul(attn, vh)
    merged = reshape(transpose(context, (0, 2, 1, 3)), (batch, lq, dim))
    if w_out is None:
        return merged
    return linear(merged, w_out, b_out)


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------


def cross_entropy(logits: Tensor, targets: np.ndarray, ignore_index: int = -1) -> Tensor:
    """Mean softmax cross-entropy over rows whose target is not ``ignore_index``"""
    targets = np.asarray(targets, dtype=np.int64)
    if logits.ndim != 2 or targets.shape != logits.shape[:1]:
        raise DimensionError("cross_entropy", logits.shape, targets.shape)
    valid = targets != ignore_index
    count = int(valid.sum())
    if count == 0:
        raise ContractError("cross_entropy: no positions carry a target")
    classes = logits.shape[1]
    if np.any(targets[valid] < 0) or np.any(targets[valid] >= classes):
        raise VocabularyError(f"cross_entropy: target outside [0, {classes})")

    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_z
    rows = np.nonzero(valid)[0]
    nll = -log_probs[rows, targets[rows]].sum() / count

    def backward_fn(g: np.ndarray) -> Tuple[np.ndarray]:
        grad = np.exp(log_probs)
        grad[rows, targets[rows]] -= 1.0
        grad[~valid] = 0.0
        return (grad * (g / count),)

    return make_result(np.asarray(nll), (logits,), "cross_entropy", backward_fn)


def binary_cross_entropy_with_logits(
    logits: Tensor, targets: np.ndarray, weights: Optional[np.ndarray] = None
) -> Tensor:
    """Sigmoid binary cross-entropy, averaged (weighted when ``weights`` is given)"""
    t = np.asarray(targets, dtype=default_dtype())
    if t.shape != logits.shape:
        raise DimensionError("binary_cross_entropy_with_logits", logits.shape, t.shape)
    if weights is None:
        w = np.full(t.shape, 1.0 / t.size, dtype=t.dtype)
    else:
        w = np.asarray(weights, dtype=t.dtype)
        if w.shape != t.shape:
            raise DimensionError("binary_cross_entropy_with_logits", logits.shape, w.shape)
        if w.sum() <= 0:
            raise ContractError("binary_cross_entropy_with_logits: weights sum to zero")
        w = w / w.sum()
    x = logits.data
    losses = np.maximum(x, 0.0) - x * t + np.log1p(np.exp(-np.abs(x)))

    def backward_fn(g: np.ndarray) -> Tuple[np.ndarray]:
        return (g * (special.expit(x) - t) * w,)

    return make_result(np.asarray((losses * w).sum()), (logits,), "bce_with_logits", backward_fn)
