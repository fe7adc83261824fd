"""
AdamW with decoupled weight decay, gradient clipping and the warmup/decay schedule.
"""

import math
from typing import Dict, Mapping, Tuple

import numpy as np

from core.exceptions import ContractError
from models.parameters import Parameters


def lr_at(step: int, total_steps: int, warmup_ratio: float, peak: float) -> float:
    """
    Linear ramp 0 -> peak over floor(warmup_ratio * total) steps, then linear
    decay to 0 at ``total_steps``.
    """
    if total_steps <= 0:
        return 0.0
    step = min(max(step, 0), total_steps)
    warmup = int(math.floor(warmup_ratio * total_steps))
    if warmup > 0 and step < warmup:
        return peak * step / warmup
    if total_steps == warmup:
        return peak
    return peak * (total_steps - step) / (total_steps - warmup)


def global_norm(grads: Mapping[str, np.ndarray]) -> float:
    return math.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values()))


def clip_grad_norm(grads: Dict[str, np.ndarray], max_norm: float) -> Tuple[Dict[str, np.ndarray], float]:
    """
    Rescale gradients so their joint L2 norm is at most ``max_norm``.

    Returns:
        (clipped gradients, norm before clipping)
    """
    norm = global_norm(grads)
    if norm <= max_norm or norm == 0.0:
        return grads, norm
    factor = max_norm / (norm + 1e-6)
    return {name: (g * factor).astype(g.dtype) for name, g in grads.items()}, norm


class AdamWState:
    """First/second moments for exactly the learnable tensors"""

    def __init__(self, m: Dict[str, np.ndarray], v: Dict[str, np.ndarray], step: int = 0):
        self.m = m
        self.v = v
        self.step = step

    @classmethod
    def zeros_like(cls, params: Parameters) -> "AdamWState":
        learnable = params.learnable()
        return cls(
            m={n: np.zeros_like(t.data) for n, t in learnable.items()},
            v={n: np.zeros_like(t.data) for n, t in learnable.items()},
        )


def adamw_step(
    params: Parameters,
    state: AdamWState,
    grads: Mapping[str, np.ndarray],
    lr: float,
    betas: Tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
    weight_decay: float = 0.01,
) -> AdamWState:
    """
    One bias-corrected AdamW update, in place on ``params``.

    Frozen tensors are never touched; a gradient supplied for one is ignored.

    Returns:
        the same state object with moments and step advanced
    """
    beta1, beta2 = betas
    t = state.step + 1
    bias1 = 1.0 - beta1**t
    bias2 = 1.0 - beta2**t

    for name, tensor in params.learnable().items():
        if name not in state.m:
            raise ContractError(f"no optimizer moments for learnable tensor {name!r}")
        grad = grads.get(name)
        if grad is None:
            grad = np.zeros_like(tensor.data)
        if grad.shape != tensor.shape:
            raise ContractError(
                f"gradient shape {list(grad.shape)} does not match parameter "
                f"{name!r} shape {list(tensor.shape)}"
            )
        m = state.m[name]
        v = state.v[name]
        m[...] = beta1 * m + (1.0 - beta1) * grad
        v[...] = beta2 * v + (1.0 - beta2) * np.square(grad)
        m_hat = m / bias1
        v_hat = v / bias2
        data = tensor.data
        data *= 1.0 - lr * weight_decay
        data -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(data.dtype)

    state.step = t
    return state
