"""
Shared building blocks: layer norm, attention projections, MLP, and the
pre-norm self-attention transformer layer.
"""

import numpy as np

from engine import ops
from engine.tensor import Tensor
from models.config import ModelConfig
from models.parameters import ParamGroup, ParameterInitializer, Parameters


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------


def init_norm(init: ParameterInitializer, prefix: str, dim: int, group: ParamGroup) -> None:
    init.ones(f"{prefix}.gamma", (dim,), group)
    init.zeros(f"{prefix}.beta", (dim,), group)


def init_attention(init: ParameterInitializer, prefix: str, dim: int, group: ParamGroup) -> None:
    for proj in ("w_q", "w_k", "w_v", "w_o"):
        init.normal(f"{prefix}.{proj}", (dim, dim), group)
    init.zeros(f"{prefix}.b_o", (dim,), group)


def init_mlp(init: ParameterInitializer, prefix: str, dim: int, ffn: int, group: ParamGroup) -> None:
    init.normal(f"{prefix}.w_in", (dim, ffn), group)
    init.zeros(f"{prefix}.b_in", (ffn,), group)
    init.normal(f"{prefix}.w_out", (ffn, dim), group)
    init.zeros(f"{prefix}.b_out", (dim,), group)


def init_transformer_layer(
    init: ParameterInitializer, prefix: str, config: ModelConfig, group: ParamGroup
) -> None:
    init_norm(init, f"{prefix}.ln1", config.hidden_dim, group)
    init_attention(init, f"{prefix}.attn", config.hidden_dim, group)
    init_norm(init, f"{prefix}.ln2", config.hidden_dim, group)
    init_mlp(init, f"{prefix}.mlp", config.hidden_dim, config.ffn_dim, group)


# ---------------------------------------------------------------------------
# Forward
# ---------------------------------------------------------------------------


def norm(x: Tensor, params: Parameters, prefix: str, eps: float) -> Tensor:
    return ops.layer_norm(x, params[f"{prefix}.gamma"], params[f"{prefix}.beta"], eps)


def attention(
    query_in: Tensor,
    kv_in: Tensor,
    kv_pad: np.ndarray,
    params: Parameters,
    prefix: str,
    heads: int,
) -> Tensor:
    """Project queries from ``query_in`` and keys/values from ``kv_in``, then attend"""
    q = ops.matmul(query_in, params[f"{prefix}.w_q"])
    k = ops.matmul(kv_in, params[f"{prefix}.w_k"])
    v = ops.matmul(kv_in, params[f"{prefix}.w_v"])
    return ops.multi_head_attention(
        q, k, v, kv_pad, heads, params[f"{prefix}.w_o"], params[f"{prefix}.b_o"]
    )


def mlp(x: Tensor, params: Parameters, prefix: str) -> Tensor:
    hidden = ops.gelu(ops.linear(x, params[f"{prefix}.w_in"], params[f"{prefix}.b_in"]))
    return ops.linear(hidden, params[f"{prefix}.w_out"], params[f"{prefix}.b_out"])


def transformer_layer(
    x: Tensor,
    pad: np.ndarray,
    params: Parameters,
    prefix: str,
    config: ModelConfig,
) -> Tensor:
    """Pre-norm layer: x + SelfAttn(LN(x)), then h + MLP(LN(h))"""
    eps = config.layer_norm_eps
    y = norm(x, params, f"{prefix}.ln1", eps)
    h = ops.add(x, attention(y, y, pad, params, f"{prefix}.attn", config.heads))
    return ops.add(h, mlp(norm(h, params, f"{prefix}.ln2", eps), params, f"{prefix}.mlp"))
