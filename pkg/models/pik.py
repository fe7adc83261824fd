"""
Protein-knowledge exploration (PiK) blocks.

Cascaded block, per layer i:

    Q = Norm(f_p) W_Q,  K = Norm(f_r) W_K,  V = Norm(f_r) W_V
    s      = QKV-A(Q, K, V)                     relation stage
    f_hat  = Norm(f_p) + s
    s_hat  = QKV-A over Norm(f_hat) and Norm(f_a)   attribute stage
    f_bar  = Norm(f_hat) + s_hat
    out    = f_bar + MLP(Norm(f_bar))

Each stage's layer norm is shared by its query stream and its knowledge
stream. There is no self-attention among residues inside a block.
"""

import numpy as np

from engine import ops
from engine.tensor import Tensor
from models.config import ModelConfig
from models.layers import attention, init_attention, init_mlp, init_norm, mlp, norm
from models.parameters import ParamGroup, ParameterInitializer, Parameters


def init_pik_block(init: ParameterInitializer, prefix: str, config: ModelConfig) -> None:
    group = ParamGroup.DECODER
    dim = config.hidden_dim
    init_norm(init, f"{prefix}.rel_norm", dim, group)
    init_attention(init, f"{prefix}.rel", dim, group)
    init_norm(init, f"{prefix}.attr_norm", dim, group)
    init_attention(init, f"{prefix}.attr", dim, group)
    init_norm(init, f"{prefix}.mlp_norm", dim, group)
    init_mlp(init, f"{prefix}.mlp", dim, config.ffn_dim, group)


def pik_block(
    f_p: Tensor,
    f_r: Tensor,
    f_a: Tensor,
    protein_pad: np.ndarray,
    relation_pad: np.ndarray,
    attribute_pad: np.ndarray,
    params: Parameters,
    prefix: str,
    config: ModelConfig,
) -> Tensor:
    """
    One cascaded PiK block: relation stage, then attribute stage, then residual MLP.

    Args:
        f_p: [B, Lp, D] protein representation entering the block
        f_r: [B, Lr, D] relation token representation
        f_a: [B, La, D] attribute token representation
        protein_pad / relation_pad / attribute_pad: padding masks (true = pad).
            Padded protein rows are computed but never attended to.
        params: parameter store holding ``{prefix}.*`` tensors
        prefix: e.g. "decoder.blocks.0"
        config: model configuration

    Returns:
        [B, Lp, D]
    """
    eps = config.layer_norm_eps

    p_norm = norm(f_p, params, f"{prefix}.rel_norm", eps)
    r_norm = norm(f_r, params, f"{prefix}.rel_norm", eps)
    s = attention(p_norm, r_norm, relation_pad, params, f"{prefix}.rel", config.heads)
    f_hat = ops.add(p_norm, s)

    h_norm = norm(f_hat, params, f"{prefix}.attr_norm", eps)
    a_norm = norm(f_a, params, f"{prefix}.attr_norm", eps)
    s_hat = attention(h_norm, a_norm, attribute_pad, params, f"{prefix}.attr", config.heads)
    f_bar = ops.add(h_norm, s_hat)

    return ops.add(f_bar, mlp(norm(f_bar, params, f"{prefix}.mlp_norm", eps), params, f"{prefix}.mlp"))


def parallel_block(
    f_p: Tensor,
    f_r: Tensor,
    f_a: Tensor,
    protein_pad: np.ndarray,
    relation_pad: np.ndarray,
    attribute_pad: np.ndarray,
    params: Parameters,
    prefix: str,
    config: ModelConfig,
) -> Tensor:
    """Non-cascaded block: both knowledge terms are queried from Norm(f_p) and summed"""
    eps = config.layer_norm_eps

    p_norm = norm(f_p, params, f"{prefix}.rel_norm", eps)
    r_norm = norm(f_r, params, f"{prefix}.rel_norm", eps)
    a_norm = norm(f_a, params, f"{prefix}.attr_norm", eps)
    s_r = attention(p_norm, r_norm, relation_pad, params, f"{prefix}.rel", config.heads)
    s_a = attention(p_norm, a_norm, attribute_pad, params, f"{prefix}.attr", config.heads)
    f_bar = ops.add(ops.add(p_norm, s_r), s_a)

    return ops.add(f_bar, mlp(norm(f_bar, params, f"{prefix}.mlp_norm", eps), params, f"{prefix}.mlp"))
