"""
Decoder stack: N PiK blocks (cascaded or parallel), or plain self-attention
blocks for the knowledge-free ablation.
"""

from typing import Optional

import numpy as np

from core.exceptions import ConfigurationError
from engine.tensor import Tensor
from models.config import ModelConfig, Variant
from models.layers import init_transformer_layer, transformer_layer
from models.parameters import ParamGroup, ParameterInitializer, Parameters
from models.pik import init_pik_block, parallel_block, pik_block

DECODER = "decoder"


def block_prefix(i: int) -> str:
    return f"{DECODER}.blocks.{i}"


def init_decoder(init: ParameterInitializer, config: ModelConfig) -> None:
    for i in range(config.decoder_blocks):
        if config.variant is Variant.NO_PIK:
            init_transformer_layer(init, block_prefix(i), config, ParamGroup.DECODER)
        else:
            init_pik_block(init, block_prefix(i), config)


def _check_variant(params: Parameters, config: ModelConfig) -> None:
    if config.decoder_blocks == 0:
        return
    has_pik = f"{block_prefix(0)}.rel.w_q" in params
    has_self = f"{block_prefix(0)}.attn.w_q" in params
    if config.variant is Variant.NO_PIK and not has_self:
        raise ConfigurationError("no_pik decoder requested but parameters hold PiK blocks")
    if config.variant is not Variant.NO_PIK and not has_pik:
        raise ConfigurationError(
            f"{config.variant.value} decoder requested but parameters hold no PiK blocks"
        )


def decode(
    f_p0: Tensor,
    f_r: Optional[Tensor],
    f_a: Optional[Tensor],
    protein_pad: np.ndarray,
    relation_pad: Optional[np.ndarray],
    attribute_pad: Optional[np.ndarray],
    params: Parameters,
    config: ModelConfig,
) -> Tensor:
    """
    Run the decoder and return f_p^N, shape [B, Lp, D].

    The no_pik variant ignores the knowledge inputs entirely.
    """
    variant = Variant(config.variant)
    _check_variant(params, config)

    x = f_p0
    if variant is Variant.NO_PIK:
        for i in range(config.decoder_blocks):
            x = transformer_layer(x, protein_pad, params, block_prefix(i), config)
        return x

    if f_r is None or f_a is None:
        raise ConfigurationError(f"{variant.value} decoder needs relation and attribute inputs")
    block = pik_block if variant is Variant.CASCADED else parallel_block
    for i in range(config.decoder_blocks):
        x = block(
            x, f_r, f_a, protein_pad, relation_pad, attribute_pad, params, block_prefix(i), config
        )
    return x
