"""
Protein encoder (trainable) and knowledge encoder (frozen).

Both embed tokens, add learned positional embeddings and run a stack of
pre-norm self-attention layers. The knowledge encoder's tensors are
created without requires_grad, so no graph node ever reaches them.
"""

import numpy as np

from core.exceptions import ContractError, DimensionError
from engine import ops
from engine.tensor import Tensor
from models.config import ModelConfig
from models.layers import init_transformer_layer, transformer_layer
from models.parameters import ParamGroup, ParameterInitializer, Parameters

ENCODER = "encoder"
KNOWLEDGE = "knowledge"


def init_protein_encoder(init: ParameterInitializer, config: ModelConfig) -> None:
    group = ParamGroup.ENCODER
    init.normal(f"{ENCODER}.token_embed", (config.residue_vocab_size, config.hidden_dim), group)
    init.normal(f"{ENCODER}.pos_embed", (config.max_protein_len, config.hidden_dim), group)
    for i in range(config.encoder_layers):
        init_transformer_layer(init, f"{ENCODER}.layers.{i}", config, group)


def init_knowledge_encoder(init: ParameterInitializer, config: ModelConfig) -> None:
    group = ParamGroup.KNOWLEDGE
    init.normal(f"{KNOWLEDGE}.token_embed", (config.text_vocab_size, config.hidden_dim), group)
    init.normal(f"{KNOWLEDGE}.pos_embed", (config.max_knowledge_len, config.hidden_dim), group)
    for i in range(config.knowledge_layers):
        init_transformer_layer(init, f"{KNOWLEDGE}.layers.{i}", config, group)


def _embed_and_encode(
    ids: np.ndarray,
    pad_mask: np.ndarray,
    params: Parameters,
    prefix: str,
    n_layers: int,
    config: ModelConfig,
) -> Tensor:
    ids = np.asarray(ids, dtype=np.int64)
    pad_mask = np.asarray(pad_mask, dtype=bool)
    if ids.ndim != 2 or pad_mask.shape != ids.shape:
        raise DimensionError(f"{prefix} encoder", ids.shape, pad_mask.shape)
    max_len = params[f"{prefix}.pos_embed"].shape[0]
    if ids.shape[1] > max_len:
        raise ContractError(f"{prefix} sequence length {ids.shape[1]} exceeds {max_len}")

    positions = np.arange(ids.shape[1])[None, :]
    x = ops.add(
        ops.embedding(ids, params[f"{prefix}.token_embed"]),
        ops.embedding(positions, params[f"{prefix}.pos_embed"]),
    )
    for i in range(n_layers):
        x = transformer_layer(x, pad_mask, params, f"{prefix}.layers.{i}", config)
    return x


def encode_protein(
    ids: np.ndarray,
    pad_mask: np.ndarray,
    params: Parameters,
    config: ModelConfig,
) -> Tensor:
    """Protein representation f_p^0, shape [B, Lp, D]"""
    return _embed_and_encode(ids, pad_mask, params, ENCODER, config.encoder_layers, config)


def encode_knowledge(
    ids: np.ndarray,
    pad_mask: np.ndarray,
    params: Parameters,
    config: ModelConfig,
) -> Tensor:
    """Relation or attribute representation, shape [B, L, D]; never trained"""
    return _embed_and_encode(ids, pad_mask, params, KNOWLEDGE, config.knowledge_layers, config)
