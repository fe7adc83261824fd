"""
Output heads: masked-residue reconstruction and triplet matching.
"""

import numpy as np

from core.exceptions import ContractError, DimensionError
from data.masking import IGNORE_LABEL
from data.vocab import NUM_RESIDUES, RESIDUE_OFFSET
from engine import ops
from engine.tensor import Tensor
from models.config import ModelConfig
from models.parameters import ParamGroup, ParameterInitializer, Parameters

MLM_HEAD = "head.mlm"
MATCH_HEAD = "head.match"


def init_heads(init: ParameterInitializer, config: ModelConfig) -> None:
    group = ParamGroup.DECODER
    init.normal(f"{MLM_HEAD}.w", (config.hidden_dim, NUM_RESIDUES), group)
    init.zeros(f"{MLM_HEAD}.b", (NUM_RESIDUES,), group)
    if config.triplet_match:
        init.normal(f"{MATCH_HEAD}.w", (config.hidden_dim, 1), group)
        init.zeros(f"{MATCH_HEAD}.b", (1,), group)


def residue_targets(labels: np.ndarray) -> np.ndarray:
    """Map vocabulary ids to residue classes 0..24, keeping the ignore value"""
    labels = np.asarray(labels, dtype=np.int64)
    return np.where(labels == IGNORE_LABEL, IGNORE_LABEL, labels - RESIDUE_OFFSET)


def mlm_logits(f_pn: Tensor, params: Parameters) -> Tensor:
    """[B, Lp, D] -> [B, Lp, 25] residue logits"""
    return ops.linear(f_pn, params[f"{MLM_HEAD}.w"], params[f"{MLM_HEAD}.b"])


def mlm_loss(f_pn: Tensor, labels: np.ndarray, params: Parameters) -> Tensor:
    """
    Mean negative log-likelihood of the original residue over selected positions.

    Args:
        f_pn: decoder output [B, Lp, D]
        labels: original ids at selected positions, -1 elsewhere, [B, Lp]
        params: parameters holding the MLM head

    Returns:
        scalar Tensor
    """
    labels = np.asarray(labels)
    if labels.shape != f_pn.shape[:2]:
        raise DimensionError("mlm_loss", f_pn.shape, labels.shape)
    if not np.any(labels != IGNORE_LABEL):
        raise ContractError("mlm_loss: no masked positions in the batch")
    logits = mlm_logits(f_pn, params)
    flat = ops.reshape(logits, (-1, NUM_RESIDUES))
    return ops.cross_entropy(flat, residue_targets(labels).reshape(-1), IGNORE_LABEL)


def mlm_accuracy(logits: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of selected positions whose arg-max class is the original residue"""
    targets = residue_targets(labels)
    valid = targets != IGNORE_LABEL
    if not valid.any():
        raise ContractError("mlm_accuracy: no masked positions")
    predicted = np.asarray(logits).argmax(axis=-1)
    return float((predicted[valid] == targets[valid]).mean())


def match_logits(pooled: Tensor, params: Parameters) -> Tensor:
    """[B, D] -> [B]"""
    out = ops.linear(pooled, params[f"{MATCH_HEAD}.w"], params[f"{MATCH_HEAD}.b"])
    return ops.reshape(out, (pooled.shape[0],))


def triplet_match_loss(pooled: Tensor, match_labels: np.ndarray, params: Parameters) -> Tensor:
    """Sigmoid BCE of the match head against true/false attribute labels"""
    labels = np.asarray(match_labels, dtype=bool)
    if pooled.ndim != 2 or labels.shape != (pooled.shape[0],):
        raise DimensionError("triplet_match_loss", pooled.shape, labels.shape)
    return ops.binary_cross_entropy_with_logits(match_logits(pooled, params), labels)


def match_accuracy(logits: np.ndarray, match_labels: np.ndarray) -> float:
    predicted = np.asarray(logits) > 0.0
    return float((predicted == np.asarray(match_labels, dtype=bool)).mean())
