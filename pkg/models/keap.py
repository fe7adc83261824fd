"""
Model facade: parameter initialization and the full forward/loss path.
"""

from dataclasses import dataclass
from typing import Optional, Protocol

import numpy as np

from core.exceptions import ConfigurationError
from core.seeding import make_rng
from data.vocab import CLS, PAD, SEP
from engine import ops
from engine.tensor import Tensor
from models.config import ModelConfig
from models.decoder import decode, init_decoder
from models.encoders import (
    encode_knowledge,
    encode_protein,
    init_knowledge_encoder,
    init_protein_encoder,
)
from models.heads import (
    init_heads,
    match_logits,
    mlm_logits,
    mlm_loss,
    triplet_match_loss,
)
from models.parameters import ParameterInitializer, Parameters


class ModelInputs(Protocol):
    """Anything carrying the three id streams and their pad masks"""

    protein_ids: np.ndarray
    relation_ids: np.ndarray
    attribute_ids: np.ndarray

    @property
    def protein_pad(self) -> np.ndarray: ...

    @property
    def relation_pad(self) -> np.ndarray: ...

    @property
    def attribute_pad(self) -> np.ndarray: ...


@dataclass
class LossBreakdown:
    total: Tensor
    mlm: Tensor
    match: Optional[Tensor] = None
    mlm_logits: Optional[np.ndarray] = None
    match_logits: Optional[np.ndarray] = None


def init_parameters(config: ModelConfig, seed: int) -> Parameters:
    """
    Build every tensor the configuration needs.

    Each component draws from its own labeled stream, so e.g. enabling the
    match head leaves encoder and decoder weights unchanged.
    """
    params = Parameters()

    def initializer(label: str) -> ParameterInitializer:
        return ParameterInitializer(params, make_rng(seed, "init", label), config.init_std)

    init_protein_encoder(initializer("encoder"), config)
    if config.uses_knowledge:
        init_knowledge_encoder(initializer("knowledge"), config)
    init_decoder(initializer("decoder"), config)
    init_heads(initializer("heads"), config)
    return params


def residue_positions(ids: np.ndarray) -> np.ndarray:
    """True at real residue tokens (not CLS, SEP or PAD)"""
    ids = np.asarray(ids)
    return (ids != PAD) & (ids != CLS) & (ids != SEP)


class KeapModel:
    """Protein encoder + frozen knowledge encoder + decoder + heads"""

    def __init__(self, config: ModelConfig, params: Parameters):
        self.config = config
        self.params = params

    @classmethod
    def initialize(cls, config: ModelConfig, seed: int) -> "KeapModel":
        return cls(config, init_parameters(config, seed))

    def encode(self, protein_ids: np.ndarray, protein_pad: np.ndarray) -> Tensor:
        """f_p^0"""
        return encode_protein(protein_ids, protein_pad, self.params, self.config)

    def hidden(self, batch: ModelInputs) -> Tensor:
        """f_p^N for a batch"""
        f_p0 = self.encode(batch.protein_ids, batch.protein_pad)
        if not self.config.uses_knowledge:
            return decode(f_p0, None, None, batch.protein_pad, None, None, self.params, self.config)

        f_r = encode_knowledge(batch.relation_ids, batch.relation_pad, self.params, self.config)
        f_a = encode_knowledge(batch.attribute_ids, batch.attribute_pad, self.params, self.config)
        return decode(
            f_p0,
            f_r,
            f_a,
            batch.protein_pad,
            batch.relation_pad,
            batch.attribute_pad,
            self.params,
            self.config,
        )

    def loss(
        self,
        batch: ModelInputs,
        labels: np.ndarray,
        match_labels: Optional[np.ndarray] = None,
    ) -> LossBreakdown:
        """
        MLM loss, plus weighted triplet-match loss when the match head is on.

        Args:
            batch: model inputs (usually a MaskedBatch)
            labels: MLM labels with -1 at unselected positions
            match_labels: true where the attribute belongs to the protein;
                required iff the configuration enables triplet matching

        Returns:
            LossBreakdown with the total and its components
        """
        f_pn = self.hidden(batch)
        l_mlm = mlm_loss(f_pn, labels, self.params)
        logits = mlm_logits(f_pn, self.params).data

        if not self.config.triplet_match:
            return LossBreakdown(total=l_mlm, mlm=l_mlm, mlm_logits=logits)

        if match_labels is None:
            raise ConfigurationError("triplet matching is enabled but no match labels were given")
        pooled = ops.mean_over_valid(f_pn, ~np.asarray(batch.protein_pad))
        l_match = triplet_match_loss(pooled, match_labels, self.params)
        total = ops.add(l_mlm, ops.scale(l_match, self.config.match_weight))
        return LossBreakdown(
            total=total,
            mlm=l_mlm,
            match=l_match,
            mlm_logits=logits,
            match_logits=match_logits(pooled.detach(), self.params).data,
        )

    def residue_representations(self, protein_ids: np.ndarray) -> np.ndarray:
        """Encoder outputs [B, Lp, D] as a plain array, for downstream probes"""
        ids = np.asarray(protein_ids)
        return self.encode(ids, ids == PAD).data

    def pooled_representations(self, protein_ids: np.ndarray) -> np.ndarray:
        """Mean encoder output over residue positions, [B, D]"""
        ids = np.asarray(protein_ids)
        hidden = self.residue_representations(ids)
        keep = residue_positions(ids)
        # a sequence truncated to CLS+SEP has no residue rows; fall back to all non-pad
        keep = np.where(keep.any(axis=1, keepdims=True), keep, ids != PAD)
        weights = keep / keep.sum(axis=1, keepdims=True)
        return (hidden * weights[..., None]).sum(axis=1)
