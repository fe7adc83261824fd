"""
Architecture hyperparameters.
"""

from enum import Enum

from pydantic import BaseModel, ConfigDict, Field, model_validator

from data.vocab import NUM_RESIDUES, RESIDUE_OFFSET


class Variant(str, Enum):
    """Decoder knowledge-exploitation strategy"""

    CASCADED = "cascaded"
    PARALLEL = "parallel"
    NO_PIK = "no_pik"


class ModelConfig(BaseModel):
    """Encoder / decoder shape, ablation switches and masking ratio"""

    hidden_dim: int = Field(default=64, ge=1)
    encoder_layers: int = Field(default=2, ge=0)
    decoder_blocks: int = Field(default=2, ge=0)
    heads: int = Field(default=4, ge=1)
    ffn_dim: int = Field(default=128, ge=1)
    knowledge_layers: int = Field(default=2, ge=0)

    residue_vocab_size: int = RESIDUE_OFFSET + NUM_RESIDUES
    text_vocab_size: int = Field(default=64, ge=6)

    max_protein_len: int = Field(default=128, ge=3)
    max_relation_len: int = Field(default=16, ge=3)
    max_attribute_len: int = Field(default=64, ge=3)

    variant: Variant = Variant.CASCADED
    triplet_match: bool = False
    match_fraction: float = Field(default=0.5, ge=0.0, le=1.0)
    match_weight: float = Field(default=1.0, ge=0.0)
    mask_ratio: float = Field(default=0.20, gt=0.0, lt=1.0)

    layer_norm_eps: float = Field(default=1e-5, gt=0.0)
    init_std: float = Field(default=0.02, gt=0.0)

    model_config = ConfigDict(extra="forbid", frozen=True)

    @model_validator(mode="after")
    def validate_shape(self) -> "ModelConfig":
        if self.hidden_dim % self.heads != 0:
            raise ValueError(
                f"hidden_dim {self.hidden_dim} must be divisible by heads {self.heads}"
            )
        if self.decoder_blocks < 1 and self.variant is not Variant.NO_PIK:
            raise ValueError("at least one PiK block is required unless variant is no_pik")
        if self.residue_vocab_size != RESIDUE_OFFSET + NUM_RESIDUES:
            raise ValueError(
                f"residue_vocab_size is fixed at {RESIDUE_OFFSET + NUM_RESIDUES}"
            )
        return self

    @property
    def uses_knowledge(self) -> bool:
        return self.variant is not Variant.NO_PIK

    @property
    def max_knowledge_len(self) -> int:
        return max(self.max_relation_len, self.max_attribute_len)
