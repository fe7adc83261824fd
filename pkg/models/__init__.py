"""
Knowledge-enhanced protein model: protein encoder, frozen knowledge encoder, PiK decoder and heads.
"""

from models.config import ModelConfig, Variant
from models.decoder import decode
from models.encoders import encode_knowledge, encode_protein
from models.heads import mlm_loss, triplet_match_loss
from models.keap import KeapModel, LossBreakdown, init_parameters
from models.parameters import ParamGroup, Parameters
from models.pik import parallel_block, pik_block

__all__ = [
    "ModelConfig",
    "Variant",
    "decode",
    "encode_knowledge",
    "encode_protein",
    "mlm_loss",
    "triplet_match_loss",
    "KeapModel",
    "LossBreakdown",
    "init_parameters",
    "ParamGroup",
    "Parameters",
    "parallel_block",
    "pik_block",
]
