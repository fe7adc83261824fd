"""
Vocabulary, triplet ingestion, batching, synthetic graphs and MLM masking.
"""

from data.batching import TokenBatch, encode_triplets, make_batches, swap_attributes
from data.masking import IGNORE_LABEL, MaskedBatch, apply_masking
from data.synthetic import SyntheticMode, generate_synthetic_kg
from data.triplets import (
    KnowledgeGraph,
    LeakageReport,
    ResiduePolicy,
    Triplet,
    filter_leakage,
    load_holdout,
    load_triplets,
)
from data.vocab import TextVocabulary, TripletTokenizer, Vocabulary

__all__ = [
    "TokenBatch",
    "encode_triplets",
    "make_batches",
    "swap_attributes",
    "IGNORE_LABEL",
    "MaskedBatch",
    "apply_masking",
    "SyntheticMode",
    "generate_synthetic_kg",
    "KnowledgeGraph",
    "LeakageReport",
    "ResiduePolicy",
    "Triplet",
    "filter_leakage",
    "load_holdout",
    "load_triplets",
    "TextVocabulary",
    "TripletTokenizer",
    "Vocabulary",
]
