"""
Synthetic knowledge graphs for exercising knowledge injection.

In ``knowledge_dependent`` mode the attribute text spells the protein, so
masked residues are recoverable only through the knowledge stream. In
``random`` mode the attribute spells an unrelated sequence.
"""

from enum import Enum

import numpy as np

from core.exceptions import ContractError
from data.triplets import KnowledgeGraph, Triplet
from data.vocab import CANONICAL_RESIDUES

SYNTHETIC_RELATION = "has sequence"

_ALPHABET = np.array(list(CANONICAL_RESIDUES))


class SyntheticMode(str, Enum):
    KNOWLEDGE_DEPENDENT = "knowledge_dependent"
    RANDOM = "random"


def spell(sequence: str) -> str:
    """'ACD' -> 'a c d'"""
    return " ".join(sequence.lower())


def random_sequence(
    rng: np.random.Generator, length: int, alphabet: str = CANONICAL_RESIDUES
) -> str:
    letters = _ALPHABET if alphabet == CANONICAL_RESIDUES else np.array(list(alphabet))
    return "".join(letters[rng.integers(0, len(letters), size=length)])


def generate_synthetic_kg(
    n: int,
    seq_len: int,
    mode: SyntheticMode | str = SyntheticMode.KNOWLEDGE_DEPENDENT,
    seed: int = 0,
) -> KnowledgeGraph:
    """
    Build ``n`` triplets of i.i.d.-uniform canonical residue sequences.

    Args:
        n: number of triplets
        seq_len: residues per protein
        mode: knowledge_dependent or random
        seed: generator seed

    Returns:
        KnowledgeGraph
    """
    if n < 1 or seq_len < 1:
        raise ContractError(f"need n >= 1 and seq_len >= 1, got n={n}, seq_len={seq_len}")
    mode = SyntheticMode(mode)
    rng = np.random.Generator(np.random.PCG64(seed))

    triplets = []
    for _ in range(n):
        protein = random_sequence(rng, seq_len)
        if mode is SyntheticMode.KNOWLEDGE_DEPENDENT:
            attribute = spell(protein)
        else:
            attribute = spell(random_sequence(rng, seq_len))
        triplets.append(Triplet(protein, SYNTHETIC_RELATION, attribute))
    return KnowledgeGraph(triplets)
