"""
Padded token batches over a knowledge graph.
"""

from dataclasses import dataclass, replace
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from core.exceptions import ConstructionError, ContractError
from data.triplets import KnowledgeGraph
from data.vocab import PAD, TripletTokenizer


@dataclass(frozen=True)
class TokenBatch:
    """Padded id matrices for the protein, relation and attribute streams"""

    protein_ids: np.ndarray  # [B, Lp]
    relation_ids: np.ndarray  # [B, Lr]
    attribute_ids: np.ndarray  # [B, La]
    indices: np.ndarray  # [B] triplet positions in the source graph

    @property
    def size(self) -> int:
        return int(self.protein_ids.shape[0])

    @property
    def protein_pad(self) -> np.ndarray:
        return self.protein_ids == PAD

    @property
    def relation_pad(self) -> np.ndarray:
        return self.relation_ids == PAD

    @property
    def attribute_pad(self) -> np.ndarray:
        return self.attribute_ids == PAD


def pad_sequences(sequences: Sequence[List[int]]) -> np.ndarray:
    """Right-pad id lists with PAD to the longest one"""
    width = max(len(s) for s in sequences)
    out = np.full((len(sequences), width), PAD, dtype=np.int64)
    for row, ids in enumerate(sequences):
        out[row, : len(ids)] = ids
    return out


def encode_triplets(
    kg: KnowledgeGraph,
    positions: Sequence[int],
    tokenizer: TripletTokenizer,
) -> TokenBatch:
    if not len(positions):
        raise ContractError("cannot encode an empty batch")
    triplets = [kg[p] for p in positions]
    return TokenBatch(
        protein_ids=pad_sequences([tokenizer.tokenize_protein(t.protein) for t in triplets]),
        relation_ids=pad_sequences([tokenizer.tokenize_relation(t.relation) for t in triplets]),
        attribute_ids=pad_sequences([tokenizer.tokenize_attribute(t.attribute) for t in triplets]),
        indices=np.asarray(positions, dtype=np.int64),
    )


def batch_order(n: int, shuffle_seed: Optional[int]) -> np.ndarray:
    """Triplet visiting order for one epoch"""
    if shuffle_seed is None:
        return np.arange(n)
    return np.random.Generator(np.random.PCG64(shuffle_seed)).permutation(n)


def make_batches(
    kg: KnowledgeGraph,
    tokenizer: TripletTokenizer,
    batch_size: int,
    shuffle_seed: Optional[int] = None,
) -> Iterator[TokenBatch]:
    """
    One epoch of batches; every triplet appears exactly once.

    The final partial batch is emitted. A fixed seed gives a fixed order.
    """
    if batch_size < 1:
        raise ContractError(f"batch_size must be >= 1, got {batch_size}")
    order = batch_order(len(kg), shuffle_seed)
    for start in range(0, len(order), batch_size):
        yield encode_triplets(kg, order[start : start + batch_size].tolist(), tokenizer)


def swap_attributes(
    batch: TokenBatch,
    kg: KnowledgeGraph,
    tokenizer: TripletTokenizer,
    fraction: float,
    rng: np.random.Generator,
) -> Tuple[TokenBatch, np.ndarray]:
    """
    Replace a fraction of attribute terms with a different attribute from the graph.

    Returns:
        (batch with swapped attributes, boolean match labels [B])
    """
    attributes = sorted({t.attribute for t in kg})
    if len(attributes) < 2:
        raise ConstructionError("triplet matching needs at least two distinct attribute terms")

    n_swap = int(np.floor(fraction * batch.size + 0.5))
    swapped = rng.choice(batch.size, size=n_swap, replace=False) if n_swap else np.array([], int)
    labels = np.ones(batch.size, dtype=bool)
    labels[swapped] = False

    rows: List[List[int]] = []
    for row, pos in enumerate(batch.indices.tolist()):
        text = kg[pos].attribute
        if not labels[row]:
            candidates = [a for a in attributes if a != text]
            text = candidates[int(rng.integers(len(candidates)))]
        rows.append(tokenizer.tokenize_attribute(text))

    return replace(batch, attribute_ids=pad_sequences(rows)), labels
