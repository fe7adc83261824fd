"""
Masked-language-model corruption of protein token batches.

Per sequence, round-half-up(ratio x eligible) residues are selected (at
least one when any residue is eligible). Each selected residue becomes
MASK with probability 0.8, a random residue with probability 0.1, or is
kept with probability 0.1.
"""

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from core.exceptions import ContractError
from data.batching import TokenBatch
from data.vocab import MASK, NUM_RESIDUES, RESIDUE_OFFSET

IGNORE_LABEL = -1
MASK_RATIO_PRESETS = (0.15, 0.20, 0.25)

MASK_PROB = 0.8
RANDOM_PROB = 0.1


class Corruption(IntEnum):
    NONE = 0
    MASK = 1
    RANDOM = 2
    KEEP = 3


@dataclass(frozen=True)
class MaskedBatch:
    """Model inputs and reconstruction targets for one MLM step"""

    protein_ids: np.ndarray  # corrupted [B, Lp]
    labels: np.ndarray  # original ids at selected positions, IGNORE_LABEL elsewhere
    selected: np.ndarray  # bool [B, Lp]
    corruption: np.ndarray  # Corruption codes [B, Lp]
    source: TokenBatch

    @property
    def relation_ids(self) -> np.ndarray:
        return self.source.relation_ids

    @property
    def attribute_ids(self) -> np.ndarray:
        return self.source.attribute_ids

    @property
    def protein_pad(self) -> np.ndarray:
        return self.source.protein_pad

    @property
    def relation_pad(self) -> np.ndarray:
        return self.source.relation_pad

    @property
    def attribute_pad(self) -> np.ndarray:
        return self.source.attribute_pad

    @property
    def num_selected(self) -> int:
        return int(self.selected.sum())


def selection_count(eligible: int, mask_ratio: float) -> int:
    """round-half-up(ratio x eligible), floored at 1 when anything is eligible"""
    if eligible < 1:
        return 0
    return max(1, min(eligible, int(np.floor(mask_ratio * eligible + 0.5))))


def apply_masking(batch: TokenBatch, mask_ratio: float, seed: int) -> MaskedBatch:
    """
    Corrupt the protein stream of ``batch``.

    Args:
        batch: tokenized triplets
        mask_ratio: fraction of eligible residues selected per sequence, in (0, 1)
        seed: corruption seed; a fixed seed gives an identical MaskedBatch

    Returns:
        MaskedBatch
    """
    if not 0.0 < mask_ratio < 1.0:
        raise ContractError(f"mask_ratio must be in (0, 1), got {mask_ratio}")
    rng = np.random.Generator(np.random.PCG64(seed))

    original = batch.protein_ids
    corrupted = original.copy()
    labels = np.full_like(original, IGNORE_LABEL)
    selected = np.zeros(original.shape, dtype=bool)
    corruption = np.zeros(original.shape, dtype=np.int8)

    eligible_mask = original >= RESIDUE_OFFSET
    for row in range(original.shape[0]):
        eligible = np.nonzero(eligible_mask[row])[0]
        m = selection_count(len(eligible), mask_ratio)
        if m == 0:
            continue
        cols = np.sort(rng.choice(eligible, size=m, replace=False))
        draws = rng.random(m)
        randoms = rng.integers(RESIDUE_OFFSET, RESIDUE_OFFSET + NUM_RESIDUES, size=m)

        selected[row, cols] = True
        labels[row, cols] = original[row, cols]

        to_mask = draws < MASK_PROB
        to_random = (draws >= MASK_PROB) & (draws < MASK_PROB + RANDOM_PROB)
        corrupted[row, cols[to_mask]] = MASK
        corrupted[row, cols[to_random]] = randoms[to_random]
        corruption[row, cols] = np.where(
            to_mask, Corruption.MASK, np.where(to_random, Corruption.RANDOM, Corruption.KEEP)
        )

    return MaskedBatch(corrupted, labels, selected, corruption, batch)
