"""
Seed derivation.

Every random stream is derived from one root seed and a label, so adding a
new consumer never shifts the streams of existing ones.
"""

import hashlib
from typing import Union

import numpy as np

Label = Union[str, int]


def _label_key(label: Label) -> int:
    digest = hashlib.blake2b(str(label).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def derive_seed(root: int, *labels: Label) -> int:
    """Derive a 63-bit seed from a root seed and a path of labels"""
    seq = np.random.SeedSequence(
        entropy=int(root), spawn_key=tuple(_label_key(label) for label in labels)
    )
    return int(seq.generate_state(1, dtype=np.uint64)[0]) >> 1


def make_rng(root: int, *labels: Label) -> np.random.Generator:
    """Independent generator for the (root, labels) stream"""
    return np.random.Generator(np.random.PCG64(derive_seed(root, *labels)))
