"""
Residue and knowledge-text vocabularies, and the triplet tokenizer.
"""

import json
import re
from collections import Counter
from pathlib import Path
from typing import Dict, Iterable, List, Sequence

import numpy as np

from core.exceptions import ContractError, VocabularyError

PAD, UNK, CLS, SEP, MASK = 0, 1, 2, 3, 4
SPECIAL_TOKENS = ("[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]")

CANONICAL_RESIDUES = "ACDEFGHIKLMNPQRSTVWY"
# Ambiguity / rare codes accepted so FASTA-derived data loads as-is
RESIDUES = CANONICAL_RESIDUES + "BZXUO"
RESIDUE_OFFSET = len(SPECIAL_TOKENS)
NUM_RESIDUES = len(RESIDUES)

_WORD_RE = re.compile(r"[a-z0-9]+")


def normalize_sequence(sequence: str) -> str:
    """Uppercase and drop whitespace"""
    return "".join(sequence.split()).upper()


def split_words(text: str) -> List[str]:
    """Lowercase, split on whitespace and punctuation"""
    return _WORD_RE.findall(text.lower())


class Vocabulary:
    """Residue vocabulary: five special ids followed by the 25 residue letters"""

    def __init__(self) -> None:
        self.id_to_token: List[str] = list(SPECIAL_TOKENS) + list(RESIDUES)
        self.token_to_id: Dict[str, int] = {t: i for i, t in enumerate(self.id_to_token)}

    def __len__(self) -> int:
        return len(self.id_to_token)

    @property
    def size(self) -> int:
        return len(self.id_to_token)

    @property
    def residue_ids(self) -> np.ndarray:
        return np.arange(RESIDUE_OFFSET, RESIDUE_OFFSET + NUM_RESIDUES)

    @property
    def canonical_ids(self) -> np.ndarray:
        return np.array([self.token_to_id[r] for r in CANONICAL_RESIDUES])

    def encode(self, tokens: Iterable[str]) -> List[int]:
        return [self.token_to_id.get(t, UNK) for t in tokens]

    def decode(self, ids: Iterable[int]) -> List[str]:
        out = []
        for i in ids:
            if not 0 <= int(i) < self.size:
                raise VocabularyError(f"residue id {i} outside vocabulary of size {self.size}")
            out.append(self.id_to_token[int(i)])
        return out


class TextVocabulary:
    """Word vocabulary for relation and attribute text, built from a corpus"""

    def __init__(self, words: Sequence[str], min_freq: int = 1):
        self.min_freq = min_freq
        self.id_to_token: List[str] = list(SPECIAL_TOKENS) + list(words)
        self.token_to_id: Dict[str, int] = {t: i for i, t in enumerate(self.id_to_token)}

    @classmethod
    def build(
        cls, texts: Iterable[str], min_freq: int = 1, max_words: int | None = None
    ) -> "TextVocabulary":
        """
        Words seen at least ``min_freq`` times, ordered alphabetically.

        With ``max_words`` only the most frequent words are kept (ties broken
        alphabetically); the rest map to UNK.
        """
        counts = Counter(word for text in texts for word in split_words(text))
        kept = sorted((w for w, n in counts.items() if n >= min_freq), key=lambda w: (-counts[w], w))
        if max_words is not None:
            kept = kept[: max(max_words, 0)]
        return cls(sorted(kept), min_freq)

    def __len__(self) -> int:
        return len(self.id_to_token)

    @property
    def size(self) -> int:
        return len(self.id_to_token)

    def encode(self, words: Iterable[str]) -> List[int]:
        return [self.token_to_id.get(w, UNK) for w in words]

    def decode(self, ids: Iterable[int]) -> List[str]:
        out = []
        for i in ids:
            if not 0 <= int(i) < self.size:
                raise VocabularyError(f"text id {i} outside vocabulary of size {self.size}")
            out.append(self.id_to_token[int(i)])
        return out

    def save(self, path: Path) -> None:
        payload = {"min_freq": self.min_freq, "words": self.id_to_token[len(SPECIAL_TOKENS):]}
        Path(path).write_text(json.dumps(payload, indent=2), encoding="utf-8")

    @classmethod
    def load(cls, path: Path) -> "TextVocabulary":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(payload["words"], payload.get("min_freq", 1))


class TripletTokenizer:
    """Turns protein strings and knowledge text into framed id lists"""

    def __init__(
        self,
        text_vocab: TextVocabulary,
        max_protein_len: int = 128,
        max_relation_len: int = 16,
        max_attribute_len: int = 64,
    ):
        for name, cap in (
            ("max_protein_len", max_protein_len),
            ("max_relation_len", max_relation_len),
            ("max_attribute_len", max_attribute_len),
        ):
            if cap < 3:
                raise ContractError(f"{name} must leave room for CLS, one token and SEP")
        self.residues = Vocabulary()
        self.text = text_vocab
        self.max_protein_len = max_protein_len
        self.max_relation_len = max_relation_len
        self.max_attribute_len = max_attribute_len

    @staticmethod
    def _frame(body: List[int], cap: int) -> List[int]:
        return [CLS] + body[: cap - 2] + [SEP]

    def tokenize_protein(self, sequence: str, max_len: int | None = None) -> List[int]:
        residues = normalize_sequence(sequence)
        if not residues:
            raise ContractError("cannot tokenize an empty protein sequence")
        return self._frame(self.residues.encode(residues), max_len or self.max_protein_len)

    def tokenize_text(self, text: str, max_len: int | None = None) -> List[int]:
        words = split_words(text)
        if not words:
            raise ContractError(f"cannot tokenize empty knowledge text {text!r}")
        return self._frame(self.text.encode(words), max_len or self.max_attribute_len)

    def tokenize_relation(self, text: str) -> List[int]:
        return self.tokenize_text(text, self.max_relation_len)

    def tokenize_attribute(self, text: str) -> List[int]:
        return self.tokenize_text(text, self.max_attribute_len)
