"""
Toy downstream tasks and their file formats.

Contacts: JSONL records {sequence, contacts: [[i, j], ...]} with 0-based
residue indices. PPI: TSV protein_a, protein_b, seven comma-separated 0/1
labels. Affinity: TSV protein_a, protein_b, value. Similarity: TSV
protein_a, protein_b, ground truth, optional ontology group.
"""

import csv
import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from core.exceptions import ContractError, TripletParseError
from core.seeding import make_rng
from data.synthetic import random_sequence
from data.vocab import CANONICAL_RESIDUES, normalize_sequence
from evaluation.contacts import contacts_to_matrix

NUM_INTERACTION_TYPES = 7
SIMILARITY_GROUPS = ("MF", "BP", "CC")

CONTACT_MARKER = "C"
_BACKGROUND = CANONICAL_RESIDUES.replace(CONTACT_MARKER, "")

# Residue groups driving the composition-derived labels, one per interaction type
_LABEL_GROUPS = ("AVLI", "FWY", "DE", "KRH", "STNQ", "GP", "CM")
_HYDROPHOBIC = frozenset("AVLIMFWC")


class ToyTask(str, Enum):
    CONTACTS = "contacts"
    PPI = "ppi"
    AFFINITY = "affinity"
    SIMILARITY = "similarity"


@dataclass(frozen=True)
class ContactRecord:
    sequence: str
    contacts: Tuple[Tuple[int, int], ...]

    def matrix(self) -> np.ndarray:
        return contacts_to_matrix(len(self.sequence), self.contacts)


@dataclass(frozen=True)
class PairRecord:
    """A protein pair with a numeric target, labels or similarity"""

    protein_a: str
    protein_b: str
    value: float = 0.0
    labels: Tuple[int, ...] = ()
    group: Optional[str] = None


# ---------------------------------------------------------------------------
# Generators
# ---------------------------------------------------------------------------


def generate_contact_dataset(
    n: int, length: int, seed: int, marker_fraction: float = 0.3
) -> List[ContactRecord]:
    """
    Proteins whose cysteines form one contact cluster.

    Every pair of cysteine positions is a contact and no other pair is, so
    contacts are decodable from residue identity alone. At least two
    cysteines are planted per protein.
    """
    if n < 1 or length < 2:
        raise ContractError("contact dataset needs n >= 1 and length >= 2")
    rng = make_rng(seed, "toy", "contacts")
    records = []
    for _ in range(n):
        residues = np.array(list(random_sequence(rng, length, _BACKGROUND)))
        count = max(2, int(round(marker_fraction * length)))
        marked = np.sort(rng.choice(length, size=min(count, length), replace=False))
        residues[marked] = CONTACT_MARKER
        pairs = tuple(
            (int(a), int(b)) for k, a in enumerate(marked) for b in marked[k + 1 :]
        )
        records.append(ContactRecord("".join(residues), pairs))
    return records


def composition(sequence: str, groups: Sequence[str] = _LABEL_GROUPS) -> np.ndarray:
    seq = normalize_sequence(sequence)
    return np.array([sum(seq.count(r) for r in g) / len(seq) for g in groups])


def _protein_pool(n_proteins: int, length: int, seed: int, label: str) -> List[str]:
    rng = make_rng(seed, "toy", label, "proteins")
    return [random_sequence(rng, length) for _ in range(n_proteins)]


def _pairs(n_pairs: int, n_proteins: int, seed: int, label: str) -> np.ndarray:
    rng = make_rng(seed, "toy", label, "pairs")
    first = rng.integers(0, n_proteins, size=n_pairs)
    offset = rng.integers(1, n_proteins, size=n_pairs)
    return np.stack([first, (first + offset) % n_proteins], axis=1)


def generate_ppi_dataset(
    n_pairs: int, n_proteins: int, length: int, seed: int
) -> List[PairRecord]:
    """Interaction type t holds when the pair's combined share of residue group t is above its median"""
    if n_proteins < 2:
        raise ContractError("PPI toy task needs at least two proteins")
    proteins = _protein_pool(n_proteins, length, seed, "ppi")
    comp = np.stack([composition(p) for p in proteins])
    pairs = _pairs(n_pairs, n_proteins, seed, "ppi")
    scores = comp[pairs[:, 0]] + comp[pairs[:, 1]]
    labels = scores > np.median(scores, axis=0)
    return [
        PairRecord(proteins[a], proteins[b], labels=tuple(int(x) for x in row))
        for (a, b), row in zip(pairs.tolist(), labels)
    ]


def generate_affinity_dataset(
    n_pairs: int, n_proteins: int, length: int, seed: int, noise: float = 0.05
) -> List[PairRecord]:
    """Target is the product of the two hydrophobic fractions, scaled, plus noise"""
    if n_proteins < 2:
        raise ContractError("affinity toy task needs at least two proteins")
    proteins = _protein_pool(n_proteins, length, seed, "affinity")
    hydro = np.array([sum(r in _HYDROPHOBIC for r in p) / len(p) for p in proteins])
    pairs = _pairs(n_pairs, n_proteins, seed, "affinity")
    rng = make_rng(seed, "toy", "affinity", "noise")
    values = 10.0 * hydro[pairs[:, 0]] * hydro[pairs[:, 1]] + rng.normal(0.0, noise, len(pairs))
    return [
        PairRecord(proteins[a], proteins[b], value=float(v))
        for (a, b), v in zip(pairs.tolist(), values)
    ]


def generate_similarity_dataset(
    n_pairs: int, n_proteins: int, length: int, seed: int
) -> List[PairRecord]:
    """Ground truth is 1 - half the L1 distance between composition profiles; groups cycle MF/BP/CC"""
    if n_proteins < 2:
        raise ContractError("similarity toy task needs at least two proteins")
    proteins = _protein_pool(n_proteins, length, seed, "similarity")
    comp = np.stack([composition(p) for p in proteins])
    pairs = _pairs(n_pairs, n_proteins, seed, "similarity")
    return [
        PairRecord(
            proteins[a],
            proteins[b],
            value=float(1.0 - 0.5 * np.abs(comp[a] - comp[b]).sum()),
            group=SIMILARITY_GROUPS[k % len(SIMILARITY_GROUPS)],
        )
        for k, (a, b) in enumerate(pairs.tolist())
    ]


# ---------------------------------------------------------------------------
# File I/O
# ---------------------------------------------------------------------------


def write_contact_jsonl(records: Sequence[ContactRecord], path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            payload = {"sequence": record.sequence, "contacts": [list(p) for p in record.contacts]}
            fh.write(json.dumps(payload) + "\n")
    return path


def read_contact_jsonl(path: Path) -> List[ContactRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                payload = json.loads(line)
                sequence = normalize_sequence(payload["sequence"])
                pairs = tuple((int(i), int(j)) for i, j in payload["contacts"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise TripletParseError(line_no, f"bad contact record ({e})") from e
            records.append(ContactRecord(sequence, pairs))
    return records


def _tsv_rows(path: Path) -> List[Tuple[int, List[str]]]:
    with open(path, encoding="utf-8", newline="") as fh:
        return [
            (line_no, row)
            for line_no, row in enumerate(csv.reader(fh, delimiter="\t"), start=1)
            if row and any(cell.strip() for cell in row)
        ]


def write_pair_tsv(records: Sequence[PairRecord], path: Path, task: ToyTask) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        for r in records:
            if task is ToyTask.PPI:
                writer.writerow([r.protein_a, r.protein_b, ",".join(str(x) for x in r.labels)])
            elif task is ToyTask.SIMILARITY and r.group is not None:
                writer.writerow([r.protein_a, r.protein_b, repr(r.value), r.group])
            else:
                writer.writerow([r.protein_a, r.protein_b, repr(r.value)])
    return path


def read_pair_tsv(path: Path, task: ToyTask) -> List[PairRecord]:
    """Parse a PPI, affinity or similarity TSV"""
    records = []
    for line_no, row in _tsv_rows(path):
        allowed = (3, 4) if task is ToyTask.SIMILARITY else (3,)
        if len(row) not in allowed:
            raise TripletParseError(line_no, f"expected {allowed} columns, got {len(row)}")
        a, b = normalize_sequence(row[0]), normalize_sequence(row[1])
        if not a or not b:
            raise TripletParseError(line_no, "empty protein sequence")
        try:
            if task is ToyTask.PPI:
                labels = tuple(int(x) for x in row[2].split(","))
                if len(labels) != NUM_INTERACTION_TYPES or any(x not in (0, 1) for x in labels):
                    raise ValueError(f"need {NUM_INTERACTION_TYPES} binary labels")
                records.append(PairRecord(a, b, labels=labels))
            else:
                group = row[3].strip() if len(row) == 4 else None
                records.append(PairRecord(a, b, value=float(row[2]), group=group))
        except ValueError as e:
            raise TripletParseError(line_no, str(e)) from e
    return records
