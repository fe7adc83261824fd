"""
Knowledge-graph triplets: ingestion, indexing and leakage filtering.
"""

from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Sequence, Set, Tuple

from pydantic import BaseModel, Field

from core.exceptions import TripletParseError
from core.logging.logger import get_logger
from data.vocab import RESIDUES, normalize_sequence

logger = get_logger(__name__)

_RESIDUE_SET = frozenset(RESIDUES)


class ResiduePolicy(str, Enum):
    """What to do with a protein containing letters outside the alphabet"""

    REJECT = "reject"
    MAP_TO_X = "map_to_X"


@dataclass(frozen=True)
class Triplet:
    """One (protein, relation, attribute) record"""

    protein: str
    relation: str
    attribute: str

    def to_line(self) -> str:
        return f"{self.protein}\t{self.relation}\t{self.attribute}"


@dataclass
class KnowledgeGraph:
    """Ordered triplets plus an index from protein to its positions"""

    triplets: List[Triplet] = field(default_factory=list)
    rejected_lines: List[int] = field(default_factory=list)
    index: Dict[str, List[int]] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        index: Dict[str, List[int]] = defaultdict(list)
        for pos, triplet in enumerate(self.triplets):
            index[triplet.protein].append(pos)
        self.index = dict(index)

    def __len__(self) -> int:
        return len(self.triplets)

    def __iter__(self) -> Iterator[Triplet]:
        return iter(self.triplets)

    def __getitem__(self, pos: int) -> Triplet:
        return self.triplets[pos]

    @property
    def proteins(self) -> Set[str]:
        return set(self.index)

    def subset(self, positions: Iterable[int]) -> "KnowledgeGraph":
        return KnowledgeGraph([self.triplets[p] for p in positions])

    def texts(self) -> Iterator[str]:
        """Every relation and attribute string, for building a text vocabulary"""
        for t in self.triplets:
            yield t.relation
            yield t.attribute

    def write_tsv(self, path: Path) -> None:
        body = "".join(t.to_line() + "\n" for t in self.triplets)
        Path(path).write_text(body, encoding="utf-8")


class LeakageReport(BaseModel):
    """Outcome of removing held-out proteins from a knowledge graph"""

    removed_triplets: int
    retained_triplets: int
    retained_fraction: float
    removed_positions: List[int] = Field(default_factory=list, exclude=True)


def _clean_protein(raw: str, policy: ResiduePolicy) -> Tuple[str, bool]:
    protein = normalize_sequence(raw)
    invalid = any(ch not in _RESIDUE_SET for ch in protein)
    if not invalid:
        return protein, True
    if policy is ResiduePolicy.MAP_TO_X:
        return "".join(ch if ch in _RESIDUE_SET else "X" for ch in protein), True
    return protein, False


def parse_triplet_lines(
    lines: Sequence[str],
    policy: ResiduePolicy = ResiduePolicy.REJECT,
) -> KnowledgeGraph:
    triplets: List[Triplet] = []
    rejected: List[int] = []
    for line_no, raw_line in enumerate(lines, start=1):
        line = raw_line.rstrip("\r\n")
        if not line.strip():
            continue
        columns = line.split("\t")
        if len(columns) != 3:
            raise TripletParseError(line_no, f"expected 3 tab-separated columns, found {len(columns)}")
        protein, ok = _clean_protein(columns[0], policy)
        if not ok or not protein:
            rejected.append(line_no)
            continue
        triplets.append(Triplet(protein, columns[1].strip(), columns[2].strip()))
    return KnowledgeGraph(triplets, rejected)


def load_triplets(
    path: Path,
    policy: ResiduePolicy | str = ResiduePolicy.REJECT,
) -> KnowledgeGraph:
    """
    Load a UTF-8 TSV of protein<TAB>relation<TAB>attribute lines.

    Args:
        path: triplet file
        policy: reject lines with invalid residues, or map those residues to X

    Returns:
        KnowledgeGraph in file order; ``rejected_lines`` lists skipped line numbers
    """
    policy = ResiduePolicy(policy)
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    kg = parse_triplet_lines(lines, policy)

    if not kg.triplets:
        logger.warning("empty_knowledge_graph", path=str(path))
    if kg.rejected_lines:
        logger.warning(
            "triplets_rejected",
            path=str(path),
            policy=policy.value,
            lines=kg.rejected_lines,
        )
    logger.info("triplets_loaded", path=str(path), count=len(kg), proteins=len(kg.index))
    return kg


def load_holdout(path: Path) -> Set[str]:
    """One sequence per line, normalized like triplet proteins"""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return {normalize_sequence(line) for line in lines if line.strip()}


def filter_leakage(
    kg: KnowledgeGraph,
    holdout: Set[str],
) -> Tuple[KnowledgeGraph, LeakageReport]:
    """
    Drop every triplet whose protein appears in a downstream evaluation set.

    Proteins match by exact string equality after normalization.
    """
    holdout = {normalize_sequence(s) for s in holdout}
    removed = sorted(
        pos for protein, positions in kg.index.items() if protein in holdout for pos in positions
    )
    removed_set = set(removed)
    retained = [t for pos, t in enumerate(kg.triplets) if pos not in removed_set]

    total = len(kg)
    report = LeakageReport(
        removed_triplets=len(removed),
        retained_triplets=len(retained),
        retained_fraction=(len(retained) / total) if total else 1.0,
        removed_positions=removed,
    )
    logger.info(
        "leakage_filtered",
        removed=report.removed_triplets,
        retained=report.retained_triplets,
        retained_fraction=report.retained_fraction,
    )
    return KnowledgeGraph(retained), report
