"""
Downstream probes over frozen encoder representations: contacts, PPI,
affinity regression and semantic similarity.
"""

from collections import OrderedDict
from typing import Dict, List, Sequence, Tuple

import numpy as np
from sklearn.linear_model import LogisticRegression
from sklearn.model_selection import train_test_split

from core.exceptions import ContractError
from core.logging.logger import get_logger
from data.batching import pad_sequences
from data.vocab import TripletTokenizer
from evaluation.contacts import ContactExample, contact_probe_train
from evaluation.metrics import (
    kfold_mse,
    manhattan_similarity,
    max_pairwise_distance,
    multilabel_f1,
    spearman,
)
from evaluation.reports import MetricReport, fingerprint
from evaluation.toy import ContactRecord, PairRecord
from models.keap import KeapModel

logger = get_logger(__name__)


def _tokenize(sequences: Sequence[str], tokenizer: TripletTokenizer) -> np.ndarray:
    return pad_sequences([tokenizer.tokenize_protein(s) for s in sequences])


def embed_proteins(
    model: KeapModel,
    sequences: Sequence[str],
    tokenizer: TripletTokenizer,
    batch_size: int = 32,
) -> Dict[str, np.ndarray]:
    """Pooled encoder representation per distinct sequence"""
    unique = list(OrderedDict.fromkeys(sequences))
    out: Dict[str, np.ndarray] = {}
    for start in range(0, len(unique), batch_size):
        chunk = unique[start : start + batch_size]
        pooled = model.pooled_representations(_tokenize(chunk, tokenizer))
        out.update(zip(chunk, pooled.astype(np.float64)))
    return out


def residue_embeddings(
    model: KeapModel, sequence: str, tokenizer: TripletTokenizer
) -> np.ndarray:
    """Encoder rows for the residues of one protein (CLS and SEP stripped), [L', D]"""
    ids = _tokenize([sequence], tokenizer)
    hidden = model.residue_representations(ids)[0]
    return hidden[1 : ids.shape[1] - 1].astype(np.float64)


def _pair_embeddings(
    model: KeapModel, records: Sequence[PairRecord], tokenizer: TripletTokenizer
) -> Dict[str, np.ndarray]:
    sequences = [p for r in records for p in (r.protein_a, r.protein_b)]
    return embed_proteins(model, sequences, tokenizer)


def pair_features(
    records: Sequence[PairRecord], embeddings: Dict[str, np.ndarray]
) -> np.ndarray:
    """Element-wise product of the two pooled representations"""
    return np.stack([embeddings[r.protein_a] * embeddings[r.protein_b] for r in records])


# ---------------------------------------------------------------------------
# Contacts
# ---------------------------------------------------------------------------


def contact_examples(
    model: KeapModel, records: Sequence[ContactRecord], tokenizer: TripletTokenizer
) -> List[ContactExample]:
    """Residue representations paired with ground truth, cropped to the encoded length"""
    examples = []
    for record in records:
        reps = residue_embeddings(model, record.sequence, tokenizer)
        n = reps.shape[0]
        examples.append((reps, record.matrix()[:n, :n]))
    return examples


def split_indices(n: int, test_fraction: float, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    if n < 2:
        raise ContractError("need at least two records to split into train and test")
    train_idx, test_idx = train_test_split(
        np.arange(n), test_size=test_fraction, random_state=seed % (2**32), shuffle=True
    )
    return np.sort(train_idx), np.sort(test_idx)


def run_contact_task(
    model: KeapModel,
    records: Sequence[ContactRecord],
    tokenizer: TripletTokenizer,
    seed: int = 0,
    test_fraction: float = 0.2,
    steps: int = 300,
) -> List[MetricReport]:
    """Train the contact probe on frozen representations; P@L, L/2, L/5 per range bucket"""
    examples = contact_examples(model, records, tokenizer)
    train_idx, test_idx = split_indices(len(examples), test_fraction, seed)
    result = contact_probe_train(
        [examples[i] for i in train_idx], [examples[i] for i in test_idx], seed=seed, steps=steps
    )
    for report in result.reports:
        report.params["task"] = "contact"
    return result.reports


# ---------------------------------------------------------------------------
# PPI
# ---------------------------------------------------------------------------


def fit_multilabel(
    x_train: np.ndarray, y_train: np.ndarray, x_test: np.ndarray, seed: int
) -> np.ndarray:
    """One logistic regression per label; a label constant in training is predicted as is"""
    preds = np.zeros((x_test.shape[0], y_train.shape[1]), dtype=bool)
    for label in range(y_train.shape[1]):
        column = y_train[:, label]
        if column.min() == column.max():
            preds[:, label] = bool(column[0])
            continue
        clf = LogisticRegression(max_iter=1000, random_state=seed % (2**32))
        clf.fit(x_train, column)
        preds[:, label] = clf.predict(x_test).astype(bool)
    return preds


def run_ppi_task(
    model: KeapModel,
    records: Sequence[PairRecord],
    tokenizer: TripletTokenizer,
    seed: int = 0,
    test_fraction: float = 0.2,
    average: str = "micro",
) -> List[MetricReport]:
    embeddings = _pair_embeddings(model, records, tokenizer)
    x = pair_features(records, embeddings)
    y = np.array([r.labels for r in records], dtype=bool)
    train_idx, test_idx = split_indices(len(records), test_fraction, seed)
    pred = fit_multilabel(x[train_idx], y[train_idx], x[test_idx], seed)
    value = multilabel_f1(pred, y[test_idx], average=average)  # type: ignore[arg-type]
    return [
        MetricReport(
            metric="f1",
            value=value,
            params={"task": "ppi", "average": average, "test_pairs": int(len(test_idx))},
            fingerprint=fingerprint(x, y),
        )
    ]


# ---------------------------------------------------------------------------
# Affinity
# ---------------------------------------------------------------------------


def run_affinity_task(
    model: KeapModel,
    records: Sequence[PairRecord],
    tokenizer: TripletTokenizer,
    seed: int = 0,
    k: int = 10,
) -> List[MetricReport]:
    """Bayesian ridge on pair features; mean held-out MSE over k folds (capped at the pair count)"""
    embeddings = _pair_embeddings(model, records, tokenizer)
    x = pair_features(records, embeddings)
    y = np.array([r.value for r in records])
    folds = min(k, len(records))
    result = kfold_mse(x, y, k=folds, seed=seed)
    return [
        MetricReport(
            metric="mse",
            value=result.mean_mse,
            params={"task": "affinity", "k": folds},
            fingerprint=fingerprint(x, y),
        )
    ]


# ---------------------------------------------------------------------------
# Semantic similarity
# ---------------------------------------------------------------------------


def run_similarity_task(
    model: KeapModel,
    records: Sequence[PairRecord],
    tokenizer: TripletTokenizer,
) -> List[MetricReport]:
    """
    Spearman between Manhattan similarity of representations and ground truth.

    One report per group, plus "all" when more than one group is present.
    The normalizer is the largest pairwise distance among evaluated proteins.
    """
    embeddings = _pair_embeddings(model, records, tokenizer)
    normalizer = max_pairwise_distance(np.stack(list(embeddings.values())))
    if normalizer == 0.0:
        raise ContractError("all protein representations are identical")
    logger.info("similarity_normalizer", normalizer=normalizer, proteins=len(embeddings))

    predicted = np.array(
        [
            manhattan_similarity(embeddings[r.protein_a], embeddings[r.protein_b], normalizer)
            for r in records
        ]
    )
    truth = np.array([r.value for r in records])
    groups = np.array([r.group or "all" for r in records])

    selections: List[Tuple[str, np.ndarray]] = [
        (g, groups == g) for g in sorted(set(groups.tolist()))
    ]
    if len(selections) > 1:
        selections.append(("all", np.ones(len(records), dtype=bool)))

    reports = []
    for group, mask in selections:
        reports.append(
            MetricReport(
                metric="spearman",
                value=spearman(predicted[mask], truth[mask]),
                params={
                    "task": "similarity",
                    "group": group,
                    "pairs": int(mask.sum()),
                    "normalizer": normalizer,
                },
                fingerprint=fingerprint(predicted[mask], truth[mask]),
            )
        )
    return reports
