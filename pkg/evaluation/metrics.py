"""
Downstream metrics: multi-label F1, Spearman, Manhattan similarity, MSE and k-fold MSE.
"""

from dataclasses import dataclass
from typing import Any, Callable, List, Literal, Sequence, Tuple

import numpy as np
from scipy import stats
from scipy.spatial.distance import pdist
from sklearn.linear_model import BayesianRidge
from sklearn.model_selection import KFold

from core.exceptions import ConfigurationError, ContractError, DimensionError, UndefinedMetricError

Average = Literal["micro", "macro"]


def _f1(tp: float, fp: float, fn: float) -> float:
    denom = 2.0 * tp + fp + fn
    return 0.0 if denom == 0 else 2.0 * tp / denom


def multilabel_f1(pred: np.ndarray, truth: np.ndarray, average: Average = "micro") -> float:
    """
    F1 over boolean [B, C] decisions.

    Micro pools every (sample, label) decision; macro averages per-label F1.
    0/0 counts as 0.
    """
    pred = np.asarray(pred, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    if pred.shape != truth.shape:
        raise DimensionError("multilabel_f1", pred.shape, truth.shape)
    tp = (pred & truth).sum(axis=0)
    fp = (pred & ~truth).sum(axis=0)
    fn = (~pred & truth).sum(axis=0)
    if average == "micro":
        return _f1(float(tp.sum()), float(fp.sum()), float(fn.sum()))
    if average == "macro":
        if tp.size == 0:
            return 0.0
        return float(np.mean([_f1(*counts) for counts in zip(tp, fp, fn)]))
    raise ConfigurationError(f"unknown F1 averaging {average!r}")


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Pearson correlation of average ranks"""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise DimensionError("spearman", x.shape, y.shape)
    if x.size < 2:
        raise ContractError("spearman needs at least two observations")
    rx = stats.rankdata(x, method="average")
    ry = stats.rankdata(y, method="average")
    rx -= rx.mean()
    ry -= ry.mean()
    denom = np.sqrt((rx * rx).sum() * (ry * ry).sum())
    if denom == 0.0:
        raise UndefinedMetricError("spearman: zero rank variance")
    return float((rx * ry).sum() / denom)


def _as_array(value: Any) -> np.ndarray:
    return np.asarray(getattr(value, "data", value), dtype=np.float64)


def manhattan_similarity(u: Any, v: Any, normalizer: float) -> float:
    """1 - L1(u, v) / normalizer"""
    if normalizer <= 0:
        raise ContractError(f"normalizer must be positive, got {normalizer}")
    a, b = _as_array(u), _as_array(v)
    if a.shape != b.shape:
        raise DimensionError("manhattan_similarity", a.shape, b.shape)
    return float(1.0 - np.abs(a - b).sum() / normalizer)


def max_pairwise_distance(vectors: np.ndarray) -> float:
    """Largest L1 distance between any two rows"""
    vectors = _as_array(vectors)
    if vectors.ndim != 2 or vectors.shape[0] < 2:
        raise ContractError("need at least two vectors for a pairwise normalizer")
    return float(pdist(vectors, metric="cityblock").max())


def mse(pred: Sequence[float], truth: Sequence[float]) -> float:
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(truth, dtype=np.float64)
    if p.shape != t.shape:
        raise DimensionError("mse", p.shape, t.shape)
    if p.size == 0:
        raise ContractError("mse of an empty sample")
    return float(np.mean((p - t) ** 2))


@dataclass
class KFoldResult:
    mean_mse: float
    fold_mse: List[float]
    folds: List[Tuple[np.ndarray, np.ndarray]]


def kfold_splits(n: int, k: int, seed: int) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Deterministic shuffled (train, test) index partitions"""
    if k < 2:
        raise ConfigurationError(f"k-fold needs k >= 2, got {k}")
    if k > n:
        raise ConfigurationError(f"k={k} folds requested for only {n} samples")
    splitter = KFold(n_splits=k, shuffle=True, random_state=seed % (2**32))
    return list(splitter.split(np.arange(n)))


def kfold_mse(
    features: np.ndarray,
    targets: Sequence[float],
    k: int = 10,
    seed: int = 0,
    probe_factory: Callable[[], Any] = BayesianRidge,
) -> KFoldResult:
    """
    Fit a fresh regression probe per fold and average the held-out MSE.

    Args:
        features: [N, F] inputs
        targets: [N] regression targets
        k: number of folds
        seed: shuffling seed for the partition
        probe_factory: callable returning an sklearn-style regressor

    Returns:
        KFoldResult
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise DimensionError("kfold_mse", x.shape, y.shape)
    folds = kfold_splits(len(y), k, seed)
    scores = []
    for train_idx, test_idx in folds:
        probe = probe_factory()
        probe.fit(x[train_idx], y[train_idx])
        scores.append(mse(probe.predict(x[test_idx]), y[test_idx]))
    return KFoldResult(float(np.mean(scores)), scores, folds)
