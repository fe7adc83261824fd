"""
Contact maps, range-bucketed precision@L, and the pairwise contact probe.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import special

from core.exceptions import ContractError, DimensionError, UndefinedMetricError
from core.logging.logger import LoggerMixin
from core.seeding import make_rng
from engine import ops
from engine.tensor import Graph, Tensor, backward
from evaluation.reports import MetricReport, fingerprint
from models.parameters import ParamGroup, ParameterInitializer, Parameters
from training.optimizer import AdamWState, adamw_step

DIVISORS = (1, 2, 5)

# (residue representations [L, D], boolean contacts [L, L])
ContactExample = Tuple[np.ndarray, np.ndarray]


class RangeBucket(str, Enum):
    """Sequence-separation range |i - j|"""

    SHORT = "short"
    MEDIUM = "medium"
    LONG = "long"

    @property
    def bounds(self) -> Tuple[int, Optional[int]]:
        return {
            RangeBucket.SHORT: (6, 12),
            RangeBucket.MEDIUM: (12, 24),
            RangeBucket.LONG: (24, None),
        }[self]

    def contains(self, separation: np.ndarray) -> np.ndarray:
        low, high = self.bounds
        inside = separation >= low
        return inside if high is None else inside & (separation < high)


@dataclass
class ContactMap:
    """Ground-truth contacts and predicted probabilities for one protein"""

    truth: np.ndarray  # bool [L, L]
    probs: np.ndarray  # float [L, L]
    length: int = field(init=False)

    def __post_init__(self) -> None:
        self.truth = np.asarray(self.truth, dtype=bool)
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.truth.ndim != 2 or self.truth.shape != self.probs.shape:
            raise DimensionError("ContactMap", self.truth.shape, self.probs.shape)
        if self.truth.shape[0] != self.truth.shape[1]:
            raise DimensionError("ContactMap", self.truth.shape)
        if not np.array_equal(self.truth, self.truth.T):
            raise ContractError("contact ground truth must be symmetric")
        if not np.allclose(self.probs, self.probs.T, atol=1e-6, rtol=0.0):
            raise ContractError("contact probabilities must be symmetric")
        self.length = self.truth.shape[0]


def contacts_to_matrix(length: int, pairs: Sequence[Sequence[int]]) -> np.ndarray:
    """Symmetric boolean matrix from (i, j) index pairs"""
    matrix = np.zeros((length, length), dtype=bool)
    for i, j in pairs:
        if not (0 <= i < length and 0 <= j < length):
            raise ContractError(f"contact ({i}, {j}) outside a length-{length} protein")
        matrix[i, j] = matrix[j, i] = True
    return matrix


def bucket_pairs(length: int, bucket: RangeBucket) -> Tuple[np.ndarray, np.ndarray]:
    """Upper-triangle (i, j) pairs in the bucket, in lexicographic order"""
    i, j = np.triu_indices(length, k=1)
    keep = bucket.contains(j - i)
    return i[keep], j[keep]


def precision_at_k(cmap: ContactMap, bucket: RangeBucket, divisor: int) -> float:
    """
    Fraction of true contacts among the floor(L / divisor) highest-scored pairs.

    Ties are broken by (i, j) in lexicographic order.

    Raises:
        UndefinedMetricError: the bucket holds no pairs for this length
    """
    if divisor < 1:
        raise ContractError(f"divisor must be >= 1, got {divisor}")
    i, j = bucket_pairs(cmap.length, bucket)
    k = min(cmap.length // divisor, i.size)
    if i.size == 0 or k == 0:
        raise UndefinedMetricError(
            f"no {bucket.value}-range pairs for a length-{cmap.length} protein"
        )
    order = np.lexsort((j, i, -cmap.probs[i, j]))[:k]
    return float(cmap.truth[i[order], j[order]].mean())


def metric_name(divisor: int) -> str:
    return "precision_at_L" if divisor == 1 else f"precision_at_L/{divisor}"


def precision_grid(
    maps: Sequence[ContactMap],
    buckets: Sequence[RangeBucket] = tuple(RangeBucket),
    divisors: Sequence[int] = DIVISORS,
) -> List[MetricReport]:
    """Mean precision per (bucket, divisor) over proteins where it is defined"""
    source = fingerprint(*[m.truth for m in maps], *[m.probs for m in maps])
    reports = []
    for bucket in buckets:
        for divisor in divisors:
            values = []
            for cmap in maps:
                try:
                    values.append(precision_at_k(cmap, bucket, divisor))
                except UndefinedMetricError:
                    continue
            if not values:
                continue
            reports.append(
                MetricReport(
                    metric=metric_name(divisor),
                    value=float(np.mean(values)),
                    params={"bucket": bucket.value, "divisor": divisor, "proteins": len(values)},
                    fingerprint=source,
                )
            )
    return reports


class ContactProbe(LoggerMixin):
    """
    Pairwise contact scorer over frozen residue representations.

    score(i, j) = h_i^T W_sym h_j + b with W_sym = (W + W^T) / 2, so the
    probability matrix is symmetric by construction.

    This stands in for a linear layer over the concatenated pair [h_i; h_j],
    which would score (i, j) and (j, i) differently. The bilinear form sees
    the same two representations and needs no explicit symmetrization step.
    """

    def __init__(self, dim: int, seed: int = 0, min_separation: int = 6):
        self.dim = dim
        self.min_separation = min_separation
        self.params = Parameters()
        init = ParameterInitializer(self.params, make_rng(seed, "contact-probe"))
        init.normal("probe.contact.w", (dim, dim), ParamGroup.DECODER)
        init.zeros("probe.contact.b", (1,), ParamGroup.DECODER)

    def _logits(self, reps: np.ndarray) -> Tensor:
        reps = np.asarray(reps)
        if reps.ndim != 2 or reps.shape[1] != self.dim:
            raise DimensionError("contact probe", reps.shape, (reps.shape[0], self.dim))
        h = Tensor(reps)
        w = self.params["probe.contact.w"]
        w_sym = ops.scale(ops.add(w, ops.transpose(w)), 0.5)
        scores = ops.matmul(ops.matmul(h, w_sym), ops.transpose(h))
        return ops.add(scores, self.params["probe.contact.b"])

    def predict(self, reps: np.ndarray) -> np.ndarray:
        """[L, D] -> symmetric [L, L] contact probabilities"""
        probs = special.expit(self._logits(reps).data.astype(np.float64))
        return 0.5 * (probs + probs.T)

    def _pair_weights(self, length: int) -> np.ndarray:
        i, j = np.triu_indices(length, k=self.min_separation)
        weights = np.zeros((length, length))
        weights[i, j] = 1.0
        return weights

    def fit(
        self, examples: Sequence[ContactExample], steps: int = 300, lr: float = 0.05
    ) -> List[float]:
        """
        Full-batch AdamW on binary cross-entropy over upper-triangle pairs
        separated by at least ``min_separation``.

        Returns:
            per-step training loss
        """
        usable = [(r, t) for r, t in examples if len(t) > self.min_separation]
        if not usable:
            raise ContractError("no training protein is long enough for the contact probe")
        state = AdamWState.zeros_like(self.params)
        losses = []
        for _ in range(steps):
            self.params.zero_grad()
            with Graph():
                terms = [
                    ops.binary_cross_entropy_with_logits(
                        self._logits(reps), truth, self._pair_weights(len(truth))
                    )
                    for reps, truth in usable
                ]
                total = terms[0]
                for term in terms[1:]:
                    total = ops.add(total, term)
                loss = ops.scale(total, 1.0 / len(terms))
                backward(loss)
            grads = {n: t.grad for n, t in self.params.learnable().items()}
            adamw_step(self.params, state, grads, lr, weight_decay=0.0)
            losses.append(loss.item())
        self.log_event(
            "contact_probe_trained", steps=steps, proteins=len(usable), final_loss=losses[-1]
        )
        return losses


@dataclass
class ContactProbeResult:
    probe: ContactProbe
    reports: List[MetricReport]
    losses: List[float]


def contact_probe_train(
    train_examples: Sequence[ContactExample],
    test_examples: Sequence[ContactExample],
    seed: int = 0,
    steps: int = 300,
    lr: float = 0.05,
) -> ContactProbeResult:
    """Train a contact probe and report the bucket x divisor precision grid on held-out proteins"""
    if not train_examples or not test_examples:
        raise ContractError("contact probe needs non-empty train and test sets")
    dim = np.asarray(train_examples[0][0]).shape[1]
    probe = ContactProbe(dim, seed=seed)
    losses = probe.fit(train_examples, steps=steps, lr=lr)
    maps = [ContactMap(truth, probe.predict(reps)) for reps, truth in test_examples]
    return ContactProbeResult(probe, precision_grid(maps), losses)
