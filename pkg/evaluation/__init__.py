"""
Downstream metrics, toy tasks and probes over frozen encoder representations.
"""

from evaluation.contacts import (
    ContactMap,
    ContactProbe,
    RangeBucket,
    contact_probe_train,
    precision_at_k,
    precision_grid,
)
from evaluation.metrics import (
    kfold_mse,
    manhattan_similarity,
    max_pairwise_distance,
    mse,
    multilabel_f1,
    spearman,
)
from evaluation.reports import MetricReport, read_reports, write_reports

__all__ = [
    "ContactMap",
    "ContactProbe",
    "RangeBucket",
    "contact_probe_train",
    "precision_at_k",
    "precision_grid",
    "kfold_mse",
    "manhattan_similarity",
    "max_pairwise_distance",
    "mse",
    "multilabel_f1",
    "spearman",
    "MetricReport",
    "read_reports",
    "write_reports",
]
