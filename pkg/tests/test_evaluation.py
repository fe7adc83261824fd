"""
Tests for downstream metrics, contact precision, the contact probe and the toy tasks.
"""

import numpy as np
import pytest
from pydantic import ValidationError
from scipy.stats import spearmanr
from sklearn.metrics import f1_score

from core.exceptions import (
    ConfigurationError,
    ContractError,
    TripletParseError,
    UndefinedMetricError,
)
from data.vocab import CANONICAL_RESIDUES, TextVocabulary, TripletTokenizer
from evaluation.contacts import (
    ContactMap,
    RangeBucket,
    contact_probe_train,
    contacts_to_matrix,
    precision_at_k,
    precision_grid,
)
from evaluation.metrics import (
    kfold_mse,
    kfold_splits,
    manhattan_similarity,
    max_pairwise_distance,
    multilabel_f1,
    spearman,
)
from evaluation.probes import (
    run_affinity_task,
    run_contact_task,
    run_ppi_task,
    run_similarity_task,
)
from evaluation.reports import MetricReport, read_reports, write_reports
from evaluation.toy import (
    NUM_INTERACTION_TYPES,
    ToyTask,
    generate_affinity_dataset,
    generate_contact_dataset,
    generate_ppi_dataset,
    generate_similarity_dataset,
    read_contact_jsonl,
    read_pair_tsv,
    write_contact_jsonl,
    write_pair_tsv,
)
from models.config import ModelConfig
from models.keap import KeapModel

# ---------------------------------------------------------------------------
# Scalar metrics
# ---------------------------------------------------------------------------


def test_multilabel_f1_micro_and_macro():
    """Test pooled and per-label F1 on a small decision matrix"""
    truth = np.array([[1, 0], [1, 1], [0, 1]], dtype=bool)
    pred = np.array([[1, 0], [0, 1], [1, 1]], dtype=bool)
    # label 0: tp 1, fp 1, fn 1 -> 0.5; label 1: tp 2, fp 0, fn 0 -> 1.0
    assert multilabel_f1(pred, truth, "micro") == pytest.approx(2 * 3 / (2 * 3 + 1 + 1))
    assert multilabel_f1(pred, truth, "macro") == pytest.approx(0.75)


def test_multilabel_f1_empty_is_zero():
    """Test 0/0 counts as zero"""
    empty = np.zeros((2, 3), dtype=bool)
    assert multilabel_f1(empty, empty) == 0.0


def test_spearman_monotone_and_ties():
    """Test rank correlation for monotone, reversed and tied inputs"""
    assert spearman([1, 2, 3, 4], [10, 20, 30, 100]) == pytest.approx(1.0)
    assert spearman([1, 2, 3, 4], [4, 3, 2, 1]) == pytest.approx(-1.0)
    assert spearman([1, 2, 2, 3], [1, 2, 3, 4]) == pytest.approx(0.9486833, rel=1e-6)


def test_spearman_constant_input_is_undefined():
    """Test zero rank variance is an undefined metric, not zero"""
    with pytest.raises(UndefinedMetricError):
        spearman([1, 1, 1], [1, 2, 3])


def test_manhattan_similarity():
    """Test 1 - L1 / normalizer"""
    assert manhattan_similarity([0.0, 0.0], [1.0, 1.0], 4.0) == pytest.approx(0.5)
    assert manhattan_similarity([2.0, 3.0], [2.0, 3.0], 1.0) == 1.0
    with pytest.raises(ContractError):
        manhattan_similarity([0.0], [1.0], 0.0)


def test_max_pairwise_distance():
    """Test the largest L1 distance between rows"""
    vectors = np.array([[0.0, 0.0], [1.0, 2.0], [-1.0, 0.0]])
    assert max_pairwise_distance(vectors) == pytest.approx(4.0)


def test_kfold_partitions_all_samples():
    """Test the k test folds are disjoint and cover every sample"""
    folds = kfold_splits(23, 5, seed=1)
    tests = np.concatenate([test for _, test in folds])
    assert sorted(tests.tolist()) == list(range(23))
    for train, test in folds:
        assert not set(train) & set(test)


def test_kfold_needs_enough_samples():
    """Test more folds than samples is a configuration error"""
    with pytest.raises(ConfigurationError):
        kfold_splits(3, 5, seed=0)


def test_kfold_mse_on_linear_data():
    """Test a nearly noiseless linear target gives a small held-out error"""
    rng = np.random.default_rng(0)
    x = rng.normal(size=(60, 3))
    y = x @ np.array([1.0, -2.0, 0.5]) + rng.normal(scale=0.01, size=60)
    result = kfold_mse(x, y, k=10, seed=0)
    assert len(result.fold_mse) == 10
    assert result.mean_mse < 0.01


# ---------------------------------------------------------------------------
# Contact precision
# ---------------------------------------------------------------------------


def _medium_map(length: int = 30) -> ContactMap:
    pairs = [(i, i + 12) for i in range(min(15, length - 12))]
    truth = contacts_to_matrix(length, pairs)
    return ContactMap(truth, truth.astype(float))


def test_precision_at_k_per_divisor():
    """Test P@L, P@L/2 and P@L/5 with 15 medium-range contacts in a length-30 protein"""
    cmap = _medium_map()
    assert precision_at_k(cmap, RangeBucket.MEDIUM, 1) == pytest.approx(0.5)
    assert precision_at_k(cmap, RangeBucket.MEDIUM, 2) == pytest.approx(1.0)
    assert precision_at_k(cmap, RangeBucket.MEDIUM, 5) == pytest.approx(1.0)
    assert precision_at_k(cmap, RangeBucket.SHORT, 1) == 0.0


def test_precision_ties_break_lexicographically():
    """Test equal scores are ranked by (i, j)"""
    truth = contacts_to_matrix(8, [(1, 7)])
    cmap = ContactMap(truth, np.full((8, 8), 0.5))
    # short-range pairs are (0, 6), (0, 7), (1, 7)
    assert precision_at_k(cmap, RangeBucket.SHORT, 5) == 0.0
    assert precision_at_k(cmap, RangeBucket.SHORT, 2) == pytest.approx(1 / 3)


def test_precision_undefined_for_empty_bucket():
    """Test a protein too short for long-range pairs"""
    cmap = ContactMap(np.zeros((10, 10), dtype=bool), np.zeros((10, 10)))
    with pytest.raises(UndefinedMetricError):
        precision_at_k(cmap, RangeBucket.LONG, 1)


def test_contact_map_must_be_symmetric():
    """Test asymmetric ground truth is rejected"""
    truth = np.zeros((4, 4), dtype=bool)
    truth[0, 3] = True
    with pytest.raises(ContractError):
        ContactMap(truth, np.zeros((4, 4)))


def test_precision_grid_skips_undefined_buckets():
    """Test the grid omits bucket/divisor cells no protein defines"""
    reports = precision_grid([_medium_map(20)])
    assert {r.params["bucket"] for r in reports} == {"short", "medium"}
    assert len(reports) == 6
    assert {r.metric for r in reports} == {"precision_at_L", "precision_at_L/2", "precision_at_L/5"}


def _one_hot(sequence: str) -> np.ndarray:
    return np.eye(len(CANONICAL_RESIDUES))[[CANONICAL_RESIDUES.index(c) for c in sequence]]


def test_contact_probe_learns_marker_contacts():
    """Test the probe recovers the cysteine cluster from identity features"""
    records = generate_contact_dataset(12, 40, seed=0)
    examples = [(_one_hot(r.sequence), r.matrix()) for r in records]
    result = contact_probe_train(examples[:8], examples[8:], seed=0, steps=100)

    assert result.losses[-1] < result.losses[0]
    medium = [
        r for r in result.reports
        if r.params["bucket"] == "medium" and r.metric == "precision_at_L/5"
    ]
    assert medium and medium[0].value > 0.9


def test_contact_probe_predictions_are_symmetric():
    """Test predicted probabilities are symmetric with entries in (0, 1)"""
    records = generate_contact_dataset(3, 20, seed=1)
    examples = [(_one_hot(r.sequence), r.matrix()) for r in records]
    result = contact_probe_train(examples[:2], examples[2:], seed=0, steps=5)
    probs = result.probe.predict(examples[2][0])
    np.testing.assert_allclose(probs, probs.T)
    assert np.all((probs > 0) & (probs < 1))


# ---------------------------------------------------------------------------
# Reports and toy data
# ---------------------------------------------------------------------------


def test_metric_report_rejects_non_finite():
    """Test NaN values never reach a report"""
    with pytest.raises(ValidationError):
        MetricReport(metric="f1", value=float("nan"))


def test_reports_jsonl(tmp_path):
    """Test reports are written one JSON object per line"""
    reports = [MetricReport(metric="mse", value=0.5, params={"task": "affinity", "k": 10})]
    path = write_reports(reports, tmp_path / "reports.jsonl")
    assert len(path.read_text().splitlines()) == 1
    assert read_reports(path) == reports


def test_contact_dataset_marks_cysteine_pairs():
    """Test every cysteine pair is a contact and nothing else is"""
    for record in generate_contact_dataset(4, 30, seed=2):
        cys = [i for i, c in enumerate(record.sequence) if c == "C"]
        assert len(cys) >= 2
        expected = {(a, b) for k, a in enumerate(cys) for b in cys[k + 1 :]}
        assert set(record.contacts) == expected


def test_toy_files_read_back(tmp_path):
    """Test generated toy files parse back into the same records"""
    contacts = generate_contact_dataset(3, 16, seed=0)
    assert read_contact_jsonl(write_contact_jsonl(contacts, tmp_path / "c.jsonl")) == contacts

    ppi = generate_ppi_dataset(12, 6, 10, seed=0)
    assert all(len(r.labels) == NUM_INTERACTION_TYPES for r in ppi)
    assert read_pair_tsv(write_pair_tsv(ppi, tmp_path / "p.tsv", ToyTask.PPI), ToyTask.PPI) == ppi

    sim = generate_similarity_dataset(9, 6, 10, seed=0)
    path = write_pair_tsv(sim, tmp_path / "s.tsv", ToyTask.SIMILARITY)
    assert read_pair_tsv(path, ToyTask.SIMILARITY) == sim


def test_pair_tsv_parse_error_line(tmp_path):
    """Test a malformed label column names its line"""
    path = tmp_path / "bad.tsv"
    path.write_text("ACD\tEFG\t0,1,0,1,0,1,0\nACD\tEFG\t0,1\n")
    with pytest.raises(TripletParseError) as err:
        read_pair_tsv(path, ToyTask.PPI)
    assert err.value.line_no == 2


# ---------------------------------------------------------------------------
# Probes over a frozen encoder
# ---------------------------------------------------------------------------


@pytest.fixture
def probe_model():
    config = ModelConfig(
        hidden_dim=16,
        encoder_layers=1,
        decoder_blocks=1,
        heads=2,
        ffn_dim=32,
        knowledge_layers=1,
        text_vocab_size=8,
        max_protein_len=32,
        max_relation_len=4,
        max_attribute_len=4,
    )
    tokenizer = TripletTokenizer(
        TextVocabulary([]), max_protein_len=32, max_relation_len=4, max_attribute_len=4
    )
    return KeapModel.initialize(config, seed=0), tokenizer


def test_contact_task_reports_full_grid(probe_model):
    """Test the contact task emits every bucket x divisor cell for length-30 proteins"""
    model, tokenizer = probe_model
    records = generate_contact_dataset(10, 30, seed=0)
    reports = run_contact_task(model, records, tokenizer, steps=10)
    assert len(reports) == 9
    assert all(r.params["task"] == "contact" for r in reports)
    assert all(0.0 <= r.value <= 1.0 for r in reports)


def test_ppi_task(probe_model):
    """Test the PPI task yields one F1 in [0, 1]"""
    model, tokenizer = probe_model
    records = generate_ppi_dataset(40, 10, 12, seed=0)
    reports = run_ppi_task(model, records, tokenizer, average="macro")
    assert len(reports) == 1
    assert reports[0].metric == "f1"
    assert reports[0].params["average"] == "macro"
    assert 0.0 <= reports[0].value <= 1.0


def test_affinity_task(probe_model):
    """Test the affinity task reports a k-fold MSE"""
    model, tokenizer = probe_model
    records = generate_affinity_dataset(30, 10, 12, seed=0)
    reports = run_affinity_task(model, records, tokenizer, k=5)
    assert reports[0].metric == "mse"
    assert reports[0].params["k"] == 5
    assert reports[0].value >= 0.0


def test_similarity_task_reports_each_group(probe_model):
    """Test one Spearman per ontology group plus the pooled value"""
    model, tokenizer = probe_model
    records = generate_similarity_dataset(30, 10, 12, seed=0)
    reports = run_similarity_task(model, records, tokenizer)
    assert [r.params["group"] for r in reports] == ["BP", "CC", "MF", "all"]
    assert all(-1.0 <= r.value <= 1.0 for r in reports)
    assert reports[-1].params["pairs"] == 30


# ---------------------------------------------------------------------------
# Reference implementations on random instances
# ---------------------------------------------------------------------------


def _brute_precision(truth, probs, bucket, divisor):
    low, high = bucket.bounds
    length = len(truth)
    pairs = [
        (i, j)
        for i in range(length)
        for j in range(i + 1, length)
        if j - i >= low and (high is None or j - i < high)
    ]
    k = min(length // divisor, len(pairs))
    ranked = sorted(pairs, key=lambda p: (-probs[p], p[0], p[1]))[:k]
    return sum(bool(truth[p]) for p in ranked) / k


def test_metrics_match_references():
    """Test precision, F1, Spearman and Manhattan similarity against independent references"""
    rng = np.random.default_rng(0)
    for _ in range(100):
        length = int(rng.integers(8, 31))
        upper = np.triu(rng.random((length, length)) < 0.2, k=1)
        truth = upper | upper.T
        scores = np.round(rng.random((length, length)), 1)  # coarse values force ties
        probs = np.triu(scores, k=1) + np.triu(scores, k=1).T
        cmap = ContactMap(truth, probs)
        for bucket in RangeBucket:
            for divisor in (1, 2, 5):
                try:
                    value = precision_at_k(cmap, bucket, divisor)
                except UndefinedMetricError:
                    continue
                assert value == _brute_precision(truth, probs, bucket, divisor)

        n, c = int(rng.integers(2, 31)), int(rng.integers(2, 8))
        pred = rng.random((n, c)) < 0.5
        gold = rng.random((n, c)) < 0.5
        for average in ("micro", "macro"):
            expected = f1_score(gold, pred, average=average, zero_division=0)
            assert multilabel_f1(pred, gold, average) == pytest.approx(expected, abs=1e-9)

        x = rng.integers(0, 5, size=n).astype(float)
        y = rng.random(n)
        if np.ptp(x) > 0:
            assert spearman(x, y) == pytest.approx(spearmanr(x, y)[0], abs=1e-9)

        u, v = rng.random(c), rng.random(c)
        expected = 1.0 - sum(abs(a - b) for a, b in zip(u, v)) / 3.0
        assert manhattan_similarity(u, v, 3.0) == pytest.approx(expected, abs=1e-9)
