"""
Tests for vocabularies, triplet ingestion, batching, masking and synthetic data.
"""

import numpy as np
import pytest

from core.exceptions import ConstructionError, ContractError, TripletParseError
from core.seeding import derive_seed, make_rng
from data.batching import TokenBatch, encode_triplets, make_batches, swap_attributes
from data.masking import IGNORE_LABEL, Corruption, apply_masking, selection_count
from data.synthetic import SyntheticMode, generate_synthetic_kg, spell
from data.triplets import (
    KnowledgeGraph,
    ResiduePolicy,
    Triplet,
    filter_leakage,
    load_triplets,
    parse_triplet_lines,
)
from data.vocab import (
    CLS,
    MASK,
    PAD,
    SEP,
    UNK,
    TextVocabulary,
    TripletTokenizer,
    Vocabulary,
)

# ---------------------------------------------------------------------------
# Vocabulary and tokenizer
# ---------------------------------------------------------------------------


def test_residue_vocabulary_layout():
    """Test five specials followed by 25 residue letters"""
    vocab = Vocabulary()
    assert vocab.size == 30
    assert vocab.encode("AC") == [5, 6]
    assert vocab.decode([0, 4, 5]) == ["[PAD]", "[MASK]", "A"]
    assert list(vocab.residue_ids) == list(range(5, 30))


def test_tokenize_protein_frames_and_truncates():
    """Test CLS/SEP framing and truncation to the maximum length"""
    tok = TripletTokenizer(TextVocabulary([]), max_protein_len=5)
    assert tok.tokenize_protein("acd") == [CLS, 5, 6, 7, SEP]
    assert tok.tokenize_protein("ACDEFG") == [CLS, 5, 6, 7, SEP]


def test_empty_protein_rejected():
    """Test an empty sequence cannot be tokenized"""
    tok = TripletTokenizer(TextVocabulary([]))
    with pytest.raises(ContractError):
        tok.tokenize_protein("  ")


def test_text_vocabulary_keeps_most_frequent_words():
    """Test the word cap keeps frequent words and maps the rest to UNK"""
    vocab = TextVocabulary.build(["a b b c c c"], max_words=2)
    assert vocab.size == 7
    assert vocab.encode(["b", "c", "a"]) == [5, 6, UNK]


def test_text_vocabulary_min_freq():
    """Test words below min_freq are dropped"""
    vocab = TextVocabulary.build(["kinase activity", "kinase binding"], min_freq=2)
    assert vocab.encode(["kinase", "activity"]) == [5, UNK]


# ---------------------------------------------------------------------------
# Triplet ingestion
# ---------------------------------------------------------------------------


def test_parse_reports_line_number_of_bad_row():
    """Test a row without three columns raises with its 1-based line number"""
    with pytest.raises(TripletParseError) as err:
        parse_triplet_lines(["ACD\tr\ta", "", "ACD\tonly two"])
    assert err.value.line_no == 3


def test_invalid_residues_rejected_or_mapped():
    """Test both residue policies on a protein with a stray character"""
    lines = ["AC1\tr\ta", "ACD\tr\tb"]
    rejected = parse_triplet_lines(lines, ResiduePolicy.REJECT)
    assert len(rejected) == 1
    assert rejected.rejected_lines == [1]

    mapped = parse_triplet_lines(lines, ResiduePolicy.MAP_TO_X)
    assert [t.protein for t in mapped] == ["ACX", "ACD"]


def test_load_triplets_indexes_proteins(tmp_path):
    """Test file loading keeps order and indexes every protein"""
    path = tmp_path / "kg.tsv"
    path.write_text("acd\tenables\tkinase activity\nEFG\tpart of\tnucleus\nACD\tpart of\tcytosol\n")
    kg = load_triplets(path)
    assert len(kg) == 3
    assert kg.index["ACD"] == [0, 2]
    assert kg[1] == Triplet("EFG", "part of", "nucleus")


def test_filter_leakage_counts():
    """Test held-out proteins are removed and the report is consistent"""
    kg = KnowledgeGraph(
        [Triplet("AAA", "r", "x"), Triplet("CCC", "r", "y"), Triplet("AAA", "r", "z")]
    )
    filtered, report = filter_leakage(kg, {"aaa"})
    assert [t.protein for t in filtered] == ["CCC"]
    assert report.removed_triplets == 2
    assert report.retained_triplets == 1
    assert report.retained_fraction == pytest.approx(1 / 3)
    assert "AAA" not in filtered.proteins


def test_filter_leakage_empty_holdout_is_identity():
    """Test that an empty holdout keeps every triplet in order"""
    kg = generate_synthetic_kg(5, 6, seed=1)
    filtered, report = filter_leakage(kg, set())
    assert filtered.triplets == kg.triplets
    assert report.removed_triplets == 0
    assert report.retained_fraction == 1.0


def test_filter_leakage_matches_brute_force():
    """Test a 1,000-triplet graph against a 100-sequence holdout by direct membership"""
    rng = np.random.default_rng(5)
    proteins = [t.protein for t in generate_synthetic_kg(300, 6, seed=2)]
    kg = KnowledgeGraph(
        [Triplet(proteins[i], "r", f"term {k}") for k, i in enumerate(rng.integers(0, 300, 1000))]
    )
    holdout = {p.lower() for p in rng.choice(proteins, 90, replace=False)}
    holdout |= {t.protein for t in generate_synthetic_kg(10, 7, seed=3)}

    filtered, report = filter_leakage(kg, holdout)
    upper = {h.upper() for h in holdout}
    expected = [t for t in kg if t.protein not in upper]
    assert filtered.triplets == expected
    assert report.retained_triplets == len(expected)
    assert report.removed_triplets == 1000 - len(expected)
    assert report.retained_fraction == pytest.approx(len(expected) / 1000)


# ---------------------------------------------------------------------------
# Batching
# ---------------------------------------------------------------------------


def test_epoch_visits_every_triplet_once(synthetic_kg, tokenizer):
    """Test one epoch covers the graph exactly once, final partial batch included"""
    batches = list(make_batches(synthetic_kg, tokenizer, batch_size=5, shuffle_seed=3))
    assert [b.size for b in batches] == [5, 5, 2]
    seen = np.concatenate([b.indices for b in batches])
    assert sorted(seen.tolist()) == list(range(len(synthetic_kg)))


def test_epoch_order_is_seeded(synthetic_kg, tokenizer):
    """Test the same shuffle seed gives the same order"""
    a = [b.indices.tolist() for b in make_batches(synthetic_kg, tokenizer, 4, shuffle_seed=9)]
    b = [b.indices.tolist() for b in make_batches(synthetic_kg, tokenizer, 4, shuffle_seed=9)]
    assert a == b


def test_padding_follows_longest_sequence(tokenizer):
    """Test short sequences are right-padded with PAD"""
    kg = KnowledgeGraph([Triplet("AC", "has sequence", "a c"), Triplet("ACDEF", "has sequence", "a")])
    batch = encode_triplets(kg, [0, 1], tokenizer)
    assert batch.protein_ids.shape == (2, 7)
    assert batch.protein_ids[0].tolist() == [CLS, 5, 6, SEP, PAD, PAD, PAD]
    assert batch.protein_pad[0].tolist() == [False] * 4 + [True] * 3


def test_swap_attributes_marks_mismatches(synthetic_kg, tokenizer):
    """Test swapped rows get a different attribute and a false label"""
    batch = encode_triplets(synthetic_kg, list(range(6)), tokenizer)
    swapped, labels = swap_attributes(batch, synthetic_kg, tokenizer, 0.5, make_rng(0, "t"))
    assert int((~labels).sum()) == 3
    for row in range(6):
        same = np.array_equal(swapped.attribute_ids[row], batch.attribute_ids[row])
        assert same == bool(labels[row])


def test_swap_attributes_needs_two_attributes(tokenizer):
    """Test triplet matching on a graph with one attribute term"""
    kg = KnowledgeGraph([Triplet("AC", "r", "x"), Triplet("DE", "r", "x")])
    batch = encode_triplets(kg, [0, 1], tokenizer)
    with pytest.raises(ConstructionError):
        swap_attributes(batch, kg, tokenizer, 0.5, make_rng(0))


# ---------------------------------------------------------------------------
# Masking
# ---------------------------------------------------------------------------


def test_selection_count_rounds_half_up():
    """Test round-half-up with a floor of one selected residue"""
    assert selection_count(8, 0.2) == 2
    assert selection_count(10, 0.15) == 2
    assert selection_count(3, 0.15) == 1
    assert selection_count(0, 0.2) == 0


def test_masking_labels_and_untouched_positions(synthetic_kg, tokenizer):
    """Test labels hold originals at selected positions and nothing else changes"""
    batch = encode_triplets(synthetic_kg, list(range(8)), tokenizer)
    masked = apply_masking(batch, 0.2, seed=5)

    sel = masked.selected
    assert np.all(masked.labels[sel] == batch.protein_ids[sel])
    assert np.all(masked.labels[~sel] == IGNORE_LABEL)
    assert np.array_equal(masked.protein_ids[~sel], batch.protein_ids[~sel])
    specials = np.isin(batch.protein_ids, [PAD, CLS, SEP])
    assert not np.any(sel & specials)
    # 8 residues per protein at ratio 0.2
    assert sel.sum(axis=1).tolist() == [2] * 8


def test_masking_is_deterministic(synthetic_kg, tokenizer):
    """Test a fixed seed reproduces the same corruption"""
    batch = encode_triplets(synthetic_kg, list(range(8)), tokenizer)
    a = apply_masking(batch, 0.25, seed=11)
    b = apply_masking(batch, 0.25, seed=11)
    assert np.array_equal(a.protein_ids, b.protein_ids)
    assert np.array_equal(a.labels, b.labels)


def test_masking_corruption_mix():
    """Test the 80/10/10 mask/random/keep split on a large batch"""
    rng = np.random.default_rng(0)
    ids = np.concatenate(
        [np.full((200, 1), CLS), rng.integers(5, 25, size=(200, 100)), np.full((200, 1), SEP)],
        axis=1,
    )
    batch = TokenBatch(ids, ids[:, :3], ids[:, :3], np.arange(200))
    masked = apply_masking(batch, 0.2, seed=1)
    codes = masked.corruption[masked.selected]
    assert codes.size == 200 * 20
    assert np.mean(codes == Corruption.MASK) == pytest.approx(0.8, abs=0.03)
    assert np.mean(codes == Corruption.RANDOM) == pytest.approx(0.1, abs=0.02)
    assert np.mean(codes == Corruption.KEEP) == pytest.approx(0.1, abs=0.02)
    assert np.all(masked.protein_ids[masked.corruption == Corruption.MASK] == MASK)


def test_masking_ratio_bounds(synthetic_kg, tokenizer):
    """Test mask ratios outside (0, 1) are rejected"""
    batch = encode_triplets(synthetic_kg, [0], tokenizer)
    with pytest.raises(ContractError):
        apply_masking(batch, 0.0, seed=0)


# ---------------------------------------------------------------------------
# Synthetic data and seeding
# ---------------------------------------------------------------------------


def test_knowledge_dependent_attribute_spells_protein():
    """Test each attribute is the protein spelled out letter by letter"""
    kg = generate_synthetic_kg(4, 10, SyntheticMode.KNOWLEDGE_DEPENDENT, seed=2)
    for t in kg:
        assert t.attribute == spell(t.protein)
        assert len(t.protein) == 10


def test_random_mode_attribute_is_unrelated():
    """Test random mode spells a different sequence"""
    kg = generate_synthetic_kg(20, 12, SyntheticMode.RANDOM, seed=2)
    assert sum(t.attribute == spell(t.protein) for t in kg) == 0


def test_derive_seed_depends_on_labels():
    """Test derived seeds are stable and distinct per label path"""
    assert derive_seed(3, "init", "encoder") == derive_seed(3, "init", "encoder")
    assert derive_seed(3, "init", "encoder") != derive_seed(3, "init", "decoder")
    assert derive_seed(3, "x") != derive_seed(4, "x")
    assert make_rng(1, "a").integers(1 << 30) == make_rng(1, "a").integers(1 << 30)
