"""
Shared fixtures: a tiny architecture, a small synthetic knowledge graph and
an isolated run directory.
"""

from pathlib import Path

import pytest

from data.synthetic import generate_synthetic_kg
from data.triplets import KnowledgeGraph
from data.vocab import TripletTokenizer
from models.config import ModelConfig
from training.config import TrainConfig
from training.trainer import build_tokenizer


@pytest.fixture
def tiny_config() -> ModelConfig:
    return ModelConfig(
        hidden_dim=16,
        encoder_layers=1,
        decoder_blocks=1,
        heads=2,
        ffn_dim=32,
        knowledge_layers=1,
        text_vocab_size=32,
        max_protein_len=10,
        max_relation_len=4,
        max_attribute_len=10,
    )


@pytest.fixture
def tiny_train() -> TrainConfig:
    return TrainConfig(steps=6, batch_size=4, peak_lr=1e-3, warmup_ratio=0.25, seed=7)


@pytest.fixture
def synthetic_kg() -> KnowledgeGraph:
    return generate_synthetic_kg(12, 8, seed=0)


@pytest.fixture
def tokenizer(synthetic_kg: KnowledgeGraph, tiny_config: ModelConfig) -> TripletTokenizer:
    return build_tokenizer(synthetic_kg, tiny_config)


@pytest.fixture
def run_root(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> Path:
    root = tmp_path / "runs"
    monkeypatch.setenv("KEAP_RUN_DIR", str(root))
    return root


@pytest.fixture
def triplet_file(tmp_path: Path, synthetic_kg: KnowledgeGraph) -> Path:
    path = tmp_path / "triplets.tsv"
    synthetic_kg.write_tsv(path)
    return path
