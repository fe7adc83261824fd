"""
Tests for the checkpoint file format and knowledge-embedding import.
"""

import json
import struct

import numpy as np
import pytest

from core.exceptions import CheckpointCorruptionError, CheckpointVersionError
from models.config import ModelConfig
from models.keap import init_parameters
from models.parameters import ParamGroup
from training.checkpoint import (
    MAGIC,
    load_checkpoint,
    load_knowledge_embeddings,
    read_tensor_file,
    save_checkpoint,
    save_knowledge_embeddings,
    write_tensor_file,
)
from training.state import TrainState


@pytest.fixture
def state(tiny_config, tiny_train) -> TrainState:
    state = TrainState.fresh(tiny_config, tiny_train)
    state.step = 4
    state.optimizer.step = 4
    state.optimizer.m["head.mlm.b"][:] = 0.25
    state.rng.random(3)
    return state


def test_checkpoint_roundtrip(state, tmp_path):
    """Test parameters, moments, step, configs and RNG state survive a save/load"""
    path = save_checkpoint(state, tmp_path / "ckpt" / "a.ckpt")
    loaded = load_checkpoint(path, expected=state.model_config)

    assert loaded.step == 4
    assert loaded.optimizer.step == 4
    assert loaded.model_config == state.model_config
    assert loaded.train_config == state.train_config
    assert list(loaded.params) == list(state.params)
    for name, tensor in state.params.items():
        np.testing.assert_array_equal(loaded.params[name].data, tensor.data)
        assert loaded.params.group_of(name) is state.params.group_of(name)
    np.testing.assert_array_equal(loaded.optimizer.m["head.mlm.b"], 0.25)
    assert set(loaded.optimizer.m) == set(state.params.learnable())
    assert loaded.rng.random() == state.rng.random()


def test_frozen_flags_restored(state, tmp_path):
    """Test knowledge tensors load back frozen"""
    loaded = load_checkpoint(save_checkpoint(state, tmp_path / "a.ckpt"))
    assert set(loaded.params.frozen()) == set(state.params.names(ParamGroup.KNOWLEDGE))


def test_model_config_mismatch(state, tmp_path):
    """Test loading into a different architecture is a version error"""
    path = save_checkpoint(state, tmp_path / "a.ckpt")
    other = ModelConfig(**{**state.model_config.model_dump(), "hidden_dim": 32})
    with pytest.raises(CheckpointVersionError):
        load_checkpoint(path, expected=other)


def test_truncated_blob(state, tmp_path):
    """Test a checkpoint missing its final bytes is reported as corrupt"""
    path = save_checkpoint(state, tmp_path / "a.ckpt")
    path.write_bytes(path.read_bytes()[:-4])
    with pytest.raises(CheckpointCorruptionError):
        load_checkpoint(path)


def test_bad_magic(tmp_path):
    """Test a file that is not a checkpoint"""
    path = tmp_path / "x.ckpt"
    path.write_bytes(b"NOTACKPT" + b"\x00" * 16)
    with pytest.raises(CheckpointCorruptionError):
        read_tensor_file(path)


def test_manifest_entries_must_tile_blob(tmp_path):
    """Test overlapping entries are rejected even when the blob length matches"""
    manifest = {
        "format_version": 1,
        "blob_length": 8,
        "entries": [
            {"name": "a", "kind": "param", "shape": [1], "offset": 0, "length": 4},
            {"name": "b", "kind": "param", "shape": [1], "offset": 0, "length": 4},
        ],
    }
    encoded = json.dumps(manifest).encode("utf-8")
    path = tmp_path / "x.ckpt"
    path.write_bytes(struct.pack("<8sQ", MAGIC, len(encoded)) + encoded + b"\x00" * 8)
    with pytest.raises(CheckpointCorruptionError):
        read_tensor_file(path)


def test_unknown_format_version(tmp_path):
    """Test a newer format version is refused"""
    manifest = {"format_version": 99, "blob_length": 0, "entries": []}
    encoded = json.dumps(manifest).encode("utf-8")
    path = tmp_path / "x.ckpt"
    path.write_bytes(struct.pack("<8sQ", MAGIC, len(encoded)) + encoded)
    with pytest.raises(CheckpointVersionError):
        read_tensor_file(path)


def test_plain_tensor_file_is_not_a_training_state(tmp_path):
    """Test a tensor file without configs cannot be resumed from"""
    path = tmp_path / "plain.bin"
    write_tensor_file(path, [("w", "param", np.ones((2, 2)), "encoder")], {})
    manifest, records = read_tensor_file(path)
    assert records[0][1].shape == (2, 2)
    with pytest.raises(CheckpointVersionError):
        load_checkpoint(path)


def test_knowledge_embeddings_roundtrip(tiny_config, tmp_path):
    """Test exported knowledge tensors replace another model's frozen weights"""
    source = init_parameters(tiny_config, seed=1)
    target = init_parameters(tiny_config, seed=2)
    path = save_knowledge_embeddings(source, tmp_path / "knowledge.bin")

    replaced = load_knowledge_embeddings(path, target)
    assert sorted(replaced) == sorted(source.names(ParamGroup.KNOWLEDGE))
    for name in replaced:
        np.testing.assert_array_equal(target[name].data, source[name].data)
        assert not target[name].requires_grad
    assert not np.array_equal(target["encoder.token_embed"].data, source["encoder.token_embed"].data)


def test_knowledge_embedding_shape_mismatch(tiny_config, tmp_path):
    """Test knowledge tensors of the wrong shape are refused"""
    wide = ModelConfig(**{**tiny_config.model_dump(), "hidden_dim": 32})
    path = save_knowledge_embeddings(init_parameters(wide, seed=0), tmp_path / "k.bin")
    with pytest.raises(CheckpointVersionError):
        load_knowledge_embeddings(path, init_parameters(tiny_config, seed=0))
