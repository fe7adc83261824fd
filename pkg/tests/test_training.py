"""
Tests for the learning-rate schedule, AdamW, clipping and the training loop.
"""

import math

import numpy as np
import pandas as pd
import pytest

from core.exceptions import ContractError, NumericalError
from core.seeding import derive_seed
from data.batching import make_batches
from data.masking import Corruption, apply_masking
from data.synthetic import generate_synthetic_kg
from data.triplets import KnowledgeGraph
from models.config import ModelConfig, Variant
from models.keap import KeapModel, init_parameters
from training.checkpoint import load_checkpoint
from training.config import TrainConfig
from training.optimizer import AdamWState, adamw_step, clip_grad_norm, global_norm, lr_at
from training.trainer import Trainer, build_tokenizer, evaluate_mlm, train, write_trace

# ---------------------------------------------------------------------------
# Schedule
# ---------------------------------------------------------------------------


def test_lr_warmup_and_decay():
    """Test linear warmup to the peak and linear decay to zero"""
    peak = 1e-3
    assert lr_at(0, 100, 0.08, peak) == 0.0
    assert lr_at(4, 100, 0.08, peak) == pytest.approx(peak / 2)
    assert lr_at(8, 100, 0.08, peak) == pytest.approx(peak)
    assert lr_at(54, 100, 0.08, peak) == pytest.approx(peak / 2)
    assert lr_at(100, 100, 0.08, peak) == 0.0


def test_lr_without_warmup_starts_at_peak():
    """Test a zero warmup ratio begins the decay immediately"""
    assert lr_at(0, 10, 0.0, 1.0) == pytest.approx(1.0)
    assert lr_at(5, 10, 0.0, 1.0) == pytest.approx(0.5)


def test_warmup_ratio_validated():
    """Test warmup ratios outside [0, 1) are rejected"""
    with pytest.raises(ValueError):
        TrainConfig(warmup_ratio=1.0)


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------


def test_clip_grad_norm_rescales_jointly():
    """Test clipping to unit norm across tensors, reporting the pre-clip norm"""
    grads = {"a": np.array([3.0]), "b": np.array([4.0])}
    clipped, norm = clip_grad_norm(grads, 1.0)
    assert norm == pytest.approx(5.0)
    assert global_norm(clipped) == pytest.approx(1.0, rel=1e-5)
    assert clipped["a"][0] / clipped["b"][0] == pytest.approx(0.75)


def test_clip_grad_norm_leaves_small_gradients():
    """Test gradients under the limit pass through unchanged"""
    grads = {"a": np.array([0.1, 0.2])}
    clipped, _ = clip_grad_norm(grads, 1.0)
    assert clipped is grads


def test_adamw_first_step_moves_by_lr(tiny_config):
    """Test the bias-corrected first update is lr x sign(grad) and frozen tensors stay put"""
    params = init_parameters(tiny_config, seed=0)
    before = {n: t.data.copy() for n, t in params.items()}
    state = AdamWState.zeros_like(params)
    grads = {n: np.full(t.shape, 0.5, dtype=np.float32) for n, t in params.learnable().items()}
    grads["head.mlm.b"] = -grads["head.mlm.b"]

    adamw_step(params, state, grads, lr=0.01, weight_decay=0.0)

    assert state.step == 1
    np.testing.assert_allclose(params["head.mlm.w"].data, before["head.mlm.w"] - 0.01, atol=1e-6)
    np.testing.assert_allclose(params["head.mlm.b"].data, before["head.mlm.b"] + 0.01, atol=1e-6)
    for name in params.frozen():
        np.testing.assert_array_equal(params[name].data, before[name])


def test_adamw_weight_decay_is_decoupled(tiny_config):
    """Test a zero gradient still shrinks weights by lr x weight_decay"""
    params = init_parameters(tiny_config, seed=0)
    w = params["head.mlm.w"].data.copy()
    state = AdamWState.zeros_like(params)
    adamw_step(params, state, {}, lr=0.1, weight_decay=0.5)
    np.testing.assert_allclose(params["head.mlm.w"].data, w * 0.95, rtol=1e-6)


def test_adamw_rejects_wrong_shape(tiny_config):
    """Test a gradient with the wrong shape"""
    params = init_parameters(tiny_config, seed=0)
    state = AdamWState.zeros_like(params)
    with pytest.raises(ContractError):
        adamw_step(params, state, {"head.mlm.b": np.zeros(3)}, lr=0.1)


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------


def test_trace_columns_and_lr(synthetic_kg, tokenizer, tiny_config, tiny_train):
    """Test one row per step with the scheduled learning rate"""
    result = train(tiny_config, tiny_train, synthetic_kg, tokenizer)
    trace = result.trace
    assert list(trace.columns) == ["step", "lr", "loss"]
    assert trace["step"].tolist() == list(range(6))
    assert trace["lr"].iloc[0] == 0.0
    assert trace["lr"].iloc[1] == pytest.approx(1e-3)
    assert np.all(np.isfinite(trace["loss"]))
    assert result.state.step == 6


def test_runs_are_reproducible(synthetic_kg, tokenizer, tiny_config, tiny_train, tmp_path):
    """Test identical configs and seeds give byte-identical traces"""
    a = write_trace(train(tiny_config, tiny_train, synthetic_kg, tokenizer).trace, tmp_path / "a.csv")
    b = write_trace(train(tiny_config, tiny_train, synthetic_kg, tokenizer).trace, tmp_path / "b.csv")
    assert a.read_bytes() == b.read_bytes()


def test_resume_matches_uninterrupted_run(synthetic_kg, tokenizer, tiny_config, tiny_train, tmp_path):
    """Test resuming from a mid-run checkpoint replays the remaining steps exactly"""
    cfg = tiny_train.model_copy(update={"checkpoint_interval": 3, "checkpoint_dir": tmp_path / "full"})
    full = train(tiny_config, cfg, synthetic_kg, tokenizer)
    assert (tmp_path / "full" / "step_000003.ckpt").exists()
    assert (tmp_path / "full" / "last.ckpt").exists()

    state = load_checkpoint(tmp_path / "full" / "step_000003.ckpt", expected=tiny_config)
    assert state.step == 3
    resumed_cfg = cfg.model_copy(update={"checkpoint_dir": tmp_path / "resumed"})
    resumed = Trainer(tiny_config, resumed_cfg, synthetic_kg, tokenizer, state).run()

    pd.testing.assert_frame_equal(
        resumed.trace.reset_index(drop=True), full.trace.iloc[3:].reset_index(drop=True)
    )
    for name, tensor in full.state.params.items():
        np.testing.assert_array_equal(resumed.state.params[name].data, tensor.data)


def test_triplet_match_adds_trace_column(synthetic_kg, tokenizer, tiny_config, tiny_train):
    """Test the match loss is traced when triplet matching is on"""
    config = tiny_config.model_copy(update={"triplet_match": True})
    trace = train(config, tiny_train, synthetic_kg, tokenizer).trace
    assert list(trace.columns) == ["step", "lr", "loss", "match_loss"]
    assert np.all(trace["match_loss"] > 0)


def test_non_finite_loss_raises(synthetic_kg, tokenizer, tiny_config, tiny_train):
    """Test a NaN loss stops training with the failing step"""
    trainer = Trainer(tiny_config, tiny_train, synthetic_kg, tokenizer)
    trainer.state.params["head.mlm.b"].data[:] = np.nan
    with pytest.raises(NumericalError) as err:
        trainer.run()
    assert err.value.step == 0


def test_empty_graph_rejected(tiny_config, tiny_train):
    """Test training needs at least one triplet"""
    with pytest.raises(ContractError):
        Trainer(tiny_config, tiny_train, KnowledgeGraph([]))


@pytest.mark.slow
def test_training_reduces_masked_loss(tiny_config):
    """Test masked-token loss falls well below its initial value"""
    kg = generate_synthetic_kg(32, 8, seed=4)
    tokenizer = build_tokenizer(kg, tiny_config)
    cfg = TrainConfig(steps=150, batch_size=8, peak_lr=1e-2, warmup_ratio=0.1, seed=0)
    result = train(tiny_config, cfg, kg, tokenizer)
    losses = result.trace["loss"].to_numpy()
    assert losses[-20:].mean() < losses[:10].mean() - 0.1

    evaluation = evaluate_mlm(
        Trainer(tiny_config, cfg, kg, tokenizer, result.state).model, kg, tokenizer, seed=1
    )
    assert evaluation.num_masked > 0
    assert 0.0 <= evaluation.accuracy <= 1.0
    assert evaluation.match_accuracy is None


def test_training_leaves_knowledge_encoder_untouched(synthetic_kg, tokenizer, tiny_config):
    """Test frozen knowledge tensors are bitwise identical after training"""
    cfg = TrainConfig(steps=20, batch_size=4, peak_lr=1e-2, seed=0)
    trainer = Trainer(tiny_config, cfg, synthetic_kg, tokenizer)
    before = {n: t.data.copy() for n, t in trainer.state.params.frozen().items()}
    assert before
    result = trainer.run()
    for name, data in before.items():
        np.testing.assert_array_equal(result.state.params[name].data, data)
    assert set(result.state.optimizer.m) == set(result.state.params.learnable())


def test_evaluate_mlm_scores_mask_positions_only(synthetic_kg, tokenizer, tiny_config):
    """Test accuracy and loss count only [MASK] replacements, not kept or random ones"""
    model = KeapModel.initialize(tiny_config, seed=0)
    evaluation = evaluate_mlm(model, synthetic_kg, tokenizer, batch_size=64, seed=1)

    batch = next(make_batches(synthetic_kg, tokenizer, 64))
    masked = apply_masking(batch, tiny_config.mask_ratio, derive_seed(1, "eval-mask", 0))
    assert evaluation.num_masked == int((masked.corruption == Corruption.MASK).sum())
    assert evaluation.num_selected == int(masked.selected.sum())
    assert 0 < evaluation.num_masked <= evaluation.num_selected
    # an untrained head is close to uniform over the 25 residue classes
    assert evaluation.loss == pytest.approx(math.log(25), abs=0.3)
    assert evaluation.selected_loss == pytest.approx(math.log(25), abs=0.3)


@pytest.mark.slow
def test_knowledge_encoder_frozen_over_long_run(synthetic_kg, tokenizer, tiny_config):
    """Test 1,000 steps leave frozen tensors bitwise intact with zero gradients at every step"""
    cfg = TrainConfig(steps=1000, batch_size=4, peak_lr=1e-2, seed=0)
    trainer = Trainer(tiny_config, cfg, synthetic_kg, tokenizer)
    frozen = trainer.state.params.frozen()
    before = {n: t.data.copy() for n, t in frozen.items()}

    while trainer.state.step < cfg.steps:
        trainer.train_step()
        for name, tensor in frozen.items():
            assert tensor.grad is None or not np.any(tensor.grad), name

    for name, data in before.items():
        np.testing.assert_array_equal(trainer.state.params[name].data, data)


@pytest.mark.slow
def test_knowledge_injection_separates_variants():
    """Test knowledge lets cascaded decoding recover masked residues while no_pik stays at chance"""
    kg = generate_synthetic_kg(2000, 32, seed=0)
    config = ModelConfig(
        hidden_dim=32,
        encoder_layers=1,
        decoder_blocks=1,
        heads=2,
        ffn_dim=64,
        knowledge_layers=1,
        max_protein_len=34,
        max_relation_len=4,
        max_attribute_len=34,
    )
    cfg = TrainConfig(steps=5000, batch_size=16, peak_lr=3e-3, warmup_ratio=0.05, seed=0)
    tokenizer = build_tokenizer(kg, config)

    cascaded = Trainer(config, cfg, kg, tokenizer)
    cascaded.run()
    knowledge = evaluate_mlm(cascaded.model, kg, tokenizer, seed=1)
    assert knowledge.accuracy >= 0.95

    no_pik = Trainer(config.model_copy(update={"variant": Variant.NO_PIK}), cfg, kg, tokenizer)
    no_pik.run()
    baseline = evaluate_mlm(no_pik.model, kg, tokenizer, seed=1)
    # residues are i.i.d. uniform over 20 letters and hidden at [MASK] positions
    assert baseline.accuracy <= 0.08
    assert baseline.loss >= math.log(20) - 0.15
    assert baseline.loss - knowledge.loss > 1.0
