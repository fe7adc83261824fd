"""
Masked-language-model training loop.

Batch order, corruption and attribute swaps depend only on the root seed
and the step index (through the state RNG), so a run resumed from a
checkpoint replays exactly the steps an uninterrupted run would take.
"""

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
from scipy import special

from core.exceptions import ContractError, NumericalError
from core.logging.logger import LoggerMixin
from core.seeding import derive_seed
from data.batching import TokenBatch, batch_order, encode_triplets, make_batches, swap_attributes
from data.masking import Corruption, MaskedBatch, apply_masking
from data.triplets import KnowledgeGraph
from data.vocab import SPECIAL_TOKENS, TextVocabulary, TripletTokenizer
from engine.tensor import Graph, backward
from models.config import ModelConfig
from models.heads import match_accuracy, residue_targets
from models.keap import KeapModel
from training.checkpoint import save_checkpoint
from training.config import TrainConfig
from training.optimizer import adamw_step, clip_grad_norm, lr_at
from training.state import TrainState

TRACE_COLUMNS = ["step", "lr", "loss"]


def build_tokenizer(kg: KnowledgeGraph, config: ModelConfig, min_freq: int = 1) -> TripletTokenizer:
    """Word vocabulary from the graph's text, capped to fit the model's text embedding table"""
    vocab = TextVocabulary.build(
        kg.texts(), min_freq=min_freq, max_words=config.text_vocab_size - len(SPECIAL_TOKENS)
    )
    return TripletTokenizer(
        vocab,
        max_protein_len=config.max_protein_len,
        max_relation_len=config.max_relation_len,
        max_attribute_len=config.max_attribute_len,
    )


@dataclass
class TrainResult:
    state: TrainState
    trace: pd.DataFrame


@dataclass
class MlmEvaluation:
    """
    Reconstruction quality at positions replaced by ``[MASK]``.

    ``loss`` and ``accuracy`` cover only those positions, where the original
    residue is hidden from the input. The ``selected_*`` figures also count
    the kept and random-replaced positions.
    """

    loss: float
    accuracy: float
    num_masked: int
    selected_loss: float
    selected_accuracy: float
    num_selected: int
    match_accuracy: Optional[float] = None


class Trainer(LoggerMixin):
    """Runs AdamW updates over a knowledge graph until ``train_config.steps``"""

    def __init__(
        self,
        model_config: ModelConfig,
        train_config: TrainConfig,
        kg: KnowledgeGraph,
        tokenizer: Optional[TripletTokenizer] = None,
        state: Optional[TrainState] = None,
    ):
        if len(kg) == 0:
            raise ContractError("cannot train on an empty knowledge graph")
        self.model_config = model_config
        self.train_config = train_config
        self.kg = kg
        self.tokenizer = tokenizer or build_tokenizer(kg, model_config)
        self.state = state or TrainState.fresh(model_config, train_config)
        self.model = KeapModel(model_config, self.state.params)
        self._orders: Dict[int, np.ndarray] = {}

    @property
    def batches_per_epoch(self) -> int:
        return math.ceil(len(self.kg) / self.train_config.batch_size)

    def batch_for_step(self, step: int) -> TokenBatch:
        """The step-th batch of the endless epoch stream"""
        epoch, index = divmod(step, self.batches_per_epoch)
        if epoch not in self._orders:
            shuffle_seed = derive_seed(self.train_config.seed, "data", epoch)
            self._orders = {epoch: batch_order(len(self.kg), shuffle_seed)}
        size = self.train_config.batch_size
        positions = self._orders[epoch][index * size : (index + 1) * size]
        return encode_triplets(self.kg, positions.tolist(), self.tokenizer)

    def prepare(self, step: int) -> tuple[MaskedBatch, Optional[np.ndarray]]:
        batch = self.batch_for_step(step)
        match_labels = None
        if self.model_config.triplet_match:
            batch, match_labels = swap_attributes(
                batch, self.kg, self.tokenizer, self.model_config.match_fraction, self.state.rng
            )
        mask_seed = int(self.state.rng.integers(0, 2**63 - 1))
        return apply_masking(batch, self.model_config.mask_ratio, mask_seed), match_labels

    def train_step(self) -> Dict[str, float]:
        state = self.state
        cfg = self.train_config
        step = state.step
        lr = lr_at(step, cfg.steps, cfg.warmup_ratio, cfg.peak_lr)
        masked, match_labels = self.prepare(step)

        state.params.zero_grad()
        with Graph():
            out = self.model.loss(masked, masked.labels, match_labels)
            loss = out.total.item()
            if not math.isfinite(loss):
                raise NumericalError(step, f"non-finite loss {loss}", value=loss)
            backward(out.total)

        grads = {name: t.grad for name, t in state.params.learnable().items() if t.grad is not None}
        grads, grad_norm = clip_grad_norm(grads, cfg.clip_norm)
        if not math.isfinite(grad_norm):
            raise NumericalError(step, f"non-finite gradient norm {grad_norm}", value=grad_norm)
        adamw_step(state.params, state.optimizer, grads, lr, cfg.betas, cfg.eps, cfg.weight_decay)
        state.step += 1

        row = {"step": step, "lr": lr, "loss": loss}
        if out.match is not None:
            row["match_loss"] = out.match.item()
        self.log_step(step, lr, loss, grad_norm=grad_norm)
        return row

    def _maybe_checkpoint(self, final: bool = False) -> None:
        cfg = self.train_config
        if cfg.checkpoint_dir is None:
            return
        if final:
            save_checkpoint(self.state, Path(cfg.checkpoint_dir) / "last.ckpt")
        elif cfg.checkpoint_interval and self.state.step % cfg.checkpoint_interval == 0:
            save_checkpoint(self.state, Path(cfg.checkpoint_dir) / f"step_{self.state.step:06d}.ckpt")

    def run(self, until: Optional[int] = None) -> TrainResult:
        """
        Train from the current step to ``until`` (default: ``train_config.steps``).

        Returns:
            TrainResult with the final state and the trace of steps run here
        """
        stop = self.train_config.steps if until is None else min(until, self.train_config.steps)
        self.log_event(
            "training_started",
            start=self.state.step,
            stop=stop,
            triplets=len(self.kg),
            variant=self.model_config.variant.value,
            parameters=self.state.params.num_parameters(learnable_only=True),
        )
        rows: List[Dict[str, float]] = []
        try:
            while self.state.step < stop:
                rows.append(self.train_step())
                self._maybe_checkpoint()
        except NumericalError as e:
            self.log_error(e, {"step": e.step})
            raise
        self._maybe_checkpoint(final=True)

        columns = TRACE_COLUMNS + (["match_loss"] if self.model_config.triplet_match else [])
        trace = pd.DataFrame(rows, columns=columns)
        if rows:
            self.log_event("training_finished", step=self.state.step, final_loss=rows[-1]["loss"])
        return TrainResult(self.state, trace)


def train(
    model_config: ModelConfig,
    train_config: TrainConfig,
    kg: KnowledgeGraph,
    tokenizer: Optional[TripletTokenizer] = None,
) -> TrainResult:
    """Fresh run to ``train_config.steps``"""
    return Trainer(model_config, train_config, kg, tokenizer).run()


def write_trace(trace: pd.DataFrame, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    trace.to_csv(path, index=False)
    return path


def evaluate_mlm(
    model: KeapModel,
    kg: KnowledgeGraph,
    tokenizer: TripletTokenizer,
    batch_size: int = 64,
    seed: int = 0,
) -> MlmEvaluation:
    """
    Masked-token loss and accuracy over one pass of ``kg`` with fixed corruption.

    Nothing is recorded for backward, so this is safe on live parameters.
    """
    config = model.config
    nll_sum = {"mask": 0.0, "selected": 0.0}
    hit_sum = {"mask": 0.0, "selected": 0.0}
    counts = {"mask": 0, "selected": 0}
    match_hits = 0.0
    match_count = 0

    for i, batch in enumerate(make_batches(kg, tokenizer, batch_size)):
        match_labels = None
        if config.triplet_match:
            rng = np.random.Generator(np.random.PCG64(derive_seed(seed, "eval-match", i)))
            batch, match_labels = swap_attributes(batch, kg, tokenizer, config.match_fraction, rng)
        masked = apply_masking(batch, config.mask_ratio, derive_seed(seed, "eval-mask", i))
        out = model.loss(masked, masked.labels, match_labels)

        targets = residue_targets(masked.labels)
        log_probs = special.log_softmax(np.asarray(out.mlm_logits, dtype=np.float64), axis=-1)
        predicted = log_probs.argmax(axis=-1)
        for key, where in (
            ("mask", masked.corruption == Corruption.MASK),
            ("selected", masked.selected),
        ):
            rows = targets[where]
            nll_sum[key] -= float(np.take_along_axis(log_probs[where], rows[:, None], -1).sum())
            hit_sum[key] += float((predicted[where] == rows).sum())
            counts[key] += int(where.sum())
        if out.match_logits is not None and match_labels is not None:
            match_hits += match_accuracy(out.match_logits, match_labels) * len(match_labels)
            match_count += len(match_labels)

    if counts["mask"] == 0:
        raise ContractError("evaluate_mlm: no [MASK] positions in the graph")
    return MlmEvaluation(
        loss=nll_sum["mask"] / counts["mask"],
        accuracy=hit_sum["mask"] / counts["mask"],
        num_masked=counts["mask"],
        selected_loss=nll_sum["selected"] / counts["selected"],
        selected_accuracy=hit_sum["selected"] / counts["selected"],
        num_selected=counts["selected"],
        match_accuracy=match_hits / match_count if match_count else None,
    )
