"""
Subcommand implementations. Each returns a process exit code and prints
its machine-readable result to stdout; logs go to stderr.
"""

import json
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Set, Tuple

import numpy as np
import pandas as pd
from pydantic import ValidationError

from cli.run_config import RunConfig, explicit_model_keys, write_resolved
from core.config.settings import RunSettings, get_run_root
from core.exceptions import CheckpointVersionError, ConfigurationError, ContractError
from core.logging.logger import get_logger
from core.seeding import derive_seed, make_rng
from data.batching import encode_triplets, swap_attributes
from data.masking import apply_masking
from data.synthetic import SyntheticMode, generate_synthetic_kg
from data.triplets import KnowledgeGraph, filter_leakage, load_holdout, load_triplets
from data.vocab import TextVocabulary, TripletTokenizer
from engine.gradcheck import GradCheckReport, check_gradients, sample_coordinates
from evaluation.contacts import RangeBucket, metric_name
from evaluation.probes import run_affinity_task, run_contact_task, run_ppi_task, run_similarity_task
from evaluation.reports import MetricReport, write_reports
from evaluation.toy import (
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
from models.config import ModelConfig, Variant
from models.keap import KeapModel
from training.checkpoint import load_checkpoint, load_knowledge_embeddings
from training.trainer import Trainer, build_tokenizer, evaluate_mlm, write_trace

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3

# Tiny architecture the gradient check runs on unless overridden
GRADCHECK_DEFAULTS: Dict[str, Any] = {
    "hidden_dim": 16,
    "encoder_layers": 1,
    "decoder_blocks": 2,
    "heads": 2,
    "ffn_dim": 32,
    "knowledge_layers": 1,
    "text_vocab_size": 32,
    "max_protein_len": 8,
    "max_relation_len": 4,
    "max_attribute_len": 8,
}

# Small enough that the default ablation grid finishes on one CPU core
ABLATE_DEFAULTS: Dict[str, Any] = {
    "hidden_dim": 32,
    "encoder_layers": 1,
    "decoder_blocks": 1,
    "heads": 2,
    "ffn_dim": 64,
    "knowledge_layers": 1,
    "max_protein_len": 34,
    "max_attribute_len": 34,
    "steps": 300,
    "batch_size": 16,
    "peak_lr": 3e-3,
    "n": 500,
}


def _emit(payload: Any) -> None:
    print(json.dumps(payload, indent=2, default=str))


def _require(value: Optional[Path], key: str, command: str) -> Path:
    if value is None:
        raise ConfigurationError(f"{command} needs --{key.replace('_', '-')}")
    path = Path(value)
    if not path.exists():
        raise FileNotFoundError(f"{key} file not found: {path}")
    return path


def prepare_run_dir(command: str, config: RunConfig) -> Path:
    """<run root>/<run_name or command-fingerprint>, with the resolved config written into it"""
    name = config.run_name or f"{command}-{config.fingerprint()}"
    run_dir = get_run_root() / name
    run_dir.mkdir(parents=True, exist_ok=True)
    write_resolved(config, run_dir)
    logger.info("run_dir_ready", command=command, run_dir=str(run_dir))
    return run_dir


def protein_tokenizer(config: ModelConfig) -> TripletTokenizer:
    """Tokenizer for protein-only tasks; knowledge text is never tokenized"""
    return TripletTokenizer(
        TextVocabulary([]),
        max_protein_len=config.max_protein_len,
        max_relation_len=config.max_relation_len,
        max_attribute_len=config.max_attribute_len,
    )


# ---------------------------------------------------------------------------
# pretrain
# ---------------------------------------------------------------------------


def cmd_pretrain(config: RunConfig, explicit: Set[str]) -> int:
    triplets = _require(config.triplets, "triplets", "pretrain")
    run_dir = prepare_run_dir("pretrain", config)

    kg = load_triplets(triplets, config.residue_policy)
    leakage = None
    if config.holdout is not None:
        holdout = load_holdout(_require(config.holdout, "holdout", "pretrain"))
        kg, leakage = filter_leakage(kg, holdout)
        report_path = run_dir / "leakage_report.json"
        report_path.write_text(leakage.model_dump_json(indent=2), encoding="utf-8")
    if len(kg) == 0:
        raise ContractError("no triplets left to train on")

    tokenizer = build_tokenizer(kg, config.model, config.text_min_freq)
    tokenizer.text.save(run_dir / "text_vocab.json")

    train_config = config.train
    if train_config.checkpoint_dir is None:
        train_config = train_config.model_copy(update={"checkpoint_dir": run_dir / "checkpoints"})

    state = None
    if config.resume is not None:
        state = load_checkpoint(_require(config.resume, "resume", "pretrain"), expected=config.model)
        state.train_config = train_config
    trainer = Trainer(config.model, train_config, kg, tokenizer, state)
    if config.knowledge_embeddings is not None:
        embeddings = _require(config.knowledge_embeddings, "knowledge_embeddings", "pretrain")
        load_knowledge_embeddings(embeddings, trainer.state.params)

    result = trainer.run()
    trace_path = write_trace(result.trace, run_dir / "loss.csv")
    _emit(
        {
            "run_dir": run_dir,
            "steps": result.state.step,
            "trace": trace_path,
            "final_loss": float(result.trace["loss"].iloc[-1]) if len(result.trace) else None,
            "leakage": leakage.model_dump() if leakage is not None else None,
        }
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# gradcheck
# ---------------------------------------------------------------------------


def check_model_gradients(
    model_config: ModelConfig,
    seed: int = 0,
    samples: int = 100,
    batch_size: int = 2,
    step: float = 1e-4,
    tolerance: float = 1e-3,
    corrupt: Optional[str] = None,
    max_params: Optional[int] = None,
) -> GradCheckReport:
    """
    Finite-difference check of the full masked-modeling loss on a synthetic batch.

    Args:
        model_config: architecture to check (should be tiny)
        seed: root seed for weights, data, masking and coordinate sampling
        samples: minimum number of parameter coordinates to check
        batch_size: triplets in the probe batch
        step: central-difference step
        tolerance: maximum relative error
        corrupt: name of a tensor whose analytic gradient is deliberately
            perturbed, to confirm the check can fail
        max_params: learnable-parameter cap (defaults to the run settings)

    Returns:
        GradCheckReport
    """
    cap = RunSettings().max_gradcheck_params if max_params is None else max_params
    model = KeapModel.initialize(model_config, seed)
    n_params = model.params.num_parameters(learnable_only=True)
    if n_params > cap:
        raise ConfigurationError(
            f"gradient check is limited to {cap} learnable parameters, model has {n_params}"
        )

    residues = max(1, model_config.max_protein_len - 2)
    kg = generate_synthetic_kg(batch_size, residues, seed=derive_seed(seed, "gradcheck", "data"))
    tokenizer = build_tokenizer(kg, model_config)
    batch = encode_triplets(kg, list(range(batch_size)), tokenizer)
    match_labels = None
    if model_config.triplet_match:
        batch, match_labels = swap_attributes(
            batch, kg, tokenizer, model_config.match_fraction, make_rng(seed, "gradcheck", "match")
        )
    masked = apply_masking(batch, model_config.mask_ratio, derive_seed(seed, "gradcheck", "mask"))

    learnable = model.params.learnable()
    if corrupt is not None and corrupt not in learnable:
        raise ConfigurationError(f"cannot corrupt unknown learnable tensor {corrupt!r}")
    coordinates = sample_coordinates(learnable, samples, make_rng(seed, "gradcheck", "coords"))

    def hook(grads: Dict[str, np.ndarray]) -> None:
        if corrupt is not None:
            grads[corrupt] = grads[corrupt] + 1.0

    return check_gradients(
        lambda: model.loss(masked, masked.labels, match_labels).total,
        dict(model.params.items()),
        coordinates,
        step=step,
        tolerance=tolerance,
        grad_hook=hook,
    )


def cmd_gradcheck(config: RunConfig, explicit: Set[str]) -> int:
    run_dir = prepare_run_dir("gradcheck", config)
    report = check_model_gradients(
        config.model,
        seed=config.seed,
        samples=config.gradcheck_samples,
        batch_size=config.gradcheck_batch,
        step=config.gradcheck_step,
        tolerance=config.gradcheck_tolerance,
        corrupt=config.gradcheck_corrupt,
    )
    entries = pd.DataFrame(
        [
            {
                "tensor": e.tensor,
                "index": ",".join(str(i) for i in e.index),
                "analytic": e.analytic,
                "numeric": e.numeric,
                "rel_error": e.rel_error,
                "passed": e.passed,
            }
            for e in report.entries
        ]
    )
    entries.to_csv(run_dir / "gradcheck.csv", index=False)
    _emit(
        {
            "samples": len(report.entries),
            "tensors": len({e.tensor for e in report.entries}),
            "max_rel_error": report.max_rel_error,
            "tolerance": report.tolerance,
            "passed": report.passed,
            "failing_tensors": report.failing_tensors,
        }
    )
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


# ---------------------------------------------------------------------------
# ablate
# ---------------------------------------------------------------------------


def parse_variant(label: str) -> Tuple[Variant, bool]:
    """'cascaded', 'parallel', 'no_pik', optionally suffixed '+match'"""
    base, _, suffix = label.partition("+")
    if suffix not in ("", "match"):
        raise ConfigurationError(f"unknown ablation variant {label!r}")
    try:
        return Variant(base), suffix == "match"
    except ValueError:
        raise ConfigurationError(f"unknown ablation variant {label!r}") from None


def _ablation_graph(config: RunConfig) -> KnowledgeGraph:
    if config.triplets is not None:
        return load_triplets(_require(config.triplets, "triplets", "ablate"), config.residue_policy)
    return generate_synthetic_kg(
        config.n, config.seq_len, SyntheticMode(config.mode), seed=derive_seed(config.seed, "synthetic")
    )


def _report_value(reports: List[MetricReport], bucket: RangeBucket, divisor: int) -> float:
    for report in reports:
        if report.metric == metric_name(divisor) and report.params.get("bucket") == bucket.value:
            return report.value
    return math.nan


def _ablation_cells(config: RunConfig) -> List[Tuple[str, float, ModelConfig]]:
    """Validate every (variant, mask ratio) cell before any training starts"""
    cells = []
    for label in config.variants:
        variant, match = parse_variant(label)
        for ratio in config.mask_ratios:
            update = {"variant": variant, "triplet_match": match, "mask_ratio": ratio}
            try:
                cell = ModelConfig(**{**config.model.model_dump(), **update})
            except ValidationError as e:
                raise ConfigurationError(
                    f"invalid ablation cell {label!r} at mask ratio {ratio}: {e}"
                ) from e
            cells.append((label, ratio, cell))
    return cells


def cmd_ablate(config: RunConfig, explicit: Set[str]) -> int:
    cells = _ablation_cells(config)
    run_dir = prepare_run_dir("ablate", config)
    kg = _ablation_graph(config)
    contact_records = generate_contact_dataset(config.probe_proteins, config.probe_length, config.seed)
    train_config = config.train.model_copy(update={"checkpoint_dir": None})

    rows = []
    for label, ratio, cell in cells:
        tokenizer = build_tokenizer(kg, cell, config.text_min_freq)
        result = Trainer(cell, train_config, kg, tokenizer).run()
        model = KeapModel(cell, result.state.params)
        evaluation = evaluate_mlm(
            model, kg, tokenizer, train_config.batch_size, derive_seed(config.seed, "ablate", "eval")
        )
        contact = run_contact_task(
            model, contact_records, tokenizer, seed=config.seed, steps=config.probe_steps
        )
        row = {
            "variant": label,
            "mask_ratio": ratio,
            "final_loss": evaluation.loss,
            "train_loss_last": float(result.trace["loss"].iloc[-1]),
            "masked_accuracy": evaluation.accuracy,
            "match_accuracy": (
                evaluation.match_accuracy if evaluation.match_accuracy is not None else math.nan
            ),
            "contact_medium_p_at_l2": _report_value(contact, RangeBucket.MEDIUM, 2),
        }
        logger.info("ablation_cell_done", **row)
        rows.append(row)

    table = pd.DataFrame(rows)
    table.to_csv(run_dir / "ablation.csv", index=False)
    print(table.to_csv(index=False), end="")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------


def cmd_eval(config: RunConfig, explicit: Set[str]) -> int:
    checkpoint = _require(config.checkpoint, "checkpoint", "eval")
    data = _require(config.data, "data", "eval")
    if config.task is None:
        raise ConfigurationError("eval needs --task contact|ppi|affinity|similarity")
    try:
        task = ToyTask(config.task if config.task != "contact" else "contacts")
    except ValueError:
        raise ConfigurationError(f"unknown eval task {config.task!r}") from None

    state = load_checkpoint(checkpoint)
    for key in sorted(explicit_model_keys(explicit)):
        if getattr(state.model_config, key) != getattr(config.model, key):
            raise CheckpointVersionError(
                f"{checkpoint}: {key}={getattr(state.model_config, key)!r} but the run "
                f"configuration sets {getattr(config.model, key)!r}"
            )
    run_dir = prepare_run_dir("eval", config)
    model = KeapModel(state.model_config, state.params)
    tokenizer = protein_tokenizer(state.model_config)

    if task is ToyTask.CONTACTS:
        reports = run_contact_task(
            model,
            read_contact_jsonl(data),
            tokenizer,
            seed=config.seed,
            test_fraction=config.test_fraction,
            steps=config.probe_steps,
        )
    elif task is ToyTask.PPI:
        reports = run_ppi_task(
            model,
            read_pair_tsv(data, task),
            tokenizer,
            seed=config.seed,
            test_fraction=config.test_fraction,
            average=config.f1_average,
        )
    elif task is ToyTask.AFFINITY:
        records = read_pair_tsv(data, task)
        reports = run_affinity_task(model, records, tokenizer, config.seed, config.kfold)
    else:
        reports = run_similarity_task(model, read_pair_tsv(data, task), tokenizer)

    write_reports(reports, run_dir / "reports.jsonl")
    for report in reports:
        print(report.model_dump_json())
    return EXIT_OK


# ---------------------------------------------------------------------------
# filter-kg / gen-synth
# ---------------------------------------------------------------------------


def cmd_filter_kg(config: RunConfig, explicit: Set[str]) -> int:
    triplets = _require(config.triplets, "triplets", "filter-kg")
    holdout = _require(config.holdout, "holdout", "filter-kg")
    if config.out is None:
        raise ConfigurationError("filter-kg needs --out")

    kg, report = filter_leakage(load_triplets(triplets, config.residue_policy), load_holdout(holdout))
    Path(config.out).parent.mkdir(parents=True, exist_ok=True)
    kg.write_tsv(config.out)
    print(report.model_dump_json())
    return EXIT_OK


def cmd_gen_synth(config: RunConfig, explicit: Set[str]) -> int:
    if config.out is None:
        raise ConfigurationError("gen-synth needs --out")
    out = Path(config.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    seed = config.seed
    n_proteins = max(2, config.n // 2)

    if config.mode in {m.value for m in SyntheticMode}:
        generate_synthetic_kg(config.n, config.seq_len, SyntheticMode(config.mode), seed).write_tsv(out)
    elif config.mode == ToyTask.CONTACTS.value:
        write_contact_jsonl(generate_contact_dataset(config.n, config.seq_len, seed), out)
    elif config.mode == ToyTask.PPI.value:
        records = generate_ppi_dataset(config.n, n_proteins, config.seq_len, seed)
        write_pair_tsv(records, out, ToyTask.PPI)
    elif config.mode == ToyTask.AFFINITY.value:
        records = generate_affinity_dataset(config.n, n_proteins, config.seq_len, seed)
        write_pair_tsv(records, out, ToyTask.AFFINITY)
    elif config.mode == ToyTask.SIMILARITY.value:
        records = generate_similarity_dataset(config.n, n_proteins, config.seq_len, seed)
        write_pair_tsv(records, out, ToyTask.SIMILARITY)
    else:
        raise ConfigurationError(f"unknown gen-synth mode {config.mode!r}")

    _emit({"mode": config.mode, "records": config.n, "out": out})
    return EXIT_OK
