"""
Run configuration: model + training + command options resolved from
defaults, a flat ``key = value`` file and ``--key value`` flags.
"""

import hashlib
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Set, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from core.exceptions import ConfigurationError
from data.triplets import ResiduePolicy
from models.config import ModelConfig
from training.config import TrainConfig

RESOLVED_FILENAME = "config.resolved"

# Keys whose values are comma-separated lists
_LIST_KEYS = {"betas", "variants", "mask_ratios"}


class RunConfig(BaseModel):
    """Every setting a command reads, with exactly one resolved value each"""

    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)

    run_name: Optional[str] = None
    triplets: Optional[Path] = None
    holdout: Optional[Path] = None
    residue_policy: ResiduePolicy = ResiduePolicy.REJECT
    text_min_freq: int = Field(default=1, ge=1)
    resume: Optional[Path] = None
    knowledge_embeddings: Optional[Path] = None

    # gradcheck
    gradcheck_samples: int = Field(default=100, ge=1)
    gradcheck_batch: int = Field(default=2, ge=1)
    gradcheck_step: float = Field(default=1e-4, gt=0.0)
    gradcheck_tolerance: float = Field(default=1e-3, gt=0.0)
    gradcheck_corrupt: Optional[str] = None

    # ablate
    variants: Tuple[str, ...] = ("cascaded", "parallel", "no_pik", "cascaded+match")
    mask_ratios: Tuple[float, ...] = (0.15, 0.20, 0.25)
    probe_proteins: int = Field(default=24, ge=2)
    probe_length: int = Field(default=40, ge=2)
    probe_steps: int = Field(default=150, ge=1)

    # eval
    checkpoint: Optional[Path] = None
    task: Optional[str] = None
    data: Optional[Path] = None
    test_fraction: float = Field(default=0.2, gt=0.0, lt=1.0)
    kfold: int = Field(default=10, ge=2)
    f1_average: str = "micro"

    # synthetic data (gen-synth, ablate without --triplets)
    mode: str = "knowledge_dependent"
    n: int = Field(default=2000, ge=1)
    seq_len: int = Field(default=32, ge=1)
    out: Optional[Path] = None

    model_config = ConfigDict(extra="forbid", frozen=True)

    @property
    def seed(self) -> int:
        return self.train.seed

    def fingerprint(self) -> str:
        return hashlib.sha256(render(self).encode("utf-8")).hexdigest()[:10]


_MODEL_KEYS: Set[str] = set(ModelConfig.model_fields)
_TRAIN_KEYS: Set[str] = set(TrainConfig.model_fields)
_RUN_KEYS: Set[str] = set(RunConfig.model_fields) - {"model", "train"}


def parse_config_text(text: str, source: str = "<config>") -> Dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment; later keys win"""
    values: Dict[str, str] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{source}:{line_no}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigurationError(f"{source}:{line_no}: empty key")
        values[key.replace("-", "_")] = value
    return values


def parse_flag_pairs(args: List[str]) -> Dict[str, str]:
    """``--key value`` and ``--key=value`` pairs, rightmost wins"""
    values: Dict[str, str] = {}
    i = 0
    while i < len(args):
        arg = args[i]
        if not arg.startswith("--"):
            raise ConfigurationError(f"unexpected argument {arg!r}")
        body = arg[2:]
        if "=" in body:
            key, value = body.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(args):
                raise ConfigurationError(f"flag {arg} needs a value")
            key, value = body, args[i + 1]
            i += 2
        values[key.replace("-", "_")] = value
    return values


def _coerce(key: str, value: Any) -> Any:
    if key in _LIST_KEYS and isinstance(value, str):
        return tuple(part.strip() for part in value.split(",") if part.strip())
    if isinstance(value, str) and value.lower() in {"none", "null", ""}:
        return None
    return value


def resolve(
    defaults: Optional[Mapping[str, Any]] = None,
    config_file: Optional[Path] = None,
    overrides: Optional[Mapping[str, str]] = None,
) -> Tuple[RunConfig, Set[str]]:
    """
    Merge defaults < file < flags into a validated RunConfig.

    Returns:
        (config, keys set explicitly by the file or flags)

    Raises:
        ConfigurationError: unknown key, unreadable file or invalid value
    """
    merged: Dict[str, Any] = dict(defaults or {})
    explicit: Set[str] = set()
    if config_file is not None:
        path = Path(config_file)
        if not path.is_file():
            raise ConfigurationError(f"config file not found: {path}")
        from_file = parse_config_text(path.read_text(encoding="utf-8"), str(path))
        merged.update(from_file)
        explicit.update(from_file)
    if overrides:
        merged.update(overrides)
        explicit.update(overrides)

    model: Dict[str, Any] = {}
    train: Dict[str, Any] = {}
    run: Dict[str, Any] = {}
    for key, value in merged.items():
        value = _coerce(key, value)
        if key in _MODEL_KEYS:
            model[key] = value
        elif key in _TRAIN_KEYS:
            train[key] = value
        elif key in _RUN_KEYS:
            run[key] = value
        else:
            raise ConfigurationError(f"unknown configuration key {key!r}")

    try:
        config = RunConfig(model=ModelConfig(**model), train=TrainConfig(**train), **run)
    except ValidationError as e:
        raise ConfigurationError(f"invalid configuration: {e}") from e
    return config, explicit


def _render_value(value: Any) -> str:
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (tuple, list)):
        return ",".join(_render_value(v) for v in value)
    return str(value)


def flatten(config: RunConfig) -> Dict[str, Any]:
    flat: Dict[str, Any] = {}
    flat.update(config.model.model_dump())
    flat.update(config.train.model_dump())
    flat.update(config.model_dump(exclude={"model", "train"}))
    return flat


def render(config: RunConfig) -> str:
    """Flat text that ``resolve`` reads back into an equal RunConfig"""
    lines = []
    for key, value in sorted(flatten(config).items()):
        lines.append(f"{key} = {'none' if value is None else _render_value(value)}")
    return "\n".join(lines) + "\n"


def write_resolved(config: RunConfig, run_dir: Path) -> Path:
    path = Path(run_dir) / RESOLVED_FILENAME
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render(config), encoding="utf-8")
    return path


def explicit_model_keys(explicit: Iterable[str]) -> Set[str]:
    return {k for k in explicit if k in _MODEL_KEYS}
