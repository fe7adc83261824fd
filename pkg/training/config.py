"""
Optimization hyperparameters.
"""

from pathlib import Path
from typing import Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator


class TrainConfig(BaseModel):
    """Schedule, optimizer and bookkeeping settings for one training run"""

    steps: int = Field(default=200, ge=1)
    batch_size: int = Field(default=16, ge=1)
    peak_lr: float = Field(default=1e-4, gt=0.0)
    warmup_ratio: float = Field(default=0.08, ge=0.0, lt=1.0)
    weight_decay: float = Field(default=0.01, ge=0.0)
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = Field(default=1e-8, gt=0.0)
    clip_norm: float = Field(default=1.0, gt=0.0)
    seed: int = Field(default=0, ge=0)

    checkpoint_interval: int = Field(default=0, ge=0)  # 0 disables periodic checkpoints
    checkpoint_dir: Optional[Path] = None

    model_config = ConfigDict(extra="forbid", frozen=True)

    @field_validator("betas")
    @classmethod
    def validate_betas(cls, v: Tuple[float, float]) -> Tuple[float, float]:
        if not all(0.0 <= b < 1.0 for b in v):
            raise ValueError(f"betas must lie in [0, 1), got {v}")
        return v

    @property
    def warmup_steps(self) -> int:
        return int(self.warmup_ratio * self.steps)
