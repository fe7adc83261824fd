"""
Mutable training state: step, parameters, optimizer moments and RNG.
"""

from dataclasses import dataclass
from typing import Any, Dict

import numpy as np

from core.seeding import make_rng
from models.config import ModelConfig
from models.keap import init_parameters
from models.parameters import Parameters
from training.config import TrainConfig
from training.optimizer import AdamWState


@dataclass
class TrainState:
    """Everything needed to continue a run bit-for-bit"""

    step: int
    params: Parameters
    optimizer: AdamWState
    rng: np.random.Generator
    model_config: ModelConfig
    train_config: TrainConfig

    @classmethod
    def fresh(cls, model_config: ModelConfig, train_config: TrainConfig) -> "TrainState":
        params = init_parameters(model_config, train_config.seed)
        return cls(
            step=0,
            params=params,
            optimizer=AdamWState.zeros_like(params),
            rng=make_rng(train_config.seed, "train"),
            model_config=model_config,
            train_config=train_config,
        )

    @property
    def rng_state(self) -> Dict[str, Any]:
        return self.rng.bit_generator.state

    def restore_rng(self, state: Dict[str, Any]) -> None:
        bit_generator = np.random.PCG64()
        bit_generator.state = state
        self.rng = np.random.Generator(bit_generator)
