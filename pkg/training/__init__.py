"""
Training: AdamW, learning-rate schedule, checkpoints and the MLM loop.
"""

from training.checkpoint import load_checkpoint, load_knowledge_embeddings, save_checkpoint
from training.config import TrainConfig
from training.optimizer import AdamWState, adamw_step, clip_grad_norm, lr_at
from training.state import TrainState
from training.trainer import Trainer, TrainResult, evaluate_mlm, train, write_trace

__all__ = [
    "load_checkpoint",
    "load_knowledge_embeddings",
    "save_checkpoint",
    "TrainConfig",
    "AdamWState",
    "adamw_step",
    "clip_grad_norm",
    "lr_at",
    "TrainState",
    "Trainer",
    "TrainResult",
    "evaluate_mlm",
    "train",
    "write_trace",
]
