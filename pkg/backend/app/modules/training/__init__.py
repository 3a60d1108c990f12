"""
Training Module

Minibatch training with Adam, periodic dev-set BLEU validation, early
stopping and best-k checkpoint retention.
"""

from .optimizer import adam_step, clip_gradients
from .schemas import AdamState, TrainingLogRow, TrainingReport, TrainingSchedule
from .trainer import LOG_FILE, Trainer, train

__all__ = [
    "AdamState",
    "LOG_FILE",
    "Trainer",
    "TrainingLogRow",
    "TrainingReport",
    "TrainingSchedule",
    "adam_step",
    "clip_gradients",
    "train",
]
