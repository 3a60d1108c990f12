"""
Training Models
Optimizer state, schedule and training log/report records
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel, Field


@dataclass
class AdamState:
    """
    Adam moments and hyper-parameters.

    Attributes:
        m: First moment per parameter name
        v: Second moment per parameter name
        t: Updates applied so far
    """
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


class TrainingSchedule(BaseModel):
    """Minibatching, optimizer, validation and retention settings"""
    batch_size: int = Field(60, gt=0, description="Sentences per minibatch")
    max_epochs: int = Field(30, gt=0, description="Upper bound on passes over the corpus")
    max_steps: Optional[int] = Field(None, gt=0, description="Optional upper bound on updates")
    validate_every: int = Field(100, gt=0, description="Validation interval in batches")
    patience: int = Field(10, ge=0, description="Validations without dev-BLEU improvement before stopping")
    best_k: int = Field(4, gt=0, description="Checkpoints retained by dev BLEU")
    learning_rate: float = Field(1e-3, gt=0, description="Adam step size")
    beta1: float = Field(0.9, ge=0.0, lt=1.0)
    beta2: float = Field(0.999, ge=0.0, lt=1.0)
    eps: float = Field(1e-8, gt=0)
    clip_norm: float = Field(1.0, ge=0.0, description="Global gradient-norm clip (0 disables)")


class TrainingLogRow(BaseModel):
    """One validation: batch, epoch, train loss, dev BLEU, checkpoint path"""
    batch: int
    epoch: int
    train_loss: float = Field(..., description="Mean per-token loss since the previous validation")
    dev_bleu: Optional[float] = None
    checkpoint: Optional[str] = None

    def to_tsv(self) -> str:
        bleu = "-" if self.dev_bleu is None else f"{self.dev_bleu:.4f}"
        return f"{self.batch}\t{self.epoch}\t{self.train_loss:.6f}\t{bleu}\t{self.checkpoint or '-'}"


class TrainingReport(BaseModel):
    """Summary returned by a training run"""
    batches: int = Field(..., description="Updates applied")
    epochs: int = Field(..., description="Epochs started")
    best_bleu: Optional[float] = Field(None, description="Best dev BLEU seen")
    best_checkpoint: Optional[str] = None
    checkpoints: List[str] = Field(default_factory=list, description="Retained checkpoints, best first")
    last_checkpoint: str = Field(..., description="Checkpoint of the final parameters")
    final_loss: float = Field(..., description="Per-token loss of the last batch")
    stopped_early: bool = False
    skipped_batches: int = Field(0, description="Batches dropped for non-finite values")
    elapsed_seconds: float = 0.0
    log: List[TrainingLogRow] = Field(default_factory=list)
