"""
Inference Models
Hypotheses, ensemble description, decode settings and translation results
"""

from dataclasses import dataclass, field
from typing import List

import numpy as np
from pydantic import BaseModel, Field

from backend.app.modules.data.vocabulary import EOS


@dataclass
class Hypothesis:
    """
    Partial or complete decoded sequence.

    Attributes:
        tokens: Token ids emitted so far (the last one is EOS when finished)
        log_prob: Cumulative combined log-probability
        states: Decoder state per ensemble member, each (H,)
        step_log_probs: Combined log-probability of every emitted token
    """
    tokens: List[int]
    log_prob: float
    states: List[np.ndarray] = field(default_factory=list)
    step_log_probs: List[float] = field(default_factory=list)

    @property
    def finished(self) -> bool:
        return bool(self.tokens) and self.tokens[-1] == EOS

    @property
    def score(self) -> float:
        """Length-normalized log-probability"""
        return self.log_prob / max(len(self.tokens), 1)

    def sort_key(self):
        return (-self.score, self.tokens)


class EnsembleSpec(BaseModel):
    """Checkpoints decoded together"""
    checkpoints: List[str] = Field(..., min_length=1, description="Checkpoint paths")
    combination: str = Field(
        "mean-log-prob",
        description="Per-step combination rule: arithmetic mean of member log-probabilities"
    )


class DecodeConfig(BaseModel):
    """Decode settings"""
    beam: int = Field(5, ge=1, description="Beam width")
    max_len: int = Field(50, gt=0, description="Maximum output tokens (including EOS) in plain mode")
    interleaved_max_len: int = Field(100, gt=0, description="Maximum output tokens in interleaved mode")
    decode_tags: bool = Field(True, description="Also decode the tag decoder of multitask models")


class TranslationResult(BaseModel):
    """One decoded sentence"""
    text: str = Field(..., description="Tag-stripped, BPE-joined translation")
    tokens: List[int] = Field(default_factory=list, description="Raw output ids, EOS included")
    tags: List[str] = Field(default_factory=list, description="Predicted supertags")
    annotated: str = Field("", description="Words with their predicted supertag attached (word|TAG)")
    score: float = Field(0.0, description="Length-normalized log-probability")
    alternation_violations: int = Field(0, description="Breaks of the tag-then-word pattern")
