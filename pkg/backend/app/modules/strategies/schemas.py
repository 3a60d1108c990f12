"""
Syntax Integration Strategy Models
Strategy configuration, vocabulary bundles and model-ready batches
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel, Field, field_validator

from backend.app.modules.data.schemas import TargetMode
from backend.app.modules.data.vocabulary import Vocabulary
from backend.app.modules.model.schemas import LossResult
from backend.app.modules.tensor import Tensor

WORD_FEATURE = "word"


class IntegrationMode(str, Enum):
    """How target-side syntax reaches the model"""
    BASELINE = "baseline"
    INTERLEAVED = "interleaved"
    MULTITASK = "multitask"


class StrategyConfig(BaseModel):
    """Integration strategy and source-side features"""
    mode: IntegrationMode = Field(IntegrationMode.BASELINE, description="Target-side strategy")
    source_features: List[str] = Field(
        default_factory=list,
        description="Source streams besides the subword units (iob, dep, ccg, ...)"
    )
    feature_widths: Dict[str, int] = Field(
        default_factory=dict,
        description="Embedding width per source feature; the word stream takes the remainder"
    )
    tag_loss_weight: float = Field(1.0, ge=0.0, description="Weight of the tag decoder loss (multitask)")

    @field_validator("source_features")
    @classmethod
    def word_is_implicit(cls, names: List[str]) -> List[str]:
        if WORD_FEATURE in names:
            raise ValueError("the word stream is always present; do not list it in source_features")
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate source features {names}")
        return names

    @property
    def target_mode(self) -> TargetMode:
        return TargetMode.INTERLEAVED if self.mode == IntegrationMode.INTERLEAVED else TargetMode.PLAIN

    @property
    def needs_target_tags(self) -> bool:
        return self.mode != IntegrationMode.BASELINE

    @property
    def decoder_prefixes(self) -> List[str]:
        return ["word", "tag"] if self.mode == IntegrationMode.MULTITASK else ["main"]

    @property
    def translation_decoder(self) -> str:
        return self.decoder_prefixes[0]


@dataclass
class Vocabularies:
    """
    Every vocabulary a model is tied to.

    Attributes:
        source: Source subword units (the "word" stream)
        target: Target units; carries the tag partition in interleaved mode
        features: Vocabulary per extra source feature stream
        tags: Separate supertag vocabulary (multitask mode)
    """
    source: Vocabulary
    target: Vocabulary
    features: Dict[str, Vocabulary] = field(default_factory=dict)
    tags: Optional[Vocabulary] = None

    def stream(self, name: str) -> Vocabulary:
        return self.source if name == WORD_FEATURE else self.features[name]

    def hashes(self) -> Dict[str, str]:
        result = {"source": self.source.content_hash(), "target": self.target.content_hash()}
        for name, vocab in self.features.items():
            result[f"feature:{name}"] = vocab.content_hash()
        if self.tags is not None:
            result["tag"] = self.tags.content_hash()
        return result


@dataclass
class Batch:
    """
    Single-decoder batch (baseline or interleaved target stream).

    Attributes:
        src_ids: (B, T_src) ids per source stream
        src_mask: (B, T_src) padding mask
        tgt_ids: (B, T) target ids, rows end in EOS
        tgt_mask: (B, T) padding mask
        indices: Corpus index of every row
    """
    src_ids: Dict[str, np.ndarray]
    src_mask: np.ndarray
    tgt_ids: np.ndarray
    tgt_mask: np.ndarray
    indices: List[int]

    @property
    def size(self) -> int:
        return len(self.indices)


@dataclass
class MultitaskBatch:
    """
    Shared source with two independently padded target streams.

    The word stream has T1 steps and the tag stream T2; they need not agree.
    """
    src_ids: Dict[str, np.ndarray]
    src_mask: np.ndarray
    word_ids: np.ndarray
    word_mask: np.ndarray
    tag_ids: np.ndarray
    tag_mask: np.ndarray
    indices: List[int]

    @property
    def size(self) -> int:
        return len(self.indices)


@dataclass
class StrategyLoss:
    """Total loss of a batch and its per-decoder parts"""
    loss: Tensor
    parts: Dict[str, LossResult]

    @property
    def value(self) -> float:
        return self.loss.item()

    @property
    def token_count(self) -> int:
        return sum(p.token_count for p in self.parts.values())
