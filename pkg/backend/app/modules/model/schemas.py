"""
Sequence-to-sequence Model Schemas
Embedding layout, model sizes and the value holders passed between
encoder, attention and decoder.
"""

from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from backend.app.modules.tensor import Tensor


class FeatureEmbedding(BaseModel):
    """One source input stream and its embedding width"""
    name: str = Field(..., description="Feature name (word, iob, dep, ccg, ...)")
    vocab_size: int = Field(..., gt=0, description="Rows of the embedding table")
    width: int = Field(..., gt=0, description="Embedding width")


class EmbeddingSpec(BaseModel):
    """Ordered source features whose embeddings are concatenated"""
    features: List[FeatureEmbedding] = Field(..., min_length=1)

    @model_validator(mode="after")
    def names_are_unique(self) -> "EmbeddingSpec":
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate feature names in {names}")
        return self

    @property
    def names(self) -> List[str]:
        return [f.name for f in self.features]

    @property
    def total_width(self) -> int:
        return sum(f.width for f in self.features)

    def feature(self, name: str) -> FeatureEmbedding:
        for f in self.features:
            if f.name == name:
                return f
        raise KeyError(name)

    @classmethod
    def allocate(
        cls,
        total_width: int,
        vocab_sizes: Dict[str, int],
        widths: Optional[Dict[str, int]] = None,
        word_feature: str = "word"
    ) -> "EmbeddingSpec":
        """
        Fixed-total layout: every non-word feature gets its configured width
        and the word feature takes the remainder.

        Args:
            total_width: Width of the concatenated embedding
            vocab_sizes: Vocabulary size per feature, in concatenation order
            widths: Widths of the non-word features
            word_feature: Name of the feature receiving the remainder

        Returns:
            Embedding spec whose total width equals total_width
        """
        widths = widths or {}
        missing = [n for n in vocab_sizes if n != word_feature and n not in widths]
        if missing:
            raise ValueError(f"no embedding width configured for features {missing}")
        remainder = total_width - sum(widths[n] for n in vocab_sizes if n != word_feature)
        if remainder <= 0:
            raise ValueError(
                f"feature widths leave {remainder} dimensions for '{word_feature}' "
                f"out of {total_width}"
            )
        return cls(features=[
            FeatureEmbedding(
                name=name,
                vocab_size=size,
                width=remainder if name == word_feature else widths[name]
            )
            for name, size in vocab_sizes.items()
        ])


class ModelConfig(BaseModel):
    """Model sizes and initialization"""
    hidden_size: int = Field(64, gt=0, description="Per-direction encoder and decoder GRU size")
    embedding_size: int = Field(64, gt=0, description="Total source embedding width")
    target_embedding_size: int = Field(64, gt=0, description="Target embedding width")
    attention_size: int = Field(64, gt=0, description="Hidden width of the additive scorer")
    output_size: int = Field(64, gt=0, description="Deep-output width")
    init_scale: float = Field(0.08, gt=0, description="Uniform init range [-s, s]")
    dropout: float = Field(0.0, description="Dropout rate (only 0.0 is supported)")

    @field_validator("dropout")
    @classmethod
    def dropout_is_off(cls, value: float) -> float:
        if value != 0.0:
            raise ValueError("dropout is not supported; set model.dropout = 0.0")
        return value


@dataclass
class EncoderStates:
    """
    Bidirectional encoder output.

    Attributes:
        states: (B, T, 2H) rows h_i = [forward_i; backward_i]
        mask: (B, T) 1.0 on real tokens, 0.0 on padding
    """
    states: Tensor
    mask: np.ndarray

    @property
    def width(self) -> int:
        return self.states.shape[-1]


@dataclass
class DecoderState:
    """Values of one conditional-GRU step for a batch"""
    s_prime: Tensor
    context: Tensor
    s: Tensor
    t: Tensor
    alpha: Tensor
    logits: Optional[Tensor] = None


@dataclass
class LossResult:
    """
    Teacher-forced negative log-likelihood.

    Attributes:
        loss: Scalar loss node, differentiable on its tape
        token_log_probs: (B, T) log-probabilities of gold tokens, 0 on padding
        token_count: Number of non-padding target tokens
    """
    loss: Tensor
    token_log_probs: np.ndarray
    token_count: int

    @property
    def value(self) -> float:
        return self.loss.item()
