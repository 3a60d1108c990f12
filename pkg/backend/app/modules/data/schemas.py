"""
Data Pipeline Models
Validated sentence-pair annotations and their segmented views
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional

from pydantic import BaseModel, Field, field_validator, model_validator


class TargetMode(str, Enum):
    """How the target side is presented to the decoder"""
    PLAIN = "plain"
    INTERLEAVED = "interleaved"


class AnnotatedSentencePair(BaseModel):
    """Source tokens with word-level features, target tokens with supertags"""
    src_words: List[str] = Field(..., description="Whitespace-tokenized source words")
    src_features: Dict[str, List[str]] = Field(
        default_factory=dict,
        description="Word-level source features (dependency labels, CCG supertags, ...)"
    )
    tgt_words: List[str] = Field(..., description="Whitespace-tokenized target words")
    tgt_supertags: Optional[List[str]] = Field(
        None,
        description="Target supertags, one per target word (None when unannotated)"
    )

    @field_validator("tgt_supertags")
    @classmethod
    def tags_are_opaque_tokens(cls, tags: Optional[List[str]]) -> Optional[List[str]]:
        if tags is not None:
            for tag in tags:
                if not tag or any(ch.isspace() for ch in tag):
                    raise ValueError(f"supertag {tag!r} is empty or contains whitespace")
        return tags

    @model_validator(mode="after")
    def annotations_are_aligned(self) -> "AnnotatedSentencePair":
        for name, values in self.src_features.items():
            if len(values) != len(self.src_words):
                raise ValueError(
                    f"source feature '{name}' has {len(values)} labels for {len(self.src_words)} words"
                )
        if self.tgt_supertags is not None and len(self.tgt_supertags) != len(self.tgt_words):
            raise ValueError(
                f"{len(self.tgt_supertags)} supertags for {len(self.tgt_words)} target words"
            )
        return self


@dataclass
class SegmentedPair:
    """
    Model-facing token views of one sentence pair.

    Attributes:
        src_units: BPE subunits of the source
        src_feature_rows: Per-subunit feature streams ("iob", replicated word features)
        tgt_units: BPE subunits of the target
        tgt_interleaved: Tag-before-word interleaved target (None without tags)
        tgt_tags: Word-level target supertags (None without tags)
        tgt_word_count: Number of target words before segmentation
    """
    src_units: List[str]
    src_feature_rows: Dict[str, List[str]]
    tgt_units: List[str]
    tgt_interleaved: Optional["InterleavedTarget"]
    tgt_tags: Optional[List[str]]
    tgt_word_count: int
    src_word_count: int = 0


@dataclass
class InterleavedTarget:
    """Tag-then-subunits sequence, per-token tag flags and the target word count"""
    tokens: List[str]
    is_tag: List[bool]
    word_count: int


@dataclass
class FilterResult:
    """Pairs retained by length filtering and how many were dropped"""
    pairs: List[SegmentedPair]
    dropped: int
    dropped_indices: List[int] = field(default_factory=list)


class CorpusStatistics(BaseModel):
    """Length statistics recorded in the preprocessing manifest"""
    sentences: int = Field(0, description="Number of sentence pairs")
    mean_target_words: float = Field(0.0, description="Mean target words per sentence")
    mean_target_bpe: float = Field(0.0, description="Mean target BPE length")
    mean_target_interleaved: Optional[float] = Field(
        None, description="Mean interleaved target length (None without tags)"
    )
    mean_source_bpe: float = Field(0.0, description="Mean source BPE length")
