"""
Data Module

Turns raw parallel corpora plus tag annotations into model-ready sequences.

Features:
- Joint BPE learning and segmentation with "+" continuation markers
- IOB subword tags and word-level source feature replication
- Tag-before-word target interleaving and tag stripping
- Word/tag partitioned vocabularies and length filtering
- Corpus readers/writers and a synthetic bracket-language task
"""

from .bpe import (
    CONTINUATION,
    END_OF_WORD,
    FINAL_ESCAPE,
    MergeTable,
    apply_bpe,
    continues_word,
    final_unit,
    join_subunits,
    learn_bpe,
    segment_words,
)
from .corpus_io import (
    CorpusReadResult,
    read_id_corpus,
    read_lines,
    read_parallel_corpus,
    write_id_corpus,
    write_lines,
)
from .schemas import (
    AnnotatedSentencePair,
    CorpusStatistics,
    FilterResult,
    InterleavedTarget,
    SegmentedPair,
    TargetMode,
)
from .service import (
    IOB_FEATURE,
    build_feature_vocabulary,
    build_tag_vocabulary,
    build_vocabularies,
    corpus_statistics,
    filter_corpus,
    interleave_target,
    iob_tags,
    replicate_source_features,
    segment_pair,
    strip_tags,
    target_length,
)
from .synthetic import bracket_tag, generate_bracket_corpus, translate_symbols, write_bracket_task
from .vocabulary import (
    EOS,
    EOS_TOKEN,
    PAD,
    PAD_TOKEN,
    UNK,
    UNK_TAG_TOKEN,
    UNK_TOKEN,
    Vocabulary,
    encode_tokens,
)

__all__ = [
    # BPE
    "CONTINUATION",
    "END_OF_WORD",
    "FINAL_ESCAPE",
    "MergeTable",
    "apply_bpe",
    "continues_word",
    "final_unit",
    "join_subunits",
    "learn_bpe",
    "segment_words",

    # Corpus files
    "CorpusReadResult",
    "read_id_corpus",
    "read_lines",
    "read_parallel_corpus",
    "write_id_corpus",
    "write_lines",

    # Schemas
    "AnnotatedSentencePair",
    "CorpusStatistics",
    "FilterResult",
    "InterleavedTarget",
    "SegmentedPair",
    "TargetMode",

    # Service
    "IOB_FEATURE",
    "build_feature_vocabulary",
    "build_tag_vocabulary",
    "build_vocabularies",
    "corpus_statistics",
    "filter_corpus",
    "interleave_target",
    "iob_tags",
    "replicate_source_features",
    "segment_pair",
    "strip_tags",
    "target_length",

    # Synthetic task
    "bracket_tag",
    "generate_bracket_corpus",
    "translate_symbols",
    "write_bracket_task",

    # Vocabulary
    "EOS",
    "EOS_TOKEN",
    "PAD",
    "PAD_TOKEN",
    "UNK",
    "UNK_TAG_TOKEN",
    "UNK_TOKEN",
    "Vocabulary",
    "encode_tokens",
]
