"""
Evaluation Module

Scoring of translation outputs.

Features:
- Corpus BLEU from clipped n-gram statistics (sacrebleu combination)
- Paired bootstrap resampling significance
- Construct subsets from reference supertags and source-length buckets
- Supertag prediction accuracy
- Per-subset breakdown reports as text and TSV
"""

from .analysis import (
    LENGTH_BUCKETS,
    breakdown_report,
    classify_constructs,
    length_bucket,
    length_buckets,
    load_construct_rules,
    parse_construct_rules,
    render_text,
    render_tsv,
    standard_subsets,
    subset_indices,
    tag_accuracy,
)
from .bleu import (
    bleu_from_stats,
    bootstrap_significance,
    corpus_bleu,
    corpus_stats,
    sentence_stats,
)
from .schemas import (
    BleuScore,
    ConstructRule,
    EvaluationReport,
    SignificanceResult,
    SubsetScore,
    TagAccuracy,
    significance_marker,
)

__all__ = [
    # Analysis
    "LENGTH_BUCKETS",
    "breakdown_report",
    "classify_constructs",
    "length_bucket",
    "length_buckets",
    "load_construct_rules",
    "parse_construct_rules",
    "render_text",
    "render_tsv",
    "standard_subsets",
    "subset_indices",
    "tag_accuracy",

    # BLEU
    "bleu_from_stats",
    "bootstrap_significance",
    "corpus_bleu",
    "corpus_stats",
    "sentence_stats",

    # Schemas
    "BleuScore",
    "ConstructRule",
    "EvaluationReport",
    "SignificanceResult",
    "SubsetScore",
    "TagAccuracy",
    "significance_marker",
]
