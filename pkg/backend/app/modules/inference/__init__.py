"""
Inference Module

Beam search with checkpoint ensembles and translation post-processing:
tag stripping, BPE joining, predicted-tag extraction.
"""

from .schemas import DecodeConfig, EnsembleSpec, Hypothesis, TranslationResult
from .search import (
    ModelScorer,
    beam_search,
    combine_log_probs,
    greedy_decode,
    load_ensemble,
    make_scorers,
)
from .service import Translator, annotate_translation, extract_predicted_tags, postprocess

__all__ = [
    # Schemas
    "DecodeConfig",
    "EnsembleSpec",
    "Hypothesis",
    "TranslationResult",

    # Search
    "ModelScorer",
    "beam_search",
    "combine_log_probs",
    "greedy_decode",
    "load_ensemble",
    "make_scorers",

    # Service
    "Translator",
    "annotate_translation",
    "extract_predicted_tags",
    "postprocess",
]
