"""
Strategies Module

Integration of target- and source-side syntax into the encoder-decoder:
interleaved supertags (tight coupling), a shared-encoder multitask setup
(loose coupling) and source feature embeddings.
"""

from .schemas import (
    WORD_FEATURE,
    Batch,
    IntegrationMode,
    MultitaskBatch,
    StrategyConfig,
    StrategyLoss,
    Vocabularies,
)
from .service import (
    alternation_violations,
    baseline_loss,
    batch_loss,
    build_batch,
    check_vocabularies,
    embedding_spec,
    encode_source,
    encode_tag_target,
    encode_target,
    interleaved_loss,
    model_decoders,
    multitask_loss,
    shared_vocab_embedding,
)

__all__ = [
    # Schemas
    "WORD_FEATURE",
    "Batch",
    "IntegrationMode",
    "MultitaskBatch",
    "StrategyConfig",
    "StrategyLoss",
    "Vocabularies",

    # Service
    "alternation_violations",
    "baseline_loss",
    "batch_loss",
    "build_batch",
    "check_vocabularies",
    "embedding_spec",
    "encode_source",
    "encode_tag_target",
    "encode_target",
    "interleaved_loss",
    "model_decoders",
    "multitask_loss",
    "shared_vocab_embedding",
]
