"""
Model Module

Attentional encoder-decoder built on the tensor engine.

Features:
- Concatenated source feature embeddings
- Bidirectional GRU encoder
- Conditional GRU decoders with additive attention and deep output
- Named parameter registry and a binary checkpoint container
"""

from .checkpoint import CheckpointHeader, load_checkpoint, save_checkpoint
from .network import (
    DecoderContext,
    attention,
    decoder_loss,
    decoder_step,
    embed_source,
    encode,
    gru_cell,
    padded,
    sequence_loss,
    shift_right,
    source_arrays,
    start_decoder,
    step_log_probs,
)
from .parameters import (
    ModelParameters,
    decoder_names,
    encoder_names,
    init_parameters,
    num_parameters,
    parameter_groups,
    shape_table,
)
from .schemas import (
    DecoderState,
    EmbeddingSpec,
    EncoderStates,
    FeatureEmbedding,
    LossResult,
    ModelConfig,
)

__all__ = [
    # Checkpoints
    "CheckpointHeader",
    "load_checkpoint",
    "save_checkpoint",

    # Network
    "DecoderContext",
    "attention",
    "decoder_loss",
    "decoder_step",
    "embed_source",
    "encode",
    "gru_cell",
    "padded",
    "sequence_loss",
    "shift_right",
    "source_arrays",
    "start_decoder",
    "step_log_probs",

    # Parameters
    "ModelParameters",
    "decoder_names",
    "encoder_names",
    "init_parameters",
    "num_parameters",
    "parameter_groups",
    "shape_table",

    # Schemas
    "DecoderState",
    "EmbeddingSpec",
    "EncoderStates",
    "FeatureEmbedding",
    "LossResult",
    "ModelConfig",
]
