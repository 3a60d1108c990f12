"""
Syntax Integration Strategies

- baseline:    plain BPE target, one decoder
- interleaved: tag-before-word target under a shared word/tag vocabulary;
               same decoder code path as baseline, only the data differs
- multitask:   one shared encoder, separate word and tag decoders whose
               losses are summed
Source-side features combine with any mode.
"""

import logging
from typing import Dict, List, Mapping, Optional, Sequence, Union

import numpy as np

from backend.app.core.exceptions import AlignmentError, ConfigError, VocabularyError
from backend.app.modules.data.bpe import continues_word
from backend.app.modules.data.schemas import SegmentedPair
from backend.app.modules.data.vocabulary import EOS, PAD, Vocabulary, encode_tokens
from backend.app.modules.model.network import (
    decoder_loss,
    embed_source,
    encode,
    padded,
    sequence_loss,
    source_arrays,
)
from backend.app.modules.model.parameters import ModelParameters
from backend.app.modules.model.schemas import EmbeddingSpec, LossResult, ModelConfig
from backend.app.modules.strategies.schemas import (
    WORD_FEATURE,
    Batch,
    IntegrationMode,
    MultitaskBatch,
    StrategyConfig,
    StrategyLoss,
    Vocabularies,
)
from backend.app.modules.tensor import Tensor, add, scale

logger = logging.getLogger(__name__)

Nodes = Mapping[str, Tensor]
AnyBatch = Union[Batch, MultitaskBatch]


# ----------------------------------------------------------------------------
# Layout
# ----------------------------------------------------------------------------

def check_vocabularies(config: StrategyConfig, vocabs: Vocabularies) -> None:
    """
    Raises:
        ConfigError: The vocabularies cannot serve the configured strategy
    """
    if config.mode == IntegrationMode.INTERLEAVED and vocabs.target.num_tags == 0:
        raise ConfigError("interleaved mode needs a target vocabulary with a tag partition")
    if config.mode == IntegrationMode.MULTITASK and vocabs.tags is None:
        raise ConfigError("multitask mode needs a separate tag vocabulary")
    missing = [name for name in config.source_features if name not in vocabs.features]
    if missing:
        raise ConfigError(f"no vocabulary for source features {missing}")


def model_decoders(config: StrategyConfig, vocabs: Vocabularies) -> Dict[str, int]:
    """Target vocabulary size per decoder prefix"""
    if config.mode == IntegrationMode.MULTITASK:
        return {"word": len(vocabs.target), "tag": len(vocabs.tags)}
    return {"main": len(vocabs.target)}


def embedding_spec(config: StrategyConfig, model: ModelConfig, vocabs: Vocabularies) -> EmbeddingSpec:
    """Source embedding layout: extra features at their widths, words take the rest"""
    sizes = {WORD_FEATURE: len(vocabs.source)}
    for name in config.source_features:
        sizes[name] = len(vocabs.features[name])
    try:
        return EmbeddingSpec.allocate(model.embedding_size, sizes, config.feature_widths, WORD_FEATURE)
    except ValueError as e:
        raise ConfigError(str(e), details={"embedding_size": model.embedding_size})


# ----------------------------------------------------------------------------
# Encoding and batching
# ----------------------------------------------------------------------------

def encode_source(pair: SegmentedPair, config: StrategyConfig, vocabs: Vocabularies) -> Dict[str, List[int]]:
    """Id rows for every source stream, each terminated by EOS"""
    rows = {WORD_FEATURE: encode_tokens(pair.src_units, vocabs.source) + [EOS]}
    for name in config.source_features:
        values = pair.src_feature_rows.get(name)
        if values is None:
            raise AlignmentError(f"source feature '{name}' missing", details={"feature": name})
        rows[name] = encode_tokens(values, vocabs.features[name]) + [EOS]
    return rows


def encode_target(pair: SegmentedPair, config: StrategyConfig, vocabs: Vocabularies) -> List[int]:
    """Translation-decoder target ids: BPE units or the interleaved stream, plus EOS"""
    if config.mode == IntegrationMode.INTERLEAVED:
        if pair.tgt_interleaved is None:
            raise AlignmentError("interleaved mode needs target supertags")
        stream = pair.tgt_interleaved
        return encode_tokens(stream.tokens, vocabs.target, stream.is_tag) + [EOS]
    return encode_tokens(pair.tgt_units, vocabs.target) + [EOS]


def encode_tag_target(pair: SegmentedPair, vocabs: Vocabularies) -> List[int]:
    """Tag-decoder target ids: one supertag per target word, plus EOS"""
    if pair.tgt_tags is None:
        raise AlignmentError("multitask mode needs target supertags")
    return encode_tokens(pair.tgt_tags, vocabs.tags, [True] * len(pair.tgt_tags)) + [EOS]


def build_batch(
    pairs: Sequence[SegmentedPair],
    config: StrategyConfig,
    vocabs: Vocabularies,
    indices: Optional[Sequence[int]] = None
) -> AnyBatch:
    """
    Turn segmented pairs into padded id arrays for the configured strategy.

    Args:
        pairs: Segmented pairs
        config: Strategy
        vocabs: Vocabularies
        indices: Corpus indices of the pairs (default 0..n-1)

    Returns:
        Batch (baseline / interleaved) or MultitaskBatch

    Raises:
        AlignmentError: A pair lacks the annotations the strategy needs
    """
    indices = list(range(len(pairs))) if indices is None else list(indices)
    src_rows: Dict[str, List[List[int]]] = {}
    tgt_rows: List[List[int]] = []
    tag_rows: List[List[int]] = []

    for index, pair in zip(indices, pairs):
        try:
            for name, row in encode_source(pair, config, vocabs).items():
                src_rows.setdefault(name, []).append(row)
            tgt_rows.append(encode_target(pair, config, vocabs))
            if config.mode == IntegrationMode.MULTITASK:
                tag_rows.append(encode_tag_target(pair, vocabs))
        except AlignmentError as e:
            raise AlignmentError(
                f"sentence {index}: {e.message}",
                details={**e.details, "sentence": index}
            )

    src_ids, src_mask = source_arrays(src_rows)
    tgt_ids, tgt_mask = padded(tgt_rows, PAD)
    if config.mode == IntegrationMode.MULTITASK:
        tag_ids, tag_mask = padded(tag_rows, PAD)
        return MultitaskBatch(src_ids, src_mask, tgt_ids, tgt_mask, tag_ids, tag_mask, indices)
    return Batch(src_ids, src_mask, tgt_ids, tgt_mask, indices)


# ----------------------------------------------------------------------------
# Losses
# ----------------------------------------------------------------------------

def baseline_loss(nodes: Nodes, spec: EmbeddingSpec, batch: Batch) -> LossResult:
    """Single-decoder loss over the batch's target stream"""
    return sequence_loss(nodes, spec, batch.src_ids, batch.src_mask, batch.tgt_ids, batch.tgt_mask, "main")


def interleaved_loss(nodes: Nodes, spec: EmbeddingSpec, batch: Batch) -> LossResult:
    """
    Loss over the interleaved stream.

    The decoder is unchanged; the stream is simply longer and its ids
    come from the shared word/tag vocabulary.
    """
    return baseline_loss(nodes, spec, batch)


def multitask_loss(
    nodes: Nodes,
    spec: EmbeddingSpec,
    batch: MultitaskBatch,
    tag_loss_weight: float = 1.0
) -> StrategyLoss:
    """
    Shared-encoder loss l = l_word + w * l_tag.

    The encoder runs once; both decoders read the same states, so encoder
    gradients accumulate contributions from both.
    """
    embedded = embed_source(nodes, spec, batch.src_ids)
    encoded = encode(nodes, embedded, batch.src_mask)
    word = decoder_loss(nodes, encoded, "word", batch.word_ids, batch.word_mask)
    tag = decoder_loss(nodes, encoded, "tag", batch.tag_ids, batch.tag_mask)
    tag_term = tag.loss if tag_loss_weight == 1.0 else scale(tag.loss, tag_loss_weight)
    return StrategyLoss(loss=add(word.loss, tag_term), parts={"word": word, "tag": tag})


def batch_loss(nodes: Nodes, params: ModelParameters, batch: AnyBatch, config: StrategyConfig) -> StrategyLoss:
    """Dispatch to the configured strategy's loss"""
    if config.mode == IntegrationMode.MULTITASK:
        return multitask_loss(nodes, params.spec, batch, config.tag_loss_weight)
    if config.mode == IntegrationMode.INTERLEAVED:
        result = interleaved_loss(nodes, params.spec, batch)
    else:
        result = baseline_loss(nodes, params.spec, batch)
    return StrategyLoss(loss=result.loss, parts={"main": result})


def shared_vocab_embedding(vocab: Vocabulary, params: ModelParameters, prefix: str = "main") -> np.ndarray:
    """
    The single target embedding table covering words and tags.

    Raises:
        VocabularyError: The vocabulary has no tag partition or does not match the table
    """
    if vocab.num_tags == 0:
        raise VocabularyError("vocabulary has no tag partition")
    table = params[f"dec.{prefix}.emb"]
    if table.shape[0] != len(vocab):
        raise VocabularyError(
            f"embedding table has {table.shape[0]} rows for a vocabulary of {len(vocab)}",
            details={"rows": table.shape[0], "vocabulary": len(vocab)}
        )
    return table


# ----------------------------------------------------------------------------
# Diagnostics
# ----------------------------------------------------------------------------

def alternation_violations(tokens: Sequence[int], vocab: Vocabulary) -> int:
    """
    Count breaks of the tag-then-word pattern in a predicted stream.

    A violation is a tag directly after another tag, a tag with no word
    after it, or a new word (previous unit complete) without a tag.
    EOS and PAD are ignored.
    """
    violations = 0
    prev_tag: Optional[bool] = None
    prev_unit = ""
    for token_id in tokens:
        if token_id in (EOS, PAD):
            continue
        if vocab.is_tag(token_id):
            if prev_tag:
                violations += 1
            prev_tag = True
        else:
            unit = vocab.decode(token_id)
            starts_word = prev_tag is None or (prev_tag is False and not continues_word(prev_unit))
            if starts_word:
                violations += 1
            prev_tag, prev_unit = False, unit
    if prev_tag:
        violations += 1
    return violations
