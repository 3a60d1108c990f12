"""
Data Pipeline Service

Turns annotated sentence pairs into model-facing sequences:
- IOB subword-structure tags and source feature replication
- Tag-before-word target interleaving and tag stripping
- Vocabulary construction and length filtering
"""

import logging
from collections import Counter
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from backend.app.core.exceptions import AlignmentError
from backend.app.modules.data.bpe import MergeTable, apply_bpe, final_unit, segment_words
from backend.app.modules.data.schemas import (
    AnnotatedSentencePair,
    CorpusStatistics,
    FilterResult,
    InterleavedTarget,
    SegmentedPair,
    TargetMode,
)
from backend.app.modules.data.vocabulary import Vocabulary

logger = logging.getLogger(__name__)

IOB_FEATURE = "iob"


def iob_tags(subunits_per_word: Sequence[Sequence[str]]) -> List[str]:
    """
    Subword-structure tags: O for a whole word, B I... E across a split word.

    Args:
        subunits_per_word: Subunits of each word (every word has at least one)

    Returns:
        Flat tag list, one per subunit
    """
    tags: List[str] = []
    for units in subunits_per_word:
        if len(units) == 1:
            tags.append("O")
        else:
            tags.append("B")
            tags.extend("I" * (len(units) - 2))
            tags.append("E")
    return tags


def interleave_target(
    tgt_words: Sequence[str],
    tgt_supertags: Sequence[str],
    merges: Optional[MergeTable]
) -> InterleavedTarget:
    """
    Put each word's supertag once before the word's BPE subunits.

    Args:
        tgt_words: Target words
        tgt_supertags: One supertag per word
        merges: Merge table; None leaves words unsplit

    Returns:
        Interleaved target with per-token tag flags

    Raises:
        AlignmentError: Word and tag counts differ
    """
    if len(tgt_words) != len(tgt_supertags):
        raise AlignmentError(
            f"{len(tgt_supertags)} supertags for {len(tgt_words)} target words",
            details={"words": len(tgt_words), "tags": len(tgt_supertags)}
        )
    tokens: List[str] = []
    flags: List[bool] = []
    for word, tag in zip(tgt_words, tgt_supertags):
        units = [final_unit(word)] if merges is None else apply_bpe(word, merges)
        tokens.append(tag)
        flags.append(True)
        tokens.extend(units)
        flags.extend([False] * len(units))
    return InterleavedTarget(tokens=tokens, is_tag=flags, word_count=len(tgt_words))


def strip_tags(sequence: Iterable[int], vocab: Vocabulary) -> List[int]:
    """
    Remove every tag-partition token, keeping the order of the rest.

    Tag runs or missing tags are tolerated; extraction never fails.
    """
    return [token_id for token_id in sequence if not vocab.is_tag(token_id)]


def replicate_source_features(
    features_per_word: Sequence[str],
    subunits_per_word: Sequence[Sequence[str]]
) -> List[str]:
    """
    Copy each word-level feature onto every subunit of that word.

    Raises:
        AlignmentError: Feature and word counts differ
    """
    if len(features_per_word) != len(subunits_per_word):
        raise AlignmentError(
            f"{len(features_per_word)} features for {len(subunits_per_word)} words",
            details={"features": len(features_per_word), "words": len(subunits_per_word)}
        )
    rows: List[str] = []
    for feature, units in zip(features_per_word, subunits_per_word):
        rows.extend([feature] * len(units))
    return rows


def segment_pair(
    pair: AnnotatedSentencePair,
    merges: MergeTable,
    source_features: Sequence[str] = ()
) -> SegmentedPair:
    """
    Build all model-facing views of one pair.

    Args:
        pair: Annotated sentence pair
        merges: Joint source/target merge table
        source_features: Source streams to build besides the subunits:
            "iob" and/or names of word-level features present on the pair

    Returns:
        Segmented pair
    """
    src_split = segment_words(pair.src_words, merges)
    feature_rows: Dict[str, List[str]] = {}
    for name in source_features:
        if name == IOB_FEATURE:
            feature_rows[name] = iob_tags(src_split)
        elif name in pair.src_features:
            feature_rows[name] = replicate_source_features(pair.src_features[name], src_split)
        else:
            raise AlignmentError(
                f"source feature '{name}' missing from sentence",
                details={"feature": name, "available": sorted(pair.src_features)}
            )

    tgt_units = [u for units in segment_words(pair.tgt_words, merges) for u in units]
    interleaved = None
    if pair.tgt_supertags is not None:
        interleaved = interleave_target(pair.tgt_words, pair.tgt_supertags, merges)

    return SegmentedPair(
        src_units=[u for units in src_split for u in units],
        src_feature_rows=feature_rows,
        tgt_units=tgt_units,
        tgt_interleaved=interleaved,
        tgt_tags=list(pair.tgt_supertags) if pair.tgt_supertags is not None else None,
        tgt_word_count=len(pair.tgt_words),
        src_word_count=len(pair.src_words)
    )


def target_length(pair: SegmentedPair, mode: TargetMode) -> int:
    """Length of the model-facing target sequence (without EOS)"""
    if mode == TargetMode.INTERLEAVED:
        if pair.tgt_interleaved is None:
            raise AlignmentError("interleaved length requested for an untagged pair")
        return len(pair.tgt_interleaved.tokens)
    return len(pair.tgt_units)


def build_vocabularies(
    corpus: Sequence[SegmentedPair],
    mode: TargetMode,
    word_cap: Optional[int] = None,
    tag_cap: Optional[int] = None,
    joint: bool = False
) -> Tuple[Vocabulary, Vocabulary]:
    """
    Build source and target vocabularies from a segmented corpus.

    Args:
        corpus: BPE-segmented pairs
        mode: plain (words only) or interleaved (words plus tag partition)
        word_cap: Maximum word entries per vocabulary
        tag_cap: Maximum tag entries in the target vocabulary
        joint: Count source and target units together for both sides

    Returns:
        (source vocabulary, target vocabulary)
    """
    src_counts: Counter = Counter()
    tgt_counts: Counter = Counter()
    tag_counts: Counter = Counter()
    for pair in corpus:
        src_counts.update(pair.src_units)
        tgt_counts.update(pair.tgt_units)
        if mode == TargetMode.INTERLEAVED and pair.tgt_tags is not None:
            tag_counts.update(pair.tgt_tags)

    if joint:
        src_counts = tgt_counts = src_counts + tgt_counts

    src_vocab = Vocabulary.from_counts(src_counts, word_cap)
    if mode == TargetMode.INTERLEAVED:
        tgt_vocab = Vocabulary.from_counts(tgt_counts, word_cap, tag_counts, tag_cap, unk_tag=True)
    else:
        tgt_vocab = Vocabulary.from_counts(tgt_counts, word_cap)

    logger.info(
        f"✓ Vocabularies built: source {len(src_vocab)}, target {len(tgt_vocab)} "
        f"({tgt_vocab.num_tags} tags)"
    )
    return src_vocab, tgt_vocab


def build_tag_vocabulary(corpus: Sequence[SegmentedPair], tag_cap: Optional[int] = None) -> Vocabulary:
    """Separate supertag vocabulary (every entry in the tag partition)"""
    counts: Counter = Counter()
    for pair in corpus:
        if pair.tgt_tags is not None:
            counts.update(pair.tgt_tags)
    return Vocabulary.from_counts(tag_counts=counts, tag_cap=tag_cap, unk_tag=True)


def build_feature_vocabulary(corpus: Sequence[SegmentedPair], name: str) -> Vocabulary:
    """Vocabulary of one per-subunit source feature stream"""
    counts: Counter = Counter()
    for pair in corpus:
        counts.update(pair.src_feature_rows.get(name, []))
    return Vocabulary.from_counts(counts)


def filter_corpus(
    pairs: Sequence[SegmentedPair],
    max_len: int,
    mode: TargetMode = TargetMode.PLAIN,
    target_max_len: Optional[int] = None
) -> FilterResult:
    """
    Keep pairs whose model-facing sequences fit the length limits.

    The source is measured in BPE units against max_len; the target is
    measured on its mode's sequence against target_max_len (defaults to
    max_len). Limits are inclusive.
    """
    if max_len <= 0:
        raise ValueError("max_len must be positive")
    target_limit = target_max_len or max_len

    kept: List[SegmentedPair] = []
    dropped: List[int] = []
    for index, pair in enumerate(pairs):
        if len(pair.src_units) <= max_len and target_length(pair, mode) <= target_limit:
            kept.append(pair)
        else:
            dropped.append(index)

    if dropped:
        logger.info(f"Length filter dropped {len(dropped)} of {len(pairs)} pairs")
    return FilterResult(pairs=kept, dropped=len(dropped), dropped_indices=dropped)


def corpus_statistics(pairs: Sequence[SegmentedPair]) -> CorpusStatistics:
    """Mean sequence lengths of a segmented corpus"""
    n = len(pairs)
    if n == 0:
        return CorpusStatistics()
    tagged = [p for p in pairs if p.tgt_interleaved is not None]
    return CorpusStatistics(
        sentences=n,
        mean_target_words=sum(p.tgt_word_count for p in pairs) / n,
        mean_target_bpe=sum(len(p.tgt_units) for p in pairs) / n,
        mean_target_interleaved=(
            sum(len(p.tgt_interleaved.tokens) for p in tagged) / len(tagged) if tagged else None
        ),
        mean_source_bpe=sum(len(p.src_units) for p in pairs) / n
    )
