"""
Translation Service

Post-processing of decoder output (tag stripping, BPE joining, tag
extraction) and corpus translation with an ensemble.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence

from backend.app.core.config import settings
from backend.app.modules.data.bpe import continues_word, join_subunits
from backend.app.modules.data.schemas import SegmentedPair
from backend.app.modules.data.service import strip_tags
from backend.app.modules.data.vocabulary import EOS, PAD, Vocabulary
from backend.app.modules.inference.schemas import DecodeConfig, Hypothesis, TranslationResult
from backend.app.modules.inference.search import beam_search, greedy_decode, make_scorers
from backend.app.modules.model.network import source_arrays
from backend.app.modules.model.parameters import ModelParameters
from backend.app.modules.strategies.schemas import IntegrationMode, StrategyConfig, Vocabularies
from backend.app.modules.strategies.service import alternation_violations, encode_source

logger = logging.getLogger(__name__)


def _content(tokens: Sequence[int]) -> List[int]:
    return [t for t in tokens if t not in (EOS, PAD)]


def postprocess(tokens: Sequence[int], vocab: Vocabulary) -> str:
    """
    Final translation string: drop EOS/PAD, strip tag tokens, join BPE units.
    """
    content = _content(tokens)
    units = [vocab.decode(t) for t in strip_tags(content, vocab)]
    text = " ".join(join_subunits(units))
    if content and not text:
        logger.warning("✗ Output contains only supertags; translation is empty")
    return text


def extract_predicted_tags(tokens: Sequence[int], vocab: Vocabulary) -> List[str]:
    """Tag-partition tokens of the output, in order"""
    return [vocab.decode(t) for t in _content(tokens) if vocab.is_tag(t)]


def annotate_translation(tokens: Sequence[int], vocab: Vocabulary) -> str:
    """
    Words with the supertag predicted before them attached as word|TAG.

    A word without a preceding tag is printed bare.
    """
    words: List[str] = []
    pending_tag: Optional[str] = None
    current: List[str] = []
    word_tag: Optional[str] = None

    def flush():
        if current:
            word = "".join(join_subunits(current))
            words.append(f"{word}|{word_tag}" if word_tag else word)
            current.clear()

    for token_id in _content(tokens):
        token = vocab.decode(token_id)
        if vocab.is_tag(token_id):
            flush()
            pending_tag = token
            continue
        if not current:
            word_tag, pending_tag = pending_tag, None
        current.append(token)
        if not continues_word(token):
            flush()
    flush()
    return " ".join(words)


class Translator:
    """
    Decodes segmented sentences with an ensemble of parameter sets.

    Sentences are independent: translate_corpus fans them out over a
    thread pool and returns results in input order.
    """

    def __init__(
        self,
        members: Sequence[ModelParameters],
        strategy: StrategyConfig,
        vocabs: Vocabularies,
        decode: Optional[DecodeConfig] = None
    ):
        if not members:
            raise ValueError("at least one model is required")
        self.members = list(members)
        self.strategy = strategy
        self.vocabs = vocabs
        self.decode = decode or DecodeConfig()

    @property
    def max_len(self) -> int:
        if self.strategy.mode == IntegrationMode.INTERLEAVED:
            return self.decode.interleaved_max_len
        return self.decode.max_len

    def _source(self, pair: SegmentedPair):
        rows = encode_source(pair, self.strategy, self.vocabs)
        return source_arrays({name: [row] for name, row in rows.items()})

    def _search(self, prefix: str, src_ids, src_mask, beam: int, max_len: int) -> Hypothesis:
        scorers = make_scorers(self.members, prefix)
        if beam == 1:
            return greedy_decode(scorers, src_ids, src_mask, max_len)
        return beam_search(scorers, src_ids, src_mask, beam, max_len)

    def translate(self, pair: SegmentedPair, beam: Optional[int] = None) -> TranslationResult:
        """Decode one sentence (beam=1 runs greedy search)"""
        beam = self.decode.beam if beam is None else beam
        src_ids, src_mask = self._source(pair)
        prefix = self.strategy.translation_decoder
        hyp = self._search(prefix, src_ids, src_mask, beam, self.max_len)

        target = self.vocabs.target
        result = TranslationResult(
            text=postprocess(hyp.tokens, target),
            tokens=hyp.tokens,
            score=hyp.score
        )
        if self.strategy.mode == IntegrationMode.INTERLEAVED:
            result.tags = extract_predicted_tags(hyp.tokens, target)
            result.annotated = annotate_translation(hyp.tokens, target)
            result.alternation_violations = alternation_violations(hyp.tokens, target)
        elif self.strategy.mode == IntegrationMode.MULTITASK and self.decode.decode_tags:
            tag_hyp = self._search("tag", src_ids, src_mask, beam, self.decode.max_len)
            result.tags = [self.vocabs.tags.decode(t) for t in _content(tag_hyp.tokens)]
        return result

    def translate_corpus(
        self,
        pairs: Sequence[SegmentedPair],
        beam: Optional[int] = None,
        threads: Optional[int] = None
    ) -> List[TranslationResult]:
        """
        Decode a corpus; output order equals input order for any thread count.

        Args:
            pairs: Segmented sentences (targets are ignored)
            beam: Beam width override
            threads: Worker threads (default settings.SNMT_THREADS)
        """
        threads = max(1, threads or settings.SNMT_THREADS)
        if threads == 1:
            results = [self.translate(pair, beam) for pair in pairs]
        else:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(lambda p: self.translate(p, beam), pairs))

        empty = sum(1 for r in results if not r.text)
        violations = sum(r.alternation_violations for r in results)
        logger.info(
            f"✓ Translated {len(results)} sentences "
            f"(beam {beam or self.decode.beam}, {threads} thread(s), {empty} empty, "
            f"{violations} alternation violations)"
        )
        return results
