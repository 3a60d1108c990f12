"""
Shared fixtures

- the "Obama receives Netanyahu ..." sentence with its supertags and a merge
  table reproducing the "Net+ an+ yahu" split
- a factory for small bracket-task models under every strategy
"""

import os
import sys
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np
import pytest

# Add project root to path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from backend.app.modules.data import (  # noqa: E402
    AnnotatedSentencePair,
    MergeTable,
    SegmentedPair,
    build_feature_vocabulary,
    build_tag_vocabulary,
    build_vocabularies,
    generate_bracket_corpus,
    segment_pair,
)
from backend.app.modules.model import ModelConfig, ModelParameters, init_parameters  # noqa: E402
from backend.app.modules.strategies import (  # noqa: E402
    IntegrationMode,
    StrategyConfig,
    Vocabularies,
    build_batch,
    embedding_spec,
    model_decoders,
)

EXAMPLE_SENTENCE = "Obama receives Netanyahu in the capital of USA"
EXAMPLE_TAGS = ["NP", "((S[dcl]\\NP)/PP)/NP", "NP", "PP/NP", "NP/N", "N", "(NP\\NP)/NP", "NP"]
EXAMPLE_INTERLEAVED = (
    "NP Obama ((S[dcl]\\NP)/PP)/NP receives NP Net+ an+ yahu PP/NP in "
    "NP/N the N capital (NP\\NP)/NP of NP USA"
)
NETANYAHU_MERGES = [("N", "e"), ("Ne", "t"), ("a", "n"), ("y", "a"), ("ya", "h"), ("yah", "u</w>")]


def whole_word_merges(word: str):
    """Left-to-right merges that rebuild a word into a single unit"""
    symbols = list(word)
    symbols[-1] += "</w>"
    merges, current = [], symbols[0]
    for symbol in symbols[1:]:
        merges.append((current, symbol))
        current += symbol
    return merges


@pytest.fixture
def example_pair() -> AnnotatedSentencePair:
    words = EXAMPLE_SENTENCE.split()
    return AnnotatedSentencePair(src_words=words, tgt_words=words, tgt_supertags=EXAMPLE_TAGS)


@pytest.fixture
def example_merges() -> MergeTable:
    merges = list(NETANYAHU_MERGES)
    for word in EXAMPLE_SENTENCE.split():
        if word != "Netanyahu":
            merges.extend(whole_word_merges(word))
    return MergeTable(merges)


@dataclass
class ToyModel:
    """A strategy, its vocabularies, initialized parameters and segmented pairs"""
    strategy: StrategyConfig
    vocabs: Vocabularies
    params: ModelParameters
    pairs: List[SegmentedPair]

    def batch(self, count: int = 3):
        return build_batch(self.pairs[:count], self.strategy, self.vocabs)


def build_toy_model(
    mode: str = "baseline",
    hidden: int = 16,
    size: int = 20,
    seed: int = 0,
    alphabet_size: int = 10,
    max_len: int = 8,
    source_features: Sequence[str] = (),
    init_scale: float = 0.08
) -> ToyModel:
    corpus = generate_bracket_corpus(size, seed, alphabet_size=alphabet_size, min_len=3,
                                     max_len=max_len, max_depth=2)
    strategy = StrategyConfig(
        mode=mode,
        source_features=list(source_features),
        feature_widths={name: 4 for name in source_features}
    )
    merges = MergeTable()
    pairs = [segment_pair(p, merges, strategy.source_features) for p in corpus]
    src_vocab, tgt_vocab = build_vocabularies(pairs, strategy.target_mode)
    vocabs = Vocabularies(
        source=src_vocab,
        target=tgt_vocab,
        features={name: build_feature_vocabulary(pairs, name) for name in source_features},
        tags=build_tag_vocabulary(pairs) if strategy.mode == IntegrationMode.MULTITASK else None
    )
    config = ModelConfig(
        hidden_size=hidden,
        embedding_size=hidden,
        target_embedding_size=hidden,
        attention_size=hidden,
        output_size=hidden,
        init_scale=init_scale
    )
    spec = embedding_spec(strategy, config, vocabs)
    params = init_parameters(config, spec, model_decoders(strategy, vocabs), seed)
    return ToyModel(strategy, vocabs, params, pairs)


@pytest.fixture
def toy_model():
    """Factory fixture: toy_model(mode, **options) -> ToyModel"""
    return build_toy_model


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(0)


@pytest.fixture
def example_interleaved() -> str:
    return EXAMPLE_INTERLEAVED
