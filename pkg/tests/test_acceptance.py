"""
End-to-end quality on the synthetic bracket task.

These train real models for a few minutes each; run them with
pytest -m slow.
"""

import pytest

from backend.app.modules.data import (
    MergeTable,
    build_vocabularies,
    generate_bracket_corpus,
    segment_pair,
)
from backend.app.modules.evaluation import corpus_bleu, tag_accuracy
from backend.app.modules.inference import DecodeConfig, Translator
from backend.app.modules.model import ModelConfig, init_parameters, load_checkpoint
from backend.app.modules.strategies import (
    StrategyConfig,
    Vocabularies,
    embedding_spec,
    model_decoders,
)
from backend.app.modules.training import TrainingSchedule, train

pytestmark = pytest.mark.slow

INTERLEAVED_SEEDS = (1, 2, 3)


@pytest.fixture(scope="module")
def bracket_task():
    merges = MergeTable()
    splits = {}
    for name, size, seed in (("train", 2000, 11), ("dev", 100, 12), ("test", 200, 13)):
        pairs = generate_bracket_corpus(size, seed, alphabet_size=26)
        splits[name] = (pairs, [segment_pair(p, merges) for p in pairs])
    return splits


def _train_and_translate(bracket_task, output_dir, mode, seed):
    strategy = StrategyConfig(mode=mode)
    _, train_pairs = bracket_task["train"]
    dev_raw, dev_pairs = bracket_task["dev"]
    test_raw, test_pairs = bracket_task["test"]

    source, target = build_vocabularies(train_pairs, strategy.target_mode)
    vocabs = Vocabularies(source=source, target=target)
    config = ModelConfig()
    params = init_parameters(config, embedding_spec(strategy, config, vocabs), model_decoders(strategy, vocabs), seed)
    schedule = TrainingSchedule(batch_size=20, max_epochs=30, validate_every=100, patience=10,
                                best_k=1, learning_rate=0.003)
    _, report = train(train_pairs, params, strategy, vocabs, schedule, output_dir, seed=seed,
                      dev_pairs=dev_pairs, dev_references=[" ".join(p.tgt_words) for p in dev_raw])

    best, _ = load_checkpoint(report.best_checkpoint, vocabs.hashes())
    translator = Translator([best], strategy, vocabs, DecodeConfig(beam=5))
    results = translator.translate_corpus(test_pairs)
    bleu = corpus_bleu([r.text for r in results], [" ".join(p.tgt_words) for p in test_raw])
    return bleu, results, test_raw


@pytest.fixture(scope="module")
def baseline_bleu(bracket_task, tmp_path_factory):
    bleu, _, _ = _train_and_translate(bracket_task, tmp_path_factory.mktemp("baseline"), "baseline", seed=1)
    return bleu.score


def test_baseline_learns_the_bracket_language(baseline_bleu):
    assert baseline_bleu >= 90.0


def test_interleaved_model_predicts_tags(bracket_task, baseline_bleu, tmp_path):
    outcomes = {}
    for seed in INTERLEAVED_SEEDS:
        bleu, results, test_raw = _train_and_translate(bracket_task, tmp_path / f"seed{seed}", "interleaved", seed)
        accuracy = tag_accuracy([r.tags for r in results], [p.tgt_supertags for p in test_raw])
        outcomes[seed] = (bleu.score, accuracy.accuracy)

    passed = [
        seed for seed, (bleu, accuracy) in outcomes.items()
        if bleu >= baseline_bleu - 2.0 and accuracy is not None and accuracy >= 95.0
    ]
    assert len(passed) >= 2, f"baseline {baseline_bleu:.2f}, per seed (BLEU, tag accuracy): {outcomes}"
