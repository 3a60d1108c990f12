"""
Tests for scoring: BLEU against hand-computed values, bootstrap
significance, construct and length subsets, tag accuracy and reports.
"""

import math
from pathlib import Path

import numpy as np
import pytest
from numpy.testing import assert_allclose

from backend.app.core.exceptions import EvaluationError
from backend.app.modules.evaluation import (
    LENGTH_BUCKETS,
    bleu_from_stats,
    bootstrap_significance,
    breakdown_report,
    classify_constructs,
    corpus_bleu,
    corpus_stats,
    length_bucket,
    load_construct_rules,
    parse_construct_rules,
    render_text,
    render_tsv,
    sentence_stats,
    significance_marker,
    standard_subsets,
    subset_indices,
    tag_accuracy,
)

RULES_FILE = Path(__file__).resolve().parent.parent / "config" / "construct_rules.tsv"


@pytest.fixture
def corpora():
    """References, a perfect system and a system with 30% of tokens replaced"""
    rng = np.random.default_rng(7)
    references = [" ".join(f"w{int(i)}" for i in rng.integers(0, 20, size=10)) for _ in range(200)]
    degraded = [
        " ".join("x" if rng.random() < 0.3 else token for token in ref.split())
        for ref in references
    ]
    return references, list(references), degraded


# ----------------------------------------------------------------------------
# BLEU
# ----------------------------------------------------------------------------

def test_identical_output_scores_100():
    refs = ["the cat sat on the mat", "a dog barked at the mailman today"]
    score = corpus_bleu(refs, refs)
    assert score.score == pytest.approx(100.0)
    assert str(score).startswith("BLEU = 100.00 100.0/100.0/100.0/100.0")


def test_short_output_pays_brevity_penalty():
    score = corpus_bleu(["the cat sat on the"], ["the cat sat on the mat"])
    assert_allclose(score.brevity_penalty, math.exp(-0.2))
    assert score.score == pytest.approx(100 * math.exp(-0.2), abs=1e-6)
    assert round(score.score, 2) == 81.87


def test_partial_match():
    score = corpus_bleu(["a b c d e f"], ["a b c d x f"])
    assert_allclose(score.precisions, [500 / 6, 60.0, 50.0, 100 / 3])
    assert score.score == pytest.approx(100 * (5 / 6 * 3 / 5 * 1 / 2 * 1 / 3) ** 0.25, abs=1e-6)
    assert round(score.score, 2) == 53.73


def test_clipped_unigram_counts():
    score = corpus_bleu(["the the the the the the the"], ["the cat is on the mat"])
    assert_allclose(score.precisions[0], 200 / 7)
    assert score.score == 0.0


def test_sentence_statistics():
    stats = sentence_stats("a b c d e f", "a b c d x f")
    assert stats.tolist() == [5, 3, 2, 1, 6, 5, 4, 3, 6, 6]
    assert sentence_stats(["a"], ["a", "b"]).tolist() == [1, 0, 0, 0, 1, 0, 0, 0, 1, 2]


def test_corpus_score_sums_statistics():
    hyps = ["a b c d e f", "the cat sat on the"]
    refs = ["a b c d x f", "the cat sat on the mat"]
    stats = corpus_stats(hyps, refs)
    assert stats.shape == (2, 10)
    assert corpus_bleu(hyps, refs).score == bleu_from_stats(stats[0] + stats[1]).score


def test_sentence_counts_must_match():
    with pytest.raises(EvaluationError):
        corpus_bleu(["a b"], ["a b", "c d"])


# ----------------------------------------------------------------------------
# Bootstrap
# ----------------------------------------------------------------------------

def test_system_compared_with_itself_is_not_significant(corpora):
    refs, perfect, _ = corpora
    result = bootstrap_significance(perfect, perfect, refs, resamples=200, seed=1)
    assert result.p_value == 1.0
    assert result.wins == 0 and result.ties == 200
    assert result.marker == ""


def test_clear_improvement_is_significant(corpora):
    refs, perfect, degraded = corpora
    result = bootstrap_significance(degraded, perfect, refs, resamples=300, seed=1)
    assert result.p_value < 0.01
    assert result.marker == "**"
    assert result.delta_low > 0


def test_bootstrap_is_seeded(corpora):
    refs, perfect, degraded = corpora
    first = bootstrap_significance(perfect, degraded, refs, resamples=100, seed=3)
    second = bootstrap_significance(perfect, degraded, refs, resamples=100, seed=3)
    assert first == second


def test_bootstrap_needs_enough_resamples(corpora):
    refs, perfect, degraded = corpora
    with pytest.raises(EvaluationError):
        bootstrap_significance(degraded, perfect, refs, resamples=50)


@pytest.mark.parametrize("p_value,marker", [(0.005, "**"), (0.03, "*"), (0.2, ""), (None, "")])
def test_significance_marker(p_value, marker):
    assert significance_marker(p_value) == marker


# ----------------------------------------------------------------------------
# Subsets
# ----------------------------------------------------------------------------

@pytest.mark.parametrize("length,bucket", [
    (1, "<15"), (14, "<15"), (15, "15-25"), (25, "15-25"),
    (26, "25-35"), (35, "25-35"), (36, ">35"),
])
def test_length_buckets(length, bucket):
    assert length_bucket(length) == bucket


def test_empty_source_has_no_bucket():
    with pytest.raises(EvaluationError):
        length_bucket(0)


def test_parse_construct_rules():
    rules = parse_construct_rules(["# comment", "", "conj\t=conj", "pp\t/PP"])
    assert [(r.subset, r.pattern, r.exact) for r in rules] == [("conj", "conj", True), ("pp", "/PP", False)]
    with pytest.raises(EvaluationError) as exc:
        parse_construct_rules(["conj =conj"])
    assert exc.value.details["line"] == 1


def test_shipped_rule_file_loads():
    subsets = {rule.subset for rule in load_construct_rules(RULES_FILE)}
    assert subsets == {"conj", "pp", "questions", "control", "subordinate"}


def test_classify_constructs():
    rules = load_construct_rules(RULES_FILE)
    memberships = classify_constructs([
        ["NP", "conj", "NP"],
        ["NP", "((S[dcl]\\NP)/PP)/NP", "NP", "PP/NP"],
        ["S[wq]/(S[q]/NP)", "NP"],
        ["NP", "N"],
        ["NP", "xconj"],
    ], rules)
    assert memberships == [["conj"], ["pp"], ["questions"], [], []]
    assert subset_indices(memberships) == {"conj": [0], "pp": [1], "questions": [2]}


# ----------------------------------------------------------------------------
# Tag accuracy
# ----------------------------------------------------------------------------

def test_tag_accuracy_over_length_matched_sentences():
    result = tag_accuracy([["A", "B"], ["A"]], [["A", "C"], ["A", "B"]])
    assert result.accuracy == 50.0
    assert result.match_rate == 0.5
    assert (result.matched_sentences, result.tokens) == (1, 2)


def test_tag_accuracy_without_matches():
    result = tag_accuracy([["A"]], [["A", "B"]])
    assert result.accuracy is None
    assert result.match_rate == 0.0
    with pytest.raises(EvaluationError):
        tag_accuracy([["A"]], [])


# ----------------------------------------------------------------------------
# Reports
# ----------------------------------------------------------------------------

def test_breakdown_report(corpora):
    refs, perfect, degraded = corpora
    tags = [["NP", "conj"] if i % 2 else ["NP"] for i in range(len(refs))]
    lengths = [10 if i < 150 else 30 for i in range(len(refs))]
    subsets = standard_subsets(len(refs), tags, lengths, load_construct_rules(RULES_FILE))
    report = breakdown_report(perfect, degraded, refs, subsets, resamples=100, seed=0)

    by_name = {s.name: s for s in report.subsets}
    assert list(by_name)[:2] == ["all", "conj"]
    assert by_name["all"].count == 200 and by_name["all"].system_bleu == pytest.approx(100.0)
    assert by_name["all"].p_value == report.significance.p_value
    assert by_name["conj"].count == 100
    assert by_name["pp"].count == 0 and by_name["pp"].system_bleu == 0.0
    assert (by_name["<15"].count, by_name["25-35"].count, by_name[">35"].count) == (150, 50, 0)
    assert by_name["conj"].delta > 0
    assert by_name["conj"].relative_delta == pytest.approx(by_name["conj"].delta / by_name["conj"].baseline_bleu)
    assert report.delta == pytest.approx(report.system.score - report.baseline.score)

    tsv = render_tsv(report).splitlines()
    assert tsv[0].split("\t")[:3] == ["subset", "kind", "count"]
    assert len(tsv) == 1 + len(report.subsets)
    assert tsv[1].startswith("all\tcorpus\t200\t100.0000\t")

    text = render_text(report)
    assert "system:   BLEU = 100.00" in text
    assert "**" in text


def test_single_system_report():
    refs = ["a b c d e", "f g h i j"]
    report = breakdown_report(refs, None, refs, standard_subsets(2, None, [3, 20], []))
    assert report.baseline is None and report.significance is None
    assert [s.name for s in report.subsets] == ["all", *LENGTH_BUCKETS]
    assert all(s.delta is None for s in report.subsets)
    assert "baseline:" not in render_text(report)
