"""
BLEU and paired bootstrap resampling

Clipped n-gram sufficient statistics are collected per sentence; corpus
scores sum them and hand the totals to sacrebleu's BLEU combination with no
smoothing, which matches multi-bleu on tokenized text. Keeping the
per-sentence statistics makes bootstrap resampling a matter of summing
selected rows.
"""

import logging
from collections import Counter
from typing import List, Sequence, Union

import numpy as np
from sacrebleu.metrics import BLEU

from backend.app.core.exceptions import EvaluationError
from backend.app.modules.evaluation.schemas import BleuScore, SignificanceResult

logger = logging.getLogger(__name__)

MAX_ORDER = 4
STAT_WIDTH = 2 * MAX_ORDER + 2

Sentence = Union[str, Sequence[str]]


def _tokens(sentence: Sentence) -> List[str]:
    return sentence.split() if isinstance(sentence, str) else list(sentence)


def _ngrams(tokens: List[str], n: int) -> Counter:
    return Counter(tuple(tokens[i: i + n]) for i in range(len(tokens) - n + 1))


def sentence_stats(hypothesis: Sentence, reference: Sentence) -> np.ndarray:
    """
    Sufficient statistics of one sentence pair.

    Returns:
        int64 array [correct_1..4, total_1..4, hyp_len, ref_len]
    """
    hyp, ref = _tokens(hypothesis), _tokens(reference)
    stats = np.zeros(STAT_WIDTH, dtype=np.int64)
    for n in range(1, MAX_ORDER + 1):
        hyp_counts = _ngrams(hyp, n)
        ref_counts = _ngrams(ref, n)
        stats[n - 1] = sum(min(count, ref_counts[gram]) for gram, count in hyp_counts.items())
        stats[MAX_ORDER + n - 1] = max(len(hyp) - n + 1, 0)
    stats[-2] = len(hyp)
    stats[-1] = len(ref)
    return stats


def corpus_stats(hypotheses: Sequence[Sentence], references: Sequence[Sentence]) -> np.ndarray:
    """
    (N, 10) statistics matrix.

    Raises:
        EvaluationError: Sentence counts differ
    """
    if len(hypotheses) != len(references):
        raise EvaluationError(
            f"{len(hypotheses)} hypotheses for {len(references)} references",
            details={"hypotheses": len(hypotheses), "references": len(references)}
        )
    if not hypotheses:
        return np.zeros((0, STAT_WIDTH), dtype=np.int64)
    return np.stack([sentence_stats(h, r) for h, r in zip(hypotheses, references)])


def bleu_from_stats(totals: np.ndarray) -> BleuScore:
    """Combine summed statistics into a corpus score"""
    totals = np.asarray(totals, dtype=np.int64)
    result = BLEU.compute_bleu(
        correct=[int(x) for x in totals[:MAX_ORDER]],
        total=[int(x) for x in totals[MAX_ORDER: 2 * MAX_ORDER]],
        sys_len=int(totals[-2]),
        ref_len=int(totals[-1]),
        smooth_method="none"
    )
    return BleuScore(
        score=min(100.0, max(0.0, float(result.score))),
        precisions=[float(p) for p in result.precisions],
        brevity_penalty=float(result.bp),
        sys_len=int(totals[-2]),
        ref_len=int(totals[-1])
    )


def corpus_bleu(hypotheses: Sequence[Sentence], references: Sequence[Sentence]) -> BleuScore:
    """
    Corpus BLEU over tokenized sentences (n = 1..4, no smoothing).

    Args:
        hypotheses: System outputs, strings or token lists
        references: One reference per hypothesis

    Returns:
        BLEU score
    """
    return bleu_from_stats(corpus_stats(hypotheses, references).sum(axis=0))


def _scores_of_samples(stats: np.ndarray, samples: np.ndarray) -> np.ndarray:
    return np.array([bleu_from_stats(stats[row].sum(axis=0)).score for row in samples])


def bootstrap_significance(
    hyp_a: Sequence[Sentence],
    hyp_b: Sequence[Sentence],
    references: Sequence[Sentence],
    resamples: int = 1000,
    seed: int = 0
) -> SignificanceResult:
    """
    Paired bootstrap test of "B is better than A".

    Sentence indices are drawn with replacement; both systems are scored
    on the same draw. p is the fraction of draws where B does not beat A,
    so ties count against B.

    Args:
        hyp_a: Outputs of system A (typically the baseline)
        hyp_b: Outputs of system B
        references: References
        resamples: Number of draws (>= 100)
        seed: Generator seed

    Returns:
        Significance result
    """
    if resamples < 100:
        raise EvaluationError("bootstrap needs at least 100 resamples", details={"resamples": resamples})
    stats_a = corpus_stats(hyp_a, references)
    stats_b = corpus_stats(hyp_b, references)
    n = len(references)
    if n == 0:
        raise EvaluationError("bootstrap over an empty corpus")

    rng = np.random.default_rng(seed)
    samples = rng.integers(0, n, size=(resamples, n))
    deltas = _scores_of_samples(stats_b, samples) - _scores_of_samples(stats_a, samples)

    wins = int((deltas > 0).sum())
    ties = int((deltas == 0).sum())
    result = SignificanceResult(
        p_value=(resamples - wins) / resamples,
        resamples=resamples,
        wins=wins,
        ties=ties,
        delta_mean=float(deltas.mean()),
        delta_std=float(deltas.std()),
        delta_low=float(np.percentile(deltas, 2.5)),
        delta_high=float(np.percentile(deltas, 97.5))
    )
    logger.info(f"Bootstrap: p = {result.p_value:.4f} over {resamples} resamples ({ties} ties)")
    return result
