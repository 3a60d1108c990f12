"""
Fine-grained evaluation

Construct subsets from reference supertags, source-length buckets, tag
prediction accuracy and the per-subset BLEU breakdown of a system against a
baseline, rendered as aligned text or TSV.
"""

import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from backend.app.core.exceptions import EvaluationError
from backend.app.modules.evaluation.bleu import Sentence, bleu_from_stats, bootstrap_significance, corpus_stats
from backend.app.modules.evaluation.schemas import (
    BleuScore,
    ConstructRule,
    EvaluationReport,
    SubsetScore,
    TagAccuracy,
)

logger = logging.getLogger(__name__)

LENGTH_BUCKETS = ("<15", "15-25", "25-35", ">35")


# ----------------------------------------------------------------------------
# Subsets
# ----------------------------------------------------------------------------

def parse_construct_rules(lines: Sequence[str]) -> List[ConstructRule]:
    """
    Parse "subset<TAB>pattern" lines; a pattern starting with "=" is an
    exact tag match, anything else a substring match. Blank lines and lines
    starting with "#" are skipped.
    """
    rules: List[ConstructRule] = []
    for line_no, line in enumerate(lines, 1):
        line = line.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0].strip() or not parts[1].strip():
            raise EvaluationError(
                f"rule line {line_no}: expected 'subset<TAB>pattern'",
                details={"line": line_no, "text": line}
            )
        subset, pattern = parts[0].strip(), parts[1].strip()
        exact = pattern.startswith("=")
        rules.append(ConstructRule(subset=subset, pattern=pattern[1:] if exact else pattern, exact=exact))
    return rules


def load_construct_rules(path: Union[str, Path]) -> List[ConstructRule]:
    with open(path, "r", encoding="utf-8") as f:
        return parse_construct_rules(f.readlines())


def classify_constructs(
    reference_tags: Sequence[Sequence[str]],
    rules: Sequence[ConstructRule]
) -> List[List[str]]:
    """
    Construct subsets of every sentence.

    Args:
        reference_tags: Reference supertag sequence per sentence
        rules: Construct rules

    Returns:
        Sorted subset names per sentence (possibly empty)
    """
    memberships = []
    for tags in reference_tags:
        names = {rule.subset for rule in rules if any(rule.matches(tag) for tag in tags)}
        memberships.append(sorted(names))
    return memberships


def length_bucket(length: int) -> str:
    """
    Bucket of a source length in BPE units: [1, 15) "<15", [15, 25]
    "15-25", (25, 35] "25-35", above 35 ">35".
    """
    if length < 1:
        raise EvaluationError("source length must be >= 1", details={"length": length})
    if length < 15:
        return "<15"
    if length <= 25:
        return "15-25"
    if length <= 35:
        return "25-35"
    return ">35"


def length_buckets(source_lengths: Sequence[int]) -> List[str]:
    return [length_bucket(n) for n in source_lengths]


def subset_indices(memberships: Sequence[Sequence[str]]) -> Dict[str, List[int]]:
    """Invert per-sentence memberships into sentence indices per subset"""
    subsets: Dict[str, List[int]] = {}
    for index, names in enumerate(memberships):
        for name in names:
            subsets.setdefault(name, []).append(index)
    return subsets


# ----------------------------------------------------------------------------
# Tag accuracy
# ----------------------------------------------------------------------------

def tag_accuracy(
    predicted: Sequence[Sequence[str]],
    reference: Sequence[Sequence[str]]
) -> TagAccuracy:
    """
    Token accuracy over sentences whose predicted and reference tag counts
    match, and the fraction of such sentences.

    Raises:
        EvaluationError: Different numbers of sentences
    """
    if len(predicted) != len(reference):
        raise EvaluationError(
            f"{len(predicted)} predicted tag lines for {len(reference)} references",
            details={"predicted": len(predicted), "reference": len(reference)}
        )
    matched = correct = tokens = 0
    for pred, ref in zip(predicted, reference):
        if len(pred) != len(ref):
            continue
        matched += 1
        tokens += len(ref)
        correct += sum(p == r for p, r in zip(pred, ref))

    sentences = len(reference)
    if tokens == 0:
        logger.warning("✗ No length-matched tag sequences; accuracy undefined")
    return TagAccuracy(
        accuracy=100.0 * correct / tokens if tokens else None,
        match_rate=matched / sentences if sentences else 0.0,
        matched_sentences=matched,
        sentences=sentences,
        tokens=tokens
    )


# ----------------------------------------------------------------------------
# Breakdown
# ----------------------------------------------------------------------------

def _score_rows(stats: np.ndarray, rows: Sequence[int]) -> BleuScore:
    return bleu_from_stats(stats[list(rows)].sum(axis=0))


def breakdown_report(
    system: Sequence[Sentence],
    baseline: Optional[Sequence[Sentence]],
    references: Sequence[Sentence],
    subsets: Dict[str, Tuple[str, Sequence[int]]],
    resamples: int = 0,
    seed: int = 0
) -> EvaluationReport:
    """
    Per-subset BLEU of a system and (optionally) a baseline.

    Args:
        system: System outputs
        baseline: Baseline outputs, or None for a single-system report
        references: References
        subsets: name -> (kind, sentence indices)
        resamples: Bootstrap resamples for corpus-level significance (0 skips it)
        seed: Bootstrap seed

    Returns:
        Evaluation report; subsets keep the given order
    """
    sys_stats = corpus_stats(system, references)
    base_stats = corpus_stats(baseline, references) if baseline is not None else None

    system_score = bleu_from_stats(sys_stats.sum(axis=0))
    report = EvaluationReport(system=system_score)
    if base_stats is not None:
        report.baseline = bleu_from_stats(base_stats.sum(axis=0))
        report.delta = system_score.score - report.baseline.score
        if resamples:
            report.significance = bootstrap_significance(baseline, system, references, resamples, seed)

    for name, (kind, rows) in subsets.items():
        rows = list(rows)
        entry = SubsetScore(name=name, kind=kind, count=len(rows), system_bleu=0.0)
        if rows:
            entry.system_bleu = _score_rows(sys_stats, rows).score
            if base_stats is not None:
                entry.baseline_bleu = _score_rows(base_stats, rows).score
                entry.delta = entry.system_bleu - entry.baseline_bleu
                if entry.baseline_bleu > 0:
                    entry.relative_delta = entry.delta / entry.baseline_bleu
        if kind == "corpus" and report.significance is not None:
            entry.p_value = report.significance.p_value
        report.subsets.append(entry)
    return report


def standard_subsets(
    n: int,
    reference_tags: Optional[Sequence[Sequence[str]]],
    source_lengths: Optional[Sequence[int]],
    rules: Sequence[ConstructRule]
) -> Dict[str, Tuple[str, List[int]]]:
    """Whole corpus, every construct subset and every length bucket"""
    subsets: Dict[str, Tuple[str, List[int]]] = {"all": ("corpus", list(range(n)))}
    if reference_tags is not None:
        found = subset_indices(classify_constructs(reference_tags, rules))
        names = list(dict.fromkeys([r.subset for r in rules]))
        for name in names:
            subsets[name] = ("construct", found.get(name, []))
    if source_lengths is not None:
        found = subset_indices([[b] for b in length_buckets(source_lengths)])
        for name in LENGTH_BUCKETS:
            subsets[name] = ("length", found.get(name, []))
    return subsets


def _fmt(value: Optional[float], pattern: str = "{:.2f}") -> str:
    return "-" if value is None else pattern.format(value)


def render_text(report: EvaluationReport) -> str:
    """Aligned-column text table"""
    header = ["subset", "kind", "count", "system", "baseline", "delta", "rel"]
    rows = [header]
    for s in report.subsets:
        rows.append([
            s.name, s.kind, str(s.count), _fmt(s.system_bleu), _fmt(s.baseline_bleu),
            _fmt(s.delta, "{:+.2f}") + s.marker, _fmt(s.relative_delta, "{:+.1%}")
        ])
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip() for row in rows]

    lines.append("")
    lines.append(f"system:   {report.system}")
    if report.baseline is not None:
        lines.append(f"baseline: {report.baseline}")
    if report.significance is not None:
        sig = report.significance
        lines.append(
            f"delta {report.delta:+.2f}{sig.marker} (p = {sig.p_value:.4f}, "
            f"{sig.resamples} resamples, 95% [{sig.delta_low:+.2f}, {sig.delta_high:+.2f}])"
        )
    if report.tag_accuracy is not None:
        acc = report.tag_accuracy
        lines.append(f"tag accuracy: {_fmt(acc.accuracy)} (match rate {acc.match_rate:.3f})")
    return "\n".join(lines) + "\n"


def render_tsv(report: EvaluationReport) -> str:
    """Tab-separated rows: subset, kind, count, system, baseline, delta, relative delta, p"""
    lines = ["subset\tkind\tcount\tsystem_bleu\tbaseline_bleu\tdelta\trelative_delta\tp_value"]
    for s in report.subsets:
        lines.append("\t".join([
            s.name, s.kind, str(s.count), _fmt(s.system_bleu, "{:.4f}"),
            _fmt(s.baseline_bleu, "{:.4f}"), _fmt(s.delta, "{:.4f}"),
            _fmt(s.relative_delta, "{:.6f}"), _fmt(s.p_value, "{:.6f}")
        ]))
    return "\n".join(lines) + "\n"
