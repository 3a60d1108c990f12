"""
Corpus file I/O

Reads line-aligned parallel corpora with optional tag and feature files, and
writes the plain-text artifacts produced by preprocessing.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Union

from backend.app.core.exceptions import AlignmentError
from backend.app.modules.data.schemas import AnnotatedSentencePair

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


@dataclass
class CorpusReadResult:
    """Pairs read from disk plus the 1-based line numbers that were dropped"""
    pairs: List[AnnotatedSentencePair]
    line_numbers: List[int] = field(default_factory=list)
    unparsed_lines: List[int] = field(default_factory=list)
    misaligned_lines: List[int] = field(default_factory=list)


def read_lines(path: PathLike) -> List[str]:
    """UTF-8 lines without trailing newlines"""
    with open(path, "r", encoding="utf-8") as f:
        return [line.rstrip("\n").rstrip("\r") for line in f]


def write_lines(path: PathLike, lines: Iterable[str]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for line in lines:
            f.write(line + "\n")


def write_id_corpus(path: PathLike, rows: Iterable[Sequence[int]]) -> None:
    """One space-separated id sequence per line"""
    write_lines(path, (" ".join(str(i) for i in row) for row in rows))


def read_id_corpus(path: PathLike) -> List[List[int]]:
    return [[int(tok) for tok in line.split()] for line in read_lines(path)]


def _check_line_counts(files: Dict[str, List[str]]) -> None:
    counts = {name: len(lines) for name, lines in files.items()}
    if len(set(counts.values())) > 1:
        raise AlignmentError(
            "corpus files have different line counts",
            details={"line_counts": counts}
        )


def read_parallel_corpus(
    src_path: PathLike,
    tgt_path: PathLike,
    tgt_tag_path: Optional[PathLike] = None,
    src_feature_paths: Optional[Dict[str, PathLike]] = None,
    strict: bool = True
) -> CorpusReadResult:
    """
    Read a parallel corpus with its annotations.

    An empty annotation line means the parser produced nothing for that
    sentence; such pairs are dropped with a warning. A non-empty annotation
    line whose token count differs from its corpus line is a misalignment.

    Args:
        src_path: Source sentences, whitespace-tokenized
        tgt_path: Target sentences, whitespace-tokenized
        tgt_tag_path: Target supertags, token-aligned (optional)
        src_feature_paths: Word-level source feature files by feature name
        strict: Raise on misaligned lines instead of dropping them

    Returns:
        Read result with retained pairs and dropped line numbers

    Raises:
        AlignmentError: File line counts differ, or misaligned lines in strict mode
    """
    src_feature_paths = src_feature_paths or {}
    files: Dict[str, List[str]] = {"source": read_lines(src_path), "target": read_lines(tgt_path)}
    if tgt_tag_path is not None:
        files["target-tags"] = read_lines(tgt_tag_path)
    for name, path in src_feature_paths.items():
        files[f"source-{name}"] = read_lines(path)
    _check_line_counts(files)

    result = CorpusReadResult(pairs=[])
    for index, (src_line, tgt_line) in enumerate(zip(files["source"], files["target"])):
        line_no = index + 1
        src_words, tgt_words = src_line.split(), tgt_line.split()
        if not src_words or not tgt_words:
            result.unparsed_lines.append(line_no)
            continue

        tags = files["target-tags"][index].split() if "target-tags" in files else None
        features = {name: files[f"source-{name}"][index].split() for name in src_feature_paths}
        if tags == [] or any(not values for values in features.values()):
            result.unparsed_lines.append(line_no)
            continue

        if (tags is not None and len(tags) != len(tgt_words)) or any(
            len(values) != len(src_words) for values in features.values()
        ):
            result.misaligned_lines.append(line_no)
            continue

        result.pairs.append(AnnotatedSentencePair(
            src_words=src_words,
            src_features=features,
            tgt_words=tgt_words,
            tgt_supertags=tags
        ))
        result.line_numbers.append(line_no)

    if result.unparsed_lines:
        logger.warning(
            f"✗ Dropped {len(result.unparsed_lines)} pairs with empty text or annotation "
            f"(first lines: {result.unparsed_lines[:10]})"
        )
    if result.misaligned_lines:
        if strict:
            raise AlignmentError(
                f"{len(result.misaligned_lines)} annotation lines are not token-aligned",
                details={"lines": result.misaligned_lines}
            )
        logger.warning(
            f"✗ Dropped {len(result.misaligned_lines)} misaligned pairs "
            f"(first lines: {result.misaligned_lines[:10]})"
        )
    logger.info(f"✓ Read {len(result.pairs)} pairs from {src_path} / {tgt_path}")
    return result
