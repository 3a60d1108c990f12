"""
Byte-Pair Encoding

Greedy pair-merge subword segmentation learned jointly over source and
target text. Symbols carry an end-of-word sentinel while merging; rendered
subunits use a trailing "+" on every non-final unit of a word
("Netanyahu" -> "Net+ an+ yahu"). A word-final unit never ends in "+": if
its text ends in "+" or "\\" one "\\" is appended ("a+" -> "a+ +\\").
"""

import logging
from collections import Counter
from pathlib import Path
from typing import Dict, Iterable, List, Tuple, Union

logger = logging.getLogger(__name__)

END_OF_WORD = "</w>"
CONTINUATION = "+"
FINAL_ESCAPE = "\\"

Pair = Tuple[str, str]


class MergeTable:
    """
    Ordered merge operations; list position is the merge priority.
    """

    def __init__(self, merges: Iterable[Pair] = ()):
        self.merges: List[Pair] = []
        self.ranks: Dict[Pair, int] = {}
        for pair in merges:
            self.add(pair)
        self._cache: Dict[str, List[str]] = {}

    def add(self, pair: Pair) -> None:
        pair = (str(pair[0]), str(pair[1]))
        if pair in self.ranks:
            raise ValueError(f"duplicate merge {pair}")
        self.ranks[pair] = len(self.merges)
        self.merges.append(pair)
        self._cache = {}

    def __len__(self) -> int:
        return len(self.merges)

    def __iter__(self):
        return iter(self.merges)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, MergeTable) and self.merges == other.merges

    def save(self, path: Union[str, Path]) -> None:
        """Write one merge per line: 'left right'"""
        with open(path, "w", encoding="utf-8") as f:
            for left, right in self.merges:
                f.write(f"{left} {right}\n")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "MergeTable":
        merges = []
        with open(path, "r", encoding="utf-8") as f:
            for line_no, line in enumerate(f, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split(" ")
                if len(parts) != 2:
                    raise ValueError(f"{path}:{line_no}: expected 'left right', got {line!r}")
                merges.append((parts[0], parts[1]))
        return cls(merges)


def _symbols(word: str) -> Tuple[str, ...]:
    chars = list(word)
    chars[-1] = chars[-1] + END_OF_WORD
    return tuple(chars)


def _merge_word(symbols: Tuple[str, ...], pair: Pair) -> Tuple[str, ...]:
    merged = []
    i = 0
    while i < len(symbols):
        if i + 1 < len(symbols) and symbols[i] == pair[0] and symbols[i + 1] == pair[1]:
            merged.append(symbols[i] + symbols[i + 1])
            i += 2
        else:
            merged.append(symbols[i])
            i += 1
    return tuple(merged)


def learn_bpe(corpus: Iterable[str], num_merges: int, min_frequency: int = 1) -> MergeTable:
    """
    Learn merge operations from a token stream.

    Each step merges the most frequent adjacent symbol pair; ties go to the
    lexicographically smallest pair.

    Args:
        corpus: Whitespace-free tokens (words), repeated as they occur
        num_merges: Maximum number of merges (>= 0)
        min_frequency: Stop once the best pair occurs fewer times than this
            (1 merges until num_merges or no pair is left)

    Returns:
        Learned merge table (empty for an empty corpus)
    """
    if num_merges < 0:
        raise ValueError("num_merges must be >= 0")
    if min_frequency < 1:
        raise ValueError("min_frequency must be >= 1")

    vocab: Dict[Tuple[str, ...], int] = Counter(_symbols(w) for w in corpus if w)
    table = MergeTable()

    for _ in range(num_merges):
        pair_counts: Counter = Counter()
        for symbols, freq in vocab.items():
            for pair in zip(symbols, symbols[1:]):
                pair_counts[pair] += freq
        if not pair_counts:
            break
        best_count = max(pair_counts.values())
        if best_count < min_frequency:
            break
        best = min(pair for pair, count in pair_counts.items() if count == best_count)
        table.add(best)

        updated: Dict[Tuple[str, ...], int] = Counter()
        for symbols, freq in vocab.items():
            updated[_merge_word(symbols, best) if best[0] in symbols else symbols] += freq
        vocab = updated

    logger.info(f"✓ Learned {len(table)} BPE merges (requested {num_merges})")
    return table


def apply_bpe(word: str, merges: MergeTable) -> List[str]:
    """
    Segment one word into subunits.

    Args:
        word: Non-empty token
        merges: Merge table

    Returns:
        Subunits, every non-final one carrying the "+" continuation marker
    """
    if not word:
        raise ValueError("apply_bpe needs a non-empty word")
    cached = merges._cache.get(word)
    if cached is not None:
        return list(cached)

    symbols = _symbols(word)
    while len(symbols) > 1:
        candidates = [
            (merges.ranks[pair], pair)
            for pair in zip(symbols, symbols[1:])
            if pair in merges.ranks
        ]
        if not candidates:
            break
        _, best = min(candidates)
        symbols = _merge_word(symbols, best)

    units = [s + CONTINUATION for s in symbols[:-1]]
    units.append(final_unit(symbols[-1][: -len(END_OF_WORD)]))
    merges._cache[word] = units
    return list(units)


def final_unit(text: str) -> str:
    """Render the last unit of a word so it cannot read as a continuation"""
    if text.endswith(CONTINUATION) or text.endswith(FINAL_ESCAPE):
        return text + FINAL_ESCAPE
    return text


def continues_word(unit: str) -> bool:
    """True for a non-final subunit"""
    return unit.endswith(CONTINUATION)


def segment_words(words: List[str], merges: MergeTable) -> List[List[str]]:
    """Subunits per word"""
    return [apply_bpe(w, merges) for w in words]


def join_subunits(units: Iterable[str]) -> List[str]:
    """
    Rebuild words from a subunit stream by removing continuation markers.

    A unit ending in "+" continues into the next unit; a final unit loses
    one escape. A dangling continuation at the end of the stream is
    emitted as a word.
    """
    words: List[str] = []
    pending = ""
    for unit in units:
        if continues_word(unit):
            pending += unit[: -len(CONTINUATION)]
        else:
            if unit.endswith(FINAL_ESCAPE):
                unit = unit[: -len(FINAL_ESCAPE)]
            words.append(pending + unit)
            pending = ""
    if pending:
        words.append(pending)
    return words
