"""
Synthetic bracket-language corpus

Deterministic toy translation task: source sentences are lowercase symbols
with balanced round brackets, targets are the same sequence in uppercase
with square brackets. Every target token carries a supertag derived from
its bracket depth, so the tag sequence is a pure function of the target.
"""

import logging
import string
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from backend.app.core.config import derive_seed
from backend.app.modules.data.corpus_io import write_lines
from backend.app.modules.data.schemas import AnnotatedSentencePair

logger = logging.getLogger(__name__)

OPEN_SRC, CLOSE_SRC = "(", ")"
OPEN_TGT, CLOSE_TGT = "[", "]"


def bracket_tag(token: str, depth: int) -> str:
    """Supertag of a target token at the given bracket depth"""
    if token == OPEN_TGT:
        return "(N/N)"
    if token == CLOSE_TGT:
        return "(N\\N)"
    return "N" if depth == 0 else f"N[d{depth}]"


def translate_symbols(src_words: List[str]) -> Tuple[List[str], List[str]]:
    """Target words and their supertags for a source symbol sequence"""
    words: List[str] = []
    tags: List[str] = []
    depth = 0
    for token in src_words:
        if token == OPEN_SRC:
            words.append(OPEN_TGT)
            tags.append(bracket_tag(OPEN_TGT, depth))
            depth += 1
        elif token == CLOSE_SRC:
            depth -= 1
            words.append(CLOSE_TGT)
            tags.append(bracket_tag(CLOSE_TGT, depth))
        else:
            word = token.upper()
            words.append(word)
            tags.append(bracket_tag(word, depth))
    return words, tags


def _sample_sentence(
    rng: np.random.Generator,
    alphabet: str,
    min_len: int,
    max_len: int,
    max_depth: int
) -> List[str]:
    length = int(rng.integers(min_len, max_len + 1))
    tokens: List[str] = []
    depth = 0
    while len(tokens) + depth < length:
        remaining = length - len(tokens) - depth
        roll = rng.random()
        if roll < 0.15 and depth < max_depth and remaining >= 3:
            tokens.append(OPEN_SRC)
            depth += 1
        elif roll < 0.30 and depth > 0 and tokens[-1] != OPEN_SRC:
            tokens.append(CLOSE_SRC)
            depth -= 1
        else:
            tokens.append(alphabet[int(rng.integers(len(alphabet)))])
    tokens.extend([CLOSE_SRC] * depth)
    return tokens


def generate_bracket_corpus(
    size: int,
    seed: int,
    alphabet_size: int = 26,
    min_len: int = 3,
    max_len: int = 12,
    max_depth: int = 3
) -> List[AnnotatedSentencePair]:
    """
    Generate annotated bracket-language pairs.

    Args:
        size: Number of pairs
        seed: Generator seed
        alphabet_size: Number of lowercase symbols used (at most 26)
        min_len: Minimum source length
        max_len: Maximum source length
        max_depth: Maximum bracket nesting

    Returns:
        Pairs with target supertags
    """
    if not 1 <= alphabet_size <= 26:
        raise ValueError("alphabet_size must lie in [1, 26]")
    alphabet = string.ascii_lowercase[:alphabet_size]
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(size):
        src = _sample_sentence(rng, alphabet, min_len, max_len, max_depth)
        tgt, tags = translate_symbols(src)
        pairs.append(AnnotatedSentencePair(src_words=src, tgt_words=tgt, tgt_supertags=tags))
    return pairs


def write_bracket_task(
    directory: Union[str, Path],
    seed: int,
    splits: Optional[Dict[str, int]] = None,
    **kwargs
) -> Dict[str, Dict[str, Path]]:
    """
    Write train/dev/test splits as .src/.tgt/.tags files.

    Returns:
        File paths per split: {"train": {"src": ..., "tgt": ..., "tags": ...}, ...}
    """
    splits = splits or {"train": 2000, "dev": 100, "test": 200}
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths: Dict[str, Dict[str, Path]] = {}
    for name, size in splits.items():
        pairs = generate_bracket_corpus(size, derive_seed(seed, f"data-{name}"), **kwargs)
        files = {kind: directory / f"{name}.{kind}" for kind in ("src", "tgt", "tags")}
        write_lines(files["src"], (" ".join(p.src_words) for p in pairs))
        write_lines(files["tgt"], (" ".join(p.tgt_words) for p in pairs))
        write_lines(files["tags"], (" ".join(p.tgt_supertags) for p in pairs))
        paths[name] = files
    logger.info(f"✓ Bracket task written to {directory}: {splits}")
    return paths
