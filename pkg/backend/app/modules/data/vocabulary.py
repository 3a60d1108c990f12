"""
Vocabulary

Token <-> id bijection with reserved PAD/UNK/EOS ids and a tag/word
partition flag per entry. A string may appear twice, once as a word and once
as a tag; each partition is a bijection on its own.
"""

import hashlib
import logging
from collections import Counter
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple, Union

from backend.app.core.exceptions import VocabularyError

logger = logging.getLogger(__name__)

PAD, UNK, EOS = 0, 1, 2
PAD_TOKEN, UNK_TOKEN, EOS_TOKEN = "<pad>", "<unk>", "</s>"
UNK_TAG_TOKEN = "<unk-tag>"
RESERVED = (PAD_TOKEN, UNK_TOKEN, EOS_TOKEN)


class Vocabulary:
    """
    Bidirectional token map with a word/tag partition.
    """

    def __init__(self):
        self._tokens: List[str] = list(RESERVED)
        self._is_tag: List[bool] = [False, False, False]
        self._words: Dict[str, int] = {tok: i for i, tok in enumerate(RESERVED)}
        self._tags: Dict[str, int] = {}

    def __len__(self) -> int:
        return len(self._tokens)

    def add(self, token: str, is_tag: bool = False) -> int:
        """Add a token to one partition (idempotent)"""
        index = self._tags if is_tag else self._words
        if token in index:
            return index[token]
        if not token or any(ch.isspace() for ch in token):
            raise VocabularyError(f"token {token!r} is empty or contains whitespace")
        index[token] = len(self._tokens)
        self._tokens.append(token)
        self._is_tag.append(is_tag)
        return index[token]

    def encode(self, token: str, is_tag: bool = False) -> int:
        """
        Id of a token; unknown words map to UNK, unknown tags to the UNK-TAG
        entry when the vocabulary has one.
        """
        if is_tag:
            if token in self._tags:
                return self._tags[token]
            return self._tags.get(UNK_TAG_TOKEN, UNK)
        return self._words.get(token, UNK)

    def decode(self, token_id: int) -> str:
        return self._tokens[token_id]

    def is_tag(self, token_id: int) -> bool:
        return self._is_tag[token_id]

    def contains(self, token: str, is_tag: bool = False) -> bool:
        return token in (self._tags if is_tag else self._words)

    @property
    def tokens(self) -> List[str]:
        return list(self._tokens)

    @property
    def tag_ids(self) -> List[int]:
        return sorted(self._tags.values())

    @property
    def num_tags(self) -> int:
        return len(self._tags)

    @property
    def num_words(self) -> int:
        return len(self._words) - len(RESERVED)

    def content_hash(self) -> str:
        """SHA-256 over tokens and partition flags"""
        digest = hashlib.sha256()
        for token, is_tag in zip(self._tokens, self._is_tag):
            digest.update(f"{int(is_tag)}\t{token}\n".encode("utf-8"))
        return digest.hexdigest()

    def save(self, path: Union[str, Path], tag_path: Union[str, Path]) -> None:
        """
        Write the token file (one token per line, id = line index + 3) and the
        tag-partition side file ('id<TAB>token' for each tag entry).
        """
        with open(path, "w", encoding="utf-8") as f:
            for token in self._tokens[len(RESERVED):]:
                f.write(token + "\n")
        with open(tag_path, "w", encoding="utf-8") as f:
            for token_id in self.tag_ids:
                f.write(f"{token_id}\t{self._tokens[token_id]}\n")

    @classmethod
    def load(cls, path: Union[str, Path], tag_path: Optional[Union[str, Path]] = None) -> "Vocabulary":
        tag_ids = set()
        if tag_path is not None and Path(tag_path).exists():
            with open(tag_path, "r", encoding="utf-8") as f:
                for line in f:
                    if line.strip():
                        tag_ids.add(int(line.split("\t", 1)[0]))
        vocab = cls()
        with open(path, "r", encoding="utf-8") as f:
            for offset, line in enumerate(f):
                token = line.rstrip("\n")
                token_id = vocab.add(token, is_tag=(offset + len(RESERVED)) in tag_ids)
                if token_id != offset + len(RESERVED):
                    raise VocabularyError(
                        f"{path}: duplicate token {token!r} at line {offset + 1}",
                        details={"line": offset + 1}
                    )
        return vocab

    @classmethod
    def from_counts(
        cls,
        word_counts: Optional[Counter] = None,
        word_cap: Optional[int] = None,
        tag_counts: Optional[Counter] = None,
        tag_cap: Optional[int] = None,
        unk_tag: bool = False
    ) -> "Vocabulary":
        """
        Frequency-sorted construction (ties broken by token string).

        Args:
            word_counts: Word/subunit frequencies
            word_cap: Maximum number of word entries
            tag_counts: Tag frequencies
            tag_cap: Maximum number of tag entries (UNK-TAG not counted)
            unk_tag: Add the UNK-TAG entry to the tag partition

        Returns:
            Vocabulary
        """
        vocab = cls()
        for token, _ in _ranked(word_counts or Counter(), word_cap):
            if token not in RESERVED:
                vocab.add(token)
        if unk_tag:
            vocab.add(UNK_TAG_TOKEN, is_tag=True)
        for token, _ in _ranked(tag_counts or Counter(), tag_cap):
            vocab.add(token, is_tag=True)
        return vocab


def _ranked(counts: Counter, cap: Optional[int]) -> List[Tuple[str, int]]:
    ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    return ranked if cap is None else ranked[:cap]


def encode_tokens(tokens: Iterable[str], vocab: Vocabulary, is_tag: Optional[Iterable[bool]] = None) -> List[int]:
    """Encode a token list, optionally with per-token partition flags"""
    if is_tag is None:
        return [vocab.encode(t) for t in tokens]
    return [vocab.encode(t, flag) for t, flag in zip(tokens, is_tag)]
