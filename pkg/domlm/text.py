"""Whitespace normalization and word splitting shared by cleaning and tokenization."""
import re
from typing import List, Tuple

WHITESPACE_RE = re.compile(r"\s+")
# a word is a run of word characters; every other non-space character is its own token
WORD_RE = re.compile(r"\w+|[^\w\s]")


def normalize_space(text: str) -> str:
    return WHITESPACE_RE.sub(" ", text).strip()


def split_words(text: str) -> List[str]:
    """Lowercased word tokens of ``text``."""
    return [m.group(0).lower() for m in WORD_RE.finditer(text)]


def split_words_with_offsets(text: str) -> List[Tuple[str, int, int]]:
    """Lowercased word tokens of ``text`` with their character offsets."""
    return [(m.group(0).lower(), m.start(), m.end()) for m in WORD_RE.finditer(text)]


def truncate_words(text: str, max_words: int) -> str:
    """Cut ``text`` right after its ``max_words``-th word token."""
    matches = list(WORD_RE.finditer(text))
    if len(matches) <= max_words:
        return text
    return text[: matches[max_words - 1].end()]
