"""
Word-level vocabulary and per-node tokenization.

Every node becomes ``[<tag>] ++ attribute tokens ++ text tokens``. Attribute
tokens are the attribute name followed by the value words, per kept attribute
in stored order.
"""
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Tuple

from domlm.dom_ingest import DomNode, DomTree
from domlm.errors import EmptyCorpus, MissingFile, SchemaError
from domlm.text import split_words, split_words_with_offsets

logger = logging.getLogger(__name__)

PAD, UNK, MASK, YES, NO, QSEP = 0, 1, 2, 3, 4, 5
SPECIAL_TOKENS = ("[PAD]", "[UNK]", "[MASK]", "[YES]", "[NO]", "[QSEP]")
NUM_SPECIALS = len(SPECIAL_TOKENS)

# tag table ids used by the P4 position feature
TAG_SENTINEL = 0
TAG_UNKNOWN = 1

VOCAB_HEADER = "#domlm-vocab v1 " + " ".join(f"{tok}={i}" for i, tok in enumerate(SPECIAL_TOKENS))


def tag_token(tag: str) -> str:
    return f"<{tag}>"


def is_tag_token(token: str) -> bool:
    return len(token) > 2 and token.startswith("<") and token.endswith(">")


@dataclass(frozen=True)
class Vocab:
    id_to_token: Tuple[str, ...]
    token_to_id: Dict[str, int] = field(compare=False, repr=False)
    tag_ids: Dict[str, int] = field(compare=False, repr=False)

    @classmethod
    def from_tokens(cls, tokens: Iterable[str]) -> "Vocab":
        id_to_token = tuple(tokens)
        if id_to_token[:NUM_SPECIALS] != SPECIAL_TOKENS:
            raise SchemaError("vocabulary must start with the special tokens " + ", ".join(SPECIAL_TOKENS))
        token_to_id = {tok: i for i, tok in enumerate(id_to_token)}
        if len(token_to_id) != len(id_to_token):
            raise SchemaError("vocabulary contains duplicate tokens")
        # tag table: 0 sentinel, 1 unknown tag, then tags in vocabulary order
        tag_ids = {}
        for tok in id_to_token[NUM_SPECIALS:]:
            if is_tag_token(tok):
                tag_ids[tok[1:-1]] = len(tag_ids) + 2
        return cls(id_to_token=id_to_token, token_to_id=token_to_id, tag_ids=tag_ids)

    @property
    def size(self) -> int:
        return len(self.id_to_token)

    @property
    def tag_table_size(self) -> int:
        return len(self.tag_ids) + 2

    @property
    def tag_tokens(self) -> Dict[str, int]:
        return {tag: self.token_to_id[tag_token(tag)] for tag in self.tag_ids}

    def __len__(self) -> int:
        return self.size

    def encode(self, words: Iterable[str]) -> List[int]:
        return [self.token_to_id.get(w, UNK) for w in words]

    def decode(self, ids: Iterable[int]) -> List[str]:
        return [self.id_to_token[i] for i in ids]

    def tag_id(self, tag: str) -> int:
        return self.tag_ids.get(tag, TAG_UNKNOWN)


@dataclass(frozen=True)
class TokenizedNode:
    node_id: int
    tokens: Tuple[int, ...]
    tag_span: range
    attr_span: range
    text_span: range
    # character offsets into the node text for every token of text_span
    text_offsets: Tuple[Tuple[int, int], ...] = ()

    @property
    def count(self) -> int:
        return len(self.tokens)


def _node_words(node: DomNode) -> List[str]:
    words = [tag_token(node.tag)]
    for name, value in node.attrs:
        words.extend(split_words(name))
        words.extend(split_words(value))
    words.extend(split_words(node.text))
    return words


def build_vocab(corpus: Iterable[DomTree], min_freq: int = 1) -> Vocab:
    """
    Build a deterministic vocabulary from cleaned trees.

    Tag tokens are always kept; words need ``min_freq`` occurrences. Ids follow
    the specials in descending frequency, ties broken lexicographically.

    Args:
        corpus (Iterable[DomTree]): Cleaned documents.
        min_freq (int): Minimum word frequency, at least 1.

    Returns:
        Vocab: The vocabulary.

    Raises:
        ValueError: If min_freq < 1.
        EmptyCorpus: If the corpus holds no documents.
    """
    if min_freq < 1:
        raise ValueError(f"min_freq must be >= 1, got {min_freq}")
    counts: Counter = Counter()
    n_docs = 0
    for tree in corpus:
        n_docs += 1
        for node in tree.nodes:
            counts.update(_node_words(node))
    if n_docs == 0:
        raise EmptyCorpus("cannot build a vocabulary from an empty corpus")

    entries = [(tok, c) for tok, c in counts.items() if c >= min_freq or is_tag_token(tok)]
    entries.sort(key=lambda item: (-item[1], item[0]))
    vocab = Vocab.from_tokens(SPECIAL_TOKENS + tuple(tok for tok, _ in entries))
    logger.info(f"Built vocabulary of {vocab.size} entries ({len(vocab.tag_ids)} tags) from {n_docs} documents")
    return vocab


def tokenize_node(node: DomNode, vocab: Vocab) -> TokenizedNode:
    """
    Tokenize one cleaned node: tag token, attribute tokens, then text tokens.

    Args:
        node (DomNode): Node of a cleaned tree.
        vocab (Vocab): Vocabulary; out-of-vocabulary words map to UNK.

    Returns:
        TokenizedNode: Token ids with tag/attribute/text spans.
    """
    tokens = [vocab.token_to_id.get(tag_token(node.tag), UNK)]
    for name, value in node.attrs:
        tokens.extend(vocab.encode(split_words(name)))
        tokens.extend(vocab.encode(split_words(value)))
    attr_end = len(tokens)
    text_words = split_words_with_offsets(node.text)
    tokens.extend(vocab.encode(w for w, _, _ in text_words))
    return TokenizedNode(
        node_id=node.node_id,
        tokens=tuple(tokens),
        tag_span=range(0, 1),
        attr_span=range(1, attr_end),
        text_span=range(attr_end, len(tokens)),
        text_offsets=tuple((start, end) for _, start, end in text_words),
    )


def tokenize_tree(tree: DomTree, vocab: Vocab) -> Dict[int, TokenizedNode]:
    return {node.node_id: tokenize_node(node, vocab) for node in tree.nodes}


def tokenize_text(text: str, vocab: Vocab) -> List[int]:
    """Token ids of free text such as a question."""
    return vocab.encode(split_words(text))


def save_vocab(vocab: Vocab, path: str) -> None:
    """Write one token per line after a header line naming the special ids."""
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as f:
        f.write(VOCAB_HEADER + "\n")
        for token in vocab.id_to_token:
            f.write(token + "\n")
    logger.info(f"Saved vocabulary ({vocab.size} entries) to {out}")


def load_vocab(path: str) -> Vocab:
    """
    Read a vocabulary file written by save_vocab.

    Raises:
        MissingFile: If the file does not exist.
        SchemaError: If the header or the special entries are wrong.
    """
    vocab_path = Path(path)
    if not vocab_path.is_file():
        raise MissingFile(f"Vocabulary file not found: {vocab_path}")
    lines = vocab_path.read_text(encoding="utf-8").split("\n")
    if not lines or lines[0] != VOCAB_HEADER:
        raise SchemaError(f"{vocab_path}:1: missing vocabulary header")
    tokens = lines[1:]
    if tokens and tokens[-1] == "":
        tokens = tokens[:-1]
    return Vocab.from_tokens(tokens)
