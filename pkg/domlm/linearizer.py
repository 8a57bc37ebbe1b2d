"""
Linearization of a window into encoder input.

Tokens of the window's nodes are concatenated in preorder. Every token gets a
row of six position features:

    P0 node index        1-based rank of the node within the window (0 = non-DOM token)
    P1 parent index      P0 of the in-window parent (0 = none)
    P2 sibling index     1-based rank among in-window siblings
    P3 depth             depth in the document tree, root = 0
    P4 html tag          tag table id (0 = non-DOM token, 1 = unknown tag)
    P5 token position    0..T-1
"""
from dataclasses import dataclass, field, replace
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from domlm.config import PositionLimits
from domlm.dom_ingest import DomTree
from domlm.errors import MissingTokenization, SequenceTooLong
from domlm.tokenizer import NO, QSEP, YES, TokenizedNode, Vocab
from domlm.windower import Subtree

NUM_FEATURES = 6
NODE, PARENT, SIBLING, DEPTH, TAG, TOKEN = range(NUM_FEATURES)
STRUCTURE_FEATURES = (NODE, PARENT, SIBLING, DEPTH, TAG)


@dataclass(frozen=True)
class PositionedSequence:
    tokens: np.ndarray
    pos: np.ndarray
    node_anchor: Dict[int, int]
    node_ranges: Dict[int, Tuple[int, int]]
    origin: Tuple[str, int]
    # number of non-DOM tokens (question, QSEP, YES/NO) in front of the document
    prefix_len: int = 0
    yes_no: Optional[Tuple[int, int]] = None
    # node text character offsets for every text token: token index -> (node_id, start, end)
    text_offsets: Dict[int, Tuple[int, int, int]] = field(default_factory=dict, compare=False)

    def __len__(self) -> int:
        return int(self.tokens.shape[0])

    @property
    def doc_id(self) -> str:
        return self.origin[0]

    @property
    def window_index(self) -> int:
        return self.origin[1]

    def document_positions(self) -> range:
        return range(self.prefix_len, len(self))


def _clip(value: int, size: int) -> int:
    return min(value, size - 1)


def linearize(
    window: Subtree,
    tree: DomTree,
    toks: Mapping[int, TokenizedNode],
    vocab: Vocab,
    limits: PositionLimits = PositionLimits(),
    doc_id: str = "",
) -> PositionedSequence:
    """
    Turn a window into a token sequence with its position matrix.

    Args:
        window (Subtree): Window produced over ``tree``.
        tree (DomTree): The document tree.
        toks (Mapping[int, TokenizedNode]): Tokenization of every window node.
        vocab (Vocab): Vocabulary providing tag table ids.
        limits (PositionLimits): Table sizes used for clipping.
        doc_id (str): Document id recorded in the origin.

    Returns:
        PositionedSequence: Tokens, T x 6 positions, node anchors and ranges.

    Raises:
        MissingTokenization: If a window node has no tokenization.
    """
    node_index = {node_id: rank for rank, node_id in enumerate(window.node_ids, start=1)}
    sibling_counter: Dict[Optional[int], int] = {}
    tokens = []
    rows = []
    anchors = {}
    ranges = {}
    offsets = {}
    for node_id in window.node_ids:
        if node_id not in toks:
            raise MissingTokenization(f"node {node_id} of window {window.window_index} has no tokenization")
        tok = toks[node_id]
        node = tree[node_id]
        node_tokens = tok.tokens[: window.truncated.get(node_id, tok.count)]

        parent = node.parent if node.parent in node_index else None
        sibling_counter[parent] = sibling_counter.get(parent, 0) + 1
        row = (
            _clip(node_index[node_id], limits.max_nodes),
            _clip(node_index[parent], limits.max_nodes) if parent is not None else 0,
            _clip(sibling_counter[parent], limits.max_nodes),
            _clip(tree.depth(node_id), limits.max_depth),
            _clip(vocab.tag_id(node.tag), limits.max_tags),
        )
        start = len(tokens)
        for i, token in enumerate(node_tokens):
            if i in tok.text_span:
                char_start, char_end = tok.text_offsets[i - tok.text_span.start]
                offsets[start + i] = (node_id, char_start, char_end)
            rows.append(row + (_clip(start + i, limits.max_len),))
        tokens.extend(node_tokens)
        anchors[node_id] = start
        ranges[node_id] = (start, len(tokens))

    return PositionedSequence(
        tokens=np.asarray(tokens, dtype=np.int64),
        pos=np.asarray(rows, dtype=np.int64).reshape(-1, NUM_FEATURES),
        node_anchor=anchors,
        node_ranges=ranges,
        origin=(doc_id, window.window_index),
        text_offsets=offsets,
    )


def assemble_qa_input(
    question: Sequence[int],
    seq: PositionedSequence,
    add_yes_no: bool = True,
    limits: PositionLimits = PositionLimits(),
) -> PositionedSequence:
    """
    Prefix a document sequence with a question for span extraction.

    The result is ``question ++ [QSEP] ++ ([YES], [NO]) ++ document``. Prefix
    tokens carry 0 in P0..P4; P5 is renumbered over the whole sequence.

    Args:
        question (Sequence[int]): Question token ids.
        seq (PositionedSequence): Linearized document window.
        add_yes_no (bool): Whether to insert the YES and NO tokens.
        limits (PositionLimits): Table sizes; the result must fit ``max_len``.

    Returns:
        PositionedSequence: The assembled input.

    Raises:
        SequenceTooLong: If the result is longer than ``limits.max_len``.
    """
    prefix = list(question) + [QSEP] + ([YES, NO] if add_yes_no else [])
    total = len(prefix) + len(seq)
    if total > limits.max_len:
        raise SequenceTooLong(f"QA input of {total} tokens exceeds the maximum length {limits.max_len}")
    shift = len(prefix)
    prefix_pos = np.zeros((shift, NUM_FEATURES), dtype=np.int64)
    pos = np.concatenate([prefix_pos, seq.pos])
    pos[:, TOKEN] = np.arange(total)
    yes_no = (len(question) + 1, len(question) + 2) if add_yes_no else None
    return replace(
        seq,
        tokens=np.concatenate([np.asarray(prefix, dtype=np.int64), seq.tokens]),
        pos=pos,
        node_anchor={n: i + shift for n, i in seq.node_anchor.items()},
        node_ranges={n: (a + shift, b + shift) for n, (a, b) in seq.node_ranges.items()},
        prefix_len=shift + seq.prefix_len,
        yes_no=yes_no,
        text_offsets={i + shift: v for i, v in seq.text_offsets.items()},
    )
