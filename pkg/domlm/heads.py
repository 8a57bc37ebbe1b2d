"""
Fine-tuning heads.

- attribute extraction: an MLP scores every node anchor over K attribute
  types plus None (class 0);
- open information extraction: predicate / object scores per node and a
  bilinear compatibility score per (predicate, object) pair, combined by a
  small feed-forward layer;
- question answering: start and end logits per token, decoded as the best
  feasible span across all windows of a page.
"""
import logging
from dataclasses import dataclass
from typing import List, Literal, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from domlm.dom_ingest import DomTree
from domlm.errors import LabelOutOfRange, NoValidSpan, PairBudgetExceeded
from domlm.linearizer import PositionedSequence

logger = logging.getLogger(__name__)


class AttributeHead(nn.Module):
    def __init__(self, hidden: int, n_attributes: int, mlp_hidden: Optional[int] = None):
        super().__init__()
        self.n_classes = n_attributes + 1
        mlp_hidden = mlp_hidden or hidden
        self.mlp = nn.Sequential(nn.Linear(hidden, mlp_hidden), nn.GELU(), nn.Linear(mlp_hidden, self.n_classes))

    def forward(self, node_reprs: torch.Tensor) -> torch.Tensor:
        return self.mlp(node_reprs)


class OpenIEHead(nn.Module):
    def __init__(self, hidden: int):
        super().__init__()
        self.predicate = nn.Linear(hidden, 1)
        self.object = nn.Linear(hidden, 1)
        self.w_p = nn.Linear(hidden, hidden, bias=False)
        self.w_o = nn.Linear(hidden, hidden, bias=False)
        self.pair = nn.Linear(3, 1)


class QAHead(nn.Module):
    def __init__(self, hidden: int):
        super().__init__()
        self.start = nn.Linear(hidden, 1)
        self.end = nn.Linear(hidden, 1)


# attribute extraction

def attr_forward(node_reprs: torch.Tensor, head: AttributeHead) -> torch.Tensor:
    """Scores over K+1 classes for every node representation (tag-token anchor)."""
    return head(node_reprs)


def attr_loss(scores: torch.Tensor, gold: torch.Tensor) -> torch.Tensor:
    """
    Cross-entropy of node classes.

    Raises:
        LabelOutOfRange: If a gold class is outside 0..K.
    """
    if gold.numel() and (gold.min() < 0 or gold.max() >= scores.shape[-1]):
        raise LabelOutOfRange(f"attribute class outside 0..{scores.shape[-1] - 1}")
    return F.cross_entropy(scores, gold)


def attr_predict(scores) -> np.ndarray:
    """Softmax argmax per node; ties resolve to the lowest class id (None first)."""
    if isinstance(scores, torch.Tensor):
        scores = scores.detach().cpu().numpy()
    probs = _softmax(np.asarray(scores, dtype=np.float64))
    return np.argmax(probs, axis=-1)


def _softmax(x: np.ndarray) -> np.ndarray:
    shifted = np.exp(x - x.max(axis=-1, keepdims=True))
    return shifted / shifted.sum(axis=-1, keepdims=True)


# open information extraction

class OpenIEScores(NamedTuple):
    s_p: torch.Tensor
    s_o: torch.Tensor
    s_m: torch.Tensor
    s: torch.Tensor


def openie_forward(h_i: torch.Tensor, h_j: torch.Tensor, head: OpenIEHead) -> OpenIEScores:
    """
    Score candidate (predicate i, object j) pairs.

    ``s_p = FFN_p(h_i)``, ``s_o = FFN_o(h_j)``, ``s_m = (W_p h_i) . (W_o h_j)``
    and ``s = FFN_s([s_p; s_o; s_m])``.

    Args:
        h_i (torch.Tensor): (P, d) representations of predicate candidates.
        h_j (torch.Tensor): (P, d) representations of object candidates.
        head (OpenIEHead): Head parameters.

    Returns:
        OpenIEScores: Four (P,) logit vectors.
    """
    s_p = head.predicate(h_i).squeeze(-1)
    s_o = head.object(h_j).squeeze(-1)
    s_m = (head.w_p(h_i) * head.w_o(h_j)).sum(-1)
    s = head.pair(torch.stack([s_p, s_o, s_m], dim=-1)).squeeze(-1)
    return OpenIEScores(s_p, s_o, s_m, s)


def openie_loss(
    scores: OpenIEScores,
    is_predicate: torch.Tensor,
    is_object: torch.Tensor,
    is_pair: torch.Tensor,
) -> torch.Tensor:
    """Joint binary cross-entropy of the predicate, object and pair classifiers."""
    return (
        F.binary_cross_entropy_with_logits(scores.s_p, is_predicate.to(scores.s_p.dtype))
        + F.binary_cross_entropy_with_logits(scores.s_o, is_object.to(scores.s_o.dtype))
        + F.binary_cross_entropy_with_logits(scores.s, is_pair.to(scores.s.dtype))
    )


def openie_extract(
    scores: OpenIEScores,
    threshold: float = 0.5,
    gate: Literal["completed", "literal"] = "completed",
) -> np.ndarray:
    """
    Boolean mask of extracted pairs.

    "completed" requires sigmoid(s_p), sigmoid(s_o) and sigmoid(s) to reach
    the threshold; "literal" gates on s_p, s_m and s instead.
    """
    gated = (scores.s_p, scores.s_o, scores.s) if gate == "completed" else (scores.s_p, scores.s_m, scores.s)
    keep = None
    for logits in gated:
        passed = torch.sigmoid(logits.detach()).cpu().numpy() >= threshold
        keep = passed if keep is None else keep & passed
    return keep


def candidate_pairs(
    seq: PositionedSequence,
    tree: DomTree,
    cap: int = 5000,
    policy: Literal["truncate", "error"] = "truncate",
) -> List[Tuple[int, int]]:
    """
    Ordered pairs of distinct text-bearing nodes of one window, in preorder.

    Raises:
        PairBudgetExceeded: If there are more than ``cap`` pairs under the "error" policy.
    """
    nodes = [n for n in sorted(seq.node_ranges) if tree[n].text]
    total = len(nodes) * (len(nodes) - 1)
    if total > cap and policy == "error":
        raise PairBudgetExceeded(f"window {seq.origin} has {total} candidate pairs, cap is {cap}")
    pairs = []
    for i in nodes:
        for j in nodes:
            if i == j:
                continue
            if len(pairs) == cap:
                logger.debug(f"Truncated candidate pairs of window {seq.origin} at {cap}")
                return pairs
            pairs.append((i, j))
    return pairs


# question answering

def qa_forward(h: torch.Tensor, head: QAHead) -> Tuple[torch.Tensor, torch.Tensor]:
    """Start and end logits for every token row of ``h``."""
    return head.start(h).squeeze(-1), head.end(h).squeeze(-1)


def qa_loss(
    start_logits: torch.Tensor,
    end_logits: torch.Tensor,
    gold_start: torch.Tensor,
    gold_end: torch.Tensor,
    pad_mask: Optional[torch.Tensor] = None,
) -> torch.Tensor:
    """Sum of the start and end cross-entropies (padding excluded)."""
    if pad_mask is not None:
        start_logits = start_logits.masked_fill(pad_mask, float("-inf"))
        end_logits = end_logits.masked_fill(pad_mask, float("-inf"))
    return F.cross_entropy(start_logits, gold_start) + F.cross_entropy(end_logits, gold_end)


@dataclass(frozen=True)
class QASpan:
    window: int
    start: int
    end: int
    score: float


def _feasible(seq: PositionedSequence, max_answer_len: int) -> np.ndarray:
    n = len(seq)
    i = np.arange(n)[:, None]
    j = np.arange(n)[None, :]
    in_doc = np.zeros(n, dtype=bool)
    in_doc[seq.prefix_len:] = True
    feasible = (i <= j) & (j <= i + max_answer_len) & in_doc[:, None] & in_doc[None, :]
    if seq.yes_no is not None:
        for k in seq.yes_no:
            feasible[k, k] = True
    return feasible


def qa_predict(
    windows: Sequence[Tuple[np.ndarray, np.ndarray, PositionedSequence]],
    max_answer_len: int = 30,
) -> QASpan:
    """
    Best answer span over all windows of a page.

    A span (i, j) is feasible when ``i <= j <= i + max_answer_len`` and both
    ends lie in the document, or when ``i == j`` is the YES or NO token. The
    span maximizing ``start[i] + end[j]`` wins; ties keep the earliest window
    and the earliest (i, j).

    Args:
        windows: ``(start_logits, end_logits, sequence)`` per window.
        max_answer_len (int): Longest allowed ``j - i``.

    Returns:
        QASpan: Winning window index, token indices and score.

    Raises:
        NoValidSpan: If no window has a feasible span.
    """
    best: Optional[QASpan] = None
    for w, (start, end, seq) in enumerate(windows):
        start = np.asarray(start, dtype=np.float64)
        end = np.asarray(end, dtype=np.float64)
        feasible = _feasible(seq, max_answer_len)
        if not feasible.any():
            continue
        scores = np.where(feasible, start[:, None] + end[None, :], -np.inf)
        flat = int(np.argmax(scores))
        i, j = divmod(flat, scores.shape[1])
        if best is None or scores[i, j] > best.score:
            best = QASpan(window=w, start=i, end=j, score=float(scores[i, j]))
    if best is None:
        raise NoValidSpan("no feasible answer span in any window")
    return best
