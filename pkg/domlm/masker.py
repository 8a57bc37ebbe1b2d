"""
Masked-language-model corruption plans.

One budget of ``round(rate * T)`` document tokens is split between whole-node
masking (``node_share`` of the budget) and individually sampled tokens. Every
selected position is then replaced by [MASK] (80%), a random token (10%) or
kept (10%).

Randomness comes from numpy's PCG64 generator; per-sequence seeds are derived
from the run seed, the document id, the window index and the epoch so that
sequences can be processed in any order or in parallel.
"""
import hashlib
import logging
from dataclasses import dataclass
from typing import Dict, FrozenSet, Literal, Optional, Tuple

import numpy as np

from domlm.errors import PlanMismatch
from domlm.linearizer import PositionedSequence
from domlm.tokenizer import MASK, NUM_SPECIALS

logger = logging.getLogger(__name__)

PRNG_ALGORITHM = "PCG64"
IGNORE_INDEX = -100
MASK_ACTION, RANDOM_ACTION, KEEP_ACTION = "MASK", "RANDOM", "KEEP"
Action = Literal["MASK", "RANDOM", "KEEP"]
ACTION_PROBS = (0.8, 0.1, 0.1)

_MASK64 = (1 << 64) - 1


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def derive_seed(seed: int, doc_id: str, window_index: int, epoch: int = 0) -> int:
    """``seed`` XOR a 64-bit BLAKE2b hash of (doc_id, window_index, epoch)."""
    digest = hashlib.blake2b(f"{doc_id}\x1f{window_index}\x1f{epoch}".encode("utf-8"), digest_size=8).digest()
    return (seed ^ int.from_bytes(digest, "little")) & _MASK64


@dataclass(frozen=True)
class MaskPlan:
    positions: Tuple[int, ...]
    node_masked: FrozenSet[int]
    labels: Dict[int, int]
    actions: Dict[int, Action]
    seed: Optional[int]
    length: int

    def __len__(self) -> int:
        return len(self.positions)


@dataclass(frozen=True)
class MaskedSequence:
    seq: PositionedSequence
    tokens: np.ndarray
    labels: np.ndarray
    plan: MaskPlan

    def __len__(self) -> int:
        return len(self.seq)

    @property
    def pos(self) -> np.ndarray:
        return self.seq.pos


def _sample_actions(n: int, rng: np.random.Generator) -> Tuple[Action, ...]:
    draws = rng.random(n)
    mask_p, random_p, _ = ACTION_PROBS
    return tuple(
        MASK_ACTION if d < mask_p else RANDOM_ACTION if d < mask_p + random_p else KEEP_ACTION
        for d in draws
    )


def plan_masks(
    seq: PositionedSequence,
    rate: float = 0.15,
    node_share: float = 0.5,
    rng: Optional[np.random.Generator] = None,
    max_misfits: int = 10,
    seed: Optional[int] = None,
) -> MaskPlan:
    """
    Choose the token positions to predict.

    Whole nodes are drawn uniformly without replacement and admitted while
    they fit the node budget ``node_share * B``; sampling stops after
    ``max_misfits`` consecutive nodes that do not fit. The remaining budget is
    filled with uniformly drawn document positions. Prefix tokens of QA
    inputs are never selected.

    Args:
        seq (PositionedSequence): Linearized window.
        rate (float): Fraction of document tokens to select, in (0, 1).
        node_share (float): Fraction of the budget spent on whole nodes, in [0, 1].
        rng (np.random.Generator): Generator; a PCG64 one is built from ``seed`` if omitted.
        max_misfits (int): Consecutive misfit nodes that end the node phase.
        seed (Optional[int]): Seed recorded in the plan.

    Returns:
        MaskPlan: Selected positions, fully masked nodes and per-position actions.
    """
    if not 0.0 < rate < 1.0:
        raise ValueError(f"mask rate must be in (0, 1), got {rate}")
    if not 0.0 <= node_share <= 1.0:
        raise ValueError(f"node_share must be in [0, 1], got {node_share}")
    if rng is None:
        rng = make_rng(seed or 0)

    doc_positions = seq.document_positions()
    budget = int(np.floor(rate * len(doc_positions) + 0.5))
    remaining = int(np.floor(node_share * budget))

    selected = set()
    node_masked = set()
    misfits = 0
    node_ids = sorted(seq.node_ranges)
    for idx in rng.permutation(len(node_ids)):
        if remaining == 0 or misfits >= max_misfits:
            break
        node_id = node_ids[idx]
        start, end = seq.node_ranges[node_id]
        if end - start <= remaining:
            selected.update(range(start, end))
            node_masked.add(node_id)
            remaining -= end - start
            misfits = 0
        else:
            misfits += 1

    rest = np.asarray([p for p in doc_positions if p not in selected], dtype=np.int64)
    n_individual = min(max(budget - len(selected), 0), len(rest))
    if n_individual:
        selected.update(int(p) for p in rng.choice(rest, size=n_individual, replace=False))

    positions = tuple(sorted(selected))
    actions = dict(zip(positions, _sample_actions(len(positions), rng)))
    return MaskPlan(
        positions=positions,
        node_masked=frozenset(node_masked),
        labels={p: int(seq.tokens[p]) for p in positions},
        actions=actions,
        seed=seed,
        length=len(seq),
    )


def apply_masks(
    seq: PositionedSequence,
    plan: MaskPlan,
    rng: np.random.Generator,
    vocab_size: int,
) -> MaskedSequence:
    """
    Corrupt ``seq`` according to ``plan``.

    Args:
        seq (PositionedSequence): The sequence the plan was built for.
        plan (MaskPlan): Positions and actions.
        rng (np.random.Generator): Generator for replacement tokens.
        vocab_size (int): Vocabulary size; random replacements are non-special ids.

    Returns:
        MaskedSequence: Corrupted tokens and labels (IGNORE_INDEX where unselected).

    Raises:
        PlanMismatch: If the plan was built for a sequence of another length.
    """
    if plan.length != len(seq) or any(p >= len(seq) for p in plan.positions):
        raise PlanMismatch(f"plan for {plan.length} tokens applied to a sequence of {len(seq)} tokens")
    tokens = seq.tokens.copy()
    labels = np.full(len(seq), IGNORE_INDEX, dtype=np.int64)
    for position in plan.positions:
        labels[position] = plan.labels[position]
        action = plan.actions[position]
        if action == MASK_ACTION:
            tokens[position] = MASK
        elif action == RANDOM_ACTION:
            tokens[position] = int(rng.integers(NUM_SPECIALS, vocab_size))
    return MaskedSequence(seq=seq, tokens=tokens, labels=labels, plan=plan)


def mask_sequence(
    seq: PositionedSequence,
    vocab_size: int,
    rate: float = 0.15,
    node_share: float = 0.5,
    seed: int = 0,
    epoch: int = 0,
    max_misfits: int = 10,
) -> MaskedSequence:
    """Plan and apply masks with a generator seeded from (seed, doc_id, window_index, epoch)."""
    sequence_seed = derive_seed(seed, seq.doc_id, seq.window_index, epoch)
    rng = make_rng(sequence_seed)
    plan = plan_masks(seq, rate, node_share, rng, max_misfits=max_misfits, seed=sequence_seed)
    return apply_masks(seq, plan, rng, vocab_size)
