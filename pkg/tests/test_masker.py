import hashlib
from collections import Counter

import numpy as np
import pytest

from domlm.errors import PlanMismatch
from domlm.linearizer import NUM_FEATURES, PositionedSequence
from domlm.masker import (
    IGNORE_INDEX, KEEP_ACTION, MASK_ACTION, RANDOM_ACTION, apply_masks, derive_seed, make_rng, mask_sequence,
    plan_masks,
)
from domlm.tokenizer import MASK, NUM_SPECIALS

VOCAB_SIZE = 50


def node_sequence(sizes, prefix_len=0, doc_id="doc", window_index=0):
    """Sequence made of consecutive nodes with the given token counts, after an optional prefix."""
    total = prefix_len + sum(sizes)
    ranges = {}
    start = prefix_len
    for node_id, size in enumerate(sizes):
        ranges[node_id] = (start, start + size)
        start += size
    tokens = np.arange(total, dtype=np.int64) % (VOCAB_SIZE - NUM_SPECIALS) + NUM_SPECIALS
    return PositionedSequence(
        tokens=tokens,
        pos=np.zeros((total, NUM_FEATURES), dtype=np.int64),
        node_anchor={n: a for n, (a, _) in ranges.items()},
        node_ranges=ranges,
        origin=(doc_id, window_index),
        prefix_len=prefix_len,
    )


def test_no_node_share_selects_individual_tokens():
    seq = node_sequence([100])
    plan = plan_masks(seq, rate=0.15, node_share=0.0, rng=make_rng(0))
    assert len(plan) == 15
    assert plan.node_masked == frozenset()


def test_nodes_larger_than_budget_fall_back_to_tokens():
    seq = node_sequence([4] * 5)
    plan = plan_masks(seq, rate=0.15, node_share=1.0, rng=make_rng(0))
    assert len(plan) == 3
    assert plan.node_masked == frozenset()


def test_whole_nodes_are_masked_together():
    seq = node_sequence([2] * 20)
    plan = plan_masks(seq, rate=0.15, node_share=1.0, rng=make_rng(1))
    assert len(plan.node_masked) == 3
    covered = {p for n in plan.node_masked for p in range(*seq.node_ranges[n])}
    assert set(plan.positions) == covered


def test_selected_fraction_is_close_to_rate():
    rng = np.random.default_rng(11)
    selected = total = 0
    for i in range(1000):
        sizes = [int(s) for s in rng.integers(1, 8, size=int(rng.integers(10, 40)))]
        seq = node_sequence(sizes, window_index=i)
        masked = mask_sequence(seq, VOCAB_SIZE, rate=0.15, node_share=0.5, seed=5)
        selected += len(masked.plan)
        total += len(seq)
    assert abs(selected / total - 0.15) <= 0.01


def test_action_split():
    counts: Counter = Counter()
    for i in range(20):
        masked = mask_sequence(node_sequence([1000]), VOCAB_SIZE, rate=0.5, node_share=0.0, seed=i)
        counts.update(masked.plan.actions.values())
    n = sum(counts.values())
    assert n == 10000
    assert abs(counts[MASK_ACTION] / n - 0.8) <= 0.02
    assert abs(counts[RANDOM_ACTION] / n - 0.1) <= 0.02
    assert abs(counts[KEEP_ACTION] / n - 0.1) <= 0.02


def test_applied_tokens_and_labels():
    seq = node_sequence([3] * 30)
    masked = mask_sequence(seq, VOCAB_SIZE, seed=3)
    plan = masked.plan
    for p in range(len(seq)):
        if p not in plan.actions:
            assert masked.labels[p] == IGNORE_INDEX
            assert masked.tokens[p] == seq.tokens[p]
            continue
        assert masked.labels[p] == seq.tokens[p]
        action = plan.actions[p]
        if action == MASK_ACTION:
            assert masked.tokens[p] == MASK
        elif action == RANDOM_ACTION:
            assert NUM_SPECIALS <= masked.tokens[p] < VOCAB_SIZE
        else:
            assert masked.tokens[p] == seq.tokens[p]


def test_prefix_tokens_are_never_selected():
    seq = node_sequence([2] * 40, prefix_len=6)
    for seed in range(20):
        plan = mask_sequence(seq, VOCAB_SIZE, rate=0.3, seed=seed).plan
        assert min(plan.positions) >= 6


def test_short_sequence_gets_empty_plan():
    masked = mask_sequence(node_sequence([1, 2]), VOCAB_SIZE)
    assert len(masked.plan) == 0
    assert (masked.labels == IGNORE_INDEX).all()


def test_same_seed_same_masks_and_epochs_differ():
    seq = node_sequence([4] * 25, doc_id="page-7", window_index=2)
    a = mask_sequence(seq, VOCAB_SIZE, seed=9, epoch=0)
    b = mask_sequence(seq, VOCAB_SIZE, seed=9, epoch=0)
    c = mask_sequence(seq, VOCAB_SIZE, seed=9, epoch=1)
    np.testing.assert_array_equal(a.tokens, b.tokens)
    assert a.plan == b.plan
    assert a.plan.positions != c.plan.positions


def test_derived_seed():
    digest = hashlib.blake2b(b"page-7\x1f2\x1f1", digest_size=8).digest()
    assert derive_seed(9, "page-7", 2, 1) == 9 ^ int.from_bytes(digest, "little")
    assert derive_seed(9, "page-7", 2, 1) != derive_seed(9, "page-7", 3, 1)


def test_plan_for_other_sequence_is_rejected():
    plan = plan_masks(node_sequence([10]), rng=make_rng(0))
    with pytest.raises(PlanMismatch):
        apply_masks(node_sequence([8]), plan, make_rng(0), VOCAB_SIZE)


@pytest.mark.parametrize("rate, node_share", [(0.0, 0.5), (1.0, 0.5), (0.15, 1.5)])
def test_rejects_bad_rates(rate, node_share):
    with pytest.raises(ValueError):
        plan_masks(node_sequence([10]), rate=rate, node_share=node_share)
