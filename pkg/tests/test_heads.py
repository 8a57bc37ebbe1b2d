import numpy as np
import pytest
import torch

from domlm.errors import LabelOutOfRange, NoValidSpan, PairBudgetExceeded
from domlm.heads import (
    OpenIEHead, OpenIEScores, attr_loss, attr_predict, candidate_pairs, openie_extract, openie_forward, qa_loss,
    qa_predict,
)
from domlm.linearizer import NUM_FEATURES, PositionedSequence
from tests.helpers import bare_sequence, make_tree


def test_attr_tie_resolves_to_none():
    assert attr_predict(np.zeros((2, 4))).tolist() == [0, 0]
    assert attr_predict(np.array([[0.0, 3.0, 3.0]])).tolist() == [1]


def test_attr_prediction_is_shift_invariant():
    scores = np.random.default_rng(0).normal(size=(10, 5))
    np.testing.assert_array_equal(attr_predict(scores), attr_predict(scores + 123.0))
    np.testing.assert_array_equal(attr_predict(torch.from_numpy(scores)), scores.argmax(-1))


def test_attr_loss_rejects_unknown_class():
    scores = torch.zeros(3, 4)
    assert attr_loss(scores, torch.tensor([0, 1, 3])).item() == pytest.approx(np.log(4))
    with pytest.raises(LabelOutOfRange):
        attr_loss(scores, torch.tensor([0, 4, 1]))


def test_openie_scores_match_direct_formulas():
    torch.manual_seed(0)
    head = OpenIEHead(6).double()
    h_i, h_j = torch.randn(5, 6, dtype=torch.float64), torch.randn(5, 6, dtype=torch.float64)
    with torch.no_grad():
        out = openie_forward(h_i, h_j, head)
        s_p = h_i @ head.predicate.weight[0] + head.predicate.bias[0]
        s_o = h_j @ head.object.weight[0] + head.object.bias[0]
        s_m = torch.stack([(head.w_p.weight @ h_i[k]) @ (head.w_o.weight @ h_j[k]) for k in range(5)])
        w, b = head.pair.weight[0], head.pair.bias[0]
        s = w[0] * s_p + w[1] * s_o + w[2] * s_m + b
    for got, want in zip(out, (s_p, s_o, s_m, s)):
        torch.testing.assert_close(got, want, atol=1e-6, rtol=0)


def test_identity_projections_give_unit_match_for_unit_vectors():
    head = OpenIEHead(4)
    with torch.no_grad():
        head.w_p.weight.copy_(torch.eye(4))
        head.w_o.weight.copy_(torch.eye(4))
    e = torch.tensor([[0.0, 1.0, 0.0, 0.0]])
    assert openie_forward(e, e, head).s_m.item() == pytest.approx(1.0)


def test_zero_logits_pass_the_default_threshold():
    zeros = torch.zeros(3)
    scores = OpenIEScores(zeros, zeros, zeros, zeros)
    assert openie_extract(scores).tolist() == [True, True, True]


def test_extraction_gates():
    scores = OpenIEScores(
        s_p=torch.tensor([5.0, 5.0]),
        s_o=torch.tensor([5.0, -5.0]),
        s_m=torch.tensor([-5.0, 5.0]),
        s=torch.tensor([5.0, 5.0]),
    )
    assert openie_extract(scores, gate="completed").tolist() == [True, False]
    assert openie_extract(scores, gate="literal").tolist() == [False, True]


def _window_over(tree, node_ids):
    ranges = {n: (k, k + 1) for k, n in enumerate(node_ids)}
    return PositionedSequence(
        tokens=np.zeros(len(node_ids), dtype=np.int64),
        pos=np.zeros((len(node_ids), NUM_FEATURES), dtype=np.int64),
        node_anchor={n: a for n, (a, _) in ranges.items()},
        node_ranges=ranges,
        origin=("d", 0),
    )


def test_candidate_pairs_skip_textless_nodes_and_respect_cap():
    tree = make_tree([None, 0, 0, 0], texts=["", "a", "b", "c"])
    seq = _window_over(tree, (0, 1, 2, 3))
    pairs = candidate_pairs(seq, tree)
    assert pairs == [(1, 2), (1, 3), (2, 1), (2, 3), (3, 1), (3, 2)]
    assert candidate_pairs(seq, tree, cap=4) == pairs[:4]
    with pytest.raises(PairBudgetExceeded):
        candidate_pairs(seq, tree, cap=4, policy="error")


def test_qa_loss_ignores_padding():
    start = torch.tensor([[0.0, 0.0, 9.0]])
    end = torch.tensor([[0.0, 0.0, 9.0]])
    pad = torch.tensor([[False, False, True]])
    loss = qa_loss(start, end, torch.tensor([0]), torch.tensor([1]), pad)
    assert loss.item() == pytest.approx(2 * np.log(2))


def _exhaustive(windows, max_answer_len):
    best = None
    for w, (start, end, seq) in enumerate(windows):
        for i in range(len(seq)):
            for j in range(len(seq)):
                in_doc = i >= seq.prefix_len and j >= seq.prefix_len and i <= j <= i + max_answer_len
                yes_no = seq.yes_no is not None and i == j and i in seq.yes_no
                if not (in_doc or yes_no):
                    continue
                score = start[i] + end[j]
                if best is None or score > best[3]:
                    best = (w, i, j, score)
    return best


def test_span_decoding_matches_exhaustive_search():
    rng = np.random.default_rng(1)
    for _ in range(100):
        windows = []
        for w in range(int(rng.integers(1, 4))):
            n = int(rng.integers(5, 30))
            with_question = rng.random() < 0.6
            prefix = int(rng.integers(1, 4)) if with_question else 0
            yes_no = (prefix - 2, prefix - 1) if with_question and prefix >= 3 else None
            seq = bare_sequence(n, prefix_len=prefix, yes_no=yes_no)
            windows.append((rng.normal(size=n), rng.normal(size=n), seq))
        max_answer_len = int(rng.integers(0, 8))
        got = qa_predict(windows, max_answer_len)
        w, i, j, score = _exhaustive(windows, max_answer_len)
        assert (got.window, got.start, got.end) == (w, i, j)
        assert got.score == pytest.approx(score)


def test_yes_token_can_win():
    seq = bare_sequence(6, prefix_len=3, yes_no=(1, 2))
    start = np.array([0, 10, 0, 0, 0, 0], dtype=float)
    end = np.array([0, 10, 0, 0, 0, 0], dtype=float)
    span = qa_predict([(start, end, seq)])
    assert (span.start, span.end) == (1, 1)


def test_ties_keep_the_earliest_window():
    seq = bare_sequence(4)
    logits = np.zeros(4)
    span = qa_predict([(logits, logits, seq), (logits, logits, seq)])
    assert (span.window, span.start, span.end) == (0, 0, 0)


def test_no_feasible_span():
    seq = bare_sequence(3, prefix_len=3)
    with pytest.raises(NoValidSpan):
        qa_predict([(np.zeros(3), np.zeros(3), seq)])
