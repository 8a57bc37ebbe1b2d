import pytest

from domlm.metrics import PRF, normalize_answer, page_f1, page_scores, pair_f1_lenient, prf, qa_em_f1, value_f1

GOLD = [("d1", 1, "title"), ("d1", 2, "year"), ("d2", 3, "title"), ("d2", 4, "year")]


def test_value_f1_perfect_and_disjoint():
    assert value_f1(GOLD, GOLD) == PRF(1.0, 1.0, 1.0)
    assert value_f1([("d9", 1, "title")], GOLD) == PRF(0.0, 0.0, 0.0)
    assert value_f1([], []) == PRF(1.0, 1.0, 1.0)


def test_value_f1_with_one_false_positive():
    scores = value_f1(GOLD + [("d1", 5, "title")], GOLD)
    assert scores.precision == pytest.approx(0.8)
    assert scores.recall == pytest.approx(1.0)
    assert scores.f1 == pytest.approx(8 / 9)


def test_value_f1_ignores_order_and_duplicates():
    preds = [("d1", 5, "title")] + GOLD[::-1] + GOLD
    assert value_f1(preds, GOLD) == value_f1(GOLD + [("d1", 5, "title")], GOLD)


def test_page_hit_needs_only_one_correct_node():
    preds = [("d1", 1, "title")] + [("d1", n, "title") for n in (7, 8, 9, 10)]
    per_attribute, _ = page_scores(preds, [("d1", 1, "title")])
    assert per_attribute["title"] == PRF(1.0, 1.0, 1.0)


def test_page_f1_without_predictions():
    per_attribute, macro = page_scores([], GOLD)
    assert all(s.recall == 0.0 for s in per_attribute.values())
    assert macro == 0.0


def test_page_f1_three_documents_two_attributes():
    gold = [
        ("d1", 1, "title"), ("d1", 2, "year"),
        ("d2", 3, "title"), ("d2", 4, "year"),
        ("d3", 5, "title"), ("d3", 6, "year"),
    ]
    preds = [("d1", 1, "title"), ("d1", 9, "title"), ("d1", 8, "year"), ("d2", 3, "title"), ("d3", 6, "year")]
    per_attribute, macro = page_scores(preds, gold)
    # title: 2 of 2 predicted pages hit, 2 of 3 gold pages found
    assert per_attribute["title"].f1 == pytest.approx(0.8)
    # year: 1 of 2 predicted pages hit, 1 of 3 gold pages found
    assert per_attribute["year"].f1 == pytest.approx(0.4)
    assert macro == pytest.approx(0.6)
    assert page_f1(preds, gold) == pytest.approx(0.6)


def test_lenient_pairs_accept_listed_synonyms():
    gold = {("d", 1, 2): ("Director", "Directed by"), ("d", 3, 4): ("Year",)}
    exact = [("d", 1, 2, "Director"), ("d", 3, 4, "Year")]
    assert pair_f1_lenient(exact, gold) == PRF(1.0, 1.0, 1.0)

    synonym = pair_f1_lenient([("d", 7, 2, "  directed   BY ")], gold)
    assert synonym.precision == 1.0
    assert synonym.recall == pytest.approx(0.5)


def test_lenient_pairs_reject_unlisted_forms():
    gold = {("d", 1, 2): ("Director",)}
    assert pair_f1_lenient([("d", 1, 2, "Writer")], gold) == PRF(0.0, 0.0, 0.0)
    assert pair_f1_lenient([("d", 1, 5, "Director")], gold) == PRF(0.0, 0.0, 0.0)


def test_qa_exact_and_partial_matches():
    assert qa_em_f1("The Matrix!", ["the matrix"]) == (1.0, 1.0)
    em, f1 = qa_em_f1("the matrix", ["matrix"])
    assert em == 0.0
    assert f1 == pytest.approx(2 / 3)
    assert qa_em_f1("", ["matrix"]) == (0.0, 0.0)
    assert qa_em_f1("1999", ["2000", "1999"]) == (1.0, 1.0)


def test_answer_normalization_keeps_articles():
    assert normalize_answer("  A  Film, by  THE director. ") == "a film by the director"


def test_prf_bounds():
    for tp, n_pred, n_gold in [(0, 0, 3), (2, 2, 0), (3, 4, 5)]:
        scores = prf(tp, n_pred, n_gold)
        assert all(0.0 <= v <= 1.0 for v in scores.as_dict().values())
