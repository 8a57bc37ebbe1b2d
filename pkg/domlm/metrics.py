"""
Extraction and QA scoring.

All scores lie in [0, 1], ignore prediction order and deduplicate repeated
predictions before counting.
"""
import re
import string
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Dict, Hashable, Iterable, List, Sequence, Set, Tuple

from domlm.text import normalize_space

PUNCT_RE = re.compile(f"[{re.escape(string.punctuation)}]")


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float

    def as_dict(self) -> Dict[str, float]:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1}


@dataclass
class ExtractionGold:
    attr: Dict[Tuple[str, int], str] = field(default_factory=dict)
    # (doc_id, pred_node, obj_node) -> acceptable predicate surface forms
    pairs: Dict[Tuple[str, int, int], Tuple[str, ...]] = field(default_factory=dict)
    # question_id -> acceptable answers ("yes"/"no" for boolean questions)
    qa: Dict[str, Tuple[str, ...]] = field(default_factory=dict)


def prf(tp: int, n_pred: int, n_gold: int) -> PRF:
    """Precision, recall and F1; 1 when both sets are empty, 0 when only one is."""
    if n_pred == 0 and n_gold == 0:
        return PRF(1.0, 1.0, 1.0)
    precision = tp / n_pred if n_pred else 0.0
    recall = tp / n_gold if n_gold else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return PRF(precision, recall, f1)


def value_f1(preds: Iterable[Hashable], gold: Iterable[Hashable]) -> PRF:
    """
    Micro-averaged value-level scores.

    Items are (doc_id, node_id, attribute) triples, or (doc_id, attribute,
    text) triples when matching on text.
    """
    pred_set, gold_set = set(preds), set(gold)
    return prf(len(pred_set & gold_set), len(pred_set), len(gold_set))


def page_f1(preds: Iterable[Tuple[str, int, str]], gold: Iterable[Tuple[str, int, str]]) -> float:
    """
    Page-level F1, macro-averaged over attributes.

    A (doc, attribute) pair is a hit when any predicted node for it is a gold
    node; precision is over predicted (doc, attribute) pairs and recall over
    gold ones.
    """
    return page_scores(preds, gold)[1]


def page_scores(
    preds: Iterable[Tuple[str, int, str]],
    gold: Iterable[Tuple[str, int, str]],
) -> Tuple[Dict[str, PRF], float]:
    """Per-attribute page-level scores and their macro-averaged F1."""
    predicted: Dict[Tuple[str, str], Set[int]] = defaultdict(set)
    for doc_id, node_id, attribute in set(preds):
        predicted[(doc_id, attribute)].add(node_id)
    expected: Dict[Tuple[str, str], Set[int]] = defaultdict(set)
    for doc_id, node_id, attribute in set(gold):
        expected[(doc_id, attribute)].add(node_id)

    attributes = sorted({a for _, a in predicted} | {a for _, a in expected})
    per_attribute = {}
    for attribute in attributes:
        pred_pages = {d for d, a in predicted if a == attribute}
        gold_pages = {d for d, a in expected if a == attribute}
        hits = sum(1 for d in pred_pages if predicted[(d, attribute)] & expected.get((d, attribute), set()))
        per_attribute[attribute] = prf(hits, len(pred_pages), len(gold_pages))
    if not per_attribute:
        return {}, 1.0
    return per_attribute, sum(s.f1 for s in per_attribute.values()) / len(per_attribute)


def normalize_form(text: str) -> str:
    return normalize_space(text).lower()


def pair_f1_lenient(
    preds: Iterable[Tuple[str, int, int, str]],
    gold: Dict[Tuple[str, int, int], Sequence[str]],
) -> PRF:
    """
    Lenient pair scores.

    A prediction (doc_id, pred_node, obj_node, predicate_text) is a true
    positive when some gold pair of the document has the same object node and
    lists the predicate text among its acceptable forms (case-insensitive,
    whitespace-normalized).
    """
    by_object: Dict[Tuple[str, int], List[Tuple[Tuple[str, int, int], Set[str]]]] = defaultdict(list)
    for key, forms in gold.items():
        doc_id, _, obj_node = key
        by_object[(doc_id, obj_node)].append((key, {normalize_form(f) for f in forms}))

    pred_set = {(d, p, o, normalize_form(t)) for d, p, o, t in preds}
    matched: Set[Tuple[str, int, int]] = set()
    tp = 0
    for doc_id, _, obj_node, form in pred_set:
        for key, forms in by_object.get((doc_id, obj_node), []):
            if form in forms:
                tp += 1
                matched.add(key)
                break
    if not pred_set and not gold:
        return PRF(1.0, 1.0, 1.0)
    # a gold pair is recalled once, however many predictions hit it
    precision = tp / len(pred_set) if pred_set else 0.0
    recall = len(matched) / len(gold) if gold else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return PRF(precision, recall, f1)


def normalize_answer(text: str) -> str:
    """Lowercase, strip punctuation, collapse whitespace. Articles are kept."""
    return normalize_space(PUNCT_RE.sub("", text.lower()))


def qa_em_f1(pred: str, golds: Sequence[str]) -> Tuple[float, float]:
    """Exact match and bag-of-words F1 against the best-matching gold answer."""
    pred_norm = normalize_answer(pred)
    pred_tokens = pred_norm.split()
    em = 0.0
    best_f1 = 0.0
    for gold in golds:
        gold_norm = normalize_answer(gold)
        gold_tokens = gold_norm.split()
        if pred_norm == gold_norm:
            em = 1.0
        if not pred_tokens or not gold_tokens:
            f1 = float(pred_tokens == gold_tokens)
        else:
            overlap = sum((Counter(pred_tokens) & Counter(gold_tokens)).values())
            if overlap == 0:
                f1 = 0.0
            else:
                precision = overlap / len(pred_tokens)
                recall = overlap / len(gold_tokens)
                f1 = 2 * precision * recall / (precision + recall)
        best_f1 = max(best_f1, f1)
    return em, best_f1
