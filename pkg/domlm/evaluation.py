"""
Evaluation reports.

A report is ``{metric, split, per_domain, aggregate}``; ``aggregate`` holds a
micro average over all decisions and a macro average across domains.
"""
import logging
from collections import defaultdict
from pathlib import Path
from typing import Any, Dict, List, Sequence, Union

from domlm.corpus import Dataset, iter_jsonl
from domlm.errors import ConfigInvalid, SchemaError
from domlm.metrics import PRF, normalize_form, page_scores, pair_f1_lenient, qa_em_f1, value_f1

logger = logging.getLogger(__name__)

PREDICTION_KEYS = {
    "attr": ("doc_id", "node_id", "attribute"),
    "openie": ("doc_id", "pred_node", "obj_node", "s"),
    "qa": ("doc_id", "question_id", "answer_text", "start", "end"),
}
METRIC_NAMES = {"attr": "attribute_value_f1", "openie": "openie_lenient_f1", "qa": "qa_em_f1"}


def read_predictions(path: Union[str, Path], task: str) -> List[Dict[str, Any]]:
    """
    Read a prediction file and check it has the task's fields.

    Raises:
        SchemaError: If a line lacks a field of the task's schema.
    """
    if task not in PREDICTION_KEYS:
        raise ConfigInvalid(f"unknown task '{task}'")
    try:
        return [record for _, record in iter_jsonl(path, PREDICTION_KEYS[task])]
    except SchemaError as e:
        logger.error(f"Predictions do not match the {task} schema: {e}")
        raise


def _mean(values: Sequence[float]) -> float:
    return sum(values) / len(values) if values else 0.0


def _macro(per_domain: Dict[str, Dict[str, float]]) -> Dict[str, float]:
    keys = sorted({k for scores in per_domain.values() for k in scores if k != "n"})
    return {k: _mean([scores[k] for scores in per_domain.values()]) for k in keys}


def _known(preds: List[Dict[str, Any]], dataset: Dataset) -> List[Dict[str, Any]]:
    kept = [p for p in preds if p["doc_id"] in dataset.pages]
    if len(kept) < len(preds):
        logger.warning(f"Ignoring {len(preds) - len(kept)} prediction(s) for documents outside the split")
    return kept


def evaluate_attr(preds: List[Dict[str, Any]], dataset: Dataset, text_match: bool = False) -> Dict[str, Any]:
    """Value-level P/R/F1 (node ids, or normalized text) and page-level F1 per domain."""
    preds = _known(preds, dataset)
    domain_of = {doc_id: page.entry.domain for doc_id, page in dataset.pages.items()}

    def pred_text(p):
        return p.get("value") or dataset.pages[p["doc_id"]].tree[p["node_id"]].text

    if text_match:
        pred_items = [(p["doc_id"], p["attribute"], normalize_form(pred_text(p))) for p in preds]
        gold_items = [
            (a.doc_id, a.attribute, normalize_form(a.value or dataset.pages[a.doc_id].tree[a.node_id].text))
            for a in dataset.attr
        ]
    else:
        pred_items = [(p["doc_id"], p["node_id"], p["attribute"]) for p in preds]
        gold_items = [(a.doc_id, a.node_id, a.attribute) for a in dataset.attr]
    pred_nodes = [(p["doc_id"], p["node_id"], p["attribute"]) for p in preds]
    gold_nodes = [(a.doc_id, a.node_id, a.attribute) for a in dataset.attr]

    def scores(keep) -> Dict[str, float]:
        prf = value_f1([x for x in pred_items if keep(x[0])], [x for x in gold_items if keep(x[0])])
        _, page = page_scores([x for x in pred_nodes if keep(x[0])], [x for x in gold_nodes if keep(x[0])])
        return {**prf.as_dict(), "page_f1": page}

    per_domain = {d: scores(lambda doc, d=d: domain_of[doc] == d) for d in sorted(set(domain_of.values()))}
    return {"per_domain": per_domain, "aggregate": {"micro": scores(lambda doc: True), "macro": _macro(per_domain)}}


def evaluate_openie(preds: List[Dict[str, Any]], dataset: Dataset) -> Dict[str, Any]:
    """Lenient pair P/R/F1 per domain."""
    preds = _known(preds, dataset)
    domain_of = {doc_id: page.entry.domain for doc_id, page in dataset.pages.items()}
    items = [
        (p["doc_id"], p["pred_node"], p["obj_node"],
         p.get("pred_text") or dataset.pages[p["doc_id"]].tree[p["pred_node"]].text)
        for p in preds
    ]
    gold = dataset.gold().pairs

    def scores(keep) -> PRF:
        return pair_f1_lenient([x for x in items if keep(x[0])], {k: v for k, v in gold.items() if keep(k[0])})

    per_domain = {
        d: scores(lambda doc, d=d: domain_of[doc] == d).as_dict() for d in sorted(set(domain_of.values()))
    }
    return {"per_domain": per_domain, "aggregate": {"micro": scores(lambda doc: True).as_dict(), "macro": _macro(per_domain)}}


def evaluate_qa(preds: List[Dict[str, Any]], dataset: Dataset) -> Dict[str, Any]:
    """Mean EM and F1 per domain; unanswered questions score 0."""
    answers = {p["question_id"]: p["answer_text"] for p in _known(preds, dataset)}
    by_domain: Dict[str, List[tuple]] = defaultdict(list)
    every = []
    for item in dataset.qa:
        em, f1 = qa_em_f1(answers.get(item.question_id, ""), item.answers)
        by_domain[dataset.pages[item.doc_id].entry.domain].append((em, f1))
        every.append((em, f1))

    def scores(pairs) -> Dict[str, float]:
        return {"em": _mean([e for e, _ in pairs]), "f1": _mean([f for _, f in pairs]), "n": len(pairs)}

    per_domain = {d: scores(v) for d, v in sorted(by_domain.items())}
    return {"per_domain": per_domain, "aggregate": {"micro": scores(every), "macro": _macro(per_domain)}}


def evaluate(
    task: str,
    preds: List[Dict[str, Any]],
    dataset: Dataset,
    split: str = "",
    text_match: bool = False,
) -> Dict[str, Any]:
    """
    Score predictions of one task against the dataset's gold labels.

    Args:
        task (str): "attr", "openie" or "qa".
        preds (List[Dict[str, Any]]): Prediction records.
        dataset (Dataset): Pages and gold labels of the evaluated split.
        split (str): Split name recorded in the report.
        text_match (bool): Match attribute values on normalized text instead of node ids.

    Returns:
        Dict[str, Any]: The report.
    """
    if task == "attr":
        body = evaluate_attr(preds, dataset, text_match)
    elif task == "openie":
        body = evaluate_openie(preds, dataset)
    elif task == "qa":
        body = evaluate_qa(preds, dataset)
    else:
        raise ConfigInvalid(f"unknown task '{task}'")
    return {"metric": METRIC_NAMES[task], "split": split, **body}


def headline(report: Dict[str, Any]) -> float:
    """The single number used for model selection: micro F1."""
    return float(report["aggregate"]["micro"]["f1"])
