"""
Optimization loops: masked-language-model pre-training, joint fine-tuning of
the encoder with one task head, and prediction with fine-tuned models.

Both loops use Adam with a linear warmup followed by linear decay to zero.
Pre-training warms up over the first half epoch; fine-tuning over
``warmup_fraction`` of all steps.
"""
import copy
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
from torch import nn
from torch.optim.lr_scheduler import LambdaLR
from tqdm import tqdm

from domlm.checkpoint import Checkpoint
from domlm.config import EncoderConfig, HeadConfig, MaskConfig, OptimConfig, PositionLimits
from domlm.corpus import Dataset, QAItem
from domlm.dom_ingest import DomTree
from domlm.encoder import DomLMEncoder, DomLMForPretraining, collate, init_params, mlm_loss, reset_parameters
from domlm.errors import ConfigInvalid, DivergenceDetected, LabelOutOfRange, NoSelectedPositions
from domlm.heads import (
    AttributeHead, OpenIEHead, QAHead, QASpan, attr_forward, attr_loss, candidate_pairs, openie_extract,
    openie_forward, openie_loss, qa_forward, qa_loss, qa_predict,
)
from domlm.linearizer import PositionedSequence, assemble_qa_input
from domlm.masker import MaskedSequence, make_rng, mask_sequence
from domlm.metrics import normalize_answer
from domlm.pipeline import DocumentWindows
from domlm.tokenizer import Vocab, tokenize_text

logger = logging.getLogger(__name__)

TASKS = ("attr", "openie", "qa")


@dataclass
class TrainResult:
    model: nn.Module
    trace: List[Dict[str, Any]]
    dev_scores: List[float] = field(default_factory=list)
    best_epoch: Optional[int] = None

    @property
    def losses(self) -> List[float]:
        return [r["loss"] for r in self.trace]


def make_optimizer(params, opt: OptimConfig) -> torch.optim.Optimizer:
    return torch.optim.Adam(
        params, lr=opt.lr, betas=(opt.beta1, opt.beta2), eps=opt.eps, weight_decay=opt.weight_decay,
    )


def make_schedule(optimizer: torch.optim.Optimizer, total_steps: int, warmup_steps: int) -> LambdaLR:
    """Linear warmup to the base rate over ``warmup_steps``, then linear decay to 0 at ``total_steps``."""
    warmup_steps = max(1, min(warmup_steps, total_steps))

    def factor(step: int) -> float:
        if step < warmup_steps:
            return (step + 1) / warmup_steps
        return max(0.0, (total_steps - step) / max(1, total_steps - warmup_steps))

    return LambdaLR(optimizer, factor)


def _batches(n: int, batch_size: int, rng: np.random.Generator) -> Iterator[np.ndarray]:
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start: start + batch_size]


def _total_steps(n_examples: int, opt: OptimConfig) -> Tuple[int, int]:
    per_epoch = math.ceil(n_examples / opt.batch_size)
    total = per_epoch * opt.epochs
    if opt.max_steps is not None:
        total = min(total, opt.max_steps)
    return per_epoch, total


def _optimizer_step(
    loss: torch.Tensor,
    optimizer: torch.optim.Optimizer,
    scheduler: LambdaLR,
    step: int,
) -> float:
    if not torch.isfinite(loss):
        logger.error(f"Loss became {loss.item()} at step {step}")
        raise DivergenceDetected(f"non-finite loss at step {step}")
    lr = scheduler.get_last_lr()[0]
    optimizer.zero_grad()
    loss.backward()
    optimizer.step()
    scheduler.step()
    return lr


# pre-training

def train(
    examples: Sequence[MaskedSequence],
    cfg: EncoderConfig,
    opt: OptimConfig = OptimConfig(),
    mask_cfg: Optional[MaskConfig] = None,
    model: Optional[DomLMForPretraining] = None,
    progress: bool = False,
    on_step: Optional[Callable[[Dict[str, Any]], None]] = None,
) -> TrainResult:
    """
    Pre-train the encoder with the masked-language-model objective.

    Args:
        examples (Sequence[MaskedSequence]): Masked windows.
        cfg (EncoderConfig): Encoder hyperparameters, ``vocab_size`` included.
        opt (OptimConfig): Optimizer settings. With ``remask`` every epoch
            after the first draws fresh mask plans from epoch-derived seeds.
        mask_cfg (Optional[MaskConfig]): Masking settings used for re-masking.
        model (Optional[DomLMForPretraining]): Model to continue; a fresh one
            seeded with ``cfg.seed`` otherwise.
        progress (bool): Show a progress bar.
        on_step (Optional[Callable]): Called with every trace record.

    Returns:
        TrainResult: The trained model and one trace record per step.

    Raises:
        NoSelectedPositions: If no example has a selected position.
        DivergenceDetected: If the loss becomes non-finite.
    """
    torch.manual_seed(opt.seed)
    rng = make_rng(opt.seed)
    model = model if model is not None else init_params(cfg)
    model.train()
    mask_cfg = mask_cfg or MaskConfig()

    usable = [x for x in examples if len(x.plan)]
    if not usable:
        raise NoSelectedPositions("no pre-training example has a selected position")
    if len(usable) < len(examples):
        logger.warning(f"Skipping {len(examples) - len(usable)} example(s) without selected positions")

    per_epoch, total = _total_steps(len(usable), opt)
    optimizer = make_optimizer(model.parameters(), opt)
    scheduler = make_schedule(optimizer, total, math.ceil(per_epoch / 2))
    trace: List[Dict[str, Any]] = []
    step = 0
    with tqdm(total=total, desc="pretrain", disable=not progress) as bar:
        for epoch in range(opt.epochs):
            if step >= total:
                break
            if epoch > 0 and opt.remask:
                usable = [
                    mask_sequence(x.seq, cfg.vocab_size, mask_cfg.rate, mask_cfg.node_share, mask_cfg.seed,
                                  epoch=epoch, max_misfits=mask_cfg.max_misfits)
                    for x in examples
                ]
                usable = [x for x in usable if len(x.plan)]
            for idx in _batches(len(usable), opt.batch_size, rng):
                if step >= total:
                    break
                batch = collate([usable[i] for i in idx])
                loss = mlm_loss(model(batch), batch.labels)
                lr = _optimizer_step(loss, optimizer, scheduler, step)
                record = {"step": step, "epoch": epoch, "loss": float(loss.item()), "lr": lr}
                trace.append(record)
                if on_step is not None:
                    on_step(record)
                if step % opt.log_every == 0:
                    logger.info(f"pretrain step {step} epoch {epoch} loss {record['loss']:.4f} lr {lr:.2e}")
                step += 1
                bar.update(1)
            logger.info(f"Finished pre-training epoch {epoch} at step {step}")
    model.eval()
    return TrainResult(model=model, trace=trace)


def mlm_accuracy(
    model: DomLMForPretraining,
    examples: Sequence[MaskedSequence],
    whole_nodes_only: bool = True,
    batch_size: int = 32,
) -> float:
    """
    Token recovery accuracy at selected positions.

    With ``whole_nodes_only`` only positions of fully masked nodes count.
    Returns 0 when no position qualifies.
    """
    model.eval()
    hits = 0
    seen = 0
    with torch.no_grad():
        for start in range(0, len(examples), batch_size):
            chunk = list(examples[start: start + batch_size])
            batch = collate(chunk)
            predicted = model(batch).argmax(-1)
            for b, item in enumerate(chunk):
                if whole_nodes_only:
                    positions = [
                        p for n in item.plan.node_masked for p in range(*item.seq.node_ranges[n])
                    ]
                else:
                    positions = list(item.plan.positions)
                for p in positions:
                    seen += 1
                    hits += int(predicted[b, p].item() == item.labels[p])
    return hits / seen if seen else 0.0


# fine-tuning

class TaskModel(nn.Module):
    """Encoder plus one task head, trained jointly."""

    def __init__(self, task: str, cfg: EncoderConfig, heads: HeadConfig = HeadConfig(), n_attributes: int = 0):
        super().__init__()
        if task not in TASKS:
            raise ConfigInvalid(f"unknown task '{task}', expected one of {TASKS}")
        self.task = task
        self.cfg = cfg
        self.encoder = DomLMEncoder(cfg)
        if task == "attr":
            self.head = AttributeHead(cfg.hidden, n_attributes, heads.attr_hidden)
        elif task == "openie":
            self.head = OpenIEHead(cfg.hidden)
        else:
            self.head = QAHead(cfg.hidden)


def build_task_model(
    task: str,
    cfg: EncoderConfig,
    heads: HeadConfig = HeadConfig(),
    n_attributes: int = 0,
    pretrained: Optional[Checkpoint] = None,
    seed: int = 0,
) -> TaskModel:
    """Fresh task model; encoder weights come from ``pretrained`` when given."""
    model = TaskModel(task, cfg, heads, n_attributes)
    reset_parameters(model, seed)
    if pretrained is not None:
        model.encoder.load_state_dict(pretrained.encoder_state())
        logger.info(f"Initialized the encoder from a {pretrained.task} checkpoint")
    return model


@dataclass(frozen=True)
class AttrExample:
    seq: PositionedSequence
    node_ids: Tuple[int, ...]
    labels: Tuple[int, ...]


@dataclass(frozen=True)
class OpenIEExample:
    seq: PositionedSequence
    pairs: Tuple[Tuple[int, int], ...]
    is_predicate: Tuple[int, ...]
    is_object: Tuple[int, ...]
    is_pair: Tuple[int, ...]


@dataclass(frozen=True)
class QAExample:
    seq: PositionedSequence
    start: int
    end: int
    question_id: str


Example = Union[AttrExample, OpenIEExample, QAExample]


def attribute_classes(attributes: Sequence[str]) -> Dict[str, int]:
    """Attribute name -> class id; class 0 is None."""
    return {a: i + 1 for i, a in enumerate(attributes)}


def build_attr_examples(docs: Sequence[DocumentWindows], dataset: Dataset) -> List[AttrExample]:
    classes = attribute_classes(dataset.attributes)
    gold: Dict[Tuple[str, int], int] = {}
    for label in dataset.attr:
        if label.attribute not in classes:
            raise LabelOutOfRange(f"attribute '{label.attribute}' of {label.doc_id} is not a declared attribute")
        gold[(label.doc_id, label.node_id)] = classes[label.attribute]
    examples = []
    for doc in docs:
        for seq in doc.sequences:
            node_ids = tuple(sorted(seq.node_anchor))
            examples.append(AttrExample(seq, node_ids, tuple(gold.get((doc.doc_id, n), 0) for n in node_ids)))
    return examples


def build_openie_examples(
    docs: Sequence[DocumentWindows],
    dataset: Dataset,
    heads: HeadConfig = HeadConfig(),
    seed: int = 0,
) -> List[OpenIEExample]:
    """
    Candidate pairs per window with sampled negatives.

    Every positive pair is kept; ``negative_ratio`` negatives per positive
    (at least ``negative_ratio`` per window) are drawn without replacement.
    """
    rng = make_rng(seed)
    gold_pairs: Dict[str, set] = {}
    for p in dataset.pairs:
        gold_pairs.setdefault(p.doc_id, set()).add((p.pred_node, p.obj_node))
    examples = []
    for doc in docs:
        pairs_of_doc = gold_pairs.get(doc.doc_id, set())
        predicates = {p for p, _ in pairs_of_doc}
        objects = {o for _, o in pairs_of_doc}
        for seq in doc.sequences:
            candidates = candidate_pairs(seq, doc.tree, heads.pair_cap, heads.pair_policy)
            if not candidates:
                continue
            positives = [c for c in candidates if c in pairs_of_doc]
            negatives = [c for c in candidates if c not in pairs_of_doc]
            n_neg = min(len(negatives), heads.negative_ratio * max(1, len(positives)))
            chosen = sorted(int(i) for i in rng.choice(len(negatives), size=n_neg, replace=False)) if n_neg else []
            pairs = sorted(positives + [negatives[i] for i in chosen])
            examples.append(OpenIEExample(
                seq=seq,
                pairs=tuple(pairs),
                is_predicate=tuple(int(i in predicates) for i, _ in pairs),
                is_object=tuple(int(j in objects) for _, j in pairs),
                is_pair=tuple(int(c in pairs_of_doc) for c in pairs),
            ))
    return examples


def qa_windows(
    question: str,
    doc: DocumentWindows,
    vocab: Vocab,
    heads: HeadConfig = HeadConfig(),
    limits: PositionLimits = PositionLimits(),
) -> List[PositionedSequence]:
    """Every window of the page prefixed with the question."""
    question_ids = tokenize_text(question, vocab)
    return [assemble_qa_input(question_ids, seq, heads.add_yes_no, limits) for seq in doc.sequences]


def locate_answer(seq: PositionedSequence, tree: DomTree, item: QAItem) -> Optional[Tuple[int, int]]:
    """
    Token span of the gold answer inside one assembled QA input.

    Yes/no answers map to the YES or NO token. Other answers are searched in
    the labeled node (or every window node when the label has none) as a
    case-insensitive substring of the node text.
    """
    normalized = {normalize_answer(a) for a in item.answers}
    if seq.yes_no is not None and normalized & {"yes", "no"}:
        k = seq.yes_no[0] if "yes" in normalized else seq.yes_no[1]
        return k, k
    nodes = [item.node_id] if item.node_id is not None else sorted(seq.node_ranges)
    for node_id in nodes:
        if node_id not in seq.node_ranges:
            continue
        text = tree[node_id].text.lower()
        for answer in item.answers:
            at = text.find(answer.lower()) if answer else -1
            if at < 0:
                continue
            stop = at + len(answer)
            first, last = seq.node_ranges[node_id]
            inside = [
                i for i in range(first, last)
                if i in seq.text_offsets and seq.text_offsets[i][1] >= at and seq.text_offsets[i][2] <= stop
            ]
            if inside:
                return inside[0], inside[-1]
    return None


def build_qa_examples(
    docs: Sequence[DocumentWindows],
    dataset: Dataset,
    vocab: Vocab,
    heads: HeadConfig = HeadConfig(),
    limits: PositionLimits = PositionLimits(),
) -> List[QAExample]:
    """One example per (question, window) pair whose window holds the answer."""
    by_id = {d.doc_id: d for d in docs}
    examples = []
    skipped = 0
    for item in dataset.qa:
        doc = by_id.get(item.doc_id)
        if doc is None:
            continue
        found = False
        for seq in qa_windows(item.question, doc, vocab, heads, limits):
            span = locate_answer(seq, doc.tree, item)
            if span is None or span[1] - span[0] > heads.max_answer_len:
                continue
            examples.append(QAExample(seq, span[0], span[1], item.question_id))
            found = True
        skipped += not found
    if skipped:
        logger.warning(f"{skipped} question(s) have no window containing their answer")
    return examples


def build_examples(
    task: str,
    docs: Sequence[DocumentWindows],
    dataset: Dataset,
    vocab: Vocab,
    heads: HeadConfig = HeadConfig(),
    limits: PositionLimits = PositionLimits(),
    seed: int = 0,
) -> List[Example]:
    if task == "attr":
        return build_attr_examples(docs, dataset)
    if task == "openie":
        return build_openie_examples(docs, dataset, heads, seed)
    if task == "qa":
        return build_qa_examples(docs, dataset, vocab, heads, limits)
    raise ConfigInvalid(f"unknown task '{task}', expected one of {TASKS}")


def task_loss(model: TaskModel, examples: Sequence[Example]) -> torch.Tensor:
    """Loss of one batch of examples for the model's task."""
    batch = collate([e.seq for e in examples])
    h = model.encoder(batch.tokens, batch.pos, batch.pad_mask)
    if model.task == "attr":
        b_idx = torch.tensor([b for b, e in enumerate(examples) for _ in e.node_ids], dtype=torch.long)
        t_idx = torch.tensor([e.seq.node_anchor[n] for e in examples for n in e.node_ids], dtype=torch.long)
        gold = torch.tensor([y for e in examples for y in e.labels], dtype=torch.long)
        return attr_loss(attr_forward(h[b_idx, t_idx], model.head), gold)
    if model.task == "openie":
        b_idx = torch.tensor([b for b, e in enumerate(examples) for _ in e.pairs], dtype=torch.long)
        i_idx = torch.tensor([e.seq.node_anchor[i] for e in examples for i, _ in e.pairs], dtype=torch.long)
        j_idx = torch.tensor([e.seq.node_anchor[j] for e in examples for _, j in e.pairs], dtype=torch.long)
        scores = openie_forward(h[b_idx, i_idx], h[b_idx, j_idx], model.head)
        return openie_loss(
            scores,
            torch.tensor([y for e in examples for y in e.is_predicate]),
            torch.tensor([y for e in examples for y in e.is_object]),
            torch.tensor([y for e in examples for y in e.is_pair]),
        )
    start, end = qa_forward(h, model.head)
    return qa_loss(
        start, end,
        torch.tensor([e.start for e in examples], dtype=torch.long),
        torch.tensor([e.end for e in examples], dtype=torch.long),
        batch.pad_mask,
    )


def finetune(
    model: TaskModel,
    examples: Sequence[Example],
    opt: OptimConfig = OptimConfig(),
    dev_score: Optional[Callable[[TaskModel], float]] = None,
    progress: bool = False,
    on_step: Optional[Callable[[Dict[str, Any]], None]] = None,
) -> TrainResult:
    """
    Train the encoder and the task head jointly.

    Args:
        model (TaskModel): Model to train in place.
        examples (Sequence[Example]): Task examples from build_examples.
        opt (OptimConfig): Optimizer settings.
        dev_score (Optional[Callable]): Scores the model on a dev set after
            every epoch; the best-scoring parameters are restored at the end.
        progress (bool): Show a progress bar.
        on_step (Optional[Callable]): Called with every trace record.

    Returns:
        TrainResult: Model, per-step trace, dev scores and best epoch.

    Raises:
        ConfigInvalid: If there are no training examples.
        DivergenceDetected: If the loss becomes non-finite.
    """
    if not examples:
        raise ConfigInvalid(f"no {model.task} training examples")
    torch.manual_seed(opt.seed)
    rng = make_rng(opt.seed)
    model.train()
    per_epoch, total = _total_steps(len(examples), opt)
    optimizer = make_optimizer(model.parameters(), opt)
    scheduler = make_schedule(optimizer, total, math.ceil(opt.warmup_fraction * total))
    result = TrainResult(model=model, trace=[])
    best_state = None
    best_score = -math.inf
    step = 0
    with tqdm(total=total, desc=f"finetune {model.task}", disable=not progress) as bar:
        for epoch in range(opt.epochs):
            if step >= total:
                break
            for idx in _batches(len(examples), opt.batch_size, rng):
                if step >= total:
                    break
                loss = task_loss(model, [examples[i] for i in idx])
                lr = _optimizer_step(loss, optimizer, scheduler, step)
                record = {"step": step, "epoch": epoch, "loss": float(loss.item()), "lr": lr}
                result.trace.append(record)
                if on_step is not None:
                    on_step(record)
                if step % opt.log_every == 0:
                    logger.info(f"finetune {model.task} step {step} epoch {epoch} loss {record['loss']:.4f}")
                step += 1
                bar.update(1)
            if dev_score is not None:
                model.eval()
                score = dev_score(model)
                model.train()
                result.dev_scores.append(score)
                logger.info(f"Epoch {epoch} dev score {score:.4f}")
                if score > best_score:
                    best_score = score
                    best_state = copy.deepcopy(model.state_dict())
                    result.best_epoch = epoch
    if best_state is not None:
        model.load_state_dict(best_state)
    model.eval()
    return result


# prediction

def _encode_windows(model: TaskModel, seqs: Sequence[PositionedSequence]) -> torch.Tensor:
    batch = collate(seqs)
    return model.encoder(batch.tokens, batch.pos, batch.pad_mask)


def predict_attr(model: TaskModel, docs: Sequence[DocumentWindows], attributes: Sequence[str]) -> List[Dict[str, Any]]:
    """
    Attribute predictions per node.

    A node seen in several windows gets the average of its per-window class
    probabilities; ties resolve to the lowest class id.
    """
    model.eval()
    records = []
    with torch.no_grad():
        for doc in docs:
            if not doc.sequences:
                continue
            h = _encode_windows(model, doc.sequences)
            totals: Dict[int, np.ndarray] = {}
            counts: Dict[int, int] = {}
            for b, seq in enumerate(doc.sequences):
                node_ids = sorted(seq.node_anchor)
                rows = h[b, [seq.node_anchor[n] for n in node_ids]]
                probs = torch.softmax(attr_forward(rows, model.head).double(), dim=-1).numpy()
                for n, p in zip(node_ids, probs):
                    totals[n] = totals.get(n, 0.0) + p
                    counts[n] = counts.get(n, 0) + 1
            for n in sorted(totals):
                label = int(np.argmax(totals[n] / counts[n]))
                if label:
                    records.append({
                        "doc_id": doc.doc_id, "node_id": n, "attribute": attributes[label - 1],
                        "value": doc.tree[n].text,
                    })
    return records


def predict_openie(model: TaskModel, docs: Sequence[DocumentWindows], heads: HeadConfig = HeadConfig()) -> List[Dict[str, Any]]:
    """Extracted (predicate, object) pairs; a pair found in several windows keeps its best score."""
    model.eval()
    records = []
    with torch.no_grad():
        for doc in docs:
            if not doc.sequences:
                continue
            h = _encode_windows(model, doc.sequences)
            best: Dict[Tuple[int, int], float] = {}
            for b, seq in enumerate(doc.sequences):
                pairs = candidate_pairs(seq, doc.tree, heads.pair_cap, heads.pair_policy)
                if not pairs:
                    continue
                hi = h[b, [seq.node_anchor[i] for i, _ in pairs]]
                hj = h[b, [seq.node_anchor[j] for _, j in pairs]]
                scores = openie_forward(hi, hj, model.head)
                keep = openie_extract(scores, heads.threshold, heads.openie_gate)
                probs = torch.sigmoid(scores.s).numpy()
                for pair, kept, p in zip(pairs, keep, probs):
                    if kept and float(p) > best.get(pair, -1.0):
                        best[pair] = float(p)
            for (i, j), s in sorted(best.items()):
                records.append({
                    "doc_id": doc.doc_id, "pred_node": i, "obj_node": j, "s": s, "pred_text": doc.tree[i].text,
                })
    return records


def answer_text(span: QASpan, seq: PositionedSequence, tree: DomTree) -> str:
    """Original node text covered by a span; "yes" / "no" for the boolean tokens."""
    if seq.yes_no is not None and span.start == span.end and span.start in seq.yes_no:
        return "yes" if span.start == seq.yes_no[0] else "no"
    pieces: List[List[int]] = []
    for i in range(span.start, span.end + 1):
        offset = seq.text_offsets.get(i)
        if offset is None:
            continue
        node_id, start, end = offset
        if pieces and pieces[-1][0] == node_id:
            pieces[-1][2] = end
        else:
            pieces.append([node_id, start, end])
    return " ".join(tree[n].text[s:e] for n, s, e in pieces)


def predict_qa(
    model: TaskModel,
    docs: Sequence[DocumentWindows],
    questions: Sequence[QAItem],
    vocab: Vocab,
    heads: HeadConfig = HeadConfig(),
    limits: PositionLimits = PositionLimits(),
) -> List[Dict[str, Any]]:
    """Best span across all windows of the page, per question."""
    model.eval()
    by_id = {d.doc_id: d for d in docs}
    records = []
    with torch.no_grad():
        for item in questions:
            doc = by_id.get(item.doc_id)
            if doc is None or not doc.sequences:
                continue
            seqs = qa_windows(item.question, doc, vocab, heads, limits)
            start, end = qa_forward(_encode_windows(model, seqs), model.head)
            windows = [(start[b, :len(s)].numpy(), end[b, :len(s)].numpy(), s) for b, s in enumerate(seqs)]
            span = qa_predict(windows, heads.max_answer_len)
            seq = seqs[span.window]
            records.append({
                "doc_id": item.doc_id,
                "question_id": item.question_id,
                "answer_text": answer_text(span, seq, doc.tree),
                "start": span.start,
                "end": span.end,
                "window": span.window,
            })
    return records


def predict(
    model: TaskModel,
    docs: Sequence[DocumentWindows],
    dataset: Dataset,
    vocab: Vocab,
    attributes: Sequence[str] = (),
    heads: HeadConfig = HeadConfig(),
    limits: PositionLimits = PositionLimits(),
) -> List[Dict[str, Any]]:
    if model.task == "attr":
        return predict_attr(model, docs, attributes)
    if model.task == "openie":
        return predict_openie(model, docs, heads)
    return predict_qa(model, docs, dataset.qa, vocab, heads, limits)
