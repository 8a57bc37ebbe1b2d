"""
Datasets on disk.

A dataset directory holds::

    manifest.jsonl            one entry per page: doc_id, path, website, domain, split, fewshot_split
    manifest.<name>.jsonl     split manifests, same schema
    dataset.json              label file paths and the attribute list
    labels/attr.jsonl         attribute value nodes
    labels/pairs.jsonl        (predicate node, object node) pairs with acceptable forms
    labels/qa.jsonl           questions with acceptable answers
    pages/*.html              UTF-8 HTML

Labels address nodes by (doc_id, preorder node id) plus the absolute tag path
of the node; loading re-cleans every page and refuses labels whose tag path no
longer agrees.
"""
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from domlm.config import CleanConfig
from domlm.dom_ingest import DomTree, load_tree
from domlm.errors import LabelNodeMismatch, MissingFile, SchemaError
from domlm.linearizer import PositionedSequence
from domlm.masker import MaskedSequence, MaskPlan
from domlm.metrics import ExtractionGold

logger = logging.getLogger(__name__)

MANIFEST_FILE = "manifest.jsonl"
DATASET_FILE = "dataset.json"
TASKS = ("attr", "openie", "qa")
LABEL_FILES = {"attr": "labels/attr.jsonl", "openie": "labels/pairs.jsonl", "qa": "labels/qa.jsonl"}

ENTRY_KEYS = ("doc_id", "path", "website", "domain", "split")
ATTR_KEYS = ("doc_id", "node_id", "tag_path", "attribute")
PAIR_KEYS = ("doc_id", "pred_node", "pred_tag_path", "obj_node", "obj_tag_path", "forms")
QA_KEYS = ("question_id", "doc_id", "question", "answers")
LABEL_KEYS = {"attr": ATTR_KEYS, "openie": PAIR_KEYS, "qa": QA_KEYS}
SEQUENCE_KEYS = ("doc_id", "window_index", "tokens", "pos", "anchors")
MASKED_KEYS = SEQUENCE_KEYS + ("masked_tokens", "labels", "actions")


# JSON Lines

def write_jsonl(path: Union[str, Path], records: Iterable[Dict[str, Any]]) -> int:
    """Write records one per line with sorted keys; returns the record count."""
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    n = 0
    with open(out, "w", encoding="utf-8") as f:
        for record in records:
            f.write(json.dumps(record, sort_keys=True, separators=(",", ":"), ensure_ascii=False) + "\n")
            n += 1
    return n


def iter_jsonl(path: Union[str, Path], required: Sequence[str] = ()) -> Iterator[Tuple[int, Dict[str, Any]]]:
    """
    Yield (line number, record) pairs of a JSON Lines file.

    Raises:
        MissingFile: If the file does not exist.
        SchemaError: On invalid JSON, a non-object line or a missing required key.
    """
    src = Path(path)
    if not src.is_file():
        raise MissingFile(f"File not found: {src}")
    with open(src, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise SchemaError(f"{src}:{lineno}: invalid JSON ({e.msg})") from e
            if not isinstance(record, dict):
                raise SchemaError(f"{src}:{lineno}: expected a JSON object")
            missing = [k for k in required if k not in record]
            if missing:
                raise SchemaError(f"{src}:{lineno}: missing key(s) {missing}")
            yield lineno, record


def read_jsonl(path: Union[str, Path], required: Sequence[str] = ()) -> List[Dict[str, Any]]:
    return [record for _, record in iter_jsonl(path, required)]


# manifests

@dataclass(frozen=True)
class ManifestEntry:
    doc_id: str
    path: str
    website: str
    domain: str
    split: str
    fewshot_split: str = ""

    def to_record(self) -> Dict[str, Any]:
        return {
            "doc_id": self.doc_id, "path": self.path, "website": self.website,
            "domain": self.domain, "split": self.split, "fewshot_split": self.fewshot_split,
        }


@dataclass(frozen=True)
class Manifest:
    entries: Tuple[ManifestEntry, ...]
    root: Path
    label_paths: Dict[str, Path] = field(default_factory=dict)
    attributes: Tuple[str, ...] = ()

    def page_path(self, entry: ManifestEntry) -> Path:
        return self.root / entry.path

    @property
    def doc_ids(self) -> Tuple[str, ...]:
        return tuple(e.doc_id for e in self.entries)


def resolve_manifest_path(path: Union[str, Path]) -> Path:
    """A dataset directory resolves to its main manifest."""
    p = Path(path)
    return p / MANIFEST_FILE if p.is_dir() else p


def load_manifest(path: Union[str, Path]) -> Manifest:
    """
    Load a manifest and the dataset description next to it.

    Args:
        path: Manifest file or dataset directory.

    Returns:
        Manifest: Entries, label file paths and attribute names.

    Raises:
        MissingFile: If the manifest or a listed page is missing.
        SchemaError: On malformed entries or duplicate doc ids.
    """
    manifest_path = resolve_manifest_path(path)
    root = manifest_path.parent
    entries = []
    seen = set()
    for lineno, record in iter_jsonl(manifest_path, ENTRY_KEYS):
        if record["doc_id"] in seen:
            raise SchemaError(f"{manifest_path}:{lineno}: duplicate doc_id {record['doc_id']!r}")
        seen.add(record["doc_id"])
        entry = ManifestEntry(
            doc_id=str(record["doc_id"]), path=str(record["path"]), website=str(record["website"]),
            domain=str(record["domain"]), split=str(record["split"]),
            fewshot_split=str(record.get("fewshot_split", "")),
        )
        if not (root / entry.path).is_file():
            raise MissingFile(f"{manifest_path}:{lineno}: page not found: {root / entry.path}")
        entries.append(entry)

    label_paths: Dict[str, Path] = {}
    attributes: Tuple[str, ...] = ()
    description = root / DATASET_FILE
    if description.is_file():
        try:
            data = json.loads(description.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise SchemaError(f"{description}: invalid JSON ({e.msg})") from e
        label_paths = {task: root / rel for task, rel in data.get("labels", {}).items()}
        attributes = tuple(data.get("attributes", ()))
    logger.info(f"Loaded manifest {manifest_path} with {len(entries)} pages")
    return Manifest(entries=tuple(entries), root=root, label_paths=label_paths, attributes=attributes)


def write_manifest(path: Union[str, Path], entries: Iterable[ManifestEntry]) -> None:
    write_jsonl(path, (e.to_record() for e in entries))


# labels

@dataclass(frozen=True)
class AttrLabel:
    doc_id: str
    node_id: int
    tag_path: str
    attribute: str
    value: str = ""


@dataclass(frozen=True)
class PairLabel:
    doc_id: str
    pred_node: int
    pred_tag_path: str
    obj_node: int
    obj_tag_path: str
    forms: Tuple[str, ...]
    attribute: str = ""


@dataclass(frozen=True)
class QAItem:
    question_id: str
    doc_id: str
    question: str
    answers: Tuple[str, ...]
    node_id: Optional[int] = None
    tag_path: str = ""


@dataclass(frozen=True)
class Page:
    entry: ManifestEntry
    tree: DomTree

    @property
    def doc_id(self) -> str:
        return self.entry.doc_id


@dataclass
class Dataset:
    manifest: Manifest
    pages: Dict[str, Page]
    attr: List[AttrLabel] = field(default_factory=list)
    pairs: List[PairLabel] = field(default_factory=list)
    qa: List[QAItem] = field(default_factory=list)

    @property
    def attributes(self) -> Tuple[str, ...]:
        return self.manifest.attributes

    def gold(self) -> ExtractionGold:
        return ExtractionGold(
            attr={(a.doc_id, a.node_id): a.attribute for a in self.attr},
            pairs={(p.doc_id, p.pred_node, p.obj_node): p.forms for p in self.pairs},
            qa={q.question_id: q.answers for q in self.qa},
        )


def _check_node(tree: DomTree, node_id: int, tag_path: str, where: str) -> None:
    if not 0 <= node_id < len(tree):
        raise LabelNodeMismatch(f"{where}: node {node_id} is outside the cleaned tree of {len(tree)} nodes")
    actual = tree.tag_path(node_id)
    if tag_path and actual != tag_path:
        raise LabelNodeMismatch(f"{where}: node {node_id} has tag path {actual}, label says {tag_path}")


def _load_page(args: Tuple[str, CleanConfig]) -> DomTree:
    path, clean_cfg = args
    return load_tree(path, clean_cfg)


def load_dataset(
    manifest: Union[Manifest, str, Path],
    clean_cfg: CleanConfig = CleanConfig(),
    tasks: Sequence[str] = TASKS,
    jobs: int = 1,
) -> Dataset:
    """
    Load pages and task labels of a manifest.

    Labels of documents outside the manifest are skipped, so split manifests
    can share the dataset's label files.

    Args:
        manifest: Manifest object, manifest file or dataset directory.
        clean_cfg (CleanConfig): Cleaning applied to every page.
        tasks (Sequence[str]): Label kinds to load, among "attr", "openie", "qa".
        jobs (int): Worker processes for parsing pages.

    Returns:
        Dataset: Cleaned pages with verified labels.

    Raises:
        LabelNodeMismatch: If a label points outside its tree or its tag path disagrees.
        MissingFile: If a page or label file is missing.
        SchemaError: On malformed label lines.
    """
    if not isinstance(manifest, Manifest):
        manifest = load_manifest(manifest)
    work = [(str(manifest.page_path(e)), clean_cfg) for e in manifest.entries]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            trees = list(pool.map(_load_page, work, chunksize=8))
    else:
        trees = [_load_page(w) for w in work]
    pages = {e.doc_id: Page(e, t) for e, t in zip(manifest.entries, trees)}
    dataset = Dataset(manifest=manifest, pages=pages)

    for task in tasks:
        path = manifest.label_paths.get(task)
        if path is None:
            continue
        for lineno, record in iter_jsonl(path, LABEL_KEYS[task]):
            page = pages.get(record["doc_id"])
            if page is None:
                continue
            where = f"{path}:{lineno}"
            if task == "attr":
                _check_node(page.tree, record["node_id"], record["tag_path"], where)
                dataset.attr.append(AttrLabel(
                    record["doc_id"], record["node_id"], record["tag_path"], record["attribute"], record.get("value", ""),
                ))
            elif task == "openie":
                _check_node(page.tree, record["pred_node"], record["pred_tag_path"], where)
                _check_node(page.tree, record["obj_node"], record["obj_tag_path"], where)
                if not record["forms"]:
                    raise SchemaError(f"{where}: empty list of acceptable forms")
                dataset.pairs.append(PairLabel(
                    record["doc_id"], record["pred_node"], record["pred_tag_path"], record["obj_node"],
                    record["obj_tag_path"], tuple(record["forms"]), record.get("attribute", ""),
                ))
            else:
                if not record["answers"]:
                    raise SchemaError(f"{where}: empty list of answers")
                node_id = record.get("node_id")
                if node_id is not None:
                    _check_node(page.tree, node_id, record.get("tag_path", ""), where)
                dataset.qa.append(QAItem(
                    record["question_id"], record["doc_id"], record["question"], tuple(record["answers"]),
                    node_id, record.get("tag_path", ""),
                ))
    logger.info(
        f"Loaded {len(pages)} pages with {len(dataset.attr)} attribute, {len(dataset.pairs)} pair "
        f"and {len(dataset.qa)} QA labels"
    )
    return dataset


# preprocessed examples

def sequence_to_record(seq: PositionedSequence) -> Dict[str, Any]:
    record = {
        "doc_id": seq.doc_id,
        "window_index": seq.window_index,
        "tokens": seq.tokens.tolist(),
        "pos": seq.pos.tolist(),
        "anchors": {str(n): i for n, i in seq.node_anchor.items()},
        "ranges": {str(n): list(r) for n, r in seq.node_ranges.items()},
    }
    if seq.prefix_len:
        record["prefix_len"] = seq.prefix_len
    if seq.yes_no is not None:
        record["yes_no"] = list(seq.yes_no)
    return record


def masked_to_record(masked: MaskedSequence) -> Dict[str, Any]:
    record = sequence_to_record(masked.seq)
    record.update({
        "masked_tokens": masked.tokens.tolist(),
        "labels": masked.labels.tolist(),
        "actions": {str(p): a for p, a in masked.plan.actions.items()},
        "node_masked": sorted(masked.plan.node_masked),
        "seed": masked.plan.seed,
    })
    return record


def record_to_sequence(record: Dict[str, Any]) -> PositionedSequence:
    anchors = {int(n): int(i) for n, i in record["anchors"].items()}
    ranges = {int(n): (int(a), int(b)) for n, (a, b) in record.get("ranges", {}).items()}
    yes_no = record.get("yes_no")
    return PositionedSequence(
        tokens=np.asarray(record["tokens"], dtype=np.int64),
        pos=np.asarray(record["pos"], dtype=np.int64).reshape(-1, 6),
        node_anchor=anchors,
        node_ranges=ranges,
        origin=(str(record["doc_id"]), int(record["window_index"])),
        prefix_len=int(record.get("prefix_len", 0)),
        yes_no=tuple(yes_no) if yes_no else None,
    )


def record_to_masked(record: Dict[str, Any]) -> MaskedSequence:
    seq = record_to_sequence(record)
    labels = np.asarray(record["labels"], dtype=np.int64)
    actions = {int(p): a for p, a in record["actions"].items()}
    positions = tuple(sorted(actions))
    plan = MaskPlan(
        positions=positions,
        node_masked=frozenset(record.get("node_masked", ())),
        labels={p: int(labels[p]) for p in positions},
        actions=actions,
        seed=record.get("seed"),
        length=len(seq),
    )
    return MaskedSequence(seq=seq, tokens=np.asarray(record["masked_tokens"], dtype=np.int64), labels=labels, plan=plan)


def write_examples(path: Union[str, Path], items: Iterable[Union[PositionedSequence, MaskedSequence]]) -> int:
    """Write linearized or masked examples as JSON Lines."""
    return write_jsonl(
        path,
        (masked_to_record(x) if isinstance(x, MaskedSequence) else sequence_to_record(x) for x in items),
    )


def read_examples(path: Union[str, Path]) -> List[Union[PositionedSequence, MaskedSequence]]:
    """Read examples written by write_examples; masked records come back as MaskedSequence."""
    items = []
    for lineno, record in iter_jsonl(path, SEQUENCE_KEYS):
        try:
            items.append(record_to_masked(record) if "masked_tokens" in record else record_to_sequence(record))
        except (KeyError, TypeError, ValueError) as e:
            raise SchemaError(f"{path}:{lineno}: malformed example ({e})") from e
    return items
