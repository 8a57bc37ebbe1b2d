"""Document -> tokenized nodes -> windows -> linearized sequences, per page or over a dataset."""
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

from domlm.config import PositionLimits, WindowConfig
from domlm.corpus import Page
from domlm.dom_ingest import DomTree
from domlm.linearizer import PositionedSequence, linearize
from domlm.tokenizer import TokenizedNode, Vocab, tokenize_tree
from domlm.windower import Subtree, generate_subtrees

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DocumentWindows:
    doc_id: str
    tree: DomTree
    toks: Dict[int, TokenizedNode]
    windows: Tuple[Subtree, ...]
    sequences: Tuple[PositionedSequence, ...]


def preprocess_tree(
    doc_id: str,
    tree: DomTree,
    vocab: Vocab,
    window_cfg: WindowConfig = WindowConfig(),
    limits: PositionLimits = PositionLimits(),
) -> DocumentWindows:
    toks = tokenize_tree(tree, vocab)
    windows = generate_subtrees(
        tree,
        {n: t.count for n, t in toks.items()},
        window_cfg.max_tokens,
        window_cfg.stride,
        window_cfg.oversize,
    )
    sequences = tuple(linearize(w, tree, toks, vocab, limits, doc_id) for w in windows)
    return DocumentWindows(doc_id, tree, toks, tuple(windows), sequences)


def _preprocess_job(args) -> DocumentWindows:
    return preprocess_tree(*args)


def preprocess_pages(
    pages: Sequence[Page],
    vocab: Vocab,
    window_cfg: WindowConfig = WindowConfig(),
    limits: PositionLimits = PositionLimits(),
    jobs: int = 1,
) -> List[DocumentWindows]:
    """
    Window and linearize every page.

    Args:
        pages (Sequence[Page]): Cleaned pages.
        vocab (Vocab): Vocabulary for tokenization and tag ids.
        window_cfg (WindowConfig): Budget, stride and oversize policy.
        limits (PositionLimits): Position table sizes.
        jobs (int): Worker processes; results keep the page order.

    Returns:
        List[DocumentWindows]: One entry per page, in input order.
    """
    work = [(p.doc_id, p.tree, vocab, window_cfg, limits) for p in pages]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            docs = list(pool.map(_preprocess_job, work, chunksize=4))
    else:
        docs = [_preprocess_job(w) for w in work]
    n_windows = sum(len(d.windows) for d in docs)
    logger.info(f"Preprocessed {len(docs)} pages into {n_windows} windows")
    return docs


def window_records(doc: DocumentWindows) -> List[Dict]:
    return [
        {"doc_id": doc.doc_id, "window_index": w.window_index, "node_ids": list(w.node_ids), "token_total": w.token_total}
        for w in doc.windows
    ]
