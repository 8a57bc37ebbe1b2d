import dataclasses
import json
import logging
from typing import Literal, Optional

from commands.common import default_jobs, resolve_config, vocab_from_sidecar, write_sidecar
from domlm.corpus import load_dataset, read_examples, write_examples, write_jsonl
from domlm.errors import ConfigInvalid, InvalidStride, SchemaError
from domlm.masker import MASK_ACTION, PRNG_ALGORITHM, MaskedSequence, mask_sequence
from domlm.pipeline import preprocess_pages, window_records
from domlm.synthetic import generate_synthetic, load_synthetic_config, write_synthetic
from domlm.tokenizer import build_vocab, load_vocab, save_vocab


def cli_gen_synthetic(out: str, config: Optional[str] = None, seed: Optional[int] = None) -> str:
    """
    Generate a synthetic templated-website corpus with gold labels for all tasks.

    Args:
        out (str): Output dataset directory.
        config (str): JSON generator settings (sites, templates, pages, noise knobs).
        seed (int): Overrides the generator seed.

    Returns:
        str: Summary of the generated corpus.
    """
    syn_cfg = load_synthetic_config(config)
    if seed is not None:
        syn_cfg = dataclasses.replace(syn_cfg, seed=seed)
    corpus = generate_synthetic(syn_cfg)
    manifest = write_synthetic(corpus, out)
    write_sidecar(out, "gen-synthetic", {"out": out, "config": config, "seed": seed}, synthetic=syn_cfg.to_dict())
    return f"Wrote {len(corpus.pages)} pages, {len(corpus.attr)} attribute labels, {len(corpus.pairs)} pairs and {len(corpus.qa)} questions ({manifest})"


def cli_build_vocab(
    in_: str,
    out: str,
    min_freq: int = 1,
    config: Optional[str] = None,
    jobs: Optional[int] = None,
) -> str:
    """
    Build the word vocabulary of a dataset.

    Args:
        in_ (str): Dataset directory or manifest.
        out (str): Vocabulary file to write.
        min_freq (int): Minimum word frequency.
        config (str): Run config file.
        jobs (int): Worker processes for parsing.

    Returns:
        str: Summary line.
    """
    cfg = resolve_config(config)
    dataset = load_dataset(in_, cfg.clean, tasks=(), jobs=default_jobs(jobs))
    vocab = build_vocab((p.tree for p in dataset.pages.values()), min_freq)
    save_vocab(vocab, out)
    write_sidecar(out, "build-vocab", {"in": in_, "out": out, "min_freq": min_freq}, cfg, vocab=out, vocab_size=vocab.size)
    return f"Vocabulary of {vocab.size} entries written to {out}"


def cli_preprocess(
    in_: str,
    vocab: str,
    out: str,
    window: Optional[int] = None,
    stride: Optional[int] = None,
    oversize: Optional[Literal["truncate", "error"]] = None,
    config: Optional[str] = None,
    jobs: Optional[int] = None,
) -> str:
    """
    Window and linearize every page into encoder inputs (JSON Lines).

    Args:
        in_ (str): Dataset directory or manifest.
        vocab (str): Vocabulary file.
        out (str): Output examples file.
        window (int): Token budget M per window.
        stride (int): Token stride S.
        oversize (str): Policy for nodes larger than the budget.
        config (str): Run config file.
        jobs (int): Worker processes.

    Returns:
        str: Summary line.
    """
    cfg = resolve_config(config, window={"max_tokens": window, "stride": stride, "oversize": oversize})
    if not 1 <= cfg.window.stride <= cfg.window.max_tokens:
        raise InvalidStride(f"stride must satisfy 1 <= S <= M, got S={cfg.window.stride}, M={cfg.window.max_tokens}")
    voc = load_vocab(vocab)
    if voc.tag_table_size > cfg.encoder.max_tags:
        logging.warning(f"{voc.tag_table_size} tag ids exceed the tag table size {cfg.encoder.max_tags}; they will be clipped")
    dataset = load_dataset(in_, cfg.clean, tasks=(), jobs=default_jobs(jobs))
    docs = preprocess_pages(list(dataset.pages.values()), voc, cfg.window, cfg.encoder.limits, default_jobs(jobs))
    n = write_examples(out, (seq for doc in docs for seq in doc.sequences))
    write_sidecar(out, "preprocess", {"in": in_, "vocab": vocab, "out": out}, cfg, vocab=vocab, vocab_size=voc.size)
    return f"Wrote {n} windows from {len(docs)} pages to {out}"


def cli_mask(
    in_: str,
    out: str,
    rate: Optional[float] = None,
    node_share: Optional[float] = None,
    seed: Optional[int] = None,
    vocab: Optional[str] = None,
    config: Optional[str] = None,
) -> str:
    """
    Build masked-language-model examples from linearized windows.

    Args:
        in_ (str): Examples written by preprocess.
        out (str): Masked examples file.
        rate (float): Fraction of document tokens selected per window.
        node_share (float): Fraction of the budget spent on whole nodes.
        seed (int): Run seed; per-window seeds derive from it.
        vocab (str): Vocabulary file; defaults to the one recorded with the input.
        config (str): Run config file.

    Returns:
        str: Summary line.
    """
    cfg = resolve_config(config, mask={"rate": rate, "node_share": node_share, "seed": seed})
    vocab_path = vocab_from_sidecar(in_, vocab)
    if not vocab_path:
        raise ConfigInvalid(f"cannot tell the vocabulary of {in_}; pass --vocab")
    vocab_size = load_vocab(vocab_path).size
    masked = []
    for item in read_examples(in_):
        seq = item.seq if isinstance(item, MaskedSequence) else item
        masked.append(mask_sequence(
            seq, vocab_size, cfg.mask.rate, cfg.mask.node_share, cfg.mask.seed, max_misfits=cfg.mask.max_misfits,
        ))
    n = write_examples(out, masked)
    selected = sum(len(m.plan) for m in masked)
    write_sidecar(
        out, "mask", {"in": in_, "out": out}, cfg, vocab=vocab_path, vocab_size=vocab_size, prng=PRNG_ALGORITHM,
    )
    return f"Masked {n} windows ({selected} selected positions) into {out}"


def cli_inspect_windows(
    in_: str,
    vocab: str,
    out: Optional[str] = None,
    doc_id: Optional[str] = None,
    window: Optional[int] = None,
    stride: Optional[int] = None,
    config: Optional[str] = None,
) -> str:
    """
    Dump the windows of every page as JSON Lines: doc_id, window_index, node_ids, token_total.

    Args:
        in_ (str): Dataset directory or manifest.
        vocab (str): Vocabulary file.
        out (str): Output file; printed when omitted.
        doc_id (str): Only this document.
        window (int): Token budget M per window.
        stride (int): Token stride S.
        config (str): Run config file.

    Returns:
        str: The records, or a summary when written to a file.
    """
    cfg = resolve_config(config, window={"max_tokens": window, "stride": stride})
    dataset = load_dataset(in_, cfg.clean, tasks=())
    pages = [p for p in dataset.pages.values() if doc_id is None or p.doc_id == doc_id]
    if not pages:
        raise SchemaError(f"document {doc_id!r} is not in {in_}")
    docs = preprocess_pages(pages, load_vocab(vocab), cfg.window, cfg.encoder.limits)
    records = [r for doc in docs for r in window_records(doc)]
    if out:
        write_jsonl(out, records)
        return f"Wrote {len(records)} windows to {out}"
    return "\n".join(json.dumps(r, sort_keys=True) for r in records)


def _preview(item: MaskedSequence, words) -> str:
    parts = []
    for i, token in enumerate(item.tokens):
        action = item.plan.actions.get(i)
        if action is None:
            parts.append(words[token])
        elif action == MASK_ACTION:
            parts.append(f"[MASK:{words[item.labels[i]]}]")
        else:
            parts.append(f"{{{action.lower()}:{words[token]}<-{words[item.labels[i]]}}}")
    nodes = ", ".join(str(n) for n in sorted(item.plan.node_masked)) or "none"
    return f"{item.seq.doc_id} window {item.seq.window_index} | whole nodes: {nodes}\n  " + " ".join(parts)


def cli_mask_preview(in_: str, vocab: Optional[str] = None, limit: int = 3) -> str:
    """
    Show masked examples as text: [MASK:original] for masked tokens, {random:new<-original} and {keep:...} otherwise.

    Args:
        in_ (str): Masked examples file.
        vocab (str): Vocabulary file; defaults to the one recorded with the input.
        limit (int): Number of examples to show.

    Returns:
        str: The rendered examples.
    """
    vocab_path = vocab_from_sidecar(in_, vocab)
    if not vocab_path:
        raise ConfigInvalid(f"cannot tell the vocabulary of {in_}; pass --vocab")
    words = load_vocab(vocab_path).id_to_token
    items = [x for x in read_examples(in_) if isinstance(x, MaskedSequence)]
    if not items:
        raise SchemaError(f"{in_} holds no masked examples")
    return "\n".join(_preview(item, words) for item in items[:limit])
