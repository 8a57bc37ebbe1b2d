import dataclasses
import logging
from typing import Any, Dict, Literal, Optional

from commands.common import default_jobs, resolve_config, vocab_from_sidecar, write_sidecar
from domlm.checkpoint import VOCAB_FILE, load_checkpoint, save_checkpoint
from domlm.config import RunConfig
from domlm.corpus import load_dataset, read_examples
from domlm.errors import ConfigInvalid
from domlm.evaluation import evaluate, headline
from domlm.linearizer import STRUCTURE_FEATURES
from domlm.masker import MaskedSequence, mask_sequence
from domlm.pipeline import preprocess_pages
from domlm.tokenizer import load_vocab
from domlm.training import build_examples, build_task_model, finetune, mlm_accuracy, predict
from domlm.training import train as train_mlm


def _trace_printer(every: int):
    def on_step(record: Dict[str, Any]) -> None:
        if record["step"] % every == 0:
            print(f"step {record['step']} epoch {record['epoch']} loss {record['loss']:.4f} lr {record['lr']:.2e}")
    return on_step


def cli_pretrain(
    in_: str,
    out: str,
    config: Optional[str] = None,
    vocab: Optional[str] = None,
    epochs: Optional[int] = None,
    max_steps: Optional[int] = None,
    batch_size: Optional[int] = None,
    lr: Optional[float] = None,
    seed: Optional[int] = None,
    remask: bool = False,
    progress: bool = False,
) -> str:
    """
    Pre-train the encoder with the masked-language-model objective.

    Args:
        in_ (str): Masked examples from mask (unmasked windows are masked on the fly).
        out (str): Checkpoint directory.
        config (str): Run config file.
        vocab (str): Vocabulary file; defaults to the one recorded with the input.
        epochs (int): Number of epochs.
        max_steps (int): Stop after this many optimizer steps.
        batch_size (int): Windows per step.
        lr (float): Peak learning rate.
        seed (int): Seed for initialization and batch order.
        remask (bool): Draw fresh masks every epoch.
        progress (bool): Show a progress bar.

    Returns:
        str: Summary line.
    """
    cfg = resolve_config(
        config,
        optim={"epochs": epochs, "max_steps": max_steps, "batch_size": batch_size, "lr": lr, "seed": seed,
               "remask": remask or None},
    )
    vocab_path = vocab_from_sidecar(in_, vocab)
    if not vocab_path:
        raise ConfigInvalid(f"cannot tell the vocabulary of {in_}; pass --vocab")
    voc = load_vocab(vocab_path)
    cfg = cfg.override("encoder", vocab_size=voc.size, seed=seed)

    examples = []
    for item in read_examples(in_):
        if not isinstance(item, MaskedSequence):
            item = mask_sequence(item, voc.size, cfg.mask.rate, cfg.mask.node_share, cfg.mask.seed,
                                 max_misfits=cfg.mask.max_misfits)
        examples.append(item)
    logging.info(f"Pre-training on {len(examples)} windows with vocabulary size {voc.size}")

    result = train_mlm(
        examples, cfg.encoder, cfg.optim, cfg.mask,
        progress=progress, on_step=_trace_printer(cfg.optim.log_every),
    )
    accuracy = mlm_accuracy(result.model, examples)
    training = {
        "window": dataclasses.asdict(cfg.window),
        "mask": dataclasses.asdict(cfg.mask),
        "optim": dataclasses.asdict(cfg.optim),
        "steps": len(result.trace),
        "final_loss": result.losses[-1] if result.trace else None,
        "node_recovery_accuracy": accuracy,
    }
    save_checkpoint(out, result.model, "mlm", cfg.encoder, vocab_path, cfg.heads, training=training, trace=result.trace)
    write_sidecar(out, "pretrain", {"in": in_, "out": out}, cfg, vocab=vocab_path, vocab_size=voc.size)
    return f"Pre-trained {len(result.trace)} steps, whole-node recovery accuracy {accuracy:.3f}; checkpoint in {out}"


def _window_config(cfg: RunConfig, training: Dict[str, Any]) -> RunConfig:
    """Windowing recorded with a checkpoint wins over the run config."""
    window = training.get("window")
    return cfg.override("window", **window) if window else cfg


def cli_finetune(
    task: Literal["attr", "openie", "qa"],
    train: str,
    out: str,
    ckpt: Optional[str] = None,
    dev: Optional[str] = None,
    config: Optional[str] = None,
    vocab: Optional[str] = None,
    epochs: Optional[int] = None,
    max_steps: Optional[int] = None,
    batch_size: Optional[int] = None,
    lr: Optional[float] = None,
    seed: Optional[int] = None,
    no_structure: bool = False,
    jobs: Optional[int] = None,
    progress: bool = False,
) -> str:
    """
    Fine-tune the encoder jointly with a task head.

    Args:
        task (str): Task to train.
        train (str): Training dataset directory or manifest.
        out (str): Checkpoint directory.
        ckpt (str): Pre-trained checkpoint; the encoder starts from random weights without one.
        dev (str): Dev dataset; the best epoch by dev F1 is kept.
        config (str): Run config file.
        vocab (str): Vocabulary file, required without --ckpt.
        epochs (int): Number of epochs.
        max_steps (int): Stop after this many optimizer steps.
        batch_size (int): Examples per step.
        lr (float): Peak learning rate.
        seed (int): Seed for head initialization, sampling and batch order.
        no_structure (bool): Disable the tree-position embeddings (node, parent, sibling, depth, tag).
        jobs (int): Worker processes for parsing and windowing.
        progress (bool): Show a progress bar.

    Returns:
        str: Summary line.
    """
    cfg = resolve_config(
        config, optim={"epochs": epochs, "max_steps": max_steps, "batch_size": batch_size, "lr": lr, "seed": seed},
    )
    jobs = default_jobs(jobs)
    pretrained = load_checkpoint(ckpt) if ckpt else None
    if pretrained is not None:
        vocab_path = f"{ckpt}/{VOCAB_FILE}"
        cfg = _window_config(cfg, pretrained.training)
        encoder_cfg = pretrained.encoder
    elif vocab:
        vocab_path = vocab
        encoder_cfg = cfg.encoder
    else:
        raise ConfigInvalid("finetune needs --ckpt or --vocab")
    voc = load_vocab(vocab_path)
    encoder_cfg = dataclasses.replace(encoder_cfg, vocab_size=voc.size)
    if no_structure:
        encoder_cfg = dataclasses.replace(encoder_cfg, disabled_features=STRUCTURE_FEATURES)
    limits = encoder_cfg.limits

    dataset = load_dataset(train, cfg.clean, tasks=(task,), jobs=jobs)
    docs = preprocess_pages(list(dataset.pages.values()), voc, cfg.window, limits, jobs)
    examples = build_examples(task, docs, dataset, voc, cfg.heads, limits, cfg.optim.seed)
    attributes = dataset.attributes if task == "attr" else ()
    model = build_task_model(task, encoder_cfg, cfg.heads, len(attributes), pretrained, cfg.optim.seed)

    dev_score = None
    if dev:
        dev_set = load_dataset(dev, cfg.clean, tasks=(task,), jobs=jobs)
        dev_docs = preprocess_pages(list(dev_set.pages.values()), voc, cfg.window, limits, jobs)

        def dev_score(m) -> float:
            preds = predict(m, dev_docs, dev_set, voc, attributes, cfg.heads, limits)
            return headline(evaluate(task, preds, dev_set))

    result = finetune(
        model, examples, cfg.optim, dev_score,
        progress=progress, on_step=_trace_printer(cfg.optim.log_every),
    )
    training = {
        "window": dataclasses.asdict(cfg.window),
        "optim": dataclasses.asdict(cfg.optim),
        "pretrained": ckpt,
        "examples": len(examples),
        "steps": len(result.trace),
        "dev_scores": result.dev_scores,
        "best_epoch": result.best_epoch,
    }
    save_checkpoint(
        out, result.model, task, encoder_cfg, vocab_path, cfg.heads, tuple(attributes),
        training=training, trace=result.trace,
    )
    write_sidecar(out, "finetune", {"task": task, "train": train, "ckpt": ckpt, "dev": dev}, cfg,
                  vocab=vocab_path, vocab_size=voc.size)
    summary = f"Fine-tuned {task} on {len(examples)} examples for {len(result.trace)} steps"
    if result.dev_scores:
        summary += f", best dev F1 {max(result.dev_scores):.4f} at epoch {result.best_epoch}"
    return summary + f"; checkpoint in {out}"
