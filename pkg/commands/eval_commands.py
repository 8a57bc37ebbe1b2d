import json
import logging
from pathlib import Path
from typing import Literal, Optional

from command_ops import extract_command_metadata
from commands.common import default_jobs, resolve_config, write_sidecar
from domlm.checkpoint import VOCAB_FILE, load_checkpoint
from domlm.corpus import load_dataset, resolve_manifest_path, write_jsonl
from domlm.errors import ConfigInvalid
from domlm.evaluation import evaluate, read_predictions
from domlm.pipeline import preprocess_pages
from domlm.training import TaskModel, predict


def cli_predict(
    task: Literal["attr", "openie", "qa"],
    ckpt: str,
    in_: str,
    out: str,
    config: Optional[str] = None,
    jobs: Optional[int] = None,
) -> str:
    """
    Run a fine-tuned checkpoint over a dataset and write predictions (JSON Lines).

    Args:
        task (str): Task of the checkpoint.
        ckpt (str): Fine-tuned checkpoint directory.
        in_ (str): Dataset directory or manifest.
        out (str): Predictions file.
        config (str): Run config file.
        jobs (int): Worker processes.

    Returns:
        str: Summary line.
    """
    cfg = resolve_config(config)
    checkpoint = load_checkpoint(ckpt)
    if checkpoint.task != task:
        raise ConfigInvalid(f"checkpoint {ckpt} was trained for '{checkpoint.task}', not '{task}'")
    window = checkpoint.training.get("window")
    if window:
        cfg = cfg.override("window", **window)
    jobs = default_jobs(jobs)
    limits = checkpoint.encoder.limits

    model = TaskModel(task, checkpoint.encoder, checkpoint.heads, len(checkpoint.attributes))
    model.load_state_dict(checkpoint.state)
    dataset = load_dataset(in_, cfg.clean, tasks=("qa",) if task == "qa" else (), jobs=jobs)
    docs = preprocess_pages(list(dataset.pages.values()), checkpoint.vocab, cfg.window, limits, jobs)
    records = predict(model, docs, dataset, checkpoint.vocab, checkpoint.attributes, checkpoint.heads, limits)
    n = write_jsonl(out, records)
    write_sidecar(out, "predict", {"task": task, "ckpt": ckpt, "in": in_, "out": out}, cfg,
                  vocab=str(Path(ckpt) / VOCAB_FILE), vocab_size=checkpoint.vocab.size)
    return f"Wrote {n} {task} predictions for {len(docs)} pages to {out}"


def split_name(gold: str) -> str:
    """``manifest.zeroshot-test.jsonl`` -> ``zeroshot-test``; the main manifest is ``all``."""
    parts = resolve_manifest_path(gold).name.split(".")
    return parts[1] if len(parts) == 3 else "all"


def cli_eval(
    task: Literal["attr", "openie", "qa"],
    pred: str,
    gold: str,
    out: Optional[str] = None,
    text_match: bool = False,
    config: Optional[str] = None,
) -> str:
    """
    Score predictions against gold labels; the report has per-domain and aggregate (micro, macro) scores.

    Args:
        task (str): Task of the predictions.
        pred (str): Predictions file.
        gold (str): Dataset directory or manifest of the evaluated split.
        out (str): Report file; printed when omitted.
        text_match (bool): Match attribute values on normalized text instead of node ids.
        config (str): Run config file.

    Returns:
        str: The report as JSON, or a summary when written to a file.
    """
    cfg = resolve_config(config, eval={"text_match": text_match or None})
    preds = read_predictions(pred, task)
    dataset = load_dataset(gold, cfg.clean, tasks=(task,))
    split = split_name(gold)
    report = evaluate(task, preds, dataset, split=split, text_match=cfg.eval.text_match)
    text = json.dumps(report, indent=2, sort_keys=True)
    micro = report["aggregate"]["micro"]
    logging.info(f"{task} on {split}: micro F1 {micro['f1']:.4f}")
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text + "\n", encoding="utf-8")
        write_sidecar(out, "eval", {"task": task, "pred": pred, "gold": gold, "out": out}, cfg)
        return f"{report['metric']} on {split}: micro F1 {micro['f1']:.4f}, macro F1 {report['aggregate']['macro'].get('f1', 0.0):.4f} ({out})"
    return text


def cli_list_commands() -> str:
    """List the available commands with their signatures."""
    lines = []
    for meta in extract_command_metadata():
        summary = meta["docstring"].split("\n", 1)[0]
        lines.append(f"{meta['name']}{meta['signature']}\n    {summary}")
    return "\n".join(lines)
