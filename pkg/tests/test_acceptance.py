"""Desk-scale runs on the shipped configs. Minutes on a CPU; run with ``pytest -m slow``."""
import dataclasses
from pathlib import Path

import numpy as np
import pytest

from domlm.config import load_run_config
from domlm.corpus import load_dataset
from domlm.evaluation import evaluate, headline
from domlm.linearizer import STRUCTURE_FEATURES
from domlm.masker import mask_sequence
from domlm.pipeline import preprocess_pages
from domlm.synthetic import generate_synthetic, load_synthetic_config, write_synthetic
from domlm.tokenizer import build_vocab
from domlm.training import build_examples, build_task_model, finetune, mlm_accuracy, predict, train

CONFIGS = Path(__file__).parent.parent / "configs"

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def desk(tmp_path_factory):
    cfg = load_run_config(str(CONFIGS / "desk.json"))
    out = tmp_path_factory.mktemp("desk")
    write_synthetic(generate_synthetic(load_synthetic_config(str(CONFIGS / "synthetic.json")), cfg.clean), out)
    train_set = load_dataset(out / "manifest.zeroshot-train.jsonl", cfg.clean)
    test_set = load_dataset(out / "manifest.zeroshot-test.jsonl", cfg.clean)
    vocab = build_vocab(p.tree for p in train_set.pages.values())
    cfg = cfg.override("encoder", vocab_size=vocab.size)
    limits = cfg.encoder.limits
    train_docs = preprocess_pages(list(train_set.pages.values()), vocab, cfg.window, limits)
    test_docs = preprocess_pages(list(test_set.pages.values()), vocab, cfg.window, limits)
    return cfg, vocab, train_set, test_set, train_docs, test_docs


def test_pretraining_learns_to_recover_nodes(desk):
    cfg, vocab, _, _, train_docs, test_docs = desk

    def masked(docs):
        return [
            mask_sequence(s, vocab.size, cfg.mask.rate, cfg.mask.node_share, cfg.mask.seed)
            for d in docs for s in d.sequences
        ]

    examples = masked(train_docs)
    result = train(examples, cfg.encoder, cfg.optim, cfg.mask)
    first, last = np.mean(result.losses[:20]), np.mean(result.losses[-20:])
    assert last <= 0.5 * first
    assert mlm_accuracy(result.model, masked(test_docs)) > 0.7


def test_structure_features_help_attribute_extraction(desk):
    cfg, vocab, train_set, test_set, train_docs, test_docs = desk
    limits = cfg.encoder.limits
    optim = dataclasses.replace(cfg.optim, epochs=5, max_steps=None)

    def score(encoder_cfg, seed):
        model = build_task_model("attr", encoder_cfg, cfg.heads, len(train_set.attributes), seed=seed)
        examples = build_examples("attr", train_docs, train_set, vocab, cfg.heads, limits, seed)
        result = finetune(model, examples, dataclasses.replace(optim, seed=seed))
        preds = predict(result.model, test_docs, test_set, vocab, train_set.attributes, cfg.heads, limits)
        return headline(evaluate("attr", preds, test_set))

    flat = dataclasses.replace(cfg.encoder, disabled_features=STRUCTURE_FEATURES)
    with_structure = np.mean([score(cfg.encoder, seed) for seed in range(3)])
    without = np.mean([score(flat, seed) for seed in range(3)])
    assert with_structure - without >= 0.05
