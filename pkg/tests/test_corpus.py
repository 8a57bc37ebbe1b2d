import json

import numpy as np
import pytest

from domlm.config import CleanConfig
from domlm.corpus import (
    ManifestEntry, iter_jsonl, load_dataset, load_manifest, read_examples, write_examples, write_manifest,
)
from domlm.errors import LabelNodeMismatch, MissingFile, SchemaError
from domlm.masker import mask_sequence
from tests.conftest import TINY_SYNTHETIC


def test_dataset_loads_every_label(dataset):
    n_pages = TINY_SYNTHETIC.n_sites * TINY_SYNTHETIC.templates_per_site * TINY_SYNTHETIC.pages_per_template
    n_attrs = len(dataset.attributes)
    assert len(dataset.pages) == n_pages
    assert len(dataset.attr) == len(dataset.pairs) == len(dataset.qa) == n_pages * n_attrs


def test_gold_nodes_carry_the_gold_values(dataset):
    for label in dataset.attr:
        node = dataset.pages[label.doc_id].tree[label.node_id]
        assert node.text == label.value
    gold = dataset.gold()
    assert len(gold.attr) == len(dataset.attr)
    assert all(forms for forms in gold.pairs.values())


def test_zero_shot_split_shares_no_website(syn_dir):
    train = load_manifest(syn_dir / "manifest.zeroshot-train.jsonl")
    test = load_manifest(syn_dir / "manifest.zeroshot-test.jsonl")
    assert train.entries and test.entries
    assert not {e.website for e in train.entries} & {e.website for e in test.entries}
    # split manifests share the dataset description
    assert test.attributes == load_manifest(syn_dir).attributes


def test_split_manifest_restricts_labels(syn_dir, dataset):
    test = load_dataset(syn_dir / "manifest.zeroshot-test.jsonl", tasks=("attr",))
    assert set(test.pages) < set(dataset.pages)
    assert {a.doc_id for a in test.attr} == set(test.pages)
    assert test.qa == []


def test_recleaning_with_other_settings_is_detected(syn_dir):
    with pytest.raises(LabelNodeMismatch):
        load_dataset(syn_dir, CleanConfig(kept_attrs=()), tasks=("attr",))


def test_label_outside_tree(tmp_path, syn_dir):
    manifest = load_manifest(syn_dir)
    entry = manifest.entries[0]
    (tmp_path / "pages").mkdir()
    (tmp_path / entry.path).write_bytes(manifest.page_path(entry).read_bytes())
    write_manifest(tmp_path / "manifest.jsonl", [entry])
    (tmp_path / "dataset.json").write_text(json.dumps({"labels": {"attr": "attr.jsonl"}, "attributes": ["x"]}))
    (tmp_path / "attr.jsonl").write_text(
        json.dumps({"doc_id": entry.doc_id, "node_id": 100000, "tag_path": "", "attribute": "x"}) + "\n"
    )
    with pytest.raises(LabelNodeMismatch):
        load_dataset(tmp_path)


def test_duplicate_doc_ids_are_rejected(tmp_path):
    (tmp_path / "a.html").write_text("<p>x</p>", encoding="utf-8")
    entry = ManifestEntry("a", "a.html", "site", "movie", "train")
    write_manifest(tmp_path / "manifest.jsonl", [entry, entry])
    with pytest.raises(SchemaError, match=":2:"):
        load_manifest(tmp_path)


def test_missing_manifest_and_page(tmp_path):
    with pytest.raises(MissingFile):
        load_manifest(tmp_path / "nope.jsonl")
    write_manifest(tmp_path / "manifest.jsonl", [ManifestEntry("a", "missing.html", "s", "movie", "train")])
    with pytest.raises(MissingFile):
        load_manifest(tmp_path)


def test_malformed_lines_report_their_number(tmp_path):
    path = tmp_path / "x.jsonl"
    path.write_text('{"a": 1}\nnot json\n', encoding="utf-8")
    with pytest.raises(SchemaError, match=":2:"):
        list(iter_jsonl(path))
    path.write_text('{"a": 1}\n', encoding="utf-8")
    with pytest.raises(SchemaError):
        list(iter_jsonl(path, ("b",)))


def test_examples_survive_writing_and_reading(tmp_path, docs, vocab):
    sequences = [s for d in docs for s in d.sequences]
    path = tmp_path / "examples.jsonl"
    assert write_examples(path, sequences) == len(sequences)
    back = read_examples(path)
    for a, b in zip(sequences, back):
        np.testing.assert_array_equal(a.tokens, b.tokens)
        np.testing.assert_array_equal(a.pos, b.pos)
        assert (a.node_anchor, a.node_ranges, a.origin) == (b.node_anchor, b.node_ranges, b.origin)


def test_masked_examples_survive_writing_and_reading(tmp_path, docs, vocab):
    masked = [mask_sequence(s, vocab.size, seed=1) for d in docs for s in d.sequences]
    path = tmp_path / "masked.jsonl"
    write_examples(path, masked)
    for a, b in zip(masked, read_examples(path)):
        np.testing.assert_array_equal(a.tokens, b.tokens)
        np.testing.assert_array_equal(a.labels, b.labels)
        assert a.plan == b.plan


def test_broken_example_record(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text(json.dumps({"doc_id": "d", "window_index": 0, "tokens": [1], "pos": [[0, 0]], "anchors": {}}) + "\n")
    with pytest.raises(SchemaError):
        read_examples(path)
