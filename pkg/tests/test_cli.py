import json

import pytest

import main
from command_ops import build_parser, command_registry, load_commands_from_directory

SYNTHETIC = {
    "synthetic": {
        "n_sites": 3, "templates_per_site": 1, "pages_per_template": 3, "domains": ["movie"],
        "test_sites": 1, "fewshot_pages": 1, "seed": 2,
    }
}
RUN = {
    "window": {"max_tokens": 64, "stride": 32},
    "encoder": {"layers": 1, "hidden": 16, "heads": 2, "ffn": 32, "max_nodes": 128, "max_depth": 32,
                "max_tags": 64, "max_len": 256},
    "optim": {"lr": 0.001, "batch_size": 8, "epochs": 1, "max_steps": 3, "log_every": 1},
}


@pytest.fixture
def parser():
    if not command_registry:
        load_commands_from_directory(main.COMMANDS_DIR)
    return build_parser()


def _configs(root):
    root.mkdir(parents=True, exist_ok=True)
    syn, run = root / "synthetic.json", root / "run.json"
    syn.write_text(json.dumps(SYNTHETIC))
    run.write_text(json.dumps(RUN))
    return str(syn), str(run)


def _pipeline(root):
    syn, run = _configs(root)
    data, vocab = root / "data", root / "vocab.txt"
    steps = [
        ["gen-synthetic", "--out", str(data), "--config", syn],
        ["build-vocab", "--in", str(data), "--out", str(vocab)],
        ["preprocess", "--in", str(data), "--vocab", str(vocab), "--out", str(root / "windows.jsonl"), "--config", run],
        ["mask", "--in", str(root / "windows.jsonl"), "--out", str(root / "masked.jsonl"), "--seed", "1", "--config", run],
        ["pretrain", "--in", str(root / "masked.jsonl"), "--out", str(root / "pre"), "--config", run],
        ["finetune", "--task", "attr", "--train", str(data / "manifest.zeroshot-train.jsonl"),
         "--ckpt", str(root / "pre"), "--out", str(root / "ft"), "--config", run],
        ["predict", "--task", "attr", "--ckpt", str(root / "ft"), "--in", str(data / "manifest.zeroshot-test.jsonl"),
         "--out", str(root / "preds.jsonl")],
        ["eval", "--task", "attr", "--pred", str(root / "preds.jsonl"),
         "--gold", str(data / "manifest.zeroshot-test.jsonl"), "--out", str(root / "report.json")],
    ]
    for argv in steps:
        assert main.run(argv) == 0, argv
    return root


def test_pipeline_is_reproducible(tmp_path):
    first = _pipeline(tmp_path / "a")
    second = _pipeline(tmp_path / "b")
    report = json.loads((first / "report.json").read_text())
    assert report["metric"] == "attribute_value_f1"
    assert report["split"] == "zeroshot-test"
    assert (first / "report.json").read_bytes() == (second / "report.json").read_bytes()
    assert (first / "masked.jsonl").read_bytes() == (second / "masked.jsonl").read_bytes()

    sidecar = json.loads((first / "masked.jsonl.config.json").read_text())
    assert sidecar["command"] == "mask"
    assert sidecar["prng"] == "PCG64"
    assert sidecar["vocab"] == str(first / "vocab.txt")
    assert json.loads((first / "pre" / "config.json").read_text())["command"] == "pretrain"


def test_stride_larger_than_window(tmp_path):
    argv = ["preprocess", "--in", str(tmp_path), "--vocab", "v.txt", "--out", "o", "--window", "4", "--stride", "8"]
    assert main.run(argv) == 2


def test_prediction_schema_mismatch(tmp_path, syn_dir):
    preds = tmp_path / "preds.jsonl"
    preds.write_text(json.dumps({"doc_id": "x", "node_id": 1, "attribute": "title"}) + "\n")
    assert main.run(["eval", "--task", "qa", "--pred", str(preds), "--gold", str(syn_dir)]) == 4


def test_missing_input_is_an_io_error(tmp_path):
    assert main.run(["build-vocab", "--in", str(tmp_path / "nothing"), "--out", str(tmp_path / "v.txt")]) == 3


def test_usage_errors():
    assert main.run(["preprocess", "--bogus"]) == 2
    assert main.run(["mask", "--in", "x"]) == 2
    assert main.run(["finetune", "--task", "ner", "--train", "t", "--out", "o"]) == 2


def test_options_follow_parameter_names(parser):
    args = parser.parse_args(["mask", "--in", "a.jsonl", "--out", "b.jsonl", "--node-share", "0.3"])
    assert (args.in_, args.out, args.node_share, args.rate) == ("a.jsonl", "b.jsonl", 0.3, None)
    args = parser.parse_args(["finetune", "--task", "qa", "--train", "t", "--out", "o", "--no-structure"])
    assert args.no_structure is True
    assert args.max_steps is None


def test_every_command_is_registered():
    if not command_registry:
        load_commands_from_directory(main.COMMANDS_DIR)
    assert {
        "gen-synthetic", "build-vocab", "preprocess", "mask", "pretrain", "finetune", "predict", "eval",
        "inspect-windows", "mask-preview", "list-commands",
    } <= set(command_registry)


def test_list_commands(capsys):
    assert main.run(["list-commands"]) == 0
    out = capsys.readouterr().out
    assert "pretrain" in out and "mask-preview" in out


def test_eval_prints_the_report(tmp_path, dataset, syn_dir, capsys):
    preds = tmp_path / "preds.jsonl"
    preds.write_text("".join(
        json.dumps({"doc_id": a.doc_id, "node_id": a.node_id, "attribute": a.attribute}) + "\n" for a in dataset.attr
    ))
    assert main.run(["eval", "--task", "attr", "--pred", str(preds), "--gold", str(syn_dir)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["split"] == "all"
    assert report["aggregate"]["micro"]["f1"] == pytest.approx(1.0)


def test_inspect_windows(tmp_path, syn_dir, vocab_path):
    out = tmp_path / "windows.jsonl"
    argv = ["inspect-windows", "--in", str(syn_dir), "--vocab", str(vocab_path), "--out", str(out),
            "--window", "64", "--stride", "32"]
    assert main.run(argv) == 0
    records = [json.loads(line) for line in out.read_text().splitlines()]
    assert records
    assert set(records[0]) >= {"doc_id", "window_index", "node_ids", "token_total"}
    assert all(r["token_total"] <= 64 for r in records)
