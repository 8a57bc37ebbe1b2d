import json
from pathlib import Path

import pytest

from domlm.config import EncoderConfig, RunConfig, config_from_dict, load_run_config
from domlm.errors import ConfigInvalid, MissingFile


def test_defaults_without_a_file():
    cfg = load_run_config(None)
    assert cfg == RunConfig()
    assert (cfg.window.max_tokens, cfg.window.stride) == (512, 128)
    assert (cfg.mask.rate, cfg.mask.node_share) == (0.15, 0.5)


def test_partial_sections_keep_defaults(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"window": {"stride": 64}, "clean": {"kept_attrs": ["class"]}}))
    cfg = load_run_config(str(path))
    assert (cfg.window.max_tokens, cfg.window.stride) == (512, 64)
    assert cfg.clean.kept_attrs == ("class",)


def test_shipped_configs_load():
    cfg = load_run_config(str(Path(__file__).parent.parent / "configs" / "desk.json"))
    assert cfg.encoder.hidden == 64


@pytest.mark.parametrize("data", [
    {"windows": {}},
    {"window": {"size": 3}},
    {"window": 5},
    {"encoder": {"hidden": 10, "heads": 4}},
    {"encoder": {"disabled_features": [6]}},
])
def test_invalid_documents(data):
    with pytest.raises(ConfigInvalid):
        config_from_dict(data)


def test_bad_files(tmp_path):
    with pytest.raises(MissingFile):
        load_run_config(str(tmp_path / "nope.json"))
    path = tmp_path / "bad.json"
    path.write_text("{")
    with pytest.raises(ConfigInvalid):
        load_run_config(str(path))


def test_override_skips_unset_values():
    cfg = RunConfig().override("optim", lr=0.5, epochs=None)
    assert cfg.optim.lr == 0.5
    assert cfg.optim.epochs == RunConfig().optim.epochs
    assert RunConfig().override("optim", lr=None) == RunConfig()
    with pytest.raises(ConfigInvalid):
        RunConfig().override("optim", momentum=0.9)


def test_encoder_limits():
    limits = EncoderConfig(max_nodes=10, max_depth=4, max_tags=6, max_len=20).limits
    assert limits.table_sizes() == (10, 10, 10, 4, 6, 20)


def test_round_trip_through_dict():
    cfg = RunConfig().override("encoder", disabled_features=(0, 1))
    assert config_from_dict(cfg.to_dict()) == cfg
