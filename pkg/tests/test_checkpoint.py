import pytest
import torch

from domlm.checkpoint import MODEL_FILE, VOCAB_FILE, load_checkpoint, load_tensors, save_checkpoint, save_tensors
from domlm.config import HeadConfig
from domlm.encoder import init_params
from domlm.errors import MissingFile, SchemaError
from domlm.tokenizer import save_vocab
from tests.conftest import tiny_encoder


@pytest.fixture
def saved(tmp_path, vocab, vocab_path):
    cfg = tiny_encoder(vocab.size, disabled_features=(0, 1))
    model = init_params(cfg, seed=2)
    out = save_checkpoint(
        tmp_path / "ckpt", model, "mlm", cfg, vocab_path, HeadConfig(max_answer_len=7), ("title",),
        training={"steps": 3}, trace=[{"step": 1, "loss": 2.0}],
    )
    return out, model, cfg


def test_round_trip(saved, vocab):
    out, model, cfg = saved
    ckpt = load_checkpoint(out)
    assert ckpt.task == "mlm"
    assert ckpt.encoder == cfg
    assert ckpt.heads.max_answer_len == 7
    assert ckpt.attributes == ("title",)
    assert ckpt.training["steps"] == 3
    assert ckpt.vocab == vocab
    for name, tensor in model.state_dict().items():
        assert torch.equal(ckpt.state[name], tensor)
    assert set(ckpt.encoder_state()) == {k[len("encoder."):] for k in model.state_dict() if k.startswith("encoder.")}
    assert (out / "loss_trace.jsonl").is_file()


def test_saved_bytes_are_reproducible(tmp_path, saved, vocab_path):
    out, model, cfg = saved
    again = save_checkpoint(tmp_path / "again", model, "mlm", cfg, vocab_path, HeadConfig(max_answer_len=7), ("title",))
    assert (again / MODEL_FILE).read_bytes() == (out / MODEL_FILE).read_bytes()


def test_bad_magic(tmp_path):
    path = tmp_path / "model.bin"
    save_tensors(path, {"w": torch.ones(2)}, {})
    data = bytearray(path.read_bytes())
    data[:8] = b"NOTDOMLM"
    path.write_bytes(bytes(data))
    with pytest.raises(SchemaError):
        load_tensors(path)


def test_truncated_and_padded_files(tmp_path):
    path = tmp_path / "model.bin"
    save_tensors(path, {"w": torch.ones(3, 2)}, {})
    data = path.read_bytes()
    path.write_bytes(data[:-4])
    with pytest.raises(SchemaError):
        load_tensors(path)
    path.write_bytes(data + b"\0\0\0\0")
    with pytest.raises(SchemaError):
        load_tensors(path)
    path.write_bytes(data[:5])
    with pytest.raises(SchemaError):
        load_tensors(path)


def test_vocab_size_mismatch(saved, vocab):
    out, _, _ = saved
    from domlm.tokenizer import Vocab
    smaller = Vocab.from_tokens(vocab.id_to_token[:-1])
    save_vocab(smaller, str(out / VOCAB_FILE))
    with pytest.raises(SchemaError):
        load_checkpoint(out)


def test_missing_checkpoint(tmp_path):
    with pytest.raises(MissingFile):
        load_checkpoint(tmp_path)
