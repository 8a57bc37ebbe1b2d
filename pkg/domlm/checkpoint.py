"""
Checkpoint directories.

    model.bin          binary container: magic "DOMLMCK1", uint32 format
                       version, uint64 header length, UTF-8 JSON header, then
                       every tensor as little-endian float32 in header order
    training.json      training metadata (task, seeds, attribute names, loss summary)
    loss_trace.jsonl   one record per optimizer step
    vocab.txt          the vocabulary the model was trained with
"""
import json
import logging
import shutil
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import torch

from domlm.config import EncoderConfig, HeadConfig
from domlm.corpus import write_jsonl
from domlm.errors import MissingFile, SchemaError
from domlm.tokenizer import Vocab, load_vocab

logger = logging.getLogger(__name__)

MAGIC = b"DOMLMCK1"
FORMAT_VERSION = 1
MODEL_FILE = "model.bin"
TRAINING_FILE = "training.json"
TRACE_FILE = "loss_trace.jsonl"
VOCAB_FILE = "vocab.txt"

_PREFIX = struct.Struct("<8sIQ")


def save_tensors(path: Union[str, Path], tensors: Dict[str, torch.Tensor], header: Dict[str, Any]) -> None:
    """Write tensors in insertion order behind a JSON header."""
    header = dict(header)
    header.update({
        "format_version": FORMAT_VERSION,
        "endianness": "little",
        "dtype": "float32",
        "tensors": [{"name": name, "shape": list(t.shape)} for name, t in tensors.items()],
    })
    encoded = json.dumps(header, sort_keys=True).encode("utf-8")
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "wb") as f:
        f.write(_PREFIX.pack(MAGIC, FORMAT_VERSION, len(encoded)))
        f.write(encoded)
        for tensor in tensors.values():
            f.write(tensor.detach().cpu().to(torch.float32).numpy().astype("<f4").tobytes())


def load_tensors(path: Union[str, Path]) -> Tuple[Dict[str, Any], Dict[str, torch.Tensor]]:
    """
    Read a container written by save_tensors.

    Raises:
        MissingFile: If the file does not exist.
        SchemaError: On a bad magic number, unsupported version or truncated data.
    """
    src = Path(path)
    if not src.is_file():
        raise MissingFile(f"Checkpoint not found: {src}")
    data = src.read_bytes()
    if len(data) < _PREFIX.size:
        raise SchemaError(f"{src}: truncated checkpoint")
    magic, version, header_len = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise SchemaError(f"{src}: not a domlm checkpoint")
    if version != FORMAT_VERSION:
        raise SchemaError(f"{src}: unsupported checkpoint version {version}")
    offset = _PREFIX.size
    header = json.loads(data[offset: offset + header_len].decode("utf-8"))
    offset += header_len
    tensors = {}
    for spec in header["tensors"]:
        count = int(np.prod(spec["shape"], dtype=np.int64))
        end = offset + 4 * count
        if end > len(data):
            raise SchemaError(f"{src}: truncated tensor {spec['name']}")
        array = np.frombuffer(data, dtype="<f4", count=count, offset=offset).reshape(spec["shape"])
        tensors[spec["name"]] = torch.from_numpy(array.astype(np.float32))
        offset = end
    if offset != len(data):
        raise SchemaError(f"{src}: {len(data) - offset} trailing bytes")
    return header, tensors


@dataclass
class Checkpoint:
    task: str
    encoder: EncoderConfig
    state: Dict[str, torch.Tensor]
    vocab: Vocab
    heads: HeadConfig = field(default_factory=HeadConfig)
    attributes: Tuple[str, ...] = ()
    training: Dict[str, Any] = field(default_factory=dict)

    def encoder_state(self) -> Dict[str, torch.Tensor]:
        """Encoder tensors with the "encoder." prefix removed."""
        return {k[len("encoder."):]: v for k, v in self.state.items() if k.startswith("encoder.")}


def save_checkpoint(
    out_dir: Union[str, Path],
    model: torch.nn.Module,
    task: str,
    encoder_cfg: EncoderConfig,
    vocab_path: Union[str, Path],
    heads: HeadConfig = HeadConfig(),
    attributes: Tuple[str, ...] = (),
    training: Optional[Dict[str, Any]] = None,
    trace: Optional[List[Dict[str, Any]]] = None,
) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    header = {
        "task": task,
        "encoder": asdict(encoder_cfg),
        "heads": asdict(heads),
        "attributes": list(attributes),
    }
    save_tensors(out / MODEL_FILE, dict(model.state_dict()), header)
    if Path(vocab_path).resolve() != (out / VOCAB_FILE).resolve():
        shutil.copyfile(vocab_path, out / VOCAB_FILE)
    meta = {"task": task, "attributes": list(attributes), **(training or {})}
    (out / TRAINING_FILE).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    if trace is not None:
        write_jsonl(out / TRACE_FILE, trace)
    logger.info(f"Saved {task} checkpoint to {out}")
    return out


def load_checkpoint(ckpt_dir: Union[str, Path]) -> Checkpoint:
    """
    Load a checkpoint directory.

    Raises:
        MissingFile: If the directory lacks model.bin or vocab.txt.
        SchemaError: If the container or its header is malformed.
    """
    src = Path(ckpt_dir)
    header, state = load_tensors(src / MODEL_FILE)
    try:
        enc = dict(header["encoder"])
        enc["disabled_features"] = tuple(enc.get("disabled_features", ()))
        encoder_cfg = EncoderConfig(**enc)
        heads = HeadConfig(**header.get("heads", {}))
        task = header["task"]
    except (KeyError, TypeError) as e:
        raise SchemaError(f"{src / MODEL_FILE}: malformed header ({e})") from e
    training = {}
    if (src / TRAINING_FILE).is_file():
        training = json.loads((src / TRAINING_FILE).read_text(encoding="utf-8"))
    vocab = load_vocab(src / VOCAB_FILE)
    if vocab.size != encoder_cfg.vocab_size:
        raise SchemaError(f"{src}: vocabulary has {vocab.size} entries, model expects {encoder_cfg.vocab_size}")
    logger.info(f"Loaded {task} checkpoint from {src}")
    return Checkpoint(
        task=task, encoder=encoder_cfg, state=state, vocab=vocab, heads=heads,
        attributes=tuple(header.get("attributes", ())), training=training,
    )
