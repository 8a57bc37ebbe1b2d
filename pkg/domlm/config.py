"""
Run configuration.

A run is configured by one JSON document with a section per pipeline stage::

    {
      "clean":   {"removed_tags": [...], "kept_attrs": ["class", "id"]},
      "window":  {"max_tokens": 512, "stride": 128},
      "mask":    {"rate": 0.15, "node_share": 0.5},
      "encoder": {"layers": 2, "hidden": 64, ...},
      "optim":   {"lr": 1e-4, "batch_size": 24, ...},
      "heads":   {"max_answer_len": 30, ...},
      "eval":    {"text_match": false}
    }

Every section is optional; missing keys keep their defaults. Unknown sections
or keys raise ConfigInvalid.
"""
import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Literal, Optional, Tuple

from domlm.errors import ConfigInvalid, MissingFile

logger = logging.getLogger(__name__)

DEFAULT_REMOVED_TAGS = ("script", "style", "noscript", "iframe")
DEFAULT_KEPT_ATTRS = ("class", "id")


@dataclass(frozen=True)
class CleanConfig:
    removed_tags: Tuple[str, ...] = DEFAULT_REMOVED_TAGS
    kept_attrs: Tuple[str, ...] = DEFAULT_KEPT_ATTRS
    max_attr_tokens: int = 64


@dataclass(frozen=True)
class WindowConfig:
    max_tokens: int = 512
    stride: int = 128
    oversize: Literal["truncate", "error"] = "truncate"


@dataclass(frozen=True)
class MaskConfig:
    rate: float = 0.15
    node_share: float = 0.5
    max_misfits: int = 10
    seed: int = 0


@dataclass(frozen=True)
class PositionLimits:
    """Table sizes of the six position features; values clip to size - 1."""

    max_nodes: int = 512
    max_depth: int = 64
    max_tags: int = 128
    max_len: int = 1024

    def table_sizes(self) -> Tuple[int, int, int, int, int, int]:
        return (self.max_nodes, self.max_nodes, self.max_nodes, self.max_depth, self.max_tags, self.max_len)


@dataclass(frozen=True)
class EncoderConfig:
    layers: int = 2
    hidden: int = 64
    heads: int = 4
    ffn: int = 256
    vocab_size: int = 0
    max_nodes: int = 512
    max_depth: int = 64
    max_tags: int = 128
    max_len: int = 1024
    dropout: float = 0.0
    seed: int = 0
    # indices k of position tables P^k that are switched off (structure ablation)
    disabled_features: Tuple[int, ...] = ()

    def __post_init__(self):
        if self.heads <= 0 or self.hidden % self.heads != 0:
            raise ConfigInvalid(f"hidden size {self.hidden} is not divisible by {self.heads} heads")
        if any(k not in range(6) for k in self.disabled_features):
            raise ConfigInvalid(f"disabled_features must be within 0..5, got {self.disabled_features}")

    @property
    def limits(self) -> PositionLimits:
        return PositionLimits(self.max_nodes, self.max_depth, self.max_tags, self.max_len)


@dataclass(frozen=True)
class OptimConfig:
    lr: float = 1e-4
    batch_size: int = 24
    epochs: int = 5
    max_steps: Optional[int] = None
    warmup_fraction: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    seed: int = 0
    log_every: int = 10
    remask: bool = False


@dataclass(frozen=True)
class HeadConfig:
    attr_hidden: Optional[int] = None
    pair_cap: int = 5000
    pair_policy: Literal["truncate", "error"] = "truncate"
    negative_ratio: int = 5
    max_answer_len: int = 30
    add_yes_no: bool = True
    openie_gate: Literal["completed", "literal"] = "completed"
    threshold: float = 0.5


@dataclass(frozen=True)
class EvalConfig:
    text_match: bool = False


@dataclass(frozen=True)
class RunConfig:
    clean: CleanConfig = field(default_factory=CleanConfig)
    window: WindowConfig = field(default_factory=WindowConfig)
    mask: MaskConfig = field(default_factory=MaskConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    heads: HeadConfig = field(default_factory=HeadConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def override(self, section: str, **values: Any) -> "RunConfig":
        """Return a copy with ``values`` replacing keys of ``section``; ``None`` values are ignored."""
        values = {k: v for k, v in values.items() if v is not None}
        if not values:
            return self
        current = getattr(self, section)
        return dataclasses.replace(self, **{section: _build_section(type(current), {**dataclasses.asdict(current), **values}, section)})

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)


def _build_section(cls, values: Dict[str, Any], section: str):
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - set(known))
    if unknown:
        raise ConfigInvalid(f"unknown key(s) in section '{section}': {unknown}")
    kwargs = {}
    for name, value in values.items():
        # JSON has no tuples
        if isinstance(value, list):
            value = tuple(value)
        kwargs[name] = value
    try:
        return cls(**kwargs)
    except TypeError as e:
        raise ConfigInvalid(f"invalid section '{section}': {e}") from e


def config_from_dict(data: Dict[str, Any]) -> RunConfig:
    """
    Build a RunConfig from a parsed JSON document.

    Args:
        data (Dict[str, Any]): Mapping of section name to key/value mapping.

    Returns:
        RunConfig: The validated configuration.

    Raises:
        ConfigInvalid: On unknown sections, unknown keys or invalid values.
    """
    if not isinstance(data, dict):
        raise ConfigInvalid("run config must be a JSON object")
    sections = {f.name: f for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(data) - set(sections))
    if unknown:
        raise ConfigInvalid(f"unknown config section(s): {unknown}")
    built = {}
    for name, values in data.items():
        if not isinstance(values, dict):
            raise ConfigInvalid(f"section '{name}' must be a JSON object")
        built[name] = _build_section(type(getattr(RunConfig(), name)), values, name)
    return RunConfig(**built)


def load_run_config(path: Optional[str]) -> RunConfig:
    """
    Load a run configuration file, or the defaults when no path is given.

    Args:
        path (Optional[str]): Path to a JSON run configuration.

    Returns:
        RunConfig: The resolved configuration.

    Raises:
        MissingFile: If the file does not exist.
        ConfigInvalid: If the file is not valid JSON or fails validation.
    """
    if not path:
        return RunConfig()
    config_path = Path(path)
    if not config_path.is_file():
        raise MissingFile(f"Config file not found: {config_path}")
    try:
        data = json.loads(config_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigInvalid(f"{config_path}: invalid JSON ({e})") from e
    cfg = config_from_dict(data)
    logger.info(f"Loaded run config from {config_path}")
    return cfg
