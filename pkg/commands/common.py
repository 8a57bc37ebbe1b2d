"""Helpers shared by the command modules: config resolution and run sidecars."""
import json
import logging
import os
from importlib import metadata
from pathlib import Path
from typing import Any, Dict, Optional

from domlm.config import RunConfig, load_run_config
from domlm.masker import PRNG_ALGORITHM

SIDECAR_SUFFIX = ".config.json"
DIR_SIDECAR = "config.json"
VERSIONED_PACKAGES = ("torch", "numpy", "html5lib")


def default_jobs(jobs: Optional[int]) -> int:
    """Worker count: the flag, else DOMLM_JOBS, else 1."""
    if jobs:
        return jobs
    return max(1, int(os.getenv("DOMLM_JOBS", "1")))


def resolve_config(config: Optional[str], **sections: Dict[str, Any]) -> RunConfig:
    """Load a run config file and apply command-line overrides per section (None values are skipped)."""
    cfg = load_run_config(config)
    for section, values in sections.items():
        cfg = cfg.override(section, **values)
    return cfg


def sidecar_path(out: str) -> Path:
    path = Path(out)
    return path / DIR_SIDECAR if path.is_dir() else Path(str(path) + SIDECAR_SUFFIX)


def _versions() -> Dict[str, str]:
    versions = {}
    for package in VERSIONED_PACKAGES:
        try:
            versions[package] = metadata.version(package)
        except metadata.PackageNotFoundError:
            versions[package] = "unknown"
    return versions


def write_sidecar(out: str, command: str, args: Dict[str, Any], cfg: Optional[RunConfig] = None, **extra: Any) -> Path:
    """
    Write the resolved configuration and run metadata next to an output.

    Args:
        out (str): Output file or directory.
        command (str): Subcommand name.
        args (Dict[str, Any]): Command arguments as given.
        cfg (Optional[RunConfig]): Resolved run configuration.
        **extra: Further metadata such as the vocabulary path and size.

    Returns:
        Path: The sidecar path.
    """
    record = {
        "command": command,
        "args": args,
        "config": cfg.to_dict() if cfg is not None else None,
        "prng": PRNG_ALGORITHM,
        "versions": _versions(),
        **extra,
    }
    path = sidecar_path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(record, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    logging.debug(f"Wrote run sidecar {path}")
    return path


def read_sidecar(out: str) -> Dict[str, Any]:
    """Sidecar of an earlier output; empty when there is none."""
    path = sidecar_path(out)
    if not path.is_file():
        return {}
    return json.loads(path.read_text(encoding="utf-8"))


def vocab_from_sidecar(in_path: str, vocab: Optional[str]) -> Optional[str]:
    """The explicit vocabulary path, else the one recorded by the command that wrote ``in_path``."""
    return vocab or read_sidecar(in_path).get("vocab")
