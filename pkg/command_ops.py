import argparse
import importlib.util
import inspect
import logging
import os
import re
import typing
from typing import Any, Callable, Dict, List, Literal, Union

from domlm.errors import ConfigInvalid

# Command registry (automatically populated)
command_registry: Dict[str, Callable] = {}

COMMAND_PREFIX = "cli_"
ARG_DOC_RE = re.compile(r"^\s+(\w+)\s*(?:\([^)]*\))?:\s*(.+)$")


def load_commands_from_directory(directory: str):
    """
    Scans a directory and its subdirectories for Python files, imports them, and registers commands.

    Args:
        directory (str): The directory containing command modules.
    """
    if not os.path.isdir(directory):
        logging.error(f"Directory {directory} does not exist!")
        return

    for root, _, files in os.walk(directory):
        for filename in sorted(files):
            if filename.endswith(".py") and not filename.startswith("__"):
                module_name = filename[:-3]
                module_path = os.path.join(root, filename)

                try:
                    spec = importlib.util.spec_from_file_location(module_name, module_path)
                    module = importlib.util.module_from_spec(spec)
                    spec.loader.exec_module(module)

                    # Register only functions that start with "cli_"
                    loaded = []
                    for name, func in inspect.getmembers(module, inspect.isfunction):
                        if name.startswith(COMMAND_PREFIX) and func.__module__ == module.__name__:
                            command_registry[command_name(name)] = func
                            loaded.append(command_name(name))
                    if loaded:
                        logging.debug(f"Loaded commands from {filename}: {loaded}")
                except Exception as e:
                    logging.error(f"Error loading module {module_path}: {e}")
                    raise


def command_name(func_name: str) -> str:
    """``cli_inspect_windows`` -> ``inspect-windows``."""
    return func_name[len(COMMAND_PREFIX):].replace("_", "-")


def option_name(param_name: str) -> str:
    """``node_share`` -> ``--node-share``; a trailing underscore (``in_``) is dropped."""
    return "--" + param_name.rstrip("_").replace("_", "-")


def _arg_help(docstring: str) -> Dict[str, str]:
    helps = {}
    in_args = False
    for line in docstring.splitlines():
        if line.strip() in ("Args:", "Arguments:"):
            in_args = True
            continue
        if in_args:
            if line.strip() and not line.startswith((" ", "\t")):
                break
            match = ARG_DOC_RE.match(line)
            if match:
                helps[match.group(1)] = match.group(2)
    return helps


def _unwrap_optional(hint: Any) -> Any:
    if typing.get_origin(hint) is Union:
        args = [a for a in typing.get_args(hint) if a is not type(None)]
        if len(args) == 1:
            return args[0]
    return hint


def extract_command_metadata() -> List[Dict[str, Any]]:
    """
    Extracts command names, signatures, and docstrings dynamically.

    Returns:
        List[Dict[str, Any]]: One entry per registered command.
    """
    metadata = []
    for name, func in sorted(command_registry.items()):
        try:
            type_hints = {param: str(hint) for param, hint in typing.get_type_hints(func).items()}
        except Exception:
            type_hints = {}
        metadata.append({
            "name": name,
            "signature": str(inspect.signature(func)),
            "docstring": inspect.getdoc(func) or "",
            "type_hints": type_hints,
        })
    return metadata


def add_command_arguments(parser: argparse.ArgumentParser, func: Callable) -> None:
    """
    Derive argparse options from a command's signature and type hints.

    Parameters without a default are required. ``bool`` becomes a flag,
    ``Literal[...]`` becomes a choice, ``Tuple[int, ...]`` takes several values.
    """
    hints = typing.get_type_hints(func)
    helps = _arg_help(inspect.getdoc(func) or "")
    for param_name, param in inspect.signature(func).parameters.items():
        hint = _unwrap_optional(hints.get(param_name, str))
        flag = option_name(param_name)
        kwargs: Dict[str, Any] = {"dest": param_name, "help": helps.get(param_name)}
        required = param.default is inspect.Parameter.empty
        if hint is bool:
            kwargs["action"] = "store_true"
            parser.add_argument(flag, **kwargs)
            continue
        if typing.get_origin(hint) is Literal:
            kwargs["choices"] = list(typing.get_args(hint))
            kwargs["type"] = type(kwargs["choices"][0])
        elif typing.get_origin(hint) in (tuple, list):
            kwargs["nargs"] = "+"
            kwargs["type"] = typing.get_args(hint)[0]
        elif hint in (int, float, str):
            kwargs["type"] = hint
        if required:
            kwargs["required"] = True
        else:
            kwargs["default"] = param.default
        parser.add_argument(flag, **kwargs)


def build_parser(prog: str = "domlm") -> argparse.ArgumentParser:
    """Top-level parser with one subcommand per registered command."""
    parser = argparse.ArgumentParser(prog=prog, description="Structure-aware DOM language model pipeline.")
    subparsers = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, func in sorted(command_registry.items()):
        summary = (inspect.getdoc(func) or "").split("\n", 1)[0]
        sub = subparsers.add_parser(name, help=summary, description=inspect.getdoc(func))
        add_command_arguments(sub, func)
    return parser


def execute_command(command: str, args: Dict[str, Any]) -> Any:
    """
    Execute the specified command with the given arguments.

    Args:
        command (str): Registered command name, e.g. "preprocess".
        args (Dict[str, Any]): Arguments; keys outside the signature are ignored.

    Returns:
        Any: Result of the command.
    """
    if command not in command_registry:
        raise ConfigInvalid(f"Command '{command}' not found in registry")

    func = command_registry[command]
    sig = inspect.signature(func)
    valid_args = {name: args[name] for name in sig.parameters if name in args}

    try:
        logging.info(f"Executing command '{command}' with args: {valid_args}")
        return func(**valid_args)
    except Exception as e:
        logging.error(f"Error executing command '{command}': {e}")
        raise

