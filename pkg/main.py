import logging
import os
import sys
from typing import List, Optional

from dotenv import find_dotenv, load_dotenv

from command_ops import build_parser, command_registry, execute_command, load_commands_from_directory
from domlm.errors import DomLMError

COMMANDS_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "commands")

# Load environment variables
load_dotenv(find_dotenv())


def configure_logging() -> None:
    """Console plus file logging; level and file come from DOMLM_LOG_LEVEL and DOMLM_LOG_FILE."""
    logging.basicConfig(
        level=os.getenv("DOMLM_LOG_LEVEL", "INFO").upper(),
        format='%(asctime)s - %(levelname)s - %(message)s',
        handlers=[
            logging.StreamHandler(),  # Print to console
            logging.FileHandler(os.getenv("DOMLM_LOG_FILE", "domlm.log"))  # Save to file
        ]
    )


def run(argv: Optional[List[str]] = None) -> int:
    """
    Parse the command line, execute one command and map failures to exit codes.

    Args:
        argv (Optional[List[str]]): Arguments without the program name; sys.argv by default.

    Returns:
        int: 0 on success, the error's exit code otherwise (2 for usage errors, 1 for unexpected ones).
    """
    if not command_registry:
        load_commands_from_directory(COMMANDS_DIR)
    parser = build_parser()
    try:
        args = vars(parser.parse_args(argv))
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2

    command = args.pop("command")
    try:
        result = execute_command(command, args)
    except DomLMError as e:
        logging.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    except Exception as e:
        logging.exception(f"Unexpected error in '{command}': {e}")
        return 1

    if result is not None:
        print(result)
    return 0


if __name__ == "__main__":
    configure_logging()
    sys.exit(run())
