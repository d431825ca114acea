import os

from termcolor import colored

_quiet = os.getenv("INVDES_QUIET", "").lower() in ("1", "true", "on")


def set_quiet(status: bool) -> None:
    """Silence (or re-enable) console output for this process."""
    global _quiet
    _quiet = status


def _emit(message: str, color: str) -> None:
    if not _quiet:
        print(colored(message, color))


def info(message: str) -> None:
    _emit(message, 'cyan')


def success(message: str) -> None:
    _emit(message, 'green')


def warn(message: str) -> None:
    _emit(f"WARNING: {message}", 'yellow')


def error(message: str) -> None:
    # errors are never silenced
    print(colored(f"ERROR: {message}", 'red'))
