import logging
import os

from rich.console import Console
from rich.logging import RichHandler

ENV_VAR = "KEYHUNT_LOG"
DEFAULT_LEVEL = "WARNING"
LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


def level_from_env(value: str | None = None) -> tuple[str, bool]:
    """(level name, whether the requested name was understood)"""
    value = os.environ.get(ENV_VAR, DEFAULT_LEVEL) if value is None else value
    name = value.strip().upper()
    if name in LEVELS:
        return name, True
    return DEFAULT_LEVEL, False


def configure_logging(level: str | None = None) -> logging.Logger:
    name, understood = level_from_env(level)
    logging.basicConfig(
        level=name,
        format="%(name)s[%(levelname)s]: %(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(rich_tracebacks=True, console=Console(stderr=True))],
        force=True,
    )
    root = logging.getLogger("src")
    if not understood:
        root.warning("%s=%r is not a log level, using %s", ENV_VAR, level or os.environ.get(ENV_VAR), DEFAULT_LEVEL)
    return root
