# Logging setup shared by the command line entry point.

from __future__ import annotations
import logging
import os
import sys

# Environment variable holding the log level name
LOG_ENV_VAR = "RANOPT_LOG"
DEFAULT_LEVEL = "WARNING"
LOG_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"

_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


def log_level_from_env(environ: dict[str, str] | None = None) -> int:
    """Translate RANOPT_LOG into a logging level, WARNING if unset or unknown."""
    environ = os.environ if environ is None else environ
    name = environ.get(LOG_ENV_VAR, DEFAULT_LEVEL).strip().upper()
    if name not in _LEVELS:
        logging.getLogger(__name__).warning(
            "Unknown %s value %r, using %s", LOG_ENV_VAR, name, DEFAULT_LEVEL
        )
        name = DEFAULT_LEVEL
    return getattr(logging, name)


def configure_logging(level: int | None = None) -> None:
    """Configure the root logger once. Only the CLI calls this."""
    logging.basicConfig(
        stream=sys.stdout,
        level=log_level_from_env() if level is None else level,
        format=LOG_FORMAT,
        force=True,
    )
