"""
Tagged console logging: every line reads "[TAG] message".
"""

import logging
import sys

_ROOT = "cascadeseg"
_configured = False


def get_logger(tag: str) -> logging.Logger:
    """Return the logger for a subsystem tag such as "TRAIN" or "DATA"."""
    logger = logging.getLogger(f"{_ROOT}.{tag}")
    return logger


class _TagFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        tag = record.name.rsplit(".", 1)[-1]
        prefix = f"[{tag}]"
        if record.levelno >= logging.WARNING:
            prefix += f" {record.levelname}:"
        return f"{prefix} {record.getMessage()}"


def configure_logging(verbose: bool = False) -> None:
    """Install the tagged stderr handler once."""
    global _configured
    root = logging.getLogger(_ROOT)
    root.setLevel(logging.DEBUG if verbose else logging.INFO)
    if _configured:
        return
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(_TagFormatter())
    root.addHandler(handler)
    root.propagate = False
    _configured = True
