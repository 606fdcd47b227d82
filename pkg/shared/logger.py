"""Centralized logging setup using Loguru.

This module configures the `loguru` logger with a human-friendly console
format. Reports and CSV artifacts are the program's output, so log records
go to stderr.
"""
import sys

from loguru import logger

LOG_FORMAT = (
    "<green>{time:YYYY-MM-DD HH:mm:ss}</green> | <level>{level: <8}</level> | "
    "<cyan>{name}</cyan>:<cyan>{function}</cyan>:<cyan>{line}</cyan> - <level>{message}</level>"
)


def configure_logging(level: str = "INFO") -> None:
    """(Re)install the console sink at the given level."""
    logger.remove()
    logger.add(sys.stderr, format=LOG_FORMAT, level=level.upper(), colorize=True)


# Replace the default handler at import time
configure_logging("INFO")

__all__ = ["logger", "configure_logging"]
