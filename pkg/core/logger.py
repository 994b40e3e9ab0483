"""
Logging setup.

Everything logs under the ``statbench`` logger to stderr, optionally also to a
rotating log file. Standard output stays free for the CLI summary line.
"""

import logging
import sys
from logging.handlers import RotatingFileHandler

from core.config import get_config

ROOT = "statbench"
LOG_FORMAT = "[%(levelname)s] [%(name)s] %(message)s"
FILE_FORMAT = "%(asctime)s " + LOG_FORMAT


def get_logger(tag: str) -> logging.Logger:
    """Logger for one subsystem, e.g. ``get_logger("em")``."""
    return logging.getLogger(f"{ROOT}.{tag}")


def setup_logging(config=None, stream=None) -> logging.Logger:
    """Install handlers on the ``statbench`` logger from a Config.

    Calling it again replaces the handlers, so tests and repeated CLI
    invocations in one process do not stack duplicate output.
    """
    config = config or get_config()

    root = logging.getLogger(ROOT)
    for handler in list(root.handlers):
        root.removeHandler(handler)
        handler.close()

    level = getattr(logging, str(config.log_level).upper(), logging.INFO)
    root.setLevel(level)
    root.propagate = False

    console = logging.StreamHandler(stream or sys.stderr)
    console.setFormatter(logging.Formatter(LOG_FORMAT))
    root.addHandler(console)

    if config.log_file:
        try:
            file_handler = RotatingFileHandler(
                config.log_file,
                maxBytes=config.log_max_size_mb * 1024 * 1024,
                backupCount=config.log_backup_count,
            )
        except OSError as e:
            root.warning("Failed to open log file %s: %s", config.log_file, e)
        else:
            file_handler.setFormatter(logging.Formatter(FILE_FORMAT))
            root.addHandler(file_handler)

    return root
