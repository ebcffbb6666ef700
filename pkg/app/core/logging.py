"""Logging setup from the `logging` section of the configuration."""

import logging
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Optional

from rich.console import Console
from rich.logging import RichHandler

from .config import LoggingConfig

_HANDLER_TAG = "_fusionkit_handler"


def setup_logging(config: Optional[LoggingConfig] = None, console: Optional[Console] = None) -> logging.Logger:
    """Install a rich stderr handler, plus a rotating file handler when `file` is set.

    Calling it again replaces the handlers installed by a previous call.
    """
    config = config or LoggingConfig()
    root = logging.getLogger()
    for handler in [h for h in root.handlers if getattr(h, _HANDLER_TAG, False)]:
        root.removeHandler(handler)
        handler.close()

    rich_handler = RichHandler(console=console or Console(stderr=True), show_path=False, rich_tracebacks=True)
    rich_handler.setFormatter(logging.Formatter(config.format))
    setattr(rich_handler, _HANDLER_TAG, True)
    root.addHandler(rich_handler)

    if config.file:
        Path(config.file).parent.mkdir(parents=True, exist_ok=True)
        file_handler = RotatingFileHandler(config.file, maxBytes=config.max_size, backupCount=config.backup_count)
        file_handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s " + config.format))
        setattr(file_handler, _HANDLER_TAG, True)
        root.addHandler(file_handler)

    root.setLevel(config.level)
    return logging.getLogger("fusionkit")
