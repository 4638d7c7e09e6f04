"""
Logging setup for FoldMark.
Console output goes through rich on stderr so stdout stays reserved for tables.
"""

import logging
from pathlib import Path
from typing import Any, Dict, Optional

from rich.console import Console
from rich.logging import RichHandler

from .config_loader import PROJECT_ROOT, get_config_loader

_HANDLER_TAG = '_foldmark_handler'


def configure_logging(config: Optional[Dict[str, Any]] = None, debug: bool = False,
                      log_file: Optional[str] = None) -> logging.Logger:
    """
    Configure the 'libs' logger hierarchy.

    Args:
        config: Logging section (defaults to the global config's)
        debug: Force DEBUG level
        log_file: Override for paths.log_file

    Returns:
        The configured package logger
    """
    loader = get_config_loader()
    if config is None:
        config = loader.get_logging_config()

    logger = logging.getLogger('libs')
    for handler in list(logger.handlers):
        if getattr(handler, _HANDLER_TAG, False):
            logger.removeHandler(handler)
            handler.close()

    level = logging.DEBUG if debug else getattr(
        logging, str(config.get('level', 'INFO')).upper(), logging.INFO)
    logger.setLevel(level)
    logger.propagate = False

    if config.get('console_logging', True):
        console_handler = RichHandler(console=Console(stderr=True),
                                      show_path=debug, rich_tracebacks=debug)
        console_handler.setLevel(level)
        setattr(console_handler, _HANDLER_TAG, True)
        logger.addHandler(console_handler)

    if config.get('file_logging', False):
        path = Path(log_file or loader.get_log_file())
        if not path.is_absolute():
            path = PROJECT_ROOT / path
        path.parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(path, encoding='utf-8')
        file_handler.setFormatter(logging.Formatter(config.get(
            'format', '%(asctime)s - %(name)s - %(levelname)s - %(message)s')))
        file_handler.setLevel(level)
        setattr(file_handler, _HANDLER_TAG, True)
        logger.addHandler(file_handler)

    return logger
