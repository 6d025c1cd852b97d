"""Logging setup shared by the command line and the scripts."""
import logging
import os
from typing import Optional, Union

LOG_FORMAT = "%(asctime)s %(levelname)-7s %(name)s: %(message)s"

#: Third-party loggers held at WARNING or above whatever the requested level.
QUIET_LOGGERS = ("joblib", "numexpr")


def _resolve_level(level: Optional[Union[str, int]]) -> int:
    if level is None:
        level = os.getenv("LOG_LEVEL", "INFO")
    if isinstance(level, int):
        return level
    resolved = logging.getLevelName(level.strip().upper())
    if not isinstance(resolved, int):
        logging.getLogger(__name__).warning("Unknown log level %r; using INFO", level)
        return logging.INFO
    return resolved


def setup_logging(level: Optional[Union[str, int]] = None, capture_warnings: bool = True) -> int:
    """Configure the root logger for the ``src`` packages and return the level in use.

    Parameters
    ----------
    level : str or int, optional
        Level name or number.  Falls back to ``LOG_LEVEL`` and then ``INFO``;
        an unknown name logs a warning and uses ``INFO``.
    capture_warnings : bool
        Route numpy/scipy ``RuntimeWarning``s into the ``py.warnings`` logger.
    """
    numeric = _resolve_level(level)
    root = logging.getLogger()
    if not root.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        root.addHandler(handler)
    root.setLevel(numeric)
    for name in QUIET_LOGGERS:
        logging.getLogger(name).setLevel(max(numeric, logging.WARNING))
    logging.captureWarnings(capture_warnings)
    return numeric
