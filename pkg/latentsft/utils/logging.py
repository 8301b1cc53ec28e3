# latentsft/utils/logging.py
"""Unified logging configuration for latentsft.

A single named logger (``latentsft``) with a Rich console handler. Training
runs additionally attach a rotating file handler inside their run directory,
so the console stays readable while ``run.log`` keeps the full record.
"""

from __future__ import annotations

import logging
import logging.handlers
import threading
from typing import TYPE_CHECKING

from rich.console import Console
from rich.logging import RichHandler

if TYPE_CHECKING:
    from pathlib import Path

LOGGER_NAME = "latentsft"
_LOCK = threading.Lock()

FORMAT = (
    "%(asctime)s - %(name)s - %(levelname)s - %(funcName)s:%(lineno)d - %(message)s"
)
RICH_FORMAT = "%(message)s"
MAX_LOGFILE_SIZE = 10 * 1024 * 1024  # 10MB
MAX_LOGFILE_COUNT = 5


class LatentLogger:
    """Owns the handlers of the ``latentsft`` logger."""

    def __init__(self) -> None:
        """Constructor."""
        self._logger: logging.Logger | None = None
        self._console = Console(stderr=True)
        self._rich_handler: RichHandler | None = None
        self._file_handler: logging.handlers.RotatingFileHandler | None = None
        self._configured = False

    @property
    def logger(self) -> logging.Logger:
        """Library root logger.

        Returns:
            logging.Logger: logging object.
        """
        if self._logger is None:
            self._logger = logging.getLogger(LOGGER_NAME)
        return self._logger

    def configure(self, loglevel: int | str = logging.INFO) -> None:
        """Configure the console handler.

        Args:
            loglevel (int | str, optional): Logging level. Defaults to logging.INFO.
        """
        with _LOCK:
            if self._configured:
                self._cleanup_handlers()
            if isinstance(loglevel, str):
                loglevel = getattr(logging, loglevel.upper())
            logger = self.logger
            logger.setLevel(loglevel)
            self._rich_handler = RichHandler(
                console=self._console,
                show_path=False,
                show_time=True,
                rich_tracebacks=True,
                tracebacks_show_locals=False,
            )
            self._rich_handler.setLevel(loglevel)
            self._rich_handler.setFormatter(logging.Formatter(RICH_FORMAT))
            logger.addHandler(self._rich_handler)
            logger.propagate = False
            self._configured = True

    def attach_file(self, logfile: Path) -> None:
        """Mirror all records into a rotating log file.

        Replaces a previously attached file handler, so each run directory
        gets its own ``run.log``.

        Args:
            logfile (Path): Destination file; parent directories are created.
        """
        with _LOCK:
            self.detach_file()
            logfile.parent.mkdir(parents=True, exist_ok=True)
            self._file_handler = logging.handlers.RotatingFileHandler(
                filename=logfile,
                maxBytes=MAX_LOGFILE_SIZE,
                backupCount=MAX_LOGFILE_COUNT,
                encoding="utf-8",
            )
            self._file_handler.setLevel(self.logger.level)
            self._file_handler.setFormatter(logging.Formatter(FORMAT))
            self.logger.addHandler(self._file_handler)

    def detach_file(self) -> None:
        """Close and remove the file handler, if any."""
        if self._file_handler is not None:
            self._file_handler.close()
            self.logger.removeHandler(self._file_handler)
            self._file_handler = None

    def _cleanup_handlers(self) -> None:
        """Remove existing handlers to allow reconfiguration."""
        logger = self.logger
        for handler in logger.handlers[:]:
            handler.close()
            logger.removeHandler(handler)
        self._rich_handler = None
        self._file_handler = None

    def set_level(self, level: int | str) -> None:
        """Change the logging level for the logger and all its handlers.

        Args:
            level: New logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL or int)
        """
        if isinstance(level, str):
            level = getattr(logging, level.upper())
        logger = self.logger
        logger.setLevel(level)
        for handler in logger.handlers:
            handler.setLevel(level)

    def get_child_logger(self, name: str) -> logging.Logger:
        """Get a child logger for a specific module.

        Args:
            name: Module name (prefixed with 'latentsft.' when needed)

        Returns:
            Child logger that inherits configuration from parent
        """
        if not name.startswith(LOGGER_NAME):
            name = f"{LOGGER_NAME}.{name}"
        return logging.getLogger(name)


_latent_logger = LatentLogger()


def configure_logging(loglevel: int | str) -> None:
    """Configure library logging. See LatentLogger.configure."""
    _latent_logger.configure(loglevel=loglevel)


def get_logger(name: str | None = None) -> logging.Logger:
    """Get a library logger instance.

    Args:
        name: Optional module name for child logger

    Returns:
        Logger instance
    """
    if name is None:
        return _latent_logger.logger
    return _latent_logger.get_child_logger(name)


def set_log_level(level: int | str) -> None:
    """Set logging level for all library loggers."""
    _latent_logger.set_level(level)


def enable_debug() -> None:
    """Switch every handler to DEBUG."""
    _latent_logger.set_level(logging.DEBUG)


def attach_logfile(logfile: Path) -> None:
    """Write records to ``logfile`` in addition to the console."""
    _latent_logger.attach_file(logfile)


def detach_logfile() -> None:
    """Stop writing to the current log file."""
    _latent_logger.detach_file()
