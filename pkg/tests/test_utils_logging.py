"""Tests for the logging module."""

from __future__ import annotations

import logging
import logging.handlers
from typing import TYPE_CHECKING

import pytest
from rich.logging import RichHandler

from latentsft.utils.logging import (
    FORMAT,
    LOGGER_NAME,
    MAX_LOGFILE_COUNT,
    MAX_LOGFILE_SIZE,
    LatentLogger,
    get_logger,
)

if TYPE_CHECKING:
    from collections.abc import Generator
    from pathlib import Path


class TestLatentLogger:
    """Test cases for the LatentLogger class."""

    @pytest.fixture
    def latent_logger(self) -> Generator[LatentLogger]:
        """Create a fresh LatentLogger instance for testing."""
        logger = LatentLogger()
        yield logger
        logger._cleanup_handlers()  # noqa: SLF001
        logger._configured = False  # noqa: SLF001

    def test_logger_property_lazy_initialization(self, latent_logger: LatentLogger) -> None:
        """Test that logger property initializes lazily."""
        assert latent_logger._logger is None  # noqa: SLF001
        logger = latent_logger.logger
        assert isinstance(logger, logging.Logger)
        assert logger.name == LOGGER_NAME
        assert latent_logger.logger is logger

    def test_configure_basic_setup(self, latent_logger: LatentLogger) -> None:
        """Test basic configuration with default parameters."""
        latent_logger.configure()
        logger = latent_logger.logger
        assert logger.level == logging.INFO
        assert len(logger.handlers) == 1
        assert isinstance(logger.handlers[0], RichHandler)
        assert not logger.propagate

    def test_reconfigure_replaces_handlers(self, latent_logger: LatentLogger) -> None:
        """Configuring twice does not duplicate handlers."""
        latent_logger.configure("WARNING")
        latent_logger.configure("DEBUG")
        assert latent_logger.logger.level == logging.DEBUG
        assert len(latent_logger.logger.handlers) == 1

    def test_attach_file(self, latent_logger: LatentLogger, tmp_path: Path) -> None:
        """Records are mirrored into a rotating run.log."""
        latent_logger.configure(logging.INFO)
        logfile = tmp_path / "run" / "run.log"
        latent_logger.attach_file(logfile)
        handler = next(
            h
            for h in latent_logger.logger.handlers
            if isinstance(h, logging.handlers.RotatingFileHandler)
        )
        assert handler.maxBytes == MAX_LOGFILE_SIZE
        assert handler.backupCount == MAX_LOGFILE_COUNT
        assert handler.formatter is not None
        assert handler.formatter._fmt == FORMAT  # noqa: SLF001
        latent_logger.logger.info("step 1 loss 0.5")
        latent_logger.detach_file()
        assert "step 1 loss 0.5" in logfile.read_text()
        assert len(latent_logger.logger.handlers) == 1

    def test_attach_replaces_previous_file(
        self, latent_logger: LatentLogger, tmp_path: Path
    ) -> None:
        """Only one file handler is attached at a time."""
        latent_logger.configure()
        latent_logger.attach_file(tmp_path / "a.log")
        latent_logger.attach_file(tmp_path / "b.log")
        files = [
            h
            for h in latent_logger.logger.handlers
            if isinstance(h, logging.handlers.RotatingFileHandler)
        ]
        assert len(files) == 1
        latent_logger.detach_file()

    def test_set_level(self, latent_logger: LatentLogger) -> None:
        """Levels change on the logger and every handler."""
        latent_logger.configure()
        latent_logger.set_level("ERROR")
        assert latent_logger.logger.level == logging.ERROR
        assert all(h.level == logging.ERROR for h in latent_logger.logger.handlers)

    @pytest.mark.parametrize(
        ("name", "expected"),
        [("training", "latentsft.training"), ("latentsft.inference", "latentsft.inference")],
    )
    def test_child_logger(self, latent_logger: LatentLogger, name: str, expected: str) -> None:
        """Child names are prefixed once."""
        assert latent_logger.get_child_logger(name).name == expected


def test_get_logger() -> None:
    """get_logger returns the root or a child."""
    assert get_logger().name == LOGGER_NAME
    assert get_logger("latentsft.pipeline").name == "latentsft.pipeline"
