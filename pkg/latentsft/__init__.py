"""Latent reasoning in the column space of token embeddings, at desk scale."""

from importlib import metadata
from pathlib import Path

import toml

from .utils.logging import configure_logging, get_logger, set_log_level

# Root path to the project checkout
BASE_PATH: Path = Path(__file__).absolute().parent.parent
LOG_LEVEL: str = "INFO"

configure_logging(loglevel=LOG_LEVEL)
log = get_logger(__name__)
set_log_level(LOG_LEVEL)

__version__: str = "unknown"

try:
    __version__ = metadata.version("latentsft")
except metadata.PackageNotFoundError as error:  # pragma: no cover
    log.debug(error)
    try:
        pyproject = toml.load(BASE_PATH / "pyproject.toml")
        __version__ = str(pyproject.get("project", {}).get("version", "unknown"))
    except FileNotFoundError as missing:
        log.warning(missing)
finally:
    log.debug("latentsft version: %s", __version__)

__all__ = ["__version__", "configure_logging", "get_logger", "set_log_level"]
