"""Checkpoint I/O.

A checkpoint is a directory holding ``tensors.bin`` (little-endian floats,
tensors back to back) and ``manifest.json``, which maps every tensor name to
its shape, dtype, byte offset and file and also records the model config,
seed and free-form metadata such as the training step.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any

import numpy as np

from latentsft import get_logger
from latentsft.exceptions.errors import DataFileError, InvalidArgumentError
from latentsft.models.config import ModelConfig
from latentsft.numerics.tensor import Tensor
from latentsft.transformer.params import ModelParams, parameter_shapes

if TYPE_CHECKING:
    from collections.abc import Mapping

    from numpy.typing import NDArray

log = get_logger(__name__)

MANIFEST = "manifest.json"
TENSORS = "tensors.bin"
FORMAT_VERSION = 1
_DTYPES = {"float32": "<f4", "float64": "<f8"}


@dataclass
class Checkpoint:
    """Loaded checkpoint contents."""

    arrays: dict[str, NDArray[Any]]
    config: ModelConfig
    seed: int
    metadata: dict[str, Any] = field(default_factory=dict)
    extra: dict[str, NDArray[Any]] = field(default_factory=dict)

    def params(self, trainable: bool = True) -> ModelParams:
        """Rebuild parameters in their canonical order."""
        tensors = {
            name: Tensor(self.arrays[name].copy(), requires_grad=trainable, name=name)
            for name in parameter_shapes(self.config)
        }
        return ModelParams(self.config, tensors)


def save_checkpoint(
    directory: Path,
    params: ModelParams,
    seed: int,
    metadata: Mapping[str, Any] | None = None,
    extra: Mapping[str, NDArray[Any]] | None = None,
) -> Path:
    """Write parameters plus optional extra arrays (e.g. optimizer moments).

    Args:
        directory (Path): Target directory, created if missing.
        params (ModelParams): Parameters to store.
        seed (int): Seed the run was started with.
        metadata (Mapping[str, Any] | None): JSON-serializable extras.
        extra (Mapping[str, NDArray] | None): Additional named arrays, stored
            under ``extra`` in the manifest.

    Returns:
        Path: The checkpoint directory.
    """
    directory.mkdir(parents=True, exist_ok=True)
    entries: dict[str, dict[str, Any]] = {}
    extras: dict[str, dict[str, Any]] = {}
    offset = 0
    with (directory / TENSORS).open("wb") as f:
        for group, arrays in ((entries, params.arrays()), (extras, extra or {})):
            for name, array in arrays.items():
                dtype = str(np.asarray(array).dtype)
                if dtype not in _DTYPES:
                    raise InvalidArgumentError(name, f"unsupported dtype {dtype}")
                raw = np.ascontiguousarray(array, dtype=_DTYPES[dtype]).tobytes()
                f.write(raw)
                group[name] = {
                    "shape": list(np.shape(array)),
                    "dtype": dtype,
                    "offset": offset,
                    "nbytes": len(raw),
                    "file": TENSORS,
                }
                offset += len(raw)
    manifest = {
        "format": FORMAT_VERSION,
        "seed": seed,
        "config": params.config.model_dump(mode="json"),
        "metadata": dict(metadata or {}),
        "tensors": entries,
        "extra": extras,
    }
    text = json.dumps(manifest, indent=2, sort_keys=True)
    (directory / MANIFEST).write_text(text, encoding="utf-8")
    log.debug("Checkpoint written to %s (%d bytes)", directory, offset)
    return directory


def _read(directory: Path, entry: Mapping[str, Any]) -> NDArray[Any]:
    path = directory / entry["file"]
    with path.open("rb") as f:
        f.seek(entry["offset"])
        raw = f.read(entry["nbytes"])
    if len(raw) != entry["nbytes"]:
        raise DataFileError(path, "is truncated")
    values = np.frombuffer(raw, dtype=_DTYPES[entry["dtype"]]).astype(entry["dtype"])
    return values.reshape(entry["shape"])


def load_checkpoint(directory: Path) -> Checkpoint:
    """Read a checkpoint directory.

    Raises:
        DataFileError: If the manifest or tensor file is missing or short.
    """
    manifest_path = directory / MANIFEST
    if not manifest_path.exists():
        raise DataFileError(manifest_path)
    if not (directory / TENSORS).exists():
        raise DataFileError(directory / TENSORS)
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    arrays = {name: _read(directory, entry) for name, entry in manifest["tensors"].items()}
    extra = {name: _read(directory, entry) for name, entry in manifest.get("extra", {}).items()}
    return Checkpoint(
        arrays=arrays,
        config=ModelConfig.model_validate(manifest["config"]),
        seed=int(manifest["seed"]),
        metadata=manifest.get("metadata", {}),
        extra=extra,
    )


def load_params(directory: Path, trainable: bool = True) -> ModelParams:
    """Shorthand for ``load_checkpoint(directory).params()``."""
    return load_checkpoint(directory).params(trainable)


def checkpoint_hash(directory: Path) -> str:
    """sha256 of the manifest and tensor bytes."""
    digest = hashlib.sha256()
    for name in (MANIFEST, TENSORS):
        path = directory / name
        if not path.exists():
            raise DataFileError(path)
        digest.update(path.read_bytes())
    return digest.hexdigest()
