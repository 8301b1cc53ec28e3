"""Run directories: config snapshot, metrics log, checkpoints and resume."""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Any

from latentsft import get_logger
from latentsft.transformer.checkpoint import load_checkpoint, save_checkpoint
from latentsft.utils.logging import attach_logfile, detach_logfile

if TYPE_CHECKING:
    from latentsft.models.config import Settings
    from latentsft.training.optimizer import OptimizerState
    from latentsft.transformer.params import ModelParams

log = get_logger(__name__)

METRICS_FILE = "metrics.csv"
LOG_FILE = "run.log"
CHECKPOINTS = "checkpoints"
FINAL = "final"
METRIC_FIELDS: tuple[str, ...] = (
    "step",
    "phase",
    "loss",
    "kl",
    "ce",
    "grad_norm",
    "lr",
    "skipped",
)
_STEP_DIR = re.compile(r"^step-(\d+)$")


@dataclass(frozen=True)
class Resume:
    """State recovered from the newest periodic checkpoint."""

    step: int
    groups: dict[str, ModelParams]
    metadata: dict[str, Any]


class RunDirectory:
    """Filesystem layout of one training run.

    Args:
        path (Path): Run directory, created if missing.
        stage (str): Stage name, used in log lines.
    """

    def __init__(self, path: Path, stage: str) -> None:
        self.path = path
        self.stage = stage
        self.path.mkdir(parents=True, exist_ok=True)
        self._attached = False

    @property
    def metrics_path(self) -> Path:
        """``metrics.csv``."""
        return self.path / METRICS_FILE

    @property
    def checkpoints(self) -> Path:
        """Directory of periodic checkpoints."""
        return self.path / CHECKPOINTS

    def start(self, settings: Settings) -> None:
        """Write ``config.json`` and attach ``run.log``."""
        settings.snapshot(self.path)
        attach_logfile(self.path / LOG_FILE)
        self._attached = True
        log.info("Run %s started in %s", self.stage, self.path)

    def close(self) -> None:
        """Detach ``run.log``."""
        if self._attached:
            detach_logfile()
            self._attached = False

    def __enter__(self) -> RunDirectory:
        return self

    def __exit__(self, *_: object) -> None:
        self.close()

    # ------------------------------------------------------------------ #
    # Metrics
    # ------------------------------------------------------------------ #
    def log_metrics(self, row: dict[str, Any]) -> None:
        """Append one row to ``metrics.csv``."""
        new = not self.metrics_path.exists()
        with self.metrics_path.open("a", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(f, fieldnames=METRIC_FIELDS, extrasaction="ignore")
            if new:
                writer.writeheader()
            writer.writerow({key: _format(row.get(key, "")) for key in METRIC_FIELDS})

    def read_metrics(self) -> list[dict[str, str]]:
        """Rows of ``metrics.csv``; empty when nothing was logged."""
        if not self.metrics_path.exists():
            return []
        with self.metrics_path.open(newline="", encoding="utf-8") as f:
            return list(csv.DictReader(f))

    def truncate_metrics(self, step: int) -> None:
        """Drop rows after ``step`` so a resumed run rewrites them."""
        rows = [row for row in self.read_metrics() if int(row["step"]) <= step]
        self.metrics_path.unlink(missing_ok=True)
        for row in rows:
            self.log_metrics(row)

    # ------------------------------------------------------------------ #
    # Checkpoints
    # ------------------------------------------------------------------ #
    def save(
        self,
        tag: str,
        groups: dict[str, ModelParams],
        seed: int,
        step: int,
        state: OptimizerState | None = None,
        metadata: dict[str, Any] | None = None,
    ) -> Path:
        """Write every parameter group under ``checkpoints/<tag>/<group>``.

        The ``final`` tag writes to ``final/<group>`` instead.
        """
        root = self.path / FINAL if tag == FINAL else self.checkpoints / tag
        for group, params in groups.items():
            prefix = f"{group}."
            extra = {}
            meta: dict[str, Any] = {"stage": self.stage, "step": step, **(metadata or {})}
            if state is not None:
                extra = {
                    key.replace(prefix, "", 1): value
                    for key, value in state.arrays(prefix).items()
                }
                opt = state.metadata(prefix)
                opt["counts"] = {k.removeprefix(prefix): v for k, v in opt["counts"].items()}
                meta["optimizer"] = opt
            save_checkpoint(root / group, params, seed, meta, extra)
        log.debug("Saved %s checkpoint at step %d", tag, step)
        return root

    def latest(self) -> Path | None:
        """Newest ``checkpoints/step-N`` directory."""
        if not self.checkpoints.exists():
            return None
        found = [
            (int(match.group(1)), child)
            for child in self.checkpoints.iterdir()
            if (match := _STEP_DIR.match(child.name))
        ]
        return max(found)[1] if found else None

    def resume(self, groups: list[str], state: OptimizerState) -> Resume | None:
        """Load the newest checkpoint into fresh parameters and ``state``.

        Returns:
            Resume | None: None when the run has no periodic checkpoint.
        """
        latest = self.latest()
        if latest is None:
            return None
        loaded: dict[str, ModelParams] = {}
        metadata: dict[str, Any] = {}
        for group in groups:
            checkpoint = load_checkpoint(latest / group)
            loaded[group] = checkpoint.params()
            metadata = checkpoint.metadata
            prefix = f"{group}."
            opt = checkpoint.metadata.get("optimizer")
            if opt is not None:
                state.restore(
                    {
                        key.replace("adam.m.", f"adam.m.{prefix}", 1).replace(
                            "adam.v.", f"adam.v.{prefix}", 1
                        ): value
                        for key, value in checkpoint.extra.items()
                    },
                    {
                        "counts": {f"{prefix}{k}": v for k, v in opt["counts"].items()},
                        "anomalies": opt.get("anomalies", 0),
                    },
                )
        step = int(metadata["step"])
        self.truncate_metrics(step)
        log.info("Resuming %s from %s (step %d)", self.stage, latest, step)
        return Resume(step=step, groups=loaded, metadata=metadata)

    def checkpoint_tag(self, step: int) -> str:
        """Directory name of the periodic checkpoint at ``step``."""
        return f"step-{step:06d}"


def _format(value: Any) -> Any:
    if isinstance(value, float):
        return f"{value:.8g}"
    return value
