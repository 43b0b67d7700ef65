"""Error types, numeric guards and the JSON-lines run logger.

All failure classes live here so that the CLI can map them to exit codes in
one place and the numeric modules stay focused on arithmetic.
"""

import json
import os
from typing import Optional

import numpy as np


# ── Error hierarchy ───────────────────────────────────────────────────────────


class DdnError(Exception):
    """Base class for every error raised by this project."""


class ShapeError(DdnError, ValueError):
    """Raised when two operands have incompatible shapes."""

    def __init__(self, op: str, left: tuple, right: tuple, detail: str = "") -> None:
        self.op = op
        self.left = tuple(left)
        self.right = tuple(right)
        msg = f"{op}: incompatible shapes {self.left} and {self.right}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class DataError(DdnError):
    """Raised for malformed or insufficient battery data."""

    def __init__(self, message: str, row: Optional[int] = None) -> None:
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class ConfigError(DdnError):
    """Raised for unknown profiles, invalid hyper-parameters or bad flags."""


class NumericFailure(DdnError):
    """Raised when a loss or gradient stops being finite."""

    def __init__(self, what: str, epoch: Optional[int] = None, batch: Optional[int] = None) -> None:
        self.epoch = epoch
        self.batch = batch
        where = []
        if epoch is not None:
            where.append(f"epoch {epoch}")
        if batch is not None:
            where.append(f"batch {batch}")
        suffix = f" at {', '.join(where)}" if where else ""
        super().__init__(f"non-finite {what}{suffix}")


# ── Numeric guards ────────────────────────────────────────────────────────────


def ensure_finite(name: str, value, epoch: Optional[int] = None, batch: Optional[int] = None) -> None:
    """Raise NumericFailure if *value* holds any NaN or Inf."""
    if not np.all(np.isfinite(value)):
        raise NumericFailure(name, epoch=epoch, batch=batch)


# ── Training logger ───────────────────────────────────────────────────────────


class TrainingLogger:
    """Append-only JSON-lines logger, one entry per finished epoch."""

    def __init__(self, log_path: str) -> None:
        self._log_path = log_path
        os.makedirs(os.path.dirname(os.path.abspath(log_path)), exist_ok=True)

    @property
    def path(self) -> str:
        return self._log_path

    def reset(self) -> None:
        """Truncate the log so a rerun does not append to a stale file."""
        with open(self._log_path, "w", encoding="utf-8"):
            pass

    def log(
        self,
        epoch: int,
        train_loss: float,
        val_loss: Optional[float],
        seconds: float,
    ) -> None:
        """Write a single epoch entry."""
        entry = {
            "epoch": epoch,
            "train_loss": train_loss,
            "val_loss": val_loss,
            "seconds": seconds,
        }
        with open(self._log_path, "a", encoding="utf-8", newline="\n") as f:
            f.write(json.dumps(entry) + "\n")

    def read(self) -> list[dict]:
        """Parse the log back into a list of entries."""
        if not os.path.exists(self._log_path):
            return []
        with open(self._log_path, "r", encoding="utf-8") as f:
            return [json.loads(line) for line in f if line.strip()]
