"""Versioned JSON checkpoint store.

One file holds the model config, the normalization profile it was trained
with, free-form run metadata and every tensor as ``{name, shape, values}``
in row-major order. Python's shortest-repr floats make the round trip exact.
"""

import json
import os
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ddn.guardrails import DataError, ShapeError
from ddn.model import DdnConfig, DdnParams, parameter_shapes

FORMAT_NAME = "ddn-checkpoint"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    config: DdnConfig
    params: DdnParams
    profile: dict
    soh: bool = False
    metadata: dict[str, Any] = field(default_factory=dict)


class CheckpointStore:
    """Reads and writes checkpoints at a fixed path."""

    def __init__(self, path: str) -> None:
        self._path = path

    @property
    def path(self) -> str:
        return self._path

    # ── Internal I/O ──────────────────────────────────────────────────────

    def _read(self) -> dict:
        if not os.path.isfile(self._path):
            raise DataError(f"checkpoint not found: {self._path}")
        try:
            with open(self._path, "r", encoding="utf-8") as f:
                return json.load(f)
        except json.JSONDecodeError as exc:
            raise DataError(f"checkpoint {self._path} is not valid JSON: {exc}") from exc

    def _write(self, data: dict) -> None:
        os.makedirs(os.path.dirname(os.path.abspath(self._path)), exist_ok=True)
        with open(self._path, "w", encoding="utf-8", newline="\n") as f:
            json.dump(data, f, indent=1)
            f.write("\n")

    # ── Public API ────────────────────────────────────────────────────────

    def save(self, checkpoint: Checkpoint) -> None:
        checkpoint.params.validate(checkpoint.config)
        tensors = [
            {
                "name": name,
                "shape": list(array.shape),
                "values": [float(v) for v in array.ravel(order="C")],
            }
            for name, array in checkpoint.params.named().items()
        ]
        self._write({
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "config": checkpoint.config.to_dict(),
            "profile": checkpoint.profile,
            "soh": checkpoint.soh,
            "metadata": checkpoint.metadata,
            "tensors": tensors,
        })

    def load(self) -> Checkpoint:
        """Load and validate the checkpoint.

        Raises:
            DataError: If the file is missing, malformed, of another format
                or version, or its tensors do not match its config.
        """
        data = self._read()
        if data.get("format") != FORMAT_NAME:
            raise DataError(f"{self._path}: not a {FORMAT_NAME} file")
        if data.get("version") != FORMAT_VERSION:
            raise DataError(f"{self._path}: unsupported checkpoint version {data.get('version')}")

        config = DdnConfig.from_dict(data["config"])
        expected = parameter_shapes(config)
        tensors: dict[str, np.ndarray] = {}
        for entry in data["tensors"]:
            name, shape = entry["name"], tuple(entry["shape"])
            if expected.get(name) != shape:
                raise DataError(f"{self._path}: tensor {name} has shape {shape}, expected {expected.get(name)}")
            values = np.array(entry["values"], dtype=np.float64)
            if values.size != int(np.prod(shape)):
                raise DataError(f"{self._path}: tensor {name} holds {values.size} values for shape {shape}")
            tensors[name] = values.reshape(shape)

        try:
            params = DdnParams.from_named(tensors)
            params.validate(config)
        except ShapeError as exc:
            raise DataError(f"{self._path}: {exc}") from exc
        return Checkpoint(
            config=config,
            params=params,
            profile=data.get("profile", {}),
            soh=bool(data.get("soh", False)),
            metadata=data.get("metadata", {}),
        )
