"""Report files written by the ``eval``, ``predict``, ``inspect-attention`` and ``size-study`` commands.

``metrics.txt`` holds one ``key=value`` per line with floats in shortest
round-trip form (``none`` for undefined values). CSV tables use the fixed
headers below and are read back with ``read_table``.
"""

import logging
import os
from typing import Mapping, Optional, Sequence

import numpy as np
import pandas as pd

from ddn import config as settings
from ddn.guardrails import DataError, ShapeError
from evaluation.attention import AttentionStudy
from evaluation.metrics import Metrics
from pipeline.profiles import NormProfile, denormalize_capacity
from pipeline.schema import MovingFrame

logger = logging.getLogger(__name__)

PREDICTION_COLUMNS = ["battery_id", "cycle", "actual_ah", "predicted_ah"]
ATTENTION_COLUMNS = ["battery_id", "frame_t", "slot", "alpha"]


# ── Tables ────────────────────────────────────────────────────────────────────


def prediction_table(frames: Sequence[MovingFrame], pred, profile: NormProfile) -> pd.DataFrame:
    """Per-frame actual and predicted values in physical units."""
    pred = np.asarray(pred, dtype=np.float64)
    if pred.shape != (len(frames),):
        raise ShapeError("prediction_table", pred.shape, (len(frames),), "one prediction per frame")
    actual = np.array([f.target for f in frames], dtype=np.float64)
    return pd.DataFrame({
        "battery_id": [f.battery_id for f in frames],
        "cycle": np.array([f.target_cycle for f in frames], dtype=np.int64),
        "actual_ah": denormalize_capacity(profile, actual),
        "predicted_ah": denormalize_capacity(profile, pred),
    }, columns=PREDICTION_COLUMNS)


def attention_table(frames: Sequence[MovingFrame], alpha) -> pd.DataFrame:
    """Long format: one row per (frame, history slot)."""
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.ndim != 2 or alpha.shape[0] != len(frames):
        raise ShapeError("attention_table", alpha.shape, (len(frames),), "one weight row per frame")
    n_slots = alpha.shape[1]
    return pd.DataFrame({
        "battery_id": np.repeat([f.battery_id for f in frames], n_slots),
        "frame_t": np.repeat(np.array([f.t for f in frames], dtype=np.int64), n_slots),
        "slot": np.tile(np.arange(n_slots, dtype=np.int64), len(frames)),
        "alpha": alpha.ravel(),
    }, columns=ATTENTION_COLUMNS)


def study_series(studies: Mapping[str, AttentionStudy]) -> pd.DataFrame:
    parts = []
    for battery_id, study in studies.items():
        series = study.series()
        series.insert(0, "battery_id", battery_id)
        parts.append(series)
    return pd.concat(parts, ignore_index=True)


# ── Text I/O ──────────────────────────────────────────────────────────────────


def _format(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _parse(text: str):
    if text == "none":
        return None
    if text in ("true", "false"):
        return text == "true"
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def write_key_values(path: str, values: Mapping[str, object]) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            for key, value in values.items():
                f.write(f"{key}={_format(value)}\n")
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from exc


def read_key_values(path: str) -> dict:
    """Parse a ``key=value`` file back into typed values."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            lines = [line.rstrip("\n") for line in f if line.strip()]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    out = {}
    for line in lines:
        key, _, value = line.partition("=")
        out[key] = _parse(value)
    return out


def write_table(df: pd.DataFrame, path: str) -> None:
    try:
        df.to_csv(path, index=False, lineterminator="\n", na_rep="")
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from exc


def read_table(path: str) -> pd.DataFrame:
    try:
        return pd.read_csv(path, float_precision="round_trip", dtype={"battery_id": str})
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc


def _summary(studies: Mapping[str, AttentionStudy]) -> dict:
    values = {}
    for battery_id, study in studies.items():
        values[f"{battery_id}.frames"] = len(study.cycles)
        for s in range(study.slots):
            values[f"{battery_id}.slot_{s}.abs_corr"] = study.abs_correlation[s]
            values[f"{battery_id}.slot_{s}.raw_corr"] = study.raw_correlation[s]
    return values


# ── Report ────────────────────────────────────────────────────────────────────


def emit_report(
    out_dir: str,
    metrics: Optional[Metrics] = None,
    studies: Optional[Mapping[str, AttentionStudy]] = None,
    predictions: Optional[pd.DataFrame] = None,
    attention: Optional[pd.DataFrame] = None,
    per_battery: Optional[pd.DataFrame] = None,
    per_cycle: Optional[pd.DataFrame] = None,
    extra: Optional[Mapping[str, object]] = None,
) -> list[str]:
    """Write whichever report parts are given and return their paths.

    Raises:
        DataError: If *out_dir* cannot be created or a file cannot be written.
    """
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create output directory {out_dir}: {exc}") from exc

    written = []
    if metrics is not None:
        path = os.path.join(out_dir, settings.METRICS_FILE)
        write_key_values(path, {**metrics.to_dict(), **(extra or {})})
        written.append(path)
    if predictions is not None:
        path = os.path.join(out_dir, settings.PREDICTIONS_FILE)
        write_table(predictions, path)
        written.append(path)
    if per_battery is not None:
        path = os.path.join(out_dir, settings.PER_BATTERY_FILE)
        write_table(per_battery, path)
        written.append(path)
    if per_cycle is not None:
        path = os.path.join(out_dir, settings.PER_CYCLE_FILE)
        write_table(per_cycle, path)
        written.append(path)
    if attention is not None:
        path = os.path.join(out_dir, settings.ATTENTION_FILE)
        write_table(attention, path)
        written.append(path)
    if studies:
        path = os.path.join(out_dir, settings.ATTENTION_STUDY_FILE)
        write_table(study_series(studies), path)
        written.append(path)
        path = os.path.join(out_dir, settings.ATTENTION_SUMMARY_FILE)
        write_key_values(path, _summary(studies))
        written.append(path)

    for path in written:
        logger.info("wrote %s", path)
    return written
