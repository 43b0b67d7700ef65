"""Relate attention weights to the battery's cycle-to-cycle capacity change."""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from ddn.guardrails import DataError, ShapeError
from ddn.model import AttentionTrace
from evaluation.metrics import pearson
from pipeline.schema import BatteryHistory

MIN_FRAMES = 3


@dataclass
class AttentionStudy:
    """Aligned series for one battery.

    Row k describes the frame that predicts ``cycles[k]``: ``capacity_diff[k]``
    is ``Q[cycles[k]] - Q[cycles[k] - 1]`` and ``weights[k]`` its attention
    weights (slot 0 is the oldest history cycle).
    """

    battery_id: str
    cycles: np.ndarray
    capacity_diff: np.ndarray
    weights: np.ndarray
    abs_correlation: list[Optional[float]]
    raw_correlation: list[Optional[float]]

    @property
    def slots(self) -> int:
        return int(self.weights.shape[1])

    def series(self) -> pd.DataFrame:
        data = {"cycle": self.cycles, "capacity_diff": self.capacity_diff}
        for s in range(self.slots):
            data[f"alpha_{s}"] = self.weights[:, s]
        return pd.DataFrame(data)


def attention_study(traces: Sequence[AttentionTrace], history: BatteryHistory) -> AttentionStudy:
    """Per-slot Pearson correlation between |Q[i+1] - Q[i]| and the attention weights.

    Raises:
        DataError: With fewer than three frames, or traces pointing past the
            end of *history*.
        ShapeError: If traces disagree on the number of slots.
    """
    if len(traces) < MIN_FRAMES:
        raise DataError(f"attention study needs at least {MIN_FRAMES} frames, got {len(traces)}")
    n_slots = len(traces[0].weights)
    if any(len(tr.weights) != n_slots for tr in traces):
        raise ShapeError("attention_study", (n_slots,), tuple(len(tr.weights) for tr in traces), "slot counts differ")

    q = history.capacities
    cycles = np.array([tr.predicted_cycle for tr in traces], dtype=np.int64)
    if cycles.min() < 1 or cycles.max() >= len(q):
        raise DataError(
            f"{history.battery_id}: traces predict cycles {cycles.min()}..{cycles.max()} "
            f"but the history has {len(q)} cycles"
        )
    diffs = q[cycles] - q[cycles - 1]
    weights = np.stack([np.asarray(tr.weights, dtype=np.float64) for tr in traces])

    abs_diffs = np.abs(diffs)
    return AttentionStudy(
        battery_id=history.battery_id,
        cycles=cycles,
        capacity_diff=diffs,
        weights=weights,
        abs_correlation=[pearson(abs_diffs, weights[:, s]) for s in range(n_slots)],
        raw_correlation=[pearson(diffs, weights[:, s]) for s in range(n_slots)],
    )


def traces_from_weights(starts: Sequence[int], alpha: np.ndarray) -> list[AttentionTrace]:
    """Wrap rows of a ``(frames, N)`` weight matrix as traces."""
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.ndim != 2 or alpha.shape[0] != len(starts):
        raise ShapeError("traces_from_weights", alpha.shape, (len(starts),), "one weight row per frame")
    return [AttentionTrace(start=int(t), weights=alpha[k]) for k, t in enumerate(starts)]
