"""Canonical battery CSV reader/writer.

One file per battery with the header ``cycle,phase,time_s,voltage_v,capacity_ah``
(plus an optional ``impedance_ohm`` column). ``capacity_ah`` is filled on
discharge rows, repeated for every sample of the cycle, and empty on charge
rows. Row numbers in error messages count the header as row 1.
"""

import json
import logging
import os
from typing import Optional, TextIO, Union

import numpy as np
import pandas as pd

from ddn import config
from ddn.guardrails import DataError
from pipeline.schema import PHASES, BatteryHistory, CycleRecord

logger = logging.getLogger(__name__)

COLUMNS = ("cycle", "phase", "time_s", "voltage_v", "capacity_ah")
IMPEDANCE_COLUMN = "impedance_ohm"


def _row(index: int) -> int:
    return int(index) + 2


def _numeric(df: pd.DataFrame, column: str) -> np.ndarray:
    """Column as float64, rejecting empty, non-numeric and infinite cells."""
    values = pd.to_numeric(df[column], errors="coerce").to_numpy(dtype=np.float64)
    bad = ~np.isfinite(values)
    if bad.any():
        idx = int(np.argmax(bad))
        raise DataError(f"column '{column}' has non-numeric value {df[column].iloc[idx]!r}", row=_row(idx))
    return values


def parse_battery_csv(
    stream: Union[str, TextIO],
    battery_id: str = "battery",
    metadata: Optional[dict] = None,
) -> BatteryHistory:
    """Parse and validate one battery file.

    Raises:
        DataError: On missing columns, unknown phases, non-numeric values,
            non-increasing timestamps, non-contiguous cycles, curves with
            fewer than 2 samples or missing/non-positive capacities.
    """
    try:
        df = pd.read_csv(stream, float_precision="round_trip", dtype={"phase": str})
    except pd.errors.EmptyDataError as exc:
        raise DataError(f"{battery_id}: empty battery file") from exc

    missing = [c for c in COLUMNS if c not in df.columns]
    if missing:
        raise DataError(f"{battery_id}: missing columns: {', '.join(missing)}")
    if df.empty:
        raise DataError(f"{battery_id}: no data rows")

    raw_cycles = _numeric(df, "cycle")
    fractional = raw_cycles != np.floor(raw_cycles)
    if fractional.any():
        idx = int(np.argmax(fractional))
        raise DataError(f"cycle index {df['cycle'].iloc[idx]!r} is not an integer", row=_row(idx))
    cycles = raw_cycles.astype(np.int64)
    times = _numeric(df, "time_s")
    volts = _numeric(df, "voltage_v")
    capacity = pd.to_numeric(df["capacity_ah"], errors="coerce").to_numpy(dtype=np.float64)
    impedance = None
    if IMPEDANCE_COLUMN in df.columns:
        impedance = pd.to_numeric(df[IMPEDANCE_COLUMN], errors="coerce").to_numpy(dtype=np.float64)

    phases = df["phase"].fillna("").str.strip().str.lower().to_numpy()
    bad_phase = ~np.isin(phases, PHASES)
    if bad_phase.any():
        idx = int(np.argmax(bad_phase))
        raise DataError(f"unknown phase {df['phase'].iloc[idx]!r}", row=_row(idx))

    unique = np.unique(cycles)
    expected = np.arange(len(unique))
    if not np.array_equal(unique, expected):
        gap = int(expected[np.argmax(unique != expected)])
        first = int(np.argmax(cycles > gap))
        raise DataError(f"{battery_id}: cycles are not contiguous from 0 (cycle {gap} missing)", row=_row(first))

    records: list[CycleRecord] = []
    for c in expected:
        in_cycle = cycles == c
        curves = {}
        for phase in PHASES:
            idx = np.flatnonzero(in_cycle & (phases == phase))
            if len(idx) < 2:
                raise DataError(f"{battery_id}: cycle {c} has {len(idx)} {phase} samples, need at least 2")
            t = times[idx]
            not_increasing = np.diff(t) <= 0
            if not_increasing.any():
                bad = idx[int(np.argmax(not_increasing)) + 1]
                raise DataError(f"time_s does not increase within cycle {c} {phase}", row=_row(bad))
            curves[phase] = np.column_stack([t, volts[idx]])

        d_idx = np.flatnonzero(in_cycle & (phases == "discharge"))
        q = capacity[d_idx]
        if np.isnan(q).any():
            raise DataError("capacity_ah missing on a discharge row", row=_row(d_idx[np.argmax(np.isnan(q))]))
        if np.any(q != q[0]):
            raise DataError(f"capacity_ah changes within cycle {c}", row=_row(d_idx[np.argmax(q != q[0])]))
        if q[0] <= 0:
            raise DataError(f"capacity_ah must be positive, got {q[0]}", row=_row(d_idx[0]))

        imp = None
        if impedance is not None:
            cycle_imp = impedance[in_cycle]
            cycle_imp = cycle_imp[~np.isnan(cycle_imp)]
            imp = float(cycle_imp[0]) if len(cycle_imp) else None

        records.append(CycleRecord(
            cycle_index=int(c),
            charge_curve=curves["charge"],
            discharge_curve=curves["discharge"],
            discharge_capacity=float(q[0]),
            impedance=imp,
        ))

    return BatteryHistory(battery_id=battery_id, cycles=records, metadata=dict(metadata or {}))


def battery_frame(history: BatteryHistory) -> pd.DataFrame:
    """Flatten a battery into canonical CSV rows (charge rows then discharge rows per cycle)."""
    with_impedance = any(c.impedance is not None for c in history.cycles)
    parts = []
    for cycle in history.cycles:
        for phase, curve in (("charge", cycle.charge_curve), ("discharge", cycle.discharge_curve)):
            n = len(curve)
            part = {
                "cycle": np.full(n, cycle.cycle_index, dtype=np.int64),
                "phase": [phase] * n,
                "time_s": curve[:, 0],
                "voltage_v": curve[:, 1],
                "capacity_ah": np.full(n, cycle.discharge_capacity if phase == "discharge" else np.nan),
            }
            if with_impedance:
                part[IMPEDANCE_COLUMN] = np.full(
                    n, np.nan if cycle.impedance is None else cycle.impedance
                )
            parts.append(pd.DataFrame(part))
    return pd.concat(parts, ignore_index=True)


def write_battery_csv(history: BatteryHistory, stream: Union[str, TextIO]) -> None:
    battery_frame(history).to_csv(stream, index=False, lineterminator="\n", na_rep="")


def load_battery(path: str, metadata: Optional[dict] = None) -> BatteryHistory:
    if not os.path.isfile(path):
        raise DataError(f"battery file not found: {path}")
    battery_id = os.path.splitext(os.path.basename(path))[0]
    try:
        return parse_battery_csv(path, battery_id=battery_id, metadata=metadata)
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from exc


def read_manifest(data_dir: str) -> dict:
    path = os.path.join(data_dir, config.MANIFEST_FILE)
    if not os.path.isfile(path):
        return {}
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def load_fleet(data_dir: str) -> list[BatteryHistory]:
    """Load every ``*.csv`` in *data_dir* in sorted file-name order."""
    if not os.path.isdir(data_dir):
        raise DataError(f"data directory not found: {data_dir}")
    names = sorted(f for f in os.listdir(data_dir) if f.endswith(".csv"))
    if not names:
        raise DataError(f"no battery CSV files in {data_dir}")

    batteries_meta = read_manifest(data_dir).get("batteries", {})
    fleet = []
    for name in names:
        battery_id = os.path.splitext(name)[0]
        meta = batteries_meta.get(battery_id, {}).get("metadata", {})
        fleet.append(load_battery(os.path.join(data_dir, name), metadata=meta))
    logger.info("loaded %d batteries from %s", len(fleet), data_dir)
    return fleet
