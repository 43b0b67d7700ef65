"""Schema for per-cycle battery telemetry and the frames built from it."""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

PHASES = ("charge", "discharge")


@dataclass
class CycleRecord:
    """One charge/discharge cycle.

    Curves are ``(n, 2)`` arrays of ``(time_s, voltage_v)`` with strictly
    increasing times.
    """

    cycle_index: int
    charge_curve: np.ndarray
    discharge_curve: np.ndarray
    discharge_capacity: float
    impedance: Optional[float] = None


@dataclass
class BatteryHistory:
    battery_id: str
    cycles: list[CycleRecord]
    metadata: dict[str, str] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.cycles)

    @property
    def capacities(self) -> np.ndarray:
        return np.array([c.discharge_capacity for c in self.cycles], dtype=np.float64)


@dataclass
class MovingFrame:
    """Raw features of cycle 0 and of cycles t .. t+N-1, labelled with cycle t+N.

    ``reference[j]`` has shape ``(l_j,)`` and ``history[j]`` has shape ``(N, l_j)``.
    The target is already normalized.
    """

    battery_id: str
    t: int
    reference: tuple[np.ndarray, ...]
    history: tuple[np.ndarray, ...]
    target: float

    @property
    def history_n(self) -> int:
        return int(self.history[0].shape[0])

    @property
    def target_cycle(self) -> int:
        return self.t + self.history_n
