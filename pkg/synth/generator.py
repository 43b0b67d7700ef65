"""Physics-inspired synthetic battery fleets.

Each cycle's terminal voltage is an affine open-circuit voltage shifted by
the ohmic drop of a resistance that grows with cycling: the discharge curve
sits at ``OCV - I*R(c)`` and the charge curve at ``OCV + I*R(c)``. Capacity
fades as ``Q(c) = Q0 * (1 - a*c - b*c**p)``; a path-dependent battery
switches to a faster linear fade rate at ``fade_change_cycle``.
"""

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from typing import Optional, Sequence

import numpy as np

from ddn import config as settings
from ddn.guardrails import ConfigError, DataError
from pipeline.ingest import write_battery_csv
from pipeline.schema import BatteryHistory, CycleRecord

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SynthSpec:
    q0: float = 1.1
    fade_rate: float = 0.0018
    knee_coeff: float = 1.0e-5
    knee_power: float = 2.0
    r0: float = 0.02
    resistance_growth: float = 0.004
    current: float = 1.0
    v_full: float = 3.2
    v_empty: float = 2.0
    samples: int = 120
    noise: float = 0.002
    cycles: int = 80
    seed: int = 0
    curve_seconds: float = 360.0
    fade_change_cycle: Optional[int] = None
    late_fade_rate: Optional[float] = None
    temperature: str = "25C"

    def __post_init__(self) -> None:
        if self.q0 <= 0:
            raise ConfigError(f"q0 must be positive, got {self.q0}")
        if self.fade_rate < 0 or self.knee_coeff < 0:
            raise ConfigError("fade_rate and knee_coeff must be >= 0")
        if self.knee_power < 1:
            raise ConfigError(f"knee_power must be >= 1, got {self.knee_power}")
        if self.r0 <= 0:
            raise ConfigError(f"r0 must be positive, got {self.r0}")
        if self.current <= 0:
            raise ConfigError(f"current must be positive, got {self.current}")
        if not self.v_full > self.v_empty:
            raise ConfigError(f"v_full ({self.v_full}) must exceed v_empty ({self.v_empty})")
        if self.samples < 2:
            raise ConfigError(f"samples must be >= 2, got {self.samples}")
        if self.noise < 0:
            raise ConfigError(f"noise must be >= 0, got {self.noise}")
        if self.cycles < 1:
            raise ConfigError(f"cycles must be >= 1, got {self.cycles}")
        if self.curve_seconds <= 0:
            raise ConfigError(f"curve_seconds must be positive, got {self.curve_seconds}")
        if (self.fade_change_cycle is None) != (self.late_fade_rate is None):
            raise ConfigError("fade_change_cycle and late_fade_rate must be given together")
        if self.late_fade_rate is not None and self.late_fade_rate < 0:
            raise ConfigError("late_fade_rate must be >= 0")

        last = np.arange(self.cycles, dtype=np.float64)
        if np.any(1.0 + self.resistance_growth * last <= 0):
            raise ConfigError("resistance R0*(1 + growth*c) must stay positive")
        if np.any(capacity_curve(self) <= 0):
            raise ConfigError(f"capacity fades to zero before cycle {self.cycles}")

    @property
    def path_dependent(self) -> bool:
        return self.fade_change_cycle is not None

    def to_dict(self) -> dict:
        return asdict(self)


def capacity_curve(spec: SynthSpec) -> np.ndarray:
    """Q(c) for c = 0 .. cycles-1."""
    c = np.arange(spec.cycles, dtype=np.float64)
    if spec.path_dependent:
        early = np.minimum(c, spec.fade_change_cycle)
        late = np.maximum(c - spec.fade_change_cycle, 0.0)
        linear = spec.fade_rate * early + spec.late_fade_rate * late
    else:
        linear = spec.fade_rate * c
    return spec.q0 * (1.0 - linear - spec.knee_coeff * c ** spec.knee_power)


def resistance_curve(spec: SynthSpec) -> np.ndarray:
    return spec.r0 * (1.0 + spec.resistance_growth * np.arange(spec.cycles, dtype=np.float64))


def _ocv(spec: SynthSpec, soc: np.ndarray) -> np.ndarray:
    return spec.v_empty + soc * (spec.v_full - spec.v_empty)


def synth_battery(spec: SynthSpec, battery_id: str = "synth_000") -> BatteryHistory:
    """Generate one battery; the result depends only on *spec*."""
    rng = np.random.default_rng(spec.seed)
    t = np.linspace(0.0, spec.curve_seconds, spec.samples)
    soc = t / spec.curve_seconds
    ocv_charge = _ocv(spec, soc)
    ocv_discharge = _ocv(spec, 1.0 - soc)

    capacities = capacity_curve(spec)
    resistances = resistance_curve(spec)
    cycles = []
    for c in range(spec.cycles):
        drop = spec.current * resistances[c]
        noise_c = rng.normal(0.0, spec.noise, spec.samples) if spec.noise > 0 else 0.0
        noise_d = rng.normal(0.0, spec.noise, spec.samples) if spec.noise > 0 else 0.0
        cycles.append(CycleRecord(
            cycle_index=c,
            charge_curve=np.column_stack([t, ocv_charge + drop + noise_c]),
            discharge_curve=np.column_stack([t, ocv_discharge - drop + noise_d]),
            discharge_capacity=float(capacities[c]),
        ))
    metadata = {
        "temperature": spec.temperature,
        "profile": "synthetic-path-dependent" if spec.path_dependent else "synthetic",
    }
    return BatteryHistory(battery_id=battery_id, cycles=cycles, metadata=metadata)


# ── Fleets ────────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class SpecSampler:
    """Uniform ranges for the per-battery parameters of a fleet.

    The defaults put end-of-life capacity near 0.8 * Q0 after 80 cycles.
    """

    q0: tuple[float, float] = (1.1, 1.1)
    fade_rate: tuple[float, float] = (0.0014, 0.0022)
    knee_coeff: tuple[float, float] = (0.5e-5, 1.5e-5)
    r0: tuple[float, float] = (0.015, 0.025)
    resistance_growth: tuple[float, float] = (0.002, 0.006)
    knee_power: float = 2.0
    current: float = 1.0
    v_full: float = 3.2
    v_empty: float = 2.0
    samples: int = 120
    noise: float = 0.002
    cycles: int = 80
    curve_seconds: float = 360.0
    path_dependent: bool = False
    # Path-dependent fleets: fade rate jumps by a factor in this range at a
    # cycle drawn from this fraction of life.
    change_fraction: tuple[float, float] = (0.3, 0.6)
    late_multiplier: tuple[float, float] = (2.0, 3.5)

    @classmethod
    def path_dependent_default(cls, **overrides) -> "SpecSampler":
        base = cls(
            fade_rate=(0.0006, 0.0012),
            knee_coeff=(0.0, 0.5e-5),
            path_dependent=True,
        )
        return replace(base, **overrides)


def _uniform(rng: np.random.Generator, bounds: tuple[float, float]) -> float:
    lo, hi = bounds
    if hi < lo:
        raise ConfigError(f"invalid range {bounds}")
    return float(rng.uniform(lo, hi)) if hi > lo else float(lo)


def sample_specs(n: int, sampler: SpecSampler, seed: int) -> list[SynthSpec]:
    """Draw *n* battery specs; the draw order is fixed so a seed fixes the fleet."""
    if n < 1:
        raise ConfigError(f"fleet size must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    specs = []
    for _ in range(n):
        fade_rate = _uniform(rng, sampler.fade_rate)
        change_cycle = late_rate = None
        if sampler.path_dependent:
            fraction = _uniform(rng, sampler.change_fraction)
            change_cycle = int(round(fraction * (sampler.cycles - 1)))
            late_rate = fade_rate * _uniform(rng, sampler.late_multiplier)
        specs.append(SynthSpec(
            q0=_uniform(rng, sampler.q0),
            fade_rate=fade_rate,
            knee_coeff=_uniform(rng, sampler.knee_coeff),
            knee_power=sampler.knee_power,
            r0=_uniform(rng, sampler.r0),
            resistance_growth=_uniform(rng, sampler.resistance_growth),
            current=sampler.current,
            v_full=sampler.v_full,
            v_empty=sampler.v_empty,
            samples=sampler.samples,
            noise=sampler.noise,
            cycles=sampler.cycles,
            seed=int(rng.integers(0, 2**31 - 1)),
            curve_seconds=sampler.curve_seconds,
            fade_change_cycle=change_cycle,
            late_fade_rate=late_rate,
        ))
    return specs


def battery_ids(n: int) -> list[str]:
    width = max(3, len(str(n - 1)))
    return [f"synth_{i:0{width}d}" for i in range(n)]


def synth_fleet(
    n: int,
    sampler: Optional[SpecSampler] = None,
    seed: int = settings.DEFAULT_SEED,
) -> tuple[list[BatteryHistory], list[SynthSpec]]:
    """Generate *n* batteries (and their specs) reproducibly from *seed*."""
    specs = sample_specs(n, sampler or SpecSampler(), seed)
    ids = battery_ids(n)
    with ThreadPoolExecutor(max_workers=settings.THREADS) as pool:
        fleet = list(pool.map(synth_battery, specs, ids))
    logger.info("generated %d synthetic batteries (seed %d)", n, seed)
    return fleet, specs


def write_fleet(
    fleet: Sequence[BatteryHistory],
    specs: Sequence[SynthSpec],
    data_dir: str,
    force: bool = False,
) -> list[str]:
    """Write one canonical CSV per battery plus ``manifest.json``.

    Raises:
        ConfigError: If *data_dir* already holds battery files and not *force*.
        DataError: If a file cannot be written.
    """
    os.makedirs(data_dir, exist_ok=True)
    existing = [f for f in os.listdir(data_dir) if f.endswith(".csv")]
    if existing and not force:
        raise ConfigError(f"{data_dir} already contains battery files; pass --force to overwrite")
    for name in existing:
        os.remove(os.path.join(data_dir, name))

    written = []
    manifest = {"batteries": {}}
    for history, spec in zip(fleet, specs):
        path = os.path.join(data_dir, f"{history.battery_id}.csv")
        try:
            with open(path, "w", encoding="utf-8", newline="") as f:
                write_battery_csv(history, f)
        except OSError as exc:
            raise DataError(f"cannot write {path}: {exc}") from exc
        manifest["batteries"][history.battery_id] = {"spec": spec.to_dict(), "metadata": history.metadata}
        written.append(path)

    manifest_path = os.path.join(data_dir, settings.MANIFEST_FILE)
    with open(manifest_path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    written.append(manifest_path)
    return written
