"""Named voltage/capacity normalization profiles.

The built-in profiles carry the constants published for the NASA PCoE
(two variants), MIT-Stanford and Oxford datasets; ``custom`` profiles are
loaded from a JSON file with the same fields as ``NormProfile.to_dict``.
"""

import json
import logging
import os
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from ddn.guardrails import ConfigError
from pipeline.schema import PHASES

logger = logging.getLogger(__name__)

# Normalized voltages from in-range data should stay inside this band.
VOLTAGE_BAND = (0.0, 1.05)


@dataclass(frozen=True)
class VoltageRule:
    """v -> (v - offset) / scale, or (offset - v) / scale when inverted."""

    offset: float
    scale: float
    inverted: bool = False

    def __post_init__(self) -> None:
        if self.scale == 0:
            raise ConfigError("voltage rule scale must be non-zero")

    def apply(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        if self.inverted:
            return (self.offset - v) / self.scale
        return (v - self.offset) / self.scale

    def to_dict(self) -> dict:
        return {"offset": self.offset, "scale": self.scale, "inverted": self.inverted}


@dataclass(frozen=True)
class NormProfile:
    name: str
    charge_rule: VoltageRule
    discharge_rule: VoltageRule
    capacity_min: Optional[float] = None
    capacity_max: Optional[float] = None
    window_seconds: float = 1500.0
    history_n: int = 3
    soh: bool = False

    def __post_init__(self) -> None:
        if (self.capacity_min is None) != (self.capacity_max is None):
            raise ConfigError(f"profile '{self.name}': capacity min and max must be given together")
        if self.capacity_min is not None and not self.capacity_min < self.capacity_max:
            raise ConfigError(
                f"profile '{self.name}': capacity min {self.capacity_min} must be below max {self.capacity_max}"
            )
        if self.window_seconds <= 0:
            raise ConfigError(f"profile '{self.name}': window_seconds must be positive")
        if self.history_n < 1:
            raise ConfigError(f"profile '{self.name}': history_n must be >= 1")

    @property
    def has_capacity_scaling(self) -> bool:
        return self.capacity_min is not None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "charge_rule": self.charge_rule.to_dict(),
            "discharge_rule": self.discharge_rule.to_dict(),
            "capacity_min": self.capacity_min,
            "capacity_max": self.capacity_max,
            "window_seconds": self.window_seconds,
            "history_n": self.history_n,
            "soh": self.soh,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NormProfile":
        try:
            return cls(
                name=str(data["name"]),
                charge_rule=VoltageRule(**data["charge_rule"]),
                discharge_rule=VoltageRule(**data["discharge_rule"]),
                capacity_min=data.get("capacity_min"),
                capacity_max=data.get("capacity_max"),
                window_seconds=float(data.get("window_seconds", 1500.0)),
                history_n=int(data.get("history_n", 3)),
                soh=bool(data.get("soh", False)),
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"invalid profile definition: {exc}") from exc


# ── Built-in profiles ─────────────────────────────────────────────────────────

_NASA_CHARGE = VoltageRule(offset=0.0, scale=4.2)
_NASA_DISCHARGE = VoltageRule(offset=4.2, scale=4.2, inverted=True)
_OXFORD_RULE = VoltageRule(offset=2.7, scale=1.5)

BUILTIN_PROFILES: dict[str, NormProfile] = {
    "nasa1": NormProfile("nasa1", _NASA_CHARGE, _NASA_DISCHARGE, 1.1, 2.1, window_seconds=1500.0),
    # Temperature-varying NASA cells: no capacity min-max scaling.
    "nasa2": NormProfile("nasa2", _NASA_CHARGE, _NASA_DISCHARGE, None, None, window_seconds=1500.0),
    "mit": NormProfile(
        "mit",
        VoltageRule(offset=3.6, scale=3.6, inverted=True),
        VoltageRule(offset=3.2, scale=3.2, inverted=True),
        0.8, 1.1,
        window_seconds=360.0,
        history_n=30,
    ),
    "oxford": NormProfile("oxford", _OXFORD_RULE, _OXFORD_RULE, 0.75, 1.0, window_seconds=1500.0, soh=True),
}

PROFILE_NAMES = (*BUILTIN_PROFILES, "custom")


def load_profile_file(path: str) -> NormProfile:
    """Load a custom profile from JSON."""
    if not os.path.isfile(path):
        raise ConfigError(f"profile file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"profile file {path} is not valid JSON: {exc}") from exc
    data.setdefault("name", "custom")
    return NormProfile.from_dict(data)


def get_profile(name: str, path: Optional[str] = None) -> NormProfile:
    """Resolve a profile by name; ``custom`` requires *path*."""
    key = name.strip().lower()
    if key == "custom":
        if not path:
            raise ConfigError("profile 'custom' requires a profile file")
        return load_profile_file(path)
    if key not in BUILTIN_PROFILES:
        raise ConfigError(f"Unknown profile '{name}'. Must be one of: {', '.join(PROFILE_NAMES)}")
    return BUILTIN_PROFILES[key]


def _resolve(profile: Union[NormProfile, str]) -> NormProfile:
    return get_profile(profile) if isinstance(profile, str) else profile


# ── Normalization ─────────────────────────────────────────────────────────────


def normalize_voltage(profile: Union[NormProfile, str], v, phase: str) -> np.ndarray:
    """Apply the profile's charge or discharge voltage rule."""
    profile = _resolve(profile)
    if phase not in PHASES:
        raise ConfigError(f"phase must be one of {PHASES}, got '{phase}'")
    rule = profile.charge_rule if phase == "charge" else profile.discharge_rule
    return rule.apply(v)


def count_out_of_band(values: np.ndarray) -> int:
    lo, hi = VOLTAGE_BAND
    return int(np.count_nonzero((values < lo) | (values > hi)))


def normalize_capacity(profile: Union[NormProfile, str], q):
    """(q - min) / (max - min); identity for profiles without scaling."""
    profile = _resolve(profile)
    if not profile.has_capacity_scaling:
        return q
    return (q - profile.capacity_min) / (profile.capacity_max - profile.capacity_min)


def denormalize_capacity(profile: Union[NormProfile, str], q):
    """Inverse of ``normalize_capacity``."""
    profile = _resolve(profile)
    if not profile.has_capacity_scaling:
        return q
    return q * (profile.capacity_max - profile.capacity_min) + profile.capacity_min
