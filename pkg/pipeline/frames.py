"""Curve resampling, moving-frame construction and battery-level splits."""

import logging
import math
from typing import Optional, Sequence

import numpy as np

from ddn import config as settings
from ddn.guardrails import ConfigError, DataError
from ddn.model import DdnConfig, FrameBatch
from pipeline.profiles import NormProfile, count_out_of_band, normalize_capacity, normalize_voltage
from pipeline.schema import BatteryHistory, CycleRecord, MovingFrame

logger = logging.getLogger(__name__)

# Normalized targets outside this band usually mean the wrong profile.
TARGET_BAND = (-0.5, 1.5)


def resample_linear(curve, window_seconds: float, n_points: int) -> np.ndarray:
    """Sample *curve* at ``n_points`` evenly spaced times in ``[0, window_seconds]``.

    Times are shifted so the curve starts at 0. A curve that ends before the
    window holds its last value to the window end.
    """
    if n_points < 2:
        raise ConfigError(f"n_points must be >= 2, got {n_points}")
    curve = np.asarray(curve, dtype=np.float64)
    if curve.ndim != 2 or curve.shape[0] < 2 or curve.shape[1] != 2:
        raise DataError(f"curve needs at least 2 (time, value) samples, got shape {curve.shape}")
    times = curve[:, 0] - curve[0, 0]
    grid = np.linspace(0.0, window_seconds, n_points)
    if times[-1] < window_seconds:
        logger.debug("curve ends at %.3fs, holding last value to %.3fs", times[-1], window_seconds)
    return np.interp(grid, times, curve[:, 1])


def _capacity_value(capacity: float, reference_capacity: float, soh: bool) -> float:
    return capacity / reference_capacity if soh else capacity


def cycle_features(
    cycle: CycleRecord,
    ddn_config: DdnConfig,
    profile: NormProfile,
    reference_capacity: float,
    soh: bool = False,
) -> tuple[np.ndarray, ...]:
    """Normalized feature vectors of one cycle, in feature-index order.

    Feature 0 is the historical capacity (or SOH), 1 the resampled charge
    voltage and 2 the resampled discharge voltage; a config with fewer
    features takes a prefix of that list.
    """
    if not 1 <= ddn_config.num_features <= 3:
        raise ConfigError(f"between 1 and 3 features are supported, got {ddn_config.num_features}")
    if ddn_config.feature_lengths[0] != 1:
        raise ConfigError("the historical-capacity feature must have length 1")

    q = _capacity_value(cycle.discharge_capacity, reference_capacity, soh)
    features = [np.array([normalize_capacity(profile, q)], dtype=np.float64)]
    curves = (("charge", cycle.charge_curve), ("discharge", cycle.discharge_curve))
    for j, (phase, curve) in enumerate(curves[: ddn_config.num_features - 1], start=1):
        resampled = resample_linear(curve, profile.window_seconds, ddn_config.feature_lengths[j])
        features.append(normalize_voltage(profile, resampled, phase))
    return tuple(features)


def first_frame_start(ddn_config: DdnConfig) -> int:
    return 1 if ddn_config.exclude_reference_from_history else 0


def build_frames(
    history: BatteryHistory,
    ddn_config: DdnConfig,
    profile: NormProfile,
    soh: Optional[bool] = None,
) -> list[MovingFrame]:
    """Turn one battery into moving frames.

    Frame t holds cycles t .. t+N-1 and predicts cycle t+N; cycle 0 is the
    reference of every frame. With ``soh`` the capacity feature and target
    are ``Q_t / Q_0``.
    """
    soh = profile.soh if soh is None else soh
    N = ddn_config.history_n
    C = len(history.cycles)
    start = first_frame_start(ddn_config)
    if C < N + 1 + start:
        raise DataError(
            f"{history.battery_id}: {C} cycles is too few for a history of {N} "
            f"(need at least {N + 1 + start})"
        )

    q0 = history.cycles[0].discharge_capacity
    per_cycle = [cycle_features(c, ddn_config, profile, q0, soh) for c in history.cycles]

    out_of_band = sum(count_out_of_band(f) for feats in per_cycle for f in feats[1:])
    if out_of_band:
        logger.warning(
            "%s: %d normalized voltage samples outside [0, 1.05] with profile '%s'",
            history.battery_id, out_of_band, profile.name,
        )

    frames = []
    lo, hi = TARGET_BAND
    for t in range(start, C - N):
        target = float(per_cycle[t + N][0][0])
        if not lo <= target <= hi:
            logger.warning(
                "%s: normalized target %.4f at cycle %d is outside [%s, %s]",
                history.battery_id, target, t + N, lo, hi,
            )
        frames.append(MovingFrame(
            battery_id=history.battery_id,
            t=t,
            reference=per_cycle[0],
            history=tuple(
                np.stack([per_cycle[t + n][j] for n in range(N)])
                for j in range(ddn_config.num_features)
            ),
            target=target,
        ))
    return frames


def build_fleet_frames(
    fleet: Sequence[BatteryHistory],
    ddn_config: DdnConfig,
    profile: NormProfile,
    soh: Optional[bool] = None,
) -> list[MovingFrame]:
    frames: list[MovingFrame] = []
    for history in fleet:
        frames.extend(build_frames(history, ddn_config, profile, soh))
    return frames


def stack_frames(frames: Sequence[MovingFrame]) -> FrameBatch:
    """Stack frames into the arrays consumed by ``ddn.model.forward_batch``."""
    if not frames:
        raise DataError("no frames to stack")
    J = len(frames[0].reference)
    return FrameBatch(
        reference=tuple(np.stack([f.reference[j] for f in frames]) for j in range(J)),
        history=tuple(np.stack([f.history[j] for f in frames]) for j in range(J)),
        targets=np.array([f.target for f in frames], dtype=np.float64),
    )


# ── Fleet splits ──────────────────────────────────────────────────────────────


def split_fleet(
    fleet: Sequence[BatteryHistory],
    ratios: Sequence[float] = settings.SPLIT_RATIOS,
    seed: int = settings.DEFAULT_SEED,
) -> tuple[list[BatteryHistory], list[BatteryHistory], list[BatteryHistory]]:
    """Shuffle battery indices and cut contiguous train/val/test slices.

    Sizes are floor(r_train * B), floor(r_val * B) and the remainder.
    """
    if len(ratios) != 3 or any(r < 0 for r in ratios) or not math.isclose(sum(ratios), 1.0, abs_tol=1e-9):
        raise ConfigError(f"split ratios must be three non-negative numbers summing to 1, got {tuple(ratios)}")
    B = len(fleet)
    if B == 0:
        raise DataError("cannot split an empty fleet")
    if B < 3 and all(r > 0 for r in ratios):
        raise DataError(f"a fleet of {B} batteries cannot be split three ways")

    order = np.random.default_rng(seed).permutation(B)
    n_train = math.floor(ratios[0] * B + 1e-9)
    n_val = math.floor(ratios[1] * B + 1e-9)
    shuffled = [fleet[i] for i in order]
    return shuffled[:n_train], shuffled[n_train:n_train + n_val], shuffled[n_train + n_val:]


def split_by_ids(
    fleet: Sequence[BatteryHistory],
    train_ids: Sequence[str],
    val_ids: Sequence[str] = (),
    test_ids: Sequence[str] = (),
) -> tuple[list[BatteryHistory], list[BatteryHistory], list[BatteryHistory]]:
    """Split by explicit battery id lists, for fixed train/test assignments."""
    by_id = {b.battery_id: b for b in fleet}
    seen: set[str] = set()
    groups = []
    for label, ids in (("train", train_ids), ("val", val_ids), ("test", test_ids)):
        group = []
        for battery_id in ids:
            if battery_id not in by_id:
                raise DataError(f"{label} battery '{battery_id}' is not in the fleet")
            if battery_id in seen:
                raise DataError(f"battery '{battery_id}' is assigned to more than one split")
            seen.add(battery_id)
            group.append(by_id[battery_id])
        groups.append(group)
    return groups[0], groups[1], groups[2]
