"""Test error as a function of the number of training batteries.

Every size retrains from the same seed on a prefix of one fixed battery
order, so smaller training sets are subsets of larger ones, and all sizes
are scored on the same test batteries.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import pandas as pd

from ddn import config as settings
from ddn.guardrails import ConfigError
from ddn.model import DdnConfig
from ddn.trainer import TrainConfig, evaluate, train
from pipeline.frames import build_fleet_frames
from pipeline.profiles import NormProfile
from pipeline.schema import BatteryHistory

logger = logging.getLogger(__name__)

COLUMNS = ["train_size", "test_rmse", "test_mape", "test_r2"]


@dataclass(frozen=True)
class SizeStudyRow:
    train_size: int
    test_rmse: float
    test_mape: float
    test_r2: Optional[float]
    battery_ids: tuple[str, ...]


def validate_sizes(sizes: Sequence[int], available: int) -> list[int]:
    sizes = [int(k) for k in sizes]
    if not sizes:
        raise ConfigError("size study needs at least one training-set size")
    bad = [k for k in sizes if not 1 <= k <= available]
    if bad:
        raise ConfigError(f"training-set sizes {bad} are outside 1..{available} available batteries")
    return sizes


def size_study(
    pool: Sequence[BatteryHistory],
    test: Sequence[BatteryHistory],
    sizes: Sequence[int],
    ddn_config: DdnConfig,
    train_config: TrainConfig,
    profile: NormProfile,
    soh: Optional[bool] = None,
) -> list[SizeStudyRow]:
    """Train on ``pool[:k]`` for each k in *sizes* and score on *test*.

    Early stopping is disabled: every run trains for ``max_epochs``.

    Raises:
        ConfigError: If *sizes* is empty or a size exceeds ``len(pool)``.
        DataError: If the test set is empty.
    """
    sizes = validate_sizes(sizes, len(pool))
    test_frames = build_fleet_frames(test, ddn_config, profile, soh)
    run_config = replace(train_config, early_stopping=False)

    def run(k: int) -> SizeStudyRow:
        subset = pool[:k]
        frames = build_fleet_frames(subset, ddn_config, profile, soh)
        params, _ = train(frames, [], ddn_config, run_config)
        m = evaluate(params, ddn_config, test_frames, profile)
        logger.info("size study: %d batteries -> test RMSE %.6g", k, m.rmse)
        return SizeStudyRow(
            train_size=k,
            test_rmse=m.rmse,
            test_mape=m.mape,
            test_r2=m.r2,
            battery_ids=tuple(b.battery_id for b in subset),
        )

    with ThreadPoolExecutor(max_workers=settings.THREADS) as executor:
        return list(executor.map(run, sizes))


def study_table(rows: Sequence[SizeStudyRow]) -> pd.DataFrame:
    return pd.DataFrame(
        [[r.train_size, r.test_rmse, r.test_mape, r.test_r2] for r in rows],
        columns=COLUMNS,
    )
