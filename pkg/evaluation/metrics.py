"""Pooled forecasting metrics.

Every metric pools all (battery, cycle) pairs it is given; per-battery
figures come from ``per_battery_metrics`` and are reported separately.
"""

from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from scipy import stats
from sklearn.metrics import mean_absolute_percentage_error, mean_squared_error, r2_score

from ddn.guardrails import DataError, ShapeError


@dataclass(frozen=True)
class Metrics:
    rmse: float
    mape: float
    r2: Optional[float]
    n: int

    def to_dict(self) -> dict:
        return asdict(self)


def _pair(pred, actual) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64).ravel()
    actual = np.asarray(actual, dtype=np.float64).ravel()
    if pred.shape != actual.shape:
        raise ShapeError("metrics", pred.shape, actual.shape, "prediction and actual lengths differ")
    if pred.size == 0:
        raise DataError("cannot compute metrics of an empty set")
    return pred, actual


def rmse(pred, actual) -> float:
    pred, actual = _pair(pred, actual)
    return float(np.sqrt(mean_squared_error(actual, pred)))


def mape(pred, actual) -> float:
    """Mean absolute percentage error, in percent."""
    pred, actual = _pair(pred, actual)
    if np.any(actual == 0):
        raise DataError("MAPE is undefined when an actual value is zero")
    return float(100.0 * mean_absolute_percentage_error(actual, pred))


def r2(pred, actual) -> float:
    pred, actual = _pair(pred, actual)
    if np.all(actual == actual[0]):
        raise DataError("R^2 is undefined when the actual values have zero variance")
    return float(r2_score(actual, pred))


def compute_metrics(pred, actual) -> Metrics:
    """RMSE, MAPE and R^2; R^2 is None when the actuals are constant."""
    pred, actual = _pair(pred, actual)
    try:
        r2_value = r2(pred, actual)
    except DataError:
        r2_value = None
    return Metrics(rmse=rmse(pred, actual), mape=mape(pred, actual), r2=r2_value, n=int(pred.size))


def per_battery_metrics(battery_ids: Sequence[str], pred, actual) -> pd.DataFrame:
    """One row per battery: ``battery_id, n, rmse, mape, r2`` (sorted by id)."""
    pred, actual = _pair(pred, actual)
    if len(battery_ids) != pred.size:
        raise ShapeError("per_battery_metrics", (len(battery_ids),), pred.shape, "one id per prediction")
    df = pd.DataFrame({"battery_id": list(battery_ids), "pred": pred, "actual": actual})
    rows = []
    for battery_id, group in df.groupby("battery_id", sort=True):
        m = compute_metrics(group["pred"].to_numpy(), group["actual"].to_numpy())
        rows.append({"battery_id": battery_id, "n": m.n, "rmse": m.rmse, "mape": m.mape, "r2": m.r2})
    return pd.DataFrame(rows, columns=["battery_id", "n", "rmse", "mape", "r2"])


def pearson(x, y) -> Optional[float]:
    """Pearson correlation, or None when either series is constant or too short."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ShapeError("pearson", x.shape, y.shape)
    if x.size < 2 or np.all(x == x[0]) or np.all(y == y[0]):
        return None
    r, _ = stats.pearsonr(x, y)
    return float(r)


def per_cycle_metrics(cycles: Sequence[int], pred, actual) -> pd.DataFrame:
    """One row per predicted cycle index, pooled across batteries: ``cycle, n, rmse, mape``."""
    pred, actual = _pair(pred, actual)
    if len(cycles) != pred.size:
        raise ShapeError("per_cycle_metrics", (len(cycles),), pred.shape, "one cycle per prediction")
    df = pd.DataFrame({"cycle": np.asarray(cycles, dtype=np.int64), "pred": pred, "actual": actual})
    rows = []
    for cycle, group in df.groupby("cycle", sort=True):
        p, a = group["pred"].to_numpy(), group["actual"].to_numpy()
        rows.append({"cycle": int(cycle), "n": int(p.size), "rmse": rmse(p, a), "mape": mape(p, a)})
    return pd.DataFrame(rows, columns=["cycle", "n", "rmse", "mape"])
