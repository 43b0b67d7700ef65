"""Tests for metrics, the attention study and report files."""

import os

import numpy as np
import pytest


# ── Metrics ───────────────────────────────────────────────────────────────────


def test_worked_values():
    from evaluation.metrics import mape, r2, rmse

    assert rmse([2.0, 2.0], [1.0, 3.0]) == 1.0
    assert rmse([1.5, 2.5], [1.5, 2.5]) == 0.0
    assert mape([1.1], [1.0]) == pytest.approx(10.0, rel=1e-12)
    assert mape([0.9, 1.2], [0.9, 1.2]) == 0.0
    assert r2([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 1.0
    assert r2([2.0, 2.0, 2.0], [1.0, 2.0, 3.0]) == 0.0


def test_metrics_match_brute_force_formulas():
    from evaluation.metrics import mape, r2, rmse

    rng = np.random.default_rng(0)
    for _ in range(100):
        m = int(rng.integers(2, 40))
        actual = rng.uniform(0.5, 2.0, size=m)
        pred = actual + rng.normal(0.0, 0.1, size=m)

        sq = sum((p - a) ** 2 for p, a in zip(pred, actual))
        mean_a = sum(actual) / m
        tot = sum((a - mean_a) ** 2 for a in actual)
        assert rmse(pred, actual) == pytest.approx((sq / m) ** 0.5, abs=1e-12)
        assert mape(pred, actual) == pytest.approx(100.0 / m * sum(abs(p - a) / a for p, a in zip(pred, actual)),
                                                   abs=1e-12)
        assert r2(pred, actual) == pytest.approx(1.0 - sq / tot, abs=1e-12)
        assert rmse(pred, actual) ** 2 == pytest.approx(np.mean((pred - actual) ** 2), abs=1e-12)


def test_metric_errors():
    from ddn.guardrails import DataError, ShapeError
    from evaluation.metrics import mape, r2, rmse

    with pytest.raises(DataError):
        rmse([], [])
    with pytest.raises(ShapeError):
        rmse([1.0], [1.0, 2.0])
    with pytest.raises(DataError, match="zero"):
        mape([1.0, 2.0], [0.0, 2.0])
    with pytest.raises(DataError, match="variance"):
        r2([1.0, 2.0], [1.5, 1.5])


def test_compute_metrics_pools_every_pair():
    """Pooled RMSE differs from the average of per-battery RMSEs."""
    from evaluation.metrics import compute_metrics, per_battery_metrics

    pred = np.array([1.0, 1.0, 2.0, 4.0])
    actual = np.array([1.0, 1.0, 1.0, 1.0])
    ids = ["a", "a", "b", "b"]
    pooled = compute_metrics(pred, actual)
    assert pooled.n == 4 and pooled.r2 is None
    assert pooled.rmse == pytest.approx(np.sqrt(2.5), abs=1e-15)

    table = per_battery_metrics(ids, pred, actual)
    assert list(table.columns) == ["battery_id", "n", "rmse", "mape", "r2"]
    assert table["battery_id"].tolist() == ["a", "b"]
    assert table["rmse"].tolist() == pytest.approx([0.0, np.sqrt(5.0)], abs=1e-15)
    assert np.mean(table["rmse"]) == pytest.approx(np.sqrt(5.0) / 2, abs=1e-15)
    assert abs(np.mean(table["rmse"]) - pooled.rmse) > 0.4


def test_per_cycle_metrics_pool_batteries_at_each_cycle():
    from evaluation.metrics import per_cycle_metrics

    cycles = [3, 4, 5, 3, 4]
    actual = np.array([1.0, 0.9, 0.8, 1.0, 0.95])
    pred = np.array([1.1, 0.9, 0.8, 0.9, 0.95])
    table = per_cycle_metrics(cycles, pred, actual)
    assert list(table.columns) == ["cycle", "n", "rmse", "mape"]
    assert table["cycle"].tolist() == [3, 4, 5]
    assert table["n"].tolist() == [2, 2, 1]
    assert table["rmse"].tolist() == pytest.approx([0.1, 0.0, 0.0], abs=1e-12)
    assert table["mape"].tolist() == pytest.approx([10.0, 0.0, 0.0], abs=1e-9)


def test_pearson_matches_textbook_formula_and_constant_series():
    from evaluation.metrics import pearson

    rng = np.random.default_rng(1)
    x, y = rng.normal(size=30), rng.normal(size=30)
    dx, dy = x - x.mean(), y - y.mean()
    expected = (dx @ dy) / np.sqrt((dx @ dx) * (dy @ dy))
    assert pearson(x, y) == pytest.approx(expected, abs=1e-12)
    assert pearson(np.ones(5), y[:5]) is None
    assert pearson([1.0], [2.0]) is None


# ── Attention study ───────────────────────────────────────────────────────────


def _history(capacities):
    from tests.helpers import linear_battery

    return linear_battery("b0", capacities)


def test_constant_capacity_gives_undefined_correlation():
    from ddn.model import AttentionTrace
    from evaluation.attention import attention_study

    history = _history([1.0] * 8)
    rng = np.random.default_rng(2)
    traces = [AttentionTrace(start=t, weights=rng.dirichlet(np.ones(3))) for t in range(5)]
    study = attention_study(traces, history)
    assert np.all(study.capacity_diff == 0)
    assert study.abs_correlation == [None, None, None]


def test_slot_that_tracks_capacity_change_correlates_fully():
    from ddn.model import AttentionTrace
    from evaluation.attention import attention_study

    caps = 1.1 - np.cumsum([0.0, 0.01, 0.02, 0.005, 0.03, 0.015, 0.025, 0.01])
    history = _history(caps)
    traces = []
    for t in range(5):
        i = t + 3
        d = abs(caps[i] - caps[i - 1])
        w2 = 0.2 + 10 * d
        rest = (1 - w2) / 2
        traces.append(AttentionTrace(start=t, weights=np.array([rest, rest, w2])))
    study = attention_study(traces, history)
    assert study.abs_correlation[2] == pytest.approx(1.0, abs=1e-12)
    assert study.cycles.tolist() == [3, 4, 5, 6, 7]
    assert study.series().shape == (5, 5)


def test_attention_study_errors():
    from ddn.guardrails import DataError
    from ddn.model import AttentionTrace
    from evaluation.attention import attention_study

    history = _history([1.0, 0.9, 0.8, 0.7, 0.6])
    two = [AttentionTrace(start=t, weights=np.array([0.5, 0.5])) for t in range(2)]
    with pytest.raises(DataError, match="at least 3"):
        attention_study(two, history)
    past_end = [AttentionTrace(start=t, weights=np.array([0.5, 0.5])) for t in range(2, 5)]
    with pytest.raises(DataError):
        attention_study(past_end, history)


# ── Report files ──────────────────────────────────────────────────────────────


def test_metrics_only_report(tmp_path):
    from evaluation.metrics import Metrics
    from evaluation.report import emit_report, read_key_values

    metrics = Metrics(rmse=0.1 + 0.2, mape=1.0 / 3.0, r2=None, n=7)
    written = emit_report(str(tmp_path), metrics=metrics, studies={})
    assert [os.path.basename(p) for p in written] == ["metrics.txt"]
    values = read_key_values(written[0])
    assert values == {"rmse": 0.1 + 0.2, "mape": 1.0 / 3.0, "r2": None, "n": 7}


def test_prediction_and_attention_tables_round_trip(tmp_path):
    from evaluation.report import (
        ATTENTION_COLUMNS,
        PREDICTION_COLUMNS,
        attention_table,
        emit_report,
        prediction_table,
        read_table,
    )
    from ddn.model import DdnConfig
    from pipeline.frames import build_frames
    from pipeline.profiles import denormalize_capacity, get_profile
    from tests.helpers import linear_battery

    config = DdnConfig(feature_lengths=(1,), embed_dims=(2,), history_n=2, mlp_hidden=2, attn_hidden=2)
    profile = get_profile("mit")
    frames = build_frames(linear_battery("cell_7", [1.1, 1.05, 1.0, 0.97, 0.93]), config, profile)
    rng = np.random.default_rng(3)
    pred = rng.uniform(0, 1, size=len(frames))
    alpha = rng.dirichlet(np.ones(2), size=len(frames))

    emit_report(
        str(tmp_path),
        predictions=prediction_table(frames, pred, profile),
        attention=attention_table(frames, alpha),
    )
    predictions = read_table(str(tmp_path / "predictions.csv"))
    attention = read_table(str(tmp_path / "attention.csv"))

    assert list(predictions.columns) == PREDICTION_COLUMNS
    assert list(attention.columns) == ATTENTION_COLUMNS
    assert predictions["cycle"].tolist() == [2, 3, 4]
    assert predictions["predicted_ah"].tolist() == denormalize_capacity(profile, pred).tolist()
    assert attention["alpha"].tolist() == alpha.ravel().tolist()
    assert attention.groupby("frame_t")["alpha"].sum().tolist() == pytest.approx([1.0] * 3, abs=1e-12)


def test_report_write_failure_names_path(tmp_path):
    from ddn.guardrails import DataError
    from evaluation.metrics import Metrics
    from evaluation.report import emit_report

    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(DataError, match="file"):
        emit_report(str(blocker / "out"), metrics=Metrics(rmse=0.0, mape=0.0, r2=1.0, n=1))
