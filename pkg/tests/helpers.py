"""Small builders shared by the test modules."""

import numpy as np

from ddn.model import DdnConfig, DdnParams, FrameBatch, parameter_shapes
from pipeline.schema import BatteryHistory, CycleRecord, MovingFrame


def random_config(rng: np.random.Generator, pooling: str = "attention", head_activation: str = "none") -> DdnConfig:
    """A random small config: D <= 12, N <= 4, H1 <= 6, H2 <= 8."""
    n_features = int(rng.integers(1, 4))
    lengths = [1] + [int(rng.integers(2, 7)) for _ in range(n_features - 1)]
    dims = [int(rng.integers(1, 5)) for _ in range(n_features)]
    return DdnConfig(
        feature_lengths=tuple(lengths),
        embed_dims=tuple(dims),
        history_n=int(rng.integers(1, 5)),
        mlp_hidden=int(rng.integers(1, 7)),
        attn_hidden=int(rng.integers(1, 9)),
        pooling=pooling,
        head_activation=head_activation,
    )


def random_params(config: DdnConfig, rng: np.random.Generator, scale: float = 0.7) -> DdnParams:
    return DdnParams.from_named({
        name: rng.normal(0.0, scale, size=shape) for name, shape in parameter_shapes(config).items()
    })


def random_batch(config: DdnConfig, rng: np.random.Generator, size: int) -> FrameBatch:
    return FrameBatch(
        reference=tuple(rng.uniform(0, 1, size=(size, l)) for l in config.feature_lengths),
        history=tuple(rng.uniform(0, 1, size=(size, config.history_n, l)) for l in config.feature_lengths),
        targets=rng.uniform(0, 1, size=size),
    )


def frames_of(batch: FrameBatch, battery_id: str = "b") -> list[MovingFrame]:
    return [
        MovingFrame(
            battery_id=battery_id,
            t=i,
            reference=tuple(r[i] for r in batch.reference),
            history=tuple(h[i] for h in batch.history),
            target=float(batch.targets[i]),
        )
        for i in range(len(batch))
    ]


def linear_battery(
    battery_id: str,
    capacities,
    samples: int = 5,
    seconds: float = 100.0,
) -> BatteryHistory:
    """Battery whose curves are straight lines; voltage drops with cycle index."""
    t = np.linspace(0.0, seconds, samples)
    cycles = []
    for c, q in enumerate(capacities):
        cycles.append(CycleRecord(
            cycle_index=c,
            charge_curve=np.column_stack([t, 3.0 + t / seconds * 0.5 - 0.001 * c]),
            discharge_curve=np.column_stack([t, 3.4 - t / seconds * 0.8 - 0.001 * c]),
            discharge_capacity=float(q),
        ))
    return BatteryHistory(battery_id=battery_id, cycles=cycles)
