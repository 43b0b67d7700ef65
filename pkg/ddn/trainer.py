"""Parameter initialization, Adam, the early-stopping training loop and evaluation."""

import logging
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence, TypedDict

import numpy as np

from ddn import config as settings
from ddn.guardrails import ConfigError, DataError, ShapeError, TrainingLogger, ensure_finite
from ddn.model import (
    DdnConfig,
    DdnParams,
    FrameBatch,
    forward_batch,
    loss_batch,
    parameter_shapes,
    value_and_grad,
)
from evaluation.metrics import Metrics, compute_metrics
from pipeline.frames import stack_frames
from pipeline.profiles import NormProfile, denormalize_capacity
from pipeline.schema import MovingFrame

logger = logging.getLogger(__name__)


# ── Configuration ─────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = settings.LEARNING_RATE
    beta1: float = settings.BETA1
    beta2: float = settings.BETA2
    epsilon: float = settings.EPSILON
    max_epochs: int = settings.MAX_EPOCHS
    batch_size: int = settings.BATCH_SIZE
    patience: int = settings.PATIENCE
    min_delta: float = settings.MIN_DELTA
    rng_seed: int = settings.DEFAULT_SEED
    early_stopping: bool = True
    record_walltime: bool = settings.LOG_WALLTIME

    def __post_init__(self) -> None:
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        for name in ("beta1", "beta2"):
            value = getattr(self, name)
            if not 0 <= value < 1:
                raise ConfigError(f"{name} must be in [0, 1), got {value}")
        if self.epsilon <= 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        if self.max_epochs < 0:
            raise ConfigError(f"max_epochs must be >= 0, got {self.max_epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")
        if self.min_delta < 0:
            raise ConfigError(f"min_delta must be >= 0, got {self.min_delta}")
        if self.rng_seed < 0:
            raise ConfigError(f"rng_seed must be >= 0, got {self.rng_seed}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown training config keys: {', '.join(sorted(unknown))}")
        return cls(**data)


@dataclass
class AdamState:
    """First/second moments keyed by tensor name, plus the step counter."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t_step: int = 0

    @classmethod
    def zeros(cls, params: DdnParams) -> "AdamState":
        named = params.named()
        return cls(
            m={n: np.zeros_like(t) for n, t in named.items()},
            v={n: np.zeros_like(t) for n, t in named.items()},
        )


class EpochRecord(TypedDict):
    epoch: int
    train_loss: float
    val_loss: Optional[float]
    seconds: float


@dataclass
class TrainingLog:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: Optional[int] = None
    stop_reason: str = "no_epochs"

    @property
    def best_val_loss(self) -> Optional[float]:
        if self.best_epoch is None:
            return None
        return self.epochs[self.best_epoch - 1]["val_loss"]


# ── Initialization ────────────────────────────────────────────────────────────


def init_params(ddn_config: DdnConfig, seed: int) -> DdnParams:
    """Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases."""
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in parameter_shapes(ddn_config).items():
        if len(shape) == 2:
            fan_out, fan_in = shape
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            tensors[name] = rng.uniform(-limit, limit, size=shape)
        else:
            tensors[name] = np.zeros(shape)
    return DdnParams.from_named(tensors)


# ── Adam ──────────────────────────────────────────────────────────────────────


def adam_step(
    params: DdnParams,
    grads: DdnParams,
    state: AdamState,
    train_config: TrainConfig,
) -> tuple[DdnParams, AdamState]:
    """One bias-corrected Adam update: p -= lr * m_hat / (sqrt(v_hat) + eps)."""
    named_p, named_g = params.named(), grads.named()
    if set(named_p) != set(named_g) or set(named_p) != set(state.m):
        raise ShapeError("adam_step", tuple(sorted(named_p)), tuple(sorted(named_g)), "tensor names differ")

    b1, b2 = train_config.beta1, train_config.beta2
    t_step = state.t_step + 1
    bc1 = 1.0 - b1 ** t_step
    bc2 = 1.0 - b2 ** t_step

    new_p, new_m, new_v = {}, {}, {}
    for name, p in named_p.items():
        g = named_g[name]
        if g.shape != p.shape or state.m[name].shape != p.shape:
            raise ShapeError("adam_step", p.shape, g.shape, name)
        m = b1 * state.m[name] + (1.0 - b1) * g
        v = b2 * state.v[name] + (1.0 - b2) * (g * g)
        new_p[name] = p - train_config.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + train_config.epsilon)
        new_m[name], new_v[name] = m, v
    return DdnParams.from_named(new_p), AdamState(m=new_m, v=new_v, t_step=t_step)


# ── Training loop ─────────────────────────────────────────────────────────────


def epoch_order(n: int, seed: int, epoch: int) -> np.ndarray:
    """Counter-based shuffle: the permutation depends only on (seed, epoch)."""
    rng = np.random.Generator(np.random.Philox(key=seed, counter=epoch))
    return rng.permutation(n)


def _as_batch(frames) -> Optional[FrameBatch]:
    if isinstance(frames, FrameBatch):
        return frames if len(frames) else None
    return stack_frames(frames) if len(frames) else None


def train(
    train_frames: Sequence[MovingFrame],
    val_frames: Sequence[MovingFrame],
    ddn_config: DdnConfig,
    train_config: TrainConfig,
    run_logger: Optional[TrainingLogger] = None,
    initial_params: Optional[DdnParams] = None,
) -> tuple[DdnParams, TrainingLog]:
    """Mini-batch Adam with early stopping on the validation loss.

    Returns the parameters of the epoch with the lowest validation loss (or
    of the last epoch when there is no validation set) and the epoch log.

    Raises:
        DataError: If the training set is empty.
        ConfigError: If early stopping is requested without validation frames.
        NumericFailure: If a loss or gradient becomes NaN/Inf.
    """
    train_batch = _as_batch(train_frames)
    if train_batch is None:
        raise DataError("training set is empty")
    val_batch = _as_batch(val_frames)
    if val_batch is None and train_config.early_stopping:
        raise ConfigError("early stopping needs a non-empty validation set")

    params = initial_params.copy() if initial_params is not None else init_params(ddn_config, train_config.rng_seed)
    state = AdamState.zeros(params)
    log = TrainingLog()
    best_params = params
    best_val = np.inf
    stale_epochs = 0
    B = len(train_batch)

    for epoch in range(1, train_config.max_epochs + 1):
        started = time.perf_counter()
        order = epoch_order(B, train_config.rng_seed, epoch)
        running = 0.0
        for batch_index, start in enumerate(range(0, B, train_config.batch_size)):
            idx = order[start:start + train_config.batch_size]
            loss, grads = value_and_grad(train_batch.take(idx), ddn_config, params)
            ensure_finite("training loss", loss, epoch=epoch, batch=batch_index)
            for name, g in grads.named().items():
                ensure_finite(f"gradient of {name}", g, epoch=epoch, batch=batch_index)
            params, state = adam_step(params, grads, state, train_config)
            running += loss * len(idx)
        train_loss = running / B

        val_loss = None
        if val_batch is not None:
            val_loss = loss_batch(val_batch, ddn_config, params)
            ensure_finite("validation loss", val_loss, epoch=epoch)

        seconds = time.perf_counter() - started if train_config.record_walltime else 0.0
        log.epochs.append(EpochRecord(epoch=epoch, train_loss=train_loss, val_loss=val_loss, seconds=seconds))
        if run_logger is not None:
            run_logger.log(epoch, train_loss, val_loss, seconds)
        logger.debug("epoch %d train=%.6g val=%s", epoch, train_loss, val_loss)

        if val_loss is None:
            best_params, log.best_epoch = params, epoch
            log.stop_reason = "max_epochs"
            continue

        if val_loss < best_val - train_config.min_delta:
            stale_epochs = 0
        else:
            stale_epochs += 1
        if val_loss < best_val:
            best_val, best_params, log.best_epoch = val_loss, params, epoch
        log.stop_reason = "max_epochs"
        if train_config.early_stopping and stale_epochs >= train_config.patience:
            log.stop_reason = "early_stopping"
            break

    if log.epochs:
        logger.info(
            "training stopped after %d epoch(s) (%s); best epoch %s",
            len(log.epochs), log.stop_reason, log.best_epoch,
        )
    return best_params.copy(), log


# ── Prediction and evaluation ─────────────────────────────────────────────────


def predict(
    params: DdnParams,
    ddn_config: DdnConfig,
    frames: Sequence[MovingFrame],
) -> tuple[np.ndarray, Optional[np.ndarray]]:
    """Normalized predictions for *frames* and the (frames, N) attention weights."""
    batch = _as_batch(frames)
    if batch is None:
        raise DataError("no frames to predict")
    return forward_batch(batch, ddn_config, params)


def evaluate(
    params: DdnParams,
    ddn_config: DdnConfig,
    frames: Sequence[MovingFrame],
    profile: NormProfile,
) -> Metrics:
    """RMSE, MAPE and R^2 in physical units (Ah, or SOH in SOH mode)."""
    pred, _ = predict(params, ddn_config, frames)
    actual = np.array([f.target for f in frames], dtype=np.float64)
    return compute_metrics(denormalize_capacity(profile, pred), denormalize_capacity(profile, actual))


def with_overrides(train_config: TrainConfig, **overrides) -> TrainConfig:
    """Copy of *train_config* with every non-None override applied."""
    return replace(train_config, **{k: v for k, v in overrides.items() if v is not None})
