"""The Deep Degradation Network.

Each historical cycle and the reference cycle 0 are embedded feature by
feature, an attention unit scores every historical embedding against the
reference, the pooled representation goes through a two-layer head, and the
head emits the normalized capacity of the next cycle.

There are two entry points over the same maths:

* single-frame ops (``embed_feature`` ... ``forward``) operate on one frame
  and return an ``AttentionTrace`` for analysis;
* ``forward_batch`` / ``backward`` work on a ``FrameBatch`` stack and record
  activations on a ``GradTape`` so training can compute exact gradients.
"""

from dataclasses import dataclass, field
from typing import Optional, Protocol, Sequence

import numpy as np

from ddn import tensor as T
from ddn.guardrails import ConfigError, DdnError, ShapeError

POOLING_MODES = ("mean", "attention")
HEAD_ACTIVATIONS = ("none", "relu")


# ── Configuration ─────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class DdnConfig:
    """Architecture hyper-parameters.

    Feature order is fixed: historical capacity, charge voltage curve,
    discharge voltage curve.
    """

    feature_lengths: tuple[int, ...] = (1, 300, 300)
    embed_dims: tuple[int, ...] = (64, 64, 64)
    history_n: int = 3
    mlp_hidden: int = 64
    attn_hidden: int = 128
    pooling: str = "attention"
    head_activation: str = "none"
    exclude_reference_from_history: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "feature_lengths", tuple(int(v) for v in self.feature_lengths))
        object.__setattr__(self, "embed_dims", tuple(int(v) for v in self.embed_dims))
        if not self.feature_lengths:
            raise ConfigError("at least one feature is required")
        if len(self.feature_lengths) != len(self.embed_dims):
            raise ConfigError(
                f"{len(self.feature_lengths)} feature lengths but {len(self.embed_dims)} embedding dims"
            )
        dims = (*self.feature_lengths, *self.embed_dims, self.history_n, self.mlp_hidden, self.attn_hidden)
        if min(dims) < 1:
            raise ConfigError(f"all dimensions must be >= 1, got {dims}")
        if self.pooling not in POOLING_MODES:
            raise ConfigError(f"pooling must be one of {POOLING_MODES}, got '{self.pooling}'")
        if self.head_activation not in HEAD_ACTIVATIONS:
            raise ConfigError(
                f"head_activation must be one of {HEAD_ACTIVATIONS}, got '{self.head_activation}'"
            )

    @property
    def num_features(self) -> int:
        return len(self.feature_lengths)

    @property
    def embed_total(self) -> int:
        """D, the width of one cycle's concatenated embedding."""
        return sum(self.embed_dims)

    def to_dict(self) -> dict:
        return {
            "feature_lengths": list(self.feature_lengths),
            "embed_dims": list(self.embed_dims),
            "history_n": self.history_n,
            "mlp_hidden": self.mlp_hidden,
            "attn_hidden": self.attn_hidden,
            "pooling": self.pooling,
            "head_activation": self.head_activation,
            "exclude_reference_from_history": self.exclude_reference_from_history,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DdnConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {', '.join(sorted(unknown))}")
        return cls(**data)


# ── Parameters ────────────────────────────────────────────────────────────────


def parameter_shapes(config: DdnConfig) -> dict[str, tuple[int, ...]]:
    """Canonical tensor names and shapes, in checkpoint order."""
    D = config.embed_total
    shapes: dict[str, tuple[int, ...]] = {}
    for j, (l, k) in enumerate(zip(config.feature_lengths, config.embed_dims)):
        shapes[f"W_e.{j}"] = (k, l)
        shapes[f"b_e.{j}"] = (k,)
    shapes.update({
        "W_h": (config.attn_hidden, 4 * D),
        "b_h": (config.attn_hidden,),
        "W_z": (1, config.attn_hidden),
        "b_z": (1,),
        "W_o": (config.mlp_hidden, D),
        "b_o": (config.mlp_hidden,),
        "W_q": (1, config.mlp_hidden),
        "b_q": (1,),
    })
    return shapes


@dataclass
class DdnParams:
    """All learnable tensors. Embedding weights are shared by the reference and history paths."""

    W_e: list[np.ndarray]
    b_e: list[np.ndarray]
    W_h: np.ndarray
    b_h: np.ndarray
    W_z: np.ndarray
    b_z: np.ndarray
    W_o: np.ndarray
    b_o: np.ndarray
    W_q: np.ndarray
    b_q: np.ndarray

    def named(self) -> dict[str, np.ndarray]:
        """Tensors keyed by canonical name (same order as ``parameter_shapes``)."""
        out: dict[str, np.ndarray] = {}
        for j, (W, b) in enumerate(zip(self.W_e, self.b_e)):
            out[f"W_e.{j}"] = W
            out[f"b_e.{j}"] = b
        for name in ("W_h", "b_h", "W_z", "b_z", "W_o", "b_o", "W_q", "b_q"):
            out[name] = getattr(self, name)
        return out

    @classmethod
    def from_named(cls, tensors: dict[str, np.ndarray]) -> "DdnParams":
        num_features = sum(1 for name in tensors if name.startswith("W_e."))
        try:
            return cls(
                W_e=[T.as_array(tensors[f"W_e.{j}"]) for j in range(num_features)],
                b_e=[T.as_array(tensors[f"b_e.{j}"]) for j in range(num_features)],
                **{
                    name: T.as_array(tensors[name])
                    for name in ("W_h", "b_h", "W_z", "b_z", "W_o", "b_o", "W_q", "b_q")
                },
            )
        except KeyError as exc:
            raise ShapeError("from_named", (), (), f"missing tensor {exc}") from exc

    @classmethod
    def zeros(cls, config: DdnConfig) -> "DdnParams":
        return cls.from_named({n: np.zeros(s) for n, s in parameter_shapes(config).items()})

    def copy(self) -> "DdnParams":
        return DdnParams.from_named({n: t.copy() for n, t in self.named().items()})

    def validate(self, config: DdnConfig) -> None:
        """Raise ShapeError unless every tensor matches *config*."""
        expected = parameter_shapes(config)
        actual = {n: t.shape for n, t in self.named().items()}
        if set(expected) != set(actual):
            raise ShapeError("params", tuple(sorted(actual)), tuple(sorted(expected)), "tensor names differ")
        for name, shape in expected.items():
            if actual[name] != shape:
                raise ShapeError(name, actual[name], shape)
            if not np.all(np.isfinite(self.named()[name])):
                raise ShapeError(name, actual[name], shape, "non-finite values")


# ── Frames ────────────────────────────────────────────────────────────────────


class RawFrame(Protocol):
    """Anything carrying per-feature raw vectors for cycle 0 and the history window."""

    t: int
    reference: tuple[np.ndarray, ...]
    history: tuple[np.ndarray, ...]
    target: float


@dataclass
class EncodedFrame:
    """Embedded moving frame: e_0 (D,), history E (N, D) and the normalized target."""

    reference: np.ndarray
    history: np.ndarray
    target: float = float("nan")
    start: int = 0


@dataclass
class AttentionTrace:
    """Attention weights over the N historical cycles of one frame starting at cycle *start*."""

    start: int
    weights: np.ndarray

    @property
    def predicted_cycle(self) -> int:
        return self.start + len(self.weights)


@dataclass
class FrameBatch:
    """Stacked raw frames ready for ``forward_batch``.

    ``reference[j]`` is (B, l_j), ``history[j]`` is (B, N, l_j), targets is (B,).
    """

    reference: tuple[np.ndarray, ...]
    history: tuple[np.ndarray, ...]
    targets: np.ndarray

    def __len__(self) -> int:
        return int(self.targets.shape[0])

    def take(self, index) -> "FrameBatch":
        index = np.asarray(index)
        return FrameBatch(
            reference=tuple(r[index] for r in self.reference),
            history=tuple(h[index] for h in self.history),
            targets=self.targets[index],
        )


# ── Single-frame ops ──────────────────────────────────────────────────────────


def embed_feature(x, j: int, params: DdnParams) -> np.ndarray:
    """e^(j) = W_e^(j) x + b_e^(j)."""
    if not 0 <= j < len(params.W_e):
        raise ShapeError("embed_feature", (j,), (len(params.W_e),), "feature index out of range")
    x = T.as_array(x)
    if x.ndim != 1 or x.shape[0] != params.W_e[j].shape[1]:
        raise ShapeError("embed_feature", x.shape, (params.W_e[j].shape[1],), f"feature {j} length")
    return T.affine(params.W_e[j], params.b_e[j], x)


def embed_cycle(features: Sequence, params: DdnParams) -> np.ndarray:
    """Concatenate the per-feature embeddings of one cycle in feature-index order."""
    if len(features) != len(params.W_e):
        raise ShapeError("embed_cycle", (len(features),), (len(params.W_e),), "missing feature")
    return T.concat([embed_feature(x, j, params) for j, x in enumerate(features)])


def attention_score(e_cur, e_ref, params: DdnParams) -> float:
    """z = W_z relu(W_h [e; e0; e - e0; e * e0] + b_h) + b_z."""
    e_cur, e_ref = T.as_array(e_cur), T.as_array(e_ref)
    if e_cur.shape != e_ref.shape:
        raise ShapeError("attention_score", e_cur.shape, e_ref.shape)
    w = T.concat([e_cur, e_ref, e_cur - e_ref, T.hadamard(e_cur, e_ref)])
    h = T.relu(T.affine(params.W_h, params.b_h, w))
    return float(T.affine(params.W_z, params.b_z, h)[0])


def attention_weights(scores, start: int = 0) -> AttentionTrace:
    """Softmax over the N scores of one frame (never across frames)."""
    return AttentionTrace(start=start, weights=T.softmax(T.as_array(scores)))


def encode_frame(frame: RawFrame, params: DdnParams) -> EncodedFrame:
    """Embed cycle 0 and every history cycle with the shared embedding layers."""
    n = frame.history[0].shape[0]
    history = np.stack([
        embed_cycle([h[i] for h in frame.history], params) for i in range(n)
    ])
    return EncodedFrame(
        reference=embed_cycle(frame.reference, params),
        history=history,
        target=float(frame.target),
        start=int(frame.t),
    )


def _attend(frame: EncodedFrame, params: DdnParams) -> AttentionTrace:
    scores = [attention_score(e, frame.reference, params) for e in frame.history]
    return attention_weights(scores, start=frame.start)


def pool(
    frame: EncodedFrame,
    mode: str,
    params: DdnParams,
    weights: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Mean pooling, or attention pooling weighted against e_0.

    Attention mode scores the frame itself unless precomputed *weights* are given.
    """
    if mode == "mean":
        return frame.history.mean(axis=0)
    if mode == "attention":
        if weights is None:
            weights = _attend(frame, params).weights
        return T.weighted_sum(weights, frame.history)
    raise ConfigError(f"pooling must be one of {POOLING_MODES}, got '{mode}'")


def predict_capacity(L, params: DdnParams, head_activation: str = "none") -> float:
    """Q = W_q o + b_q with o = W_o L + b_o (optionally rectified)."""
    o = T.affine(params.W_o, params.b_o, L)
    if head_activation == "relu":
        o = T.relu(o)
    return float(T.affine(params.W_q, params.b_q, o)[0])


def forward(
    frame: EncodedFrame,
    config: DdnConfig,
    params: DdnParams,
) -> tuple[float, Optional[AttentionTrace]]:
    """Full single-frame pipeline; a trace is emitted only in attention mode."""
    D = config.embed_total
    if frame.reference.shape != (D,) or frame.history.shape != (config.history_n, D):
        raise ShapeError(
            "forward", frame.history.shape, (config.history_n, D), "frame does not match config"
        )
    trace = _attend(frame, params) if config.pooling == "attention" else None
    L = pool(frame, config.pooling, params, trace.weights if trace is not None else None)
    return predict_capacity(L, params, config.head_activation), trace


def batch_loss(frames: Sequence[EncodedFrame], config: DdnConfig, params: DdnParams) -> float:
    """Mean squared error pooled over every frame of every battery."""
    if not frames:
        raise ShapeError("batch_loss", (0,), (1,), "empty batch")
    preds = np.array([forward(f, config, params)[0] for f in frames])
    targets = np.array([f.target for f in frames])
    return T.mse(preds, targets)


# ── Batched forward with tape ─────────────────────────────────────────────────


class GradTape:
    """Activations cached by one ``forward_batch`` call, consumed by ``backward``."""

    def __init__(self) -> None:
        self._entries: dict[str, object] = {}

    def record(self, **entries) -> None:
        self._entries.update(entries)

    def __getitem__(self, name: str):
        return self._entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    @property
    def empty(self) -> bool:
        return not self._entries


@dataclass
class Gradients:
    """Gradients of the loss w.r.t. every parameter and every raw input."""

    params: DdnParams
    reference: tuple[np.ndarray, ...] = field(default_factory=tuple)
    history: tuple[np.ndarray, ...] = field(default_factory=tuple)


def _check_batch(batch: FrameBatch, config: DdnConfig) -> None:
    if len(batch.reference) != config.num_features or len(batch.history) != config.num_features:
        raise ShapeError(
            "forward_batch", (len(batch.reference),), (config.num_features,), "feature count"
        )
    B = len(batch)
    for j, l in enumerate(config.feature_lengths):
        if batch.reference[j].shape != (B, l):
            raise ShapeError("forward_batch", batch.reference[j].shape, (B, l), f"reference feature {j}")
        if batch.history[j].shape != (B, config.history_n, l):
            raise ShapeError(
                "forward_batch", batch.history[j].shape, (B, config.history_n, l), f"history feature {j}"
            )


def forward_batch(
    batch: FrameBatch,
    config: DdnConfig,
    params: DdnParams,
    tape: Optional[GradTape] = None,
) -> tuple[np.ndarray, Optional[np.ndarray]]:
    """Predict every frame of *batch*; return (predictions (B,), alpha (B, N) or None)."""
    _check_batch(batch, config)
    B, N = len(batch), config.history_n

    e0 = T.concat([T.affine(W, b, x) for W, b, x in zip(params.W_e, params.b_e, batch.reference)])
    E = T.concat([T.affine(W, b, x) for W, b, x in zip(params.W_e, params.b_e, batch.history)])

    if config.pooling == "attention":
        R = np.broadcast_to(e0[:, None, :], E.shape)
        w = T.concat([E, R, E - R, T.hadamard(E, R)])
        a = T.affine(params.W_h, params.b_h, w)
        h = T.relu(a)
        z = T.affine(params.W_z, params.b_z, h)[..., 0]
        alpha = T.softmax(z)
    else:
        R = w = a = h = None
        alpha = np.full((B, N), 1.0 / N)

    L = T.weighted_sum(alpha, E)
    o_pre = T.affine(params.W_o, params.b_o, L)
    o = T.relu(o_pre) if config.head_activation == "relu" else o_pre
    q = T.affine(params.W_q, params.b_q, o)[..., 0]

    if tape is not None:
        tape.record(
            config=config, params=params, batch=batch,
            e0=e0, E=E, R=R, w=w, a=a, h=h, alpha=alpha,
            L=L, o_pre=o_pre, o=o, q=q,
        )
    return q, (alpha if config.pooling == "attention" else None)


def loss_batch(
    batch: FrameBatch,
    config: DdnConfig,
    params: DdnParams,
    tape: Optional[GradTape] = None,
) -> float:
    """MSE of ``forward_batch`` against the batch targets."""
    if len(batch) == 0:
        raise ShapeError("loss_batch", (0,), (1,), "empty batch")
    q, _ = forward_batch(batch, config, params, tape)
    if tape is not None:
        tape.record(targets=batch.targets)
    return T.mse(q, batch.targets)


def backward(tape: GradTape, loss_grad: float = 1.0) -> Gradients:
    """Exact gradients of the recorded ``loss_batch`` evaluation."""
    if tape.empty or "targets" not in tape:
        raise DdnError("backward: tape holds no recorded loss evaluation")
    config: DdnConfig = tape["config"]
    params: DdnParams = tape["params"]
    batch: FrameBatch = tape["batch"]
    E, alpha, L, o_pre, o = tape["E"], tape["alpha"], tape["L"], tape["o_pre"], tape["o"]
    D = config.embed_total

    dq = T.mse_backward(tape["q"], tape["targets"], loss_grad)
    dW_q, db_q, do = T.affine_backward(params.W_q, o, dq[:, None])
    if config.head_activation == "relu":
        do = T.relu_backward(o_pre, do)
    dW_o, db_o, dL = T.affine_backward(params.W_o, L, do)
    d_alpha, dE = T.weighted_sum_backward(alpha, E, dL)

    grads = DdnParams.zeros(config)
    de0 = np.zeros_like(tape["e0"])
    if config.pooling == "attention":
        R, h = tape["R"], tape["h"]
        dz = T.softmax_backward(alpha, d_alpha)
        grads.W_z, grads.b_z, dh = T.affine_backward(params.W_z, h, dz[..., None])
        da = T.relu_backward(tape["a"], dh)
        grads.W_h, grads.b_h, dw = T.affine_backward(params.W_h, tape["w"], da)
        dE_cat, dR_cat, d_diff, d_prod = T.concat_backward(dw, [D] * 4)
        dE_prod, dR_prod = T.hadamard_backward(E, R, d_prod)
        dE = dE + dE_cat + d_diff + dE_prod
        de0 = (dR_cat - d_diff + dR_prod).sum(axis=1)

    grads.W_o, grads.b_o = dW_o, db_o
    grads.W_q, grads.b_q = dW_q, db_q

    dE_parts = T.concat_backward(dE, config.embed_dims)
    de0_parts = T.concat_backward(de0, config.embed_dims)
    d_reference, d_history = [], []
    for j, W in enumerate(params.W_e):
        dW_hist, db_hist, dx_hist = T.affine_backward(W, batch.history[j], dE_parts[j])
        dW_ref, db_ref, dx_ref = T.affine_backward(W, batch.reference[j], de0_parts[j])
        grads.W_e[j] = dW_hist + dW_ref
        grads.b_e[j] = db_hist + db_ref
        d_history.append(dx_hist)
        d_reference.append(dx_ref)

    return Gradients(params=grads, reference=tuple(d_reference), history=tuple(d_history))


def value_and_grad(batch: FrameBatch, config: DdnConfig, params: DdnParams) -> tuple[float, DdnParams]:
    """Loss of *batch* and its parameter gradients."""
    tape = GradTape()
    loss = loss_batch(batch, config, params, tape)
    return loss, backward(tape).params
