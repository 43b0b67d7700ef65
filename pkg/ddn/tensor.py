"""Dense float64 building blocks with explicit backward rules.

Every forward op has a matching ``*_backward`` that maps the gradient of the
op's output to the gradients of its inputs. Leading batch axes are allowed
everywhere; the last axis is always the feature axis, so a single vector and
a ``(batch, n, features)`` stack go through the same code.
"""

from typing import Sequence

import numpy as np

from ddn.guardrails import ShapeError


def as_array(x) -> np.ndarray:
    """Return *x* as a float64 ndarray (no copy when already one)."""
    return np.asarray(x, dtype=np.float64)


# ── Affine ────────────────────────────────────────────────────────────────────


def affine(W, b, x) -> np.ndarray:
    """y_i = sum_k W_ik x_k + b_i over the last axis of *x*."""
    W, b, x = as_array(W), as_array(b), as_array(x)
    if W.ndim != 2:
        raise ShapeError("affine", W.shape, x.shape, "W must be a matrix")
    if x.ndim == 0 or x.shape[-1] != W.shape[1]:
        raise ShapeError("affine", W.shape, x.shape, "W.cols must equal x.len")
    if b.shape != (W.shape[0],):
        raise ShapeError("affine", W.shape, b.shape, "b.len must equal W.rows")
    return x @ W.T + b


def affine_backward(W, x, grad_y) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (dW, db, dx); batch axes of *x* are summed into dW and db."""
    W, x, grad_y = as_array(W), as_array(x), as_array(grad_y)
    rows, cols = W.shape
    g2 = grad_y.reshape(-1, rows)
    x2 = x.reshape(-1, cols)
    dW = g2.T @ x2
    db = g2.sum(axis=0)
    dx = grad_y @ W
    return dW, db, dx


# ── Element-wise ──────────────────────────────────────────────────────────────


def relu(x) -> np.ndarray:
    return np.maximum(as_array(x), 0.0)


def relu_backward(x, grad_y) -> np.ndarray:
    # Subgradient at exactly 0 is 0.
    return as_array(grad_y) * (as_array(x) > 0.0)


def hadamard(a, b) -> np.ndarray:
    a, b = as_array(a), as_array(b)
    if a.shape != b.shape:
        raise ShapeError("hadamard", a.shape, b.shape)
    return a * b


def hadamard_backward(a, b, grad_c) -> tuple[np.ndarray, np.ndarray]:
    grad_c = as_array(grad_c)
    return grad_c * as_array(b), grad_c * as_array(a)


# ── Softmax ───────────────────────────────────────────────────────────────────


def softmax(z) -> np.ndarray:
    """Max-shifted softmax over the last axis."""
    z = as_array(z)
    if z.ndim == 0 or z.shape[-1] < 1:
        raise ShapeError("softmax", z.shape, (1,), "need at least one score")
    shifted = np.exp(z - z.max(axis=-1, keepdims=True))
    return shifted / shifted.sum(axis=-1, keepdims=True)


def softmax_backward(alpha, grad_alpha) -> np.ndarray:
    alpha, grad_alpha = as_array(alpha), as_array(grad_alpha)
    inner = (alpha * grad_alpha).sum(axis=-1, keepdims=True)
    return alpha * (grad_alpha - inner)


# ── Concatenation ─────────────────────────────────────────────────────────────


def concat(parts: Sequence) -> np.ndarray:
    """Join along the last axis, preserving order."""
    if len(parts) == 0:
        raise ShapeError("concat", (), (), "empty part list")
    arrays = [as_array(p) for p in parts]
    lead = arrays[0].shape[:-1]
    for arr in arrays[1:]:
        if arr.shape[:-1] != lead:
            raise ShapeError("concat", arrays[0].shape, arr.shape, "leading axes differ")
    return np.concatenate(arrays, axis=-1)


def concat_backward(grad_y, sizes: Sequence[int]) -> list[np.ndarray]:
    """Split *grad_y* back into per-part gradients of the given widths."""
    grad_y = as_array(grad_y)
    if sum(sizes) != grad_y.shape[-1]:
        raise ShapeError("concat_backward", grad_y.shape, tuple(sizes), "widths do not sum to length")
    return np.split(grad_y, np.cumsum(sizes)[:-1], axis=-1)


# ── Pooling ───────────────────────────────────────────────────────────────────


def weighted_sum(alpha, E) -> np.ndarray:
    """L = sum_n alpha_n e_n; *alpha* is (..., N) and *E* is (..., N, D)."""
    alpha, E = as_array(alpha), as_array(E)
    if E.ndim < 2 or alpha.shape != E.shape[:-1]:
        raise ShapeError("weighted_sum", alpha.shape, E.shape)
    return np.einsum("...n,...nd->...d", alpha, E)


def weighted_sum_backward(alpha, E, grad_L) -> tuple[np.ndarray, np.ndarray]:
    """Return (d_alpha, d_E)."""
    alpha, E, grad_L = as_array(alpha), as_array(E), as_array(grad_L)
    d_alpha = np.einsum("...nd,...d->...n", E, grad_L)
    d_E = alpha[..., :, None] * grad_L[..., None, :]
    return d_alpha, d_E


# ── Loss ──────────────────────────────────────────────────────────────────────


def mse(pred, target) -> float:
    """(1/M) sum (pred_i - target_i)^2 over every element."""
    pred, target = as_array(pred), as_array(target)
    if pred.shape != target.shape:
        raise ShapeError("mse", pred.shape, target.shape)
    if pred.size == 0:
        raise ShapeError("mse", pred.shape, target.shape, "empty input")
    diff = pred - target
    return float(np.mean(diff * diff))


def mse_backward(pred, target, loss_grad: float = 1.0) -> np.ndarray:
    """d(mse)/d(pred_i) = 2 (pred_i - target_i) / M, scaled by *loss_grad*."""
    pred, target = as_array(pred), as_array(target)
    if pred.shape != target.shape:
        raise ShapeError("mse_backward", pred.shape, target.shape)
    return (2.0 * loss_grad / pred.size) * (pred - target)
