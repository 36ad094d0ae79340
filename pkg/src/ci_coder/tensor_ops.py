"""
Fused differentiable ops with hand-written backward passes.

Each op computes its forward result with plain numpy and records one closure
that maps the output gradient to the gradients of its inputs.
"""
from __future__ import annotations

import math

import numpy as np

from .exceptions import ShapeMismatchError
from .Tensor import Operand, Tensor, as_tensor, make_result
from .Types import BoolArray, FloatArray


def conv1d(x: Operand, weight: Operand, bias: Operand, dilation: int = 1) -> Tensor:
    """
    causal dilated convolution of a channels x T sequence

    y[c, t] = b[c] + sum_ci sum_j W[c, ci, j] * x[ci, t - d*(k-1-j)], zero for negative indices
    """
    x_, w_, b_ = as_tensor(x), as_tensor(weight), as_tensor(bias)
    if x_.ndim != 2 or w_.ndim != 3 or b_.shape != (w_.shape[0],) or w_.shape[1] != x_.shape[0]:
        raise ShapeMismatchError(
            f"conv1d got input {x_.shape}, weight {w_.shape} and bias {b_.shape}; "
            "expected (C_in, T), (C_out, C_in, k) and (C_out,)"
        )
    if dilation < 1:
        raise ValueError(f"Dilation must be positive, got {dilation}")

    out_channels, in_channels, kernel = w_.shape
    length = x_.shape[1]
    pad = dilation * (kernel - 1)
    x_padded = np.concatenate([np.zeros((in_channels, pad)), x_.data], axis=1)

    out = np.repeat(b_.data[:, None], length, axis=1)
    for j in range(kernel):
        out += w_.data[:, :, j] @ x_padded[:, j * dilation : j * dilation + length]

    def backward(g: FloatArray) -> tuple[FloatArray, FloatArray, FloatArray]:
        grad_w = np.empty_like(w_.data)
        grad_x_padded = np.zeros_like(x_padded)
        for j in range(kernel):
            window = slice(j * dilation, j * dilation + length)
            grad_w[:, :, j] = g @ x_padded[:, window].T
            grad_x_padded[:, window] += w_.data[:, :, j].T @ g
        return grad_x_padded[:, pad:], grad_w, g.sum(axis=1)

    return make_result(out, (x_, w_, b_), backward, "conv1d")


def _masked_softmax(scores: FloatArray, mask: BoolArray | None) -> FloatArray:
    if mask is None:
        shifted = scores - scores.max(axis=-1, keepdims=True)
        exp = np.exp(shifted)
    else:
        row_max = np.where(mask, scores, -np.inf).max(axis=-1, keepdims=True)
        row_max = np.where(np.isfinite(row_max), row_max, 0.0)
        exp = np.where(mask, np.exp(np.where(mask, scores - row_max, 0.0)), 0.0)

    totals = exp.sum(axis=-1, keepdims=True)
    weights: FloatArray = exp / np.where(totals > 0, totals, 1.0)
    return weights


def softmax_rows(scores: Operand, mask: BoolArray | None = None) -> Tensor:
    """row softmax with max subtraction; masked-out entries get weight 0"""
    s_ = as_tensor(scores)
    if mask is not None and mask.shape != s_.shape:
        raise ShapeMismatchError(f"Mask of shape {mask.shape} does not match scores of shape {s_.shape}")

    weights = _masked_softmax(s_.data, mask)

    def backward(g: FloatArray) -> tuple[FloatArray]:
        return (weights * (g - np.sum(g * weights, axis=-1, keepdims=True)),)

    return make_result(weights, (s_,), backward, "softmax")


def windowed_attention(query: Operand, key: Operand, value: Operand, context: int) -> Tensor:
    """
    causal banded scaled dot-product attention

    row t attends to keys t-context+1 .. t; memory grows with T * context instead of T^2.
    Key/value rows are left-padded so that band position w of row t reads row t + w of the
    padded arrays.
    """
    q_, k_, v_ = as_tensor(query), as_tensor(key), as_tensor(value)
    if q_.ndim != 2 or q_.shape != k_.shape or v_.ndim != 2 or v_.shape[0] != k_.shape[0]:
        raise ShapeMismatchError(
            f"windowed attention got Q {q_.shape}, K {k_.shape}, V {v_.shape}; "
            "expected T x d_k, T x d_k and T x d_v"
        )
    if context < 1:
        raise ValueError(f"Attention context must be positive, got {context}")

    length, d_k = q_.shape
    width = min(context, length)
    pad = width - 1
    scale = 1.0 / math.sqrt(d_k)

    k_padded = np.concatenate([np.zeros((pad, d_k)), k_.data], axis=0)
    v_padded = np.concatenate([np.zeros((pad, v_.shape[1])), v_.data], axis=0)
    rows = np.arange(length)[:, None]
    band = np.arange(width)[None, :]
    valid = band >= pad - rows

    scores = np.empty((length, width))
    for w in range(width):
        scores[:, w] = np.sum(q_.data * k_padded[w : w + length], axis=1) * scale
    weights = _masked_softmax(scores, valid)

    out = np.zeros((length, v_.shape[1]))
    for w in range(width):
        out += weights[:, w, None] * v_padded[w : w + length]

    def backward(g: FloatArray) -> tuple[FloatArray, FloatArray, FloatArray]:
        grad_weights = np.empty_like(weights)
        grad_v_padded = np.zeros_like(v_padded)
        for w in range(width):
            grad_weights[:, w] = np.sum(g * v_padded[w : w + length], axis=1)
            grad_v_padded[w : w + length] += weights[:, w, None] * g

        grad_scores = weights * (grad_weights - np.sum(grad_weights * weights, axis=1, keepdims=True)) * scale
        grad_q = np.zeros_like(q_.data)
        grad_k_padded = np.zeros_like(k_padded)
        for w in range(width):
            grad_q += grad_scores[:, w, None] * k_padded[w : w + length]
            grad_k_padded[w : w + length] += grad_scores[:, w, None] * q_.data

        return grad_q, grad_k_padded[pad:], grad_v_padded[pad:]

    return make_result(out, (q_, k_, v_), backward, "windowed_attention")


def causal_mask(queries: int, keys: int, context: int | None = None) -> BoolArray:
    """boolean n x m mask letting row t see keys t-context+1 .. t"""
    rows = np.arange(queries)[:, None]
    cols = np.arange(keys)[None, :]
    mask = cols <= rows
    if context is not None:
        mask &= cols > rows - context
    result: BoolArray = mask
    return result


def mse_loss(prediction: Operand, target: FloatArray, mask: BoolArray | None = None) -> Tensor:
    """mean squared error, averaged over the entries where mask is set when a mask is given"""
    p_ = as_tensor(prediction)
    target = np.asarray(target, dtype=np.float64)
    if target.shape != p_.shape or (mask is not None and np.shape(mask) != p_.shape):
        raise ShapeMismatchError(f"MSE prediction {p_.shape} and target {target.shape} differ")

    diff = p_.data - target
    if mask is None:
        count = max(p_.size, 1)
    else:
        count = max(int(np.count_nonzero(mask)), 1)
        diff = np.where(mask, diff, 0.0)
    value = np.asarray(np.sum(diff**2) / count)
    return make_result(value, (p_,), lambda g: (g * 2.0 * diff / count,), "mse")


def bce_with_logits(logits: Operand, target: FloatArray) -> Tensor:
    """mean binary cross-entropy of sigmoid(logits), in the form that never overflows"""
    z_ = as_tensor(logits)
    target = np.asarray(target, dtype=np.float64)
    if target.shape != z_.shape:
        raise ShapeMismatchError(f"BCE logits {z_.shape} and target {target.shape} differ")

    count = max(z_.size, 1)
    z = z_.data
    value = np.asarray(np.sum(np.maximum(z, 0.0) - z * target + np.log1p(np.exp(-np.abs(z)))) / count)

    e = np.exp(-np.abs(z))
    probabilities = np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return make_result(value, (z_,), lambda g: (g * (probabilities - target) / count,), "bce")
