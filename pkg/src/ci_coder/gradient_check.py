from collections.abc import Callable

import numpy as np

from .Types import FloatArray


def numerical_gradient(fn: Callable[[], float], array: FloatArray, eps: float = 1e-4) -> FloatArray:
    """
    Central finite differences of a scalar function with respect to `array`.

    `array` is perturbed in place one element at a time and restored afterwards,
    so `fn` must read it (for instance through a Tensor holding it as data).
    """
    grad = np.zeros_like(array, dtype=np.float64)
    for index in np.ndindex(*array.shape):
        original = array[index]
        array[index] = original + eps
        upper = fn()
        array[index] = original - eps
        lower = fn()
        array[index] = original
        grad[index] = (upper - lower) / (2 * eps)
    return grad


def relative_error(analytic: FloatArray, numeric: FloatArray, floor: float = 1e-12) -> float:
    """norm of the difference relative to the summed norms; 0 when both vanish"""
    scale = float(np.linalg.norm(analytic) + np.linalg.norm(numeric))
    if scale < floor:
        return 0.0
    return float(np.linalg.norm(analytic - numeric)) / scale
