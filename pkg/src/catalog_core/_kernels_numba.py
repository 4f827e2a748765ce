"""Numba-JIT implementations of the hot kernels.

Loops are parallelized per row (or per flat element) only; no reduction
ever crosses a row boundary, so results are bit-identical regardless of
the thread count. Row-level reductions run sequentially inside one
thread.
"""

import math

import numpy as np
from numba import njit, prange

NAME = "numba"

_SQRT1_2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@njit(cache=True, parallel=True)
def gelu_forward(x):
    out = np.empty_like(x)
    n_rows, n_cols = x.shape
    for i in prange(n_rows):
        for j in range(n_cols):
            v = x[i, j]
            out[i, j] = 0.5 * v * (1.0 + math.erf(v * _SQRT1_2))
    return out


@njit(cache=True, parallel=True)
def gelu_backward(x, grad_out):
    out = np.empty_like(x)
    n_rows, n_cols = x.shape
    for i in prange(n_rows):
        for j in range(n_cols):
            v = x[i, j]
            cdf = 0.5 * (1.0 + math.erf(v * _SQRT1_2))
            pdf = _INV_SQRT_2PI * math.exp(-0.5 * v * v)
            out[i, j] = grad_out[i, j] * (cdf + v * pdf)
    return out


@njit(cache=True, parallel=True)
def _softmax_xent_rows(scores, labels, tau, loss_rows, grad):
    n_rows, n_cols = scores.shape
    inv_scale = 1.0 / (tau * n_rows)
    for i in prange(n_rows):
        row_max = scores[i, 0] / tau
        for j in range(1, n_cols):
            z = scores[i, j] / tau
            if z > row_max:
                row_max = z
        sum_exp = 0.0
        for j in range(n_cols):
            sum_exp += math.exp(scores[i, j] / tau - row_max)
        log_sum = row_max + math.log(sum_exp)
        loss_rows[i] = log_sum - scores[i, labels[i]] / tau
        for j in range(n_cols):
            grad[i, j] = math.exp(scores[i, j] / tau - log_sum) * inv_scale
        grad[i, labels[i]] -= 1.0 * inv_scale


def softmax_xent_rows(scores: np.ndarray, labels: np.ndarray, tau: float):
    loss_rows = np.empty(scores.shape[0], dtype=np.float64)
    grad = np.empty_like(scores)
    _softmax_xent_rows(scores, labels, tau, loss_rows, grad)
    return loss_rows, grad


@njit(cache=True, parallel=True)
def _sgd_flat(param, velocity, grad, lr, momentum):
    for i in prange(param.shape[0]):
        v = momentum * velocity[i] + grad[i]
        velocity[i] = v
        param[i] -= lr * v


def sgd_momentum_update(
    param: np.ndarray,
    velocity: np.ndarray,
    grad: np.ndarray,
    lr: float,
    momentum: float,
) -> None:
    # reshape(-1) must alias param/velocity for the in-place update to stick
    if not (param.flags.c_contiguous and velocity.flags.c_contiguous):
        raise ValueError("sgd_momentum_update requires C-contiguous param and velocity")
    _sgd_flat(param.reshape(-1), velocity.reshape(-1), np.ascontiguousarray(grad).reshape(-1), lr, momentum)
