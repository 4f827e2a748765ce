"""Pure-numpy implementations of the hot kernels.

This is the fallback path used when numba is unavailable or when
``CATALOG_CORE_BACKEND=numpy`` is set. Semantics match
``_kernels_numba`` to within floating-point rounding.
"""

import numpy as np
from scipy.special import erf

NAME = "numpy"

_SQRT1_2 = 1.0 / np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu_forward(x: np.ndarray) -> np.ndarray:
    """Exact GELU: x * Phi(x) with Phi the standard-normal CDF."""
    return 0.5 * x * (1.0 + erf(x * _SQRT1_2))


def gelu_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """Chain grad_out through GELU: d/dx [x*Phi(x)] = Phi(x) + x*phi(x)."""
    cdf = 0.5 * (1.0 + erf(x * _SQRT1_2))
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return grad_out * (cdf + x * pdf)


def softmax_xent_rows(scores: np.ndarray, labels: np.ndarray, tau: float):
    """Per-row temperature-scaled softmax cross-entropy.

    Returns (loss_rows, grad) where loss_rows[i] is the negative
    log-probability of labels[i] under softmax(scores[i] / tau), and
    grad is d(mean loss)/d(scores), i.e. (softmax - onehot) / (tau * B).
    Uses the max-shift so arbitrarily large scores/tau stay finite.
    """
    n_rows = scores.shape[0]
    z = scores / tau
    row_max = z.max(axis=1, keepdims=True)
    shifted = z - row_max
    sum_exp = np.exp(shifted).sum(axis=1, keepdims=True)
    log_sum = row_max + np.log(sum_exp)
    loss_rows = log_sum[:, 0] - z[np.arange(n_rows), labels]
    grad = np.exp(z - log_sum)
    grad[np.arange(n_rows), labels] -= 1.0
    grad /= tau * n_rows
    return loss_rows, grad


def sgd_momentum_update(
    param: np.ndarray,
    velocity: np.ndarray,
    grad: np.ndarray,
    lr: float,
    momentum: float,
) -> None:
    """Classical momentum, in place: v <- m*v + g; p <- p - lr*v."""
    velocity *= momentum
    velocity += grad
    param -= lr * velocity
