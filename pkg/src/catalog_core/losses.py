"""Temperature-scaled contrastive losses over fused similarity matrices.

Both losses take the fused similarity matrix (batch x classes), the
true class index of every batch item, and the temperature. They return
the scalar loss and its exact gradient with respect to the matrix, so
the trainer can push the gradient back through the fusion and the
projection head.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import backend
from .errors import InvalidTauError, LabelOutOfRangeError, ShapeMismatchError


@dataclass(frozen=True)
class LossResult:
    loss: float
    grad: np.ndarray  # d(loss)/d(scores), same shape as the input matrix


def _check_inputs(scores: np.ndarray, labels: np.ndarray, tau: float) -> tuple[np.ndarray, np.ndarray]:
    scores = np.ascontiguousarray(scores, dtype=np.float64)
    if scores.ndim != 2 or scores.shape[0] < 1 or scores.shape[1] < 1:
        raise ShapeMismatchError(f"scores must be a non-empty 2-d matrix, got shape {scores.shape}")
    if not (np.isfinite(tau) and tau > 0.0):
        raise InvalidTauError(f"tau must be a positive finite real, got {tau}")
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (scores.shape[0],):
        raise LabelOutOfRangeError(
            f"labels shape {labels.shape} does not match batch size {scores.shape[0]}"
        )
    if labels.size and (labels.min() < 0 or labels.max() >= scores.shape[1]):
        bad = int(np.argmax((labels < 0) | (labels >= scores.shape[1])))
        raise LabelOutOfRangeError(
            f"label {int(labels[bad])} at index {bad} out of range for {scores.shape[1]} classes"
        )
    return scores, labels


def contrastive_loss(scores: np.ndarray, labels, tau: float) -> LossResult:
    """Mean negative log-probability of the true class.

    Softmax runs over all classes of the catalog:

        loss = mean_i -log( exp(s[i, k_i]/tau) / sum_j exp(s[i, j]/tau) )

    computed with the max-shift so it stays finite for any score scale.
    grad = (softmax(scores/tau) - onehot(labels)) / (tau * batch).
    """
    scores, labels = _check_inputs(scores, labels, tau)
    loss_rows, grad = backend.kernels().softmax_xent_rows(scores, labels, float(tau))
    return LossResult(loss=float(np.mean(loss_rows)), grad=grad)


def supervised_contrastive_loss(scores: np.ndarray, labels, tau: float) -> LossResult:
    """Variant whose denominator covers only the classes present in the batch.

    Negative pairs are restricted to in-batch classes: per item the
    softmax normalizer sums over the distinct labels of the mini-batch
    instead of the whole catalog. With every class present in the batch
    this coincides with :func:`contrastive_loss`; with a single-class
    batch the loss is exactly zero.
    """
    scores, labels = _check_inputs(scores, labels, tau)
    n_rows = scores.shape[0]
    present = np.unique(labels)

    z = scores[:, present] / tau
    row_max = z.max(axis=1, keepdims=True)
    log_sum = row_max + np.log(np.exp(z - row_max).sum(axis=1, keepdims=True))
    true_scores = scores[np.arange(n_rows), labels] / tau
    loss = float(np.mean(log_sum[:, 0] - true_scores))

    grad = np.zeros_like(scores)
    grad[:, present] = np.exp(z - log_sum)
    grad[np.arange(n_rows), labels] -= 1.0
    grad /= tau * n_rows
    return LossResult(loss=loss, grad=grad)
