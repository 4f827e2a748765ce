"""Cosine-similarity matrices between embedding sets and their convex fusion.

The two similarity branches (image vs class text, projected image-text
vs class text) are fused as ``alpha * image_branch + (1 - alpha) *
image_text_branch``. Everything is exact dense float64; batch and
catalog sizes stay small enough that approximate search would be noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimMismatchError, ShapeMismatchError, ZeroNormRowError


@dataclass(frozen=True)
class FusionConfig:
    """Fusion weight alpha in [0, 1] and softmax temperature tau > 0."""

    alpha: float = 0.6
    tau: float = 0.1

    def __post_init__(self) -> None:
        if not (np.isfinite(self.alpha) and 0.0 <= self.alpha <= 1.0):
            raise ConfigError(f"alpha must be in [0, 1], got {self.alpha}")
        if not (np.isfinite(self.tau) and self.tau > 0.0):
            raise ConfigError(f"tau must be > 0, got {self.tau}")


def row_norms(mat: np.ndarray, name: str) -> np.ndarray:
    """l2 norm of every row; a zero-norm row is a hard error, not an epsilon."""
    norms = np.linalg.norm(mat, axis=1)
    zero = np.nonzero(norms == 0.0)[0]
    if zero.size:
        raise ZeroNormRowError(f"{name}: row {int(zero[0])} has zero l2 norm")
    return norms


def cosine_similarity_matrix(
    rows: np.ndarray,
    references: np.ndarray,
    names: tuple[str, str] = ("rows", "references"),
) -> np.ndarray:
    """Pairwise cosine similarities, shape (len(rows), len(references))."""
    rows = np.asarray(rows, dtype=np.float64)
    references = np.asarray(references, dtype=np.float64)
    if rows.ndim != 2 or references.ndim != 2 or rows.shape[1] != references.shape[1]:
        raise DimMismatchError(
            f"{names[0]} {rows.shape} and {names[1]} {references.shape} must be 2-d with equal dim"
        )
    rows_unit = rows / row_norms(rows, names[0])[:, None]
    refs_unit = references / row_norms(references, names[1])[:, None]
    return rows_unit @ refs_unit.T


def cosine_similarity_gradient(
    rows: np.ndarray,
    references: np.ndarray,
    sims: np.ndarray,
    grad_sims: np.ndarray,
) -> np.ndarray:
    """Gradient of sum(grad_sims * sims) with respect to ``rows``.

    ``sims`` must be the cosine matrix of (rows, references); the
    references are treated as constants.
    """
    norms_r = row_norms(rows, "rows")
    refs_unit = references / row_norms(references, "references")[:, None]
    rows_unit = rows / norms_r[:, None]
    # d sims_ij / d rows_i = (refs_unit_j - sims_ij * rows_unit_i) / |rows_i|
    direct = grad_sims @ refs_unit
    radial = (grad_sims * sims).sum(axis=1)[:, None] * rows_unit
    return (direct - radial) / norms_r[:, None]


def fuse(image_sims: np.ndarray, image_text_sims: np.ndarray, config: FusionConfig) -> np.ndarray:
    """Convex combination alpha * image_sims + (1 - alpha) * image_text_sims."""
    if image_sims.shape != image_text_sims.shape:
        raise ShapeMismatchError(
            f"similarity matrices differ in shape: {image_sims.shape} vs {image_text_sims.shape}"
        )
    return config.alpha * image_sims + (1.0 - config.alpha) * image_text_sims
