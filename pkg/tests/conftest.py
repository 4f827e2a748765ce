"""Shared fixtures and independent oracles for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from catalog_core.bundle import DatasetSplit, EmbeddingBundle
from catalog_core.synth import SynthSpec, generate


def finite_difference(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of scalar f at x, one entry at a time."""
    grad = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + h
        up = f()
        flat[i] = original - h
        down = f()
        flat[i] = original
        out[i] = (up - down) / (2.0 * h)
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-4) -> float:
    """Worst per-entry relative error with a floor against vanishing gradients."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


def brute_force_softmax_xent(scores: np.ndarray, labels: np.ndarray, tau: float) -> float:
    """Naive mean softmax cross-entropy, no max-shift; the loss oracle."""
    total = 0.0
    for i in range(scores.shape[0]):
        exps = [np.exp(scores[i, j] / tau) for j in range(scores.shape[1])]
        total += -np.log(exps[int(labels[i])] / sum(exps))
    return total / scores.shape[0]


def tiny_bundle(
    n_classes: int = 3,
    n_items: int = 6,
    dim_image: int = 4,
    dim_image_text: int = 5,
    n_prompts: int = 2,
    seed: int = 0,
    splits: tuple[str, ...] = ("train",),
) -> EmbeddingBundle:
    """Small hand-rolled bundle; values already float32-exact."""
    rng = np.random.default_rng(seed)

    def f32(a):
        return a.astype(np.float32).astype(np.float64)

    split_map = {}
    image = {}
    image_text = {}
    for name in splits:
        labels = rng.integers(0, n_classes, size=n_items).astype(np.int64)
        split_map[name] = DatasetSplit(
            name=name,
            item_ids=[f"{name}-{i}" for i in range(n_items)],
            labels=labels,
        )
        image[name] = f32(rng.normal(size=(n_items, dim_image)))
        image_text[name] = f32(rng.normal(size=(n_items, dim_image_text)))
    return EmbeddingBundle(
        classes=[f"class_{i}" for i in range(n_classes)],
        splits=split_map,
        image=image,
        image_text=image_text,
        class_prompts=f32(rng.normal(size=(n_classes, n_prompts, dim_image))),
        meta={"prompt_rows.base": "1", "prompt_rows.templates": str(max(n_prompts - 1, 0)), "prompt_rows.llm": "0"},
    )


@pytest.fixture(scope="session")
def small_synth_bundle():
    """Separable synthetic bundle small enough for fast training tests."""
    return generate(SynthSpec(n_train=240, n_val=80, n_test=80, seed=7))
