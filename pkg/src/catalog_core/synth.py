"""Deterministic synthetic embedding bundles for tests and benchmarks.

Each class gets a random unit anchor. Image embeddings are noisy copies
of their class anchor; prompt embeddings are independent noisy copies
(so the class-text centroid hugs the anchor); image-text embeddings are
a fixed well-conditioned linear map of the image embedding into the
other dimension plus noise, which gives the projection head a genuinely
learnable signal. The test split is additionally rotated inside a
random 2-plane to mimic deployment-time distribution shift.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bundle import DatasetSplit, EmbeddingBundle
from .errors import InvalidSpecError


@dataclass(frozen=True)
class SynthSpec:
    n_classes: int = 8
    n_train: int = 2000
    n_val: int = 500
    n_test: int = 500
    dim_image: int = 32
    dim_image_text: int = 48
    prompts_per_class: int = 6
    # anchors are rejection-sampled until every pairwise cosine is
    # below 1 - cluster_separation
    cluster_separation: float = 0.5
    noise_sigma: float = 0.1
    domain_shift_angle: float = 0.25  # radians, applied to the test split
    seed: int = 0

    def __post_init__(self) -> None:
        counts = {
            "n_classes": self.n_classes,
            "n_train": self.n_train,
            "n_val": self.n_val,
            "n_test": self.n_test,
            "dim_image_text": self.dim_image_text,
            "prompts_per_class": self.prompts_per_class,
        }
        for name, value in counts.items():
            if value < 1:
                raise InvalidSpecError(f"{name} must be >= 1, got {value}")
        if self.dim_image < 2:
            raise InvalidSpecError(f"dim_image must be >= 2, got {self.dim_image}")
        if not 0.0 < self.cluster_separation <= 2.0:
            raise InvalidSpecError(f"cluster_separation must be in (0, 2], got {self.cluster_separation}")
        if self.noise_sigma < 0.0:
            raise InvalidSpecError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if self.seed < 0:
            raise InvalidSpecError(f"seed must be >= 0, got {self.seed}")


_ANCHOR_ATTEMPTS = 10_000


def generate(spec: SynthSpec) -> EmbeddingBundle:
    """Build a bundle with planted labels; byte-identical for equal specs."""
    rng = np.random.default_rng(spec.seed)

    anchors = _sample_anchors(rng, spec)
    # fixed map image-dim -> image-text-dim with orthonormal rows
    basis, _ = np.linalg.qr(rng.normal(size=(spec.dim_image_text, spec.dim_image)))
    image_to_text = basis.T
    plane_u, plane_v = _orthonormal_pair(rng, spec.dim_image)

    # prompt block: every row is anchor + independent noise
    class_prompts = anchors[:, None, :] + spec.noise_sigma * rng.normal(
        size=(spec.n_classes, spec.prompts_per_class, spec.dim_image)
    )

    splits: dict[str, DatasetSplit] = {}
    image: dict[str, np.ndarray] = {}
    image_text: dict[str, np.ndarray] = {}
    for split_name, n_items in (("train", spec.n_train), ("val", spec.n_val), ("test", spec.n_test)):
        labels = np.arange(n_items, dtype=np.int64) % spec.n_classes
        labels = labels[rng.permutation(n_items)]
        image_split = anchors[labels] + spec.noise_sigma * rng.normal(size=(n_items, spec.dim_image))
        if split_name == "test" and spec.domain_shift_angle != 0.0:
            image_split = _rotate_in_plane(image_split, plane_u, plane_v, spec.domain_shift_angle)
        image_text_split = image_split @ image_to_text + spec.noise_sigma * rng.normal(
            size=(n_items, spec.dim_image_text)
        )
        splits[split_name] = DatasetSplit(
            name=split_name,
            item_ids=[f"{split_name}_{i:06d}" for i in range(n_items)],
            labels=labels,
        )
        image[split_name] = _f32_exact(image_split)
        image_text[split_name] = _f32_exact(image_text_split)

    n_templates = max((spec.prompts_per_class - 1) // 2, 0) if spec.prompts_per_class > 1 else 0
    n_llm = spec.prompts_per_class - 1 - n_templates
    meta = {
        "generator": "synthkit",
        "seed": str(spec.seed),
        "noise_sigma": repr(spec.noise_sigma),
        "cluster_separation": repr(spec.cluster_separation),
        "domain_shift_angle": repr(spec.domain_shift_angle),
        "prompt_rows.base": "1",
        "prompt_rows.templates": str(n_templates),
        "prompt_rows.llm": str(n_llm),
    }
    return EmbeddingBundle(
        classes=[f"species_{i:02d}" for i in range(spec.n_classes)],
        splits=splits,
        image=image,
        image_text=image_text,
        class_prompts=_f32_exact(class_prompts),
        meta=meta,
    )


def _sample_anchors(rng: np.random.Generator, spec: SynthSpec) -> np.ndarray:
    max_cosine = 1.0 - spec.cluster_separation
    anchors: list[np.ndarray] = []
    for _ in range(_ANCHOR_ATTEMPTS):
        candidate = rng.normal(size=spec.dim_image)
        candidate /= np.linalg.norm(candidate)
        if all(float(np.dot(candidate, a)) < max_cosine for a in anchors):
            anchors.append(candidate)
            if len(anchors) == spec.n_classes:
                return np.stack(anchors)
    raise InvalidSpecError(
        f"could not place {spec.n_classes} anchors with pairwise cosine < {max_cosine} "
        f"in {spec.dim_image} dims after {_ANCHOR_ATTEMPTS} draws"
    )


def _orthonormal_pair(rng: np.random.Generator, dim: int) -> tuple[np.ndarray, np.ndarray]:
    u = rng.normal(size=dim)
    u /= np.linalg.norm(u)
    v = rng.normal(size=dim)
    v -= np.dot(v, u) * u
    v /= np.linalg.norm(v)
    return u, v


def _rotate_in_plane(rows: np.ndarray, u: np.ndarray, v: np.ndarray, angle: float) -> np.ndarray:
    """Rotate row vectors by ``angle`` inside span(u, v), identity elsewhere."""
    coeff_u = rows @ u
    coeff_v = rows @ v
    cos_a, sin_a = np.cos(angle), np.sin(angle)
    rotated_u = cos_a * coeff_u - sin_a * coeff_v
    rotated_v = sin_a * coeff_u + cos_a * coeff_v
    return rows + np.outer(rotated_u - coeff_u, u) + np.outer(rotated_v - coeff_v, v)


def _f32_exact(arr: np.ndarray) -> np.ndarray:
    # bundles are stored as float32; quantize now so save/load is identity
    return arr.astype(np.float32).astype(np.float64)
