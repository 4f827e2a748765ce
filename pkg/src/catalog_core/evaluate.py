"""Zero-shot classification, accuracy reports, alpha sweeps, and ablations.

Prediction is always the argmax over classes of the fused similarity
matrix, with ties broken toward the lowest class index. Evaluation uses
the eval-mode forward pass (no dropout) regardless of how a checkpoint
was trained.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .align import FusionConfig, cosine_similarity_matrix, fuse
from .bundle import EmbeddingBundle
from .compose import compose_class_embeddings
from .errors import (
    AllBranchesDisabledError,
    ConfigError,
    LengthMismatchError,
    MissingParamsError,
    MissingSplitError,
)
from .mlp import MlpParams, forward


@dataclass
class EvalReport:
    """Top-1 accuracy plus per-class breakdown and confusion counts."""

    split_name: str
    n_items: int
    top1_accuracy: float
    per_class_accuracy: dict[str, float]
    confusion: np.ndarray  # (|C|, |C|) counts, true class x predicted class

    def to_json_dict(self) -> dict:
        return {
            "split_name": self.split_name,
            "n_items": self.n_items,
            "top1_accuracy": self.top1_accuracy,
            "per_class_accuracy": self.per_class_accuracy,
            "confusion": self.confusion.tolist(),
        }


@dataclass(frozen=True)
class AblationSpec:
    """Branch and prompt-set toggles for ablation runs."""

    use_clip_branch: bool = True
    use_vlm_branch: bool = True
    use_llm_descriptions: bool = True
    use_templates: bool = True


@dataclass(frozen=True)
class PromptSelection:
    """Which prompt rows feed the class-text centroid."""

    include_templates: bool = True
    include_llm: bool = True


# meta keys describing the row layout of the class-prompts block:
# base rows first, then template rows, then description rows.
PROMPT_LAYOUT_KEYS = ("prompt_rows.base", "prompt_rows.templates", "prompt_rows.llm")


def compose_class_text(bundle: EmbeddingBundle, selection: PromptSelection | None = None) -> np.ndarray:
    """Class-text matrix from the bundle's prompt block, optionally filtered."""
    block = bundle.class_prompts
    if selection is not None and selection != PromptSelection(True, True):
        block = block[:, prompt_row_indices(bundle, selection), :]
    return compose_class_embeddings(block)


def prompt_row_indices(bundle: EmbeddingBundle, selection: PromptSelection) -> np.ndarray:
    """Row indices of the prompt block matching ``selection``.

    Requires the bundle meta to declare the block layout
    (prompt_rows.base / .templates / .llm counts). When templates are
    off, the base-prompt rows stand in for them.
    """
    try:
        n_base, n_templates, n_llm = (int(bundle.meta[k]) for k in PROMPT_LAYOUT_KEYS)
    except (KeyError, ValueError) as exc:
        raise ConfigError(
            f"bundle meta lacks prompt layout keys {PROMPT_LAYOUT_KEYS}; "
            "prompt-set ablations need them"
        ) from exc
    if n_base + n_templates + n_llm != bundle.prompts_per_class:
        raise ConfigError(
            f"prompt layout {n_base}+{n_templates}+{n_llm} does not sum to M={bundle.prompts_per_class}"
        )
    indices: list[int] = []
    if selection.include_templates:
        indices.extend(range(n_base, n_base + n_templates))
    else:
        if n_base == 0:
            raise ConfigError("bundle has no base-prompt rows; cannot disable templates")
        indices.extend(range(0, n_base))
    if selection.include_llm:
        indices.extend(range(n_base + n_templates, n_base + n_templates + n_llm))
    if not indices:
        raise ConfigError("prompt selection excludes every row")
    return np.asarray(indices, dtype=np.int64)


def branch_similarities(
    bundle: EmbeddingBundle,
    split: str,
    params: MlpParams | None,
    *,
    need_image_text: bool,
    class_text: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray | None]:
    """Cosine similarities of both branches against the class-text matrix."""
    if split not in bundle.splits:
        raise MissingSplitError(f"bundle has no split {split!r} (has {sorted(bundle.splits)})")
    if class_text is None:
        class_text = compose_class_text(bundle)
    image_sims = cosine_similarity_matrix(bundle.image[split], class_text, names=(f"image[{split}]", "class_text"))
    image_text_sims = None
    if need_image_text:
        if params is None:
            raise MissingParamsError("projection parameters required whenever alpha < 1")
        projected, _ = forward(bundle.image_text[split], params, mode="eval")
        image_text_sims = cosine_similarity_matrix(
            projected, class_text, names=(f"projected image_text[{split}]", "class_text")
        )
    return image_sims, image_text_sims


def classify(
    bundle: EmbeddingBundle,
    split: str,
    params: MlpParams | None,
    config: FusionConfig,
    *,
    class_text: np.ndarray | None = None,
) -> np.ndarray:
    """Predicted class index per item of the split (ties -> lowest index)."""
    image_sims, image_text_sims = branch_similarities(
        bundle, split, params, need_image_text=config.alpha < 1.0, class_text=class_text
    )
    if image_text_sims is None:
        scores = image_sims
    else:
        scores = fuse(image_sims, image_text_sims, config)
    return np.argmax(scores, axis=1)


def score(predictions, labels, classes: list[str], split_name: str = "") -> EvalReport:
    """Build an EvalReport from predictions and true labels."""
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if predictions.shape != labels.shape:
        raise LengthMismatchError(
            f"{predictions.shape[0]} predictions vs {labels.shape[0]} labels"
        )
    n_classes = len(classes)
    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(confusion, (labels, predictions), 1)

    n_items = int(labels.shape[0])
    correct = int(np.trace(confusion))
    per_class: dict[str, float] = {}
    for idx, name in enumerate(classes):
        support = int(confusion[idx].sum())
        if support:
            per_class[name] = float(confusion[idx, idx] / support)
    return EvalReport(
        split_name=split_name,
        n_items=n_items,
        top1_accuracy=float(correct / n_items) if n_items else 0.0,
        per_class_accuracy=per_class,
        confusion=confusion,
    )


def evaluate_split(
    bundle: EmbeddingBundle,
    split: str,
    params: MlpParams | None,
    config: FusionConfig,
    *,
    class_text: np.ndarray | None = None,
) -> EvalReport:
    predictions = classify(bundle, split, params, config, class_text=class_text)
    return score(predictions, bundle.splits[split].labels, bundle.classes, split_name=split)


def alpha_sweep(
    bundle: EmbeddingBundle,
    split: str,
    params: MlpParams | None,
    tau: float,
    grid: list[float],
) -> list[tuple[float, float]]:
    """Top-1 accuracy at every alpha of the grid, same params throughout."""
    for alpha in grid:
        if not 0.0 <= alpha <= 1.0:
            raise ConfigError(f"grid value {alpha} outside [0, 1]")
    class_text = compose_class_text(bundle)
    need_image_text = any(alpha < 1.0 for alpha in grid)
    image_sims, image_text_sims = branch_similarities(
        bundle, split, params, need_image_text=need_image_text, class_text=class_text
    )
    labels = bundle.splits[split].labels
    results: list[tuple[float, float]] = []
    for alpha in grid:
        config = FusionConfig(alpha=alpha, tau=tau)
        if alpha == 1.0 or image_text_sims is None:
            scores = image_sims
        else:
            scores = fuse(image_sims, image_text_sims, config)
        predictions = np.argmax(scores, axis=1)
        report = score(predictions, labels, bundle.classes, split_name=split)
        results.append((float(alpha), report.top1_accuracy))
    return results


def build_ablation_config(
    spec: AblationSpec,
    default_alpha: float = 0.6,
    tau: float = 0.1,
) -> tuple[FusionConfig, PromptSelection]:
    """Map branch/prompt toggles to a fusion config and a prompt selection.

    Disabling the image branch forces alpha to 0; disabling the
    image-text branch forces alpha to 1; with both enabled alpha stays
    free at ``default_alpha``.
    """
    if not spec.use_clip_branch and not spec.use_vlm_branch:
        raise AllBranchesDisabledError("at least one similarity branch must stay enabled")
    if not spec.use_clip_branch:
        alpha = 0.0
    elif not spec.use_vlm_branch:
        alpha = 1.0
    else:
        alpha = default_alpha
    selection = PromptSelection(
        include_templates=spec.use_templates,
        include_llm=spec.use_llm_descriptions,
    )
    return FusionConfig(alpha=alpha, tau=tau), selection
