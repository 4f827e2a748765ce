"""Class-text composition: one embedding per class from its prompt stack.

Each class carries M prompt embeddings (camera-trap templates plus
language-model description sentences, all encoded upstream). The class
embedding is their centroid. Prompt text itself is opaque here; the
shipped template list exists so extraction tooling and this package
agree on the reference prompt set.
"""

from __future__ import annotations

from importlib import resources

import numpy as np

from .errors import EmptyBlockError, EmptyClassNameError

# Single generic prompt used when the camera-trap templates are disabled.
BASE_PROMPT = "A photo of a {}"

_templates_cache: list[str] | None = None


def load_reference_templates() -> list[str]:
    """The 20 shipped camera-trap templates, '{}' as the name slot."""
    global _templates_cache
    if _templates_cache is None:
        text = resources.files("catalog_core").joinpath("assets/templates.txt").read_text("utf-8")
        _templates_cache = [line for line in text.split("\n") if line.strip()]
    return list(_templates_cache)


def list_reference_prompts(class_name: str, description_sentences: list[str]) -> list[str]:
    """Substituted template prompts followed by the description sentences.

    Returns 20 + len(description_sentences) strings; each description
    sentence counts as one prompt of its own.
    """
    if not class_name:
        raise EmptyClassNameError("class_name must be non-empty")
    prompts = [t.replace("{}", class_name) for t in load_reference_templates()]
    prompts.extend(description_sentences)
    return prompts


def compose_class_embeddings(block: np.ndarray) -> np.ndarray:
    """Average the M prompt embeddings of every class.

    ``block`` has shape (n_classes, M, dim); the result row c is the
    arithmetic mean over axis 1, shape (n_classes, dim).
    """
    block = np.asarray(block, dtype=np.float64)
    if block.ndim != 3:
        raise EmptyBlockError(f"prompt block must be 3-d (classes x prompts x dim), got shape {block.shape}")
    if block.shape[0] == 0 or block.shape[1] == 0:
        raise EmptyBlockError(f"prompt block has no prompts to average (shape {block.shape})")
    return block.mean(axis=1)
