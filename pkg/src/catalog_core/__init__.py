"""Multi-modal embedding fusion and contrastive projection-head training.

Operates on precomputed embedding bundles: image embeddings, projected
image-text embeddings, and per-class prompt stacks. See the README for
the bundle format and the CLI walkthrough.
"""

from .align import FusionConfig, cosine_similarity_matrix, fuse
from .backend import backend_name
from .bundle import (
    DatasetSplit,
    EmbeddingBundle,
    load_bundle,
    save_bundle,
    validate_bundle,
)
from .compose import (
    BASE_PROMPT,
    compose_class_embeddings,
    list_reference_prompts,
    load_reference_templates,
)
from .evaluate import (
    AblationSpec,
    EvalReport,
    PromptSelection,
    alpha_sweep,
    build_ablation_config,
    classify,
    evaluate_split,
    score,
)
from .losses import LossResult, contrastive_loss, supervised_contrastive_loss
from .mlp import MlpParams, backward, forward, gelu, init_params
from .synth import SynthSpec, generate
from .train import (
    PRESETS,
    Checkpoint,
    TrainConfig,
    load_checkpoint,
    save_checkpoint,
    sgd_momentum_step,
    train,
    train_epoch,
)

__version__ = "0.1.0"

__all__ = [
    "AblationSpec",
    "BASE_PROMPT",
    "Checkpoint",
    "DatasetSplit",
    "EmbeddingBundle",
    "EvalReport",
    "FusionConfig",
    "LossResult",
    "MlpParams",
    "PRESETS",
    "PromptSelection",
    "SynthSpec",
    "TrainConfig",
    "alpha_sweep",
    "backend_name",
    "backward",
    "build_ablation_config",
    "classify",
    "compose_class_embeddings",
    "contrastive_loss",
    "cosine_similarity_matrix",
    "evaluate_split",
    "forward",
    "fuse",
    "gelu",
    "generate",
    "init_params",
    "list_reference_prompts",
    "load_bundle",
    "load_checkpoint",
    "load_reference_templates",
    "save_bundle",
    "save_checkpoint",
    "score",
    "sgd_momentum_step",
    "supervised_contrastive_loss",
    "train",
    "train_epoch",
    "validate_bundle",
]
