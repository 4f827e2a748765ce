"""Mini-batch SGD-with-momentum training of the projection head.

Per batch: project the image-text embeddings, compute both cosine
branches against the composed class-text matrix, fuse, take the
contrastive loss, and push the gradient back through the image-text
branch only (the image branch has no trainable parameters, so the
fusion passes ``1 - alpha`` of the gradient to it). The class-text
matrix and the image-branch similarities are computed once per run;
prompts and image embeddings are frozen.

Everything is deterministic given (bundle, config): shuffling derives
from (seed, epoch) and dropout masks from (seed, epoch, batch), so two
runs produce byte-identical checkpoints under any thread setting.
"""

from __future__ import annotations

import json
import os
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import backend
from .align import FusionConfig, cosine_similarity_gradient, cosine_similarity_matrix, fuse
from .bundle import EmbeddingBundle
from .compose import compose_class_embeddings
from .errors import (
    ConfigError,
    IoError,
    MissingSplitError,
    SchemaError,
    ShapeMismatchError,
)
from .evaluate import evaluate_split
from .losses import contrastive_loss
from .mlp import LayerTensors, MlpParams, backward, forward, init_params, zeros_like_params


@dataclass(frozen=True)
class TrainConfig:
    """All knobs of a training run; every field participates in determinism."""

    alpha: float = 0.6
    tau: float = 0.1
    learning_rate: float = 0.08
    momentum: float = 0.8
    batch_size: int = 48
    epochs: int = 8
    dropout_rate: float = 0.27
    patience: int = 0  # 0 disables early stopping
    seed: int = 0
    mlp_hidden_dims: tuple[int, ...] = (1045,)

    def __post_init__(self) -> None:
        checks = [
            (0.0 <= self.alpha <= 1.0, f"alpha must be in [0, 1], got {self.alpha}"),
            (self.tau > 0.0, f"tau must be > 0, got {self.tau}"),
            (self.learning_rate > 0.0, f"learning_rate must be > 0, got {self.learning_rate}"),
            (0.0 <= self.momentum < 1.0, f"momentum must be in [0, 1), got {self.momentum}"),
            (self.batch_size >= 1, f"batch_size must be >= 1, got {self.batch_size}"),
            (self.epochs >= 0, f"epochs must be >= 0, got {self.epochs}"),
            (0.0 <= self.dropout_rate < 1.0, f"dropout_rate must be in [0, 1), got {self.dropout_rate}"),
            (self.patience >= 0, f"patience must be >= 0, got {self.patience}"),
            (self.seed >= 0, f"seed must be >= 0, got {self.seed}"),
            (all(d >= 1 for d in self.mlp_hidden_dims), f"hidden dims must be >= 1, got {self.mlp_hidden_dims}"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)
        object.__setattr__(self, "mlp_hidden_dims", tuple(self.mlp_hidden_dims))

    def fusion(self) -> FusionConfig:
        return FusionConfig(alpha=self.alpha, tau=self.tau)


# Shipped presets. `out_of_domain` is the cross-dataset recipe; the two
# in-domain presets carry only the projection-head side of their runs.
PRESETS: dict[str, TrainConfig] = {
    "out_of_domain": TrainConfig(
        alpha=0.6, tau=0.1, learning_rate=0.08, momentum=0.8, batch_size=48,
        epochs=8, dropout_rate=0.27, patience=0, mlp_hidden_dims=(1045,),
    ),
    "serengeti": TrainConfig(
        alpha=0.6, tau=0.1, learning_rate=1e-3, momentum=0.8, batch_size=100,
        epochs=86, dropout_rate=0.4, patience=20, mlp_hidden_dims=(1743, 1743, 1743, 1743),
    ),
    "terra": TrainConfig(
        alpha=0.6, tau=0.1, learning_rate=1e-4, momentum=0.8, batch_size=100,
        epochs=86, dropout_rate=0.5, patience=20, mlp_hidden_dims=(1045,),
    ),
}


@dataclass
class Checkpoint:
    """Best-epoch parameters plus the full training trajectory."""

    params: MlpParams
    velocity: LayerTensors
    config: TrainConfig
    epoch: int  # epochs actually run
    best_val_accuracy: float
    history: list[tuple[float, float]] = field(default_factory=list)  # (train_loss, val_acc)


def sgd_momentum_step(
    params: MlpParams,
    grads: LayerTensors,
    velocity: LayerTensors,
    lr: float,
    momentum: float,
) -> tuple[MlpParams, LayerTensors]:
    """Classical momentum update, in place: v <- m*v + g; p <- p - lr*v."""
    kern = backend.kernels()
    for p, v, g in zip(
        params.weights + params.biases,
        velocity.weights + velocity.biases,
        grads.weights + grads.biases,
    ):
        if p.shape != v.shape or p.shape != g.shape:
            raise ShapeMismatchError(f"param {p.shape}, velocity {v.shape}, grad {g.shape} must agree")
        kern.sgd_momentum_update(p, v, g, lr, momentum)
    return params, velocity


def _batch_seed(seed: int, epoch_index: int, batch_index: int) -> int:
    return int(np.random.SeedSequence((seed, epoch_index, batch_index)).generate_state(1)[0])


def train_epoch(
    bundle: EmbeddingBundle,
    split: str,
    params: MlpParams,
    velocity: LayerTensors,
    config: TrainConfig,
    epoch_index: int,
    *,
    class_text: np.ndarray | None = None,
    image_sims_full: np.ndarray | None = None,
) -> tuple[MlpParams, LayerTensors, float]:
    """One shuffled pass over ``split``; returns the item-weighted mean loss."""
    if split not in bundle.splits:
        raise MissingSplitError(f"bundle has no split {split!r}")
    if class_text is None:
        class_text = compose_class_embeddings(bundle.class_prompts)
    embeddings = bundle.image_text[split]
    labels = bundle.splits[split].labels
    if image_sims_full is None:
        image_sims_full = cosine_similarity_matrix(
            bundle.image[split], class_text, names=(f"image[{split}]", "class_text")
        )

    fusion = config.fusion()
    n_items = embeddings.shape[0]
    order = np.random.default_rng(np.random.SeedSequence((config.seed, epoch_index))).permutation(n_items)

    total_loss = 0.0
    for batch_index, start in enumerate(range(0, n_items, config.batch_size)):
        rows = order[start : start + config.batch_size]
        batch = np.ascontiguousarray(embeddings[rows])
        batch_labels = labels[rows]

        projected, cache = forward(
            batch, params, mode="train", seed=_batch_seed(config.seed, epoch_index, batch_index)
        )
        image_text_sims = cosine_similarity_matrix(
            projected, class_text, names=("projected batch", "class_text")
        )
        scores = fuse(image_sims_full[rows], image_text_sims, fusion)
        result = contrastive_loss(scores, batch_labels, config.tau)
        total_loss += result.loss * rows.size

        grad_image_text_sims = (1.0 - config.alpha) * result.grad
        grad_projected = cosine_similarity_gradient(
            projected, class_text, image_text_sims, grad_image_text_sims
        )
        grads, _ = backward(cache, params, grad_projected)
        sgd_momentum_step(params, grads, velocity, config.learning_rate, config.momentum)

    return params, velocity, total_loss / n_items if n_items else 0.0


def train(bundle: EmbeddingBundle, config: TrainConfig) -> Checkpoint:
    """Full training run with per-epoch validation and early stopping.

    Keeps the parameters (and optimizer state) of the epoch with the
    best validation top-1 accuracy, ties resolved toward the earlier
    epoch. The returned arrays are rounded to float32-representable
    values so a save/load round trip is bit-exact.
    """
    for required in ("train", "val"):
        if required not in bundle.splits:
            raise MissingSplitError(f"training requires a {required!r} split")

    class_text = compose_class_embeddings(bundle.class_prompts)
    image_sims_full = cosine_similarity_matrix(
        bundle.image["train"], class_text, names=("image[train]", "class_text")
    )

    layer_dims = [bundle.dim_image_text, *config.mlp_hidden_dims, bundle.dim_image]
    params = init_params(layer_dims, dropout_rate=config.dropout_rate, seed=config.seed)
    velocity = zeros_like_params(params)

    best_accuracy = -1.0
    best_params = params.copy()
    best_velocity = velocity.copy()
    history: list[tuple[float, float]] = []
    stall = 0

    for epoch_index in range(config.epochs):
        params, velocity, mean_loss = train_epoch(
            bundle, "train", params, velocity, config, epoch_index,
            class_text=class_text, image_sims_full=image_sims_full,
        )
        val_accuracy = evaluate_split(
            bundle, "val", params, config.fusion(), class_text=class_text
        ).top1_accuracy
        history.append((mean_loss, val_accuracy))

        if val_accuracy > best_accuracy:
            best_accuracy = val_accuracy
            best_params = params.copy()
            best_velocity = velocity.copy()
            stall = 0
        else:
            stall += 1
            if config.patience > 0 and stall >= config.patience:
                break

    return Checkpoint(
        params=_quantize_params(best_params),
        velocity=_quantize_tensors(best_velocity),
        config=config,
        epoch=len(history),
        best_val_accuracy=max((acc for _, acc in history), default=0.0),
        history=history,
    )


def _quantize_params(params: MlpParams) -> MlpParams:
    # storage is float32; rounding here makes the in-memory checkpoint
    # identical to what a save/load cycle would return
    return MlpParams(
        layer_dims=list(params.layer_dims),
        weights=[_f32_exact(w) for w in params.weights],
        biases=[_f32_exact(b) for b in params.biases],
        dropout_rate=params.dropout_rate,
    )


def _quantize_tensors(tensors: LayerTensors) -> LayerTensors:
    return LayerTensors(
        weights=[_f32_exact(w) for w in tensors.weights],
        biases=[_f32_exact(b) for b in tensors.biases],
    )


def _f32_exact(arr: np.ndarray) -> np.ndarray:
    return arr.astype(np.float32).astype(np.float64)


# ---------------------------------------------------------------------------
# checkpoint persistence
#
# <dir>/checkpoint.json   config, layer dims, epoch, history, blob CRCs
# <dir>/params.f32        little-endian float32, per layer: weights then bias
# <dir>/velocity.f32      same layout as params.f32

CHECKPOINT_NAME = "checkpoint.json"
PARAMS_BLOB = "params.f32"
VELOCITY_BLOB = "velocity.f32"


def save_checkpoint(checkpoint: Checkpoint, path: str | Path) -> None:
    """Write the checkpoint directory; files land via temp + atomic rename."""
    root = Path(path)
    params_bytes = _pack_tensors(checkpoint.params.weights, checkpoint.params.biases)
    velocity_bytes = _pack_tensors(checkpoint.velocity.weights, checkpoint.velocity.biases)
    doc = {
        "format_version": 1,
        "config": asdict(checkpoint.config),
        "layer_dims": list(checkpoint.params.layer_dims),
        "epoch": checkpoint.epoch,
        "best_val_accuracy": checkpoint.best_val_accuracy,
        "history": [[loss, acc] for loss, acc in checkpoint.history],
        "crc32": {
            "params": zlib.crc32(params_bytes),
            "velocity": zlib.crc32(velocity_bytes),
        },
    }
    doc["config"]["mlp_hidden_dims"] = list(checkpoint.config.mlp_hidden_dims)
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    try:
        root.mkdir(parents=True, exist_ok=True)
        _atomic_write(root / PARAMS_BLOB, params_bytes)
        _atomic_write(root / VELOCITY_BLOB, velocity_bytes)
        _atomic_write(root / CHECKPOINT_NAME, text.encode("utf-8"))
    except OSError as exc:
        raise IoError(f"cannot write checkpoint to {root}: {exc}") from exc


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(f".{path.name}.tmp.{os.getpid()}")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def _pack_tensors(weights: list[np.ndarray], biases: list[np.ndarray]) -> bytes:
    chunks = []
    for w, b in zip(weights, biases):
        chunks.append(np.ascontiguousarray(w, dtype="<f4").tobytes())
        chunks.append(np.ascontiguousarray(b, dtype="<f4").tobytes())
    return b"".join(chunks)


def load_checkpoint(path: str | Path) -> Checkpoint:
    """Read a checkpoint directory back; bit-exact inverse of save."""
    root = Path(path)
    doc_path = root / CHECKPOINT_NAME
    if not doc_path.is_file():
        raise SchemaError(f"{doc_path} not found")
    try:
        doc = json.loads(doc_path.read_text("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise SchemaError(f"{CHECKPOINT_NAME}: not valid JSON ({exc})") from exc

    for key in ("format_version", "config", "layer_dims", "epoch", "best_val_accuracy", "history", "crc32"):
        if key not in doc:
            raise SchemaError(f"{CHECKPOINT_NAME}: missing key {key!r}")
    if doc["format_version"] != 1:
        raise SchemaError(f"{CHECKPOINT_NAME}: unsupported format_version {doc['format_version']!r}")
    try:
        config = TrainConfig(**{**doc["config"], "mlp_hidden_dims": tuple(doc["config"]["mlp_hidden_dims"])})
    except (TypeError, KeyError, ConfigError) as exc:
        raise SchemaError(f"{CHECKPOINT_NAME}: bad config ({exc})") from exc

    layer_dims = doc["layer_dims"]
    if (
        not isinstance(layer_dims, list)
        or len(layer_dims) < 2
        or any(not isinstance(d, int) or d < 1 for d in layer_dims)
    ):
        raise SchemaError(f"{CHECKPOINT_NAME}: bad layer_dims {layer_dims!r}")

    params_w, params_b = _unpack_tensors(root / PARAMS_BLOB, layer_dims, doc["crc32"].get("params"))
    vel_w, vel_b = _unpack_tensors(root / VELOCITY_BLOB, layer_dims, doc["crc32"].get("velocity"))

    history = [(float(loss), float(acc)) for loss, acc in doc["history"]]
    best = float(doc["best_val_accuracy"])
    if history and best != max(acc for _, acc in history):
        raise SchemaError(
            f"{CHECKPOINT_NAME}: best_val_accuracy {best} is not the max of history"
        )

    return Checkpoint(
        params=MlpParams(
            layer_dims=list(layer_dims),
            weights=params_w,
            biases=params_b,
            dropout_rate=config.dropout_rate,
        ),
        velocity=LayerTensors(weights=vel_w, biases=vel_b),
        config=config,
        epoch=int(doc["epoch"]),
        best_val_accuracy=best,
        history=history,
    )


def _unpack_tensors(path: Path, layer_dims: list[int], crc: int | None):
    if not path.is_file():
        raise SchemaError(f"{path} not found")
    raw = path.read_bytes()
    if crc is not None and zlib.crc32(raw) != crc:
        raise SchemaError(f"{path.name}: CRC-32 mismatch (file corrupt?)")
    expected = 4 * sum(din * dout + dout for din, dout in zip(layer_dims[:-1], layer_dims[1:]))
    if len(raw) != expected:
        raise SchemaError(f"{path.name}: expected {expected} bytes for dims {layer_dims}, got {len(raw)}")
    weights = []
    biases = []
    offset = 0
    for din, dout in zip(layer_dims[:-1], layer_dims[1:]):
        n = din * dout
        weights.append(
            np.frombuffer(raw, dtype="<f4", count=n, offset=offset).astype(np.float64).reshape(din, dout)
        )
        offset += 4 * n
        biases.append(np.frombuffer(raw, dtype="<f4", count=dout, offset=offset).astype(np.float64))
        offset += 4 * dout
    return weights, biases
