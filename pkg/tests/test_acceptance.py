"""Acceptance suite.

One test per criterion, each printing a PASS line with its measured
numbers (run with ``pytest tests/test_acceptance.py -v -s``):

  A1  end-to-end gradient correctness against central finite differences
  A2  loss equivalence with a brute-force softmax cross-entropy oracle
  A3  synthetic end-to-end training quality and fusion-beats-image-only
  A4  fusion endpoint identities (alpha = 0 / 1 delete one branch)
  A5  byte-identical checkpoints across runs and thread settings
  A6  invariance properties, 100+ random instances each
  A7  on-disk format conformance and single-defect detection
"""

import json
import os
import subprocess
import sys
import time
from dataclasses import replace

import numpy as np
import pytest

from catalog_core.align import FusionConfig, cosine_similarity_gradient, cosine_similarity_matrix, fuse
from catalog_core.bundle import DatasetSplit, load_bundle, save_bundle, validate_bundle
from catalog_core.compose import compose_class_embeddings
from catalog_core.evaluate import classify, evaluate_split
from catalog_core.losses import contrastive_loss
from catalog_core.mlp import backward, forward, init_params
from catalog_core.synth import SynthSpec, generate
from catalog_core.train import PRESETS, train

from conftest import brute_force_softmax_xent, finite_difference, max_relative_error


def test_a1_end_to_end_gradient_correctness():
    """Analytic gradient of loss -> fusion -> cosine -> MLP vs finite differences."""
    started = time.perf_counter()
    rng = np.random.default_rng(101)
    worst = 0.0
    for instance in range(100):
        n_hidden = int(rng.integers(0, 3))
        dims = [int(rng.integers(2, 9)) for _ in range(n_hidden + 2)]
        batch = int(rng.integers(2, 7))
        n_classes = int(rng.integers(2, 7))
        alpha = float(rng.uniform(0.1, 0.9))
        tau = float(rng.uniform(0.08, 0.5))
        dropout = float(rng.uniform(0.1, 0.5)) if instance % 2 else 0.0
        mode = "train" if dropout else "eval"
        seed = int(rng.integers(0, 2**31))

        params = init_params(dims, dropout_rate=dropout, seed=int(rng.integers(0, 2**31)))
        for bias in params.biases:
            bias += rng.normal(scale=0.3, size=bias.shape)  # generic point: a fully
            # dropped hidden row with zero biases would zero the projection exactly
        inputs = rng.normal(size=(batch, dims[0]))
        image = rng.normal(size=(batch, dims[-1]))
        class_text = rng.normal(size=(n_classes, dims[-1]))
        labels = rng.integers(0, n_classes, size=batch)
        config = FusionConfig(alpha=alpha, tau=tau)
        image_sims = cosine_similarity_matrix(image, class_text)

        def loss_value() -> float:
            projected, _ = forward(inputs, params, mode=mode, seed=seed)
            sims = cosine_similarity_matrix(projected, class_text)
            return contrastive_loss(fuse(image_sims, sims, config), labels, tau).loss

        projected, cache = forward(inputs, params, mode=mode, seed=seed)
        sims = cosine_similarity_matrix(projected, class_text)
        result = contrastive_loss(fuse(image_sims, sims, config), labels, tau)
        grad_projected = cosine_similarity_gradient(projected, class_text, sims, (1.0 - alpha) * result.grad)
        grads, _ = backward(cache, params, grad_projected)

        for layer in range(len(params.weights)):
            for analytic, tensor in ((grads.weights[layer], params.weights[layer]),
                                     (grads.biases[layer], params.biases[layer])):
                numeric = finite_difference(loss_value, tensor)
                worst = max(worst, max_relative_error(analytic, numeric))
        assert worst < 1e-5, f"instance {instance}: relative error {worst}"
    elapsed = time.perf_counter() - started
    assert elapsed < 30.0, f"gradient check took {elapsed:.1f}s (budget 30s)"
    print(f"[A1] PASS - 100 end-to-end gradient checks, worst rel err {worst:.2e}, {elapsed:.1f}s")


def test_a2_loss_matches_brute_force_oracle():
    """Max-shifted loss equals the naive softmax cross-entropy within 1e-10."""
    started = time.perf_counter()
    rng = np.random.default_rng(202)
    worst = 0.0
    for _ in range(1000):
        n_rows = int(rng.integers(1, 21))
        n_cols = int(rng.integers(1, 21))
        scores = rng.uniform(-1.0, 1.0, size=(n_rows, n_cols))
        labels = rng.integers(0, n_cols, size=n_rows)
        tau = float(rng.uniform(0.05, 2.0))
        ours = contrastive_loss(scores, labels, tau).loss
        oracle = brute_force_softmax_xent(scores, labels, tau)
        worst = max(worst, abs(ours - oracle))
    assert worst < 1e-10
    elapsed = time.perf_counter() - started
    assert elapsed < 10.0, f"oracle comparison took {elapsed:.1f}s (budget 10s)"
    print(f"[A2] PASS - 1000 matrices vs brute-force oracle, worst abs diff {worst:.2e}, {elapsed:.1f}s")


def test_a3_synthetic_end_to_end_training():
    """Defaults bundle + rescaled out_of_domain preset reaches 0.95 val top-1,
    and the trained fusion is at least as accurate as the image branch alone."""
    started = time.perf_counter()
    bundle = generate(SynthSpec())  # 8 classes, 2000 train / 500 val, sigma 0.1
    config = replace(PRESETS["out_of_domain"], epochs=20)
    checkpoint = train(bundle, config)

    fused = evaluate_split(bundle, "val", checkpoint.params, FusionConfig(alpha=0.6, tau=0.1))
    image_only = evaluate_split(bundle, "val", None, FusionConfig(alpha=1.0, tau=0.1))
    on_train = evaluate_split(bundle, "train", checkpoint.params, FusionConfig(alpha=0.6, tau=0.1))
    elapsed = time.perf_counter() - started

    assert checkpoint.best_val_accuracy >= 0.95
    assert on_train.top1_accuracy >= 0.99
    assert fused.top1_accuracy >= image_only.top1_accuracy
    assert elapsed < 120.0, f"training run took {elapsed:.1f}s (budget 120s)"
    print(
        f"[A3] PASS - val top-1 {checkpoint.best_val_accuracy:.4f}, train {on_train.top1_accuracy:.4f}, "
        f"fused {fused.top1_accuracy:.4f} >= image-only {image_only.top1_accuracy:.4f}, {elapsed:.1f}s"
    )


def test_a4_fusion_endpoint_identities(tmp_path):
    """alpha=1 equals the image-only pipeline and alpha=0 the projected-text-only
    pipeline, item for item, both in the library and through the CLI."""
    bundle = generate(SynthSpec(n_train=160, n_val=64, n_test=64, seed=21))
    config = replace(PRESETS["out_of_domain"], epochs=3, batch_size=32, mlp_hidden_dims=(24,))
    checkpoint = train(bundle, config)
    class_text = compose_class_embeddings(bundle.class_prompts)

    image_only = np.argmax(cosine_similarity_matrix(bundle.image["val"], class_text), axis=1)
    projected, _ = forward(bundle.image_text["val"], checkpoint.params, mode="eval")
    text_only = np.argmax(cosine_similarity_matrix(projected, class_text), axis=1)

    at_one = classify(bundle, "val", checkpoint.params, FusionConfig(alpha=1.0))
    at_zero = classify(bundle, "val", checkpoint.params, FusionConfig(alpha=0.0))
    assert np.array_equal(at_one, image_only)
    assert np.array_equal(at_zero, text_only)

    # CLI endpoint reports must carry the same confusion counts
    from catalog_core.cli import main
    from catalog_core.evaluate import score
    from catalog_core.train import save_checkpoint

    save_bundle(bundle, tmp_path / "bundle")
    save_checkpoint(checkpoint, tmp_path / "ckpt")
    labels = bundle.splits["val"].labels
    for alpha, reference in ((1.0, image_only), (0.0, text_only)):
        out_file = tmp_path / f"report_{alpha}.json"
        code = main([
            "eval", "--bundle", str(tmp_path / "bundle"), "--split", "val",
            "--checkpoint", str(tmp_path / "ckpt"), "--alpha", str(alpha), "--out", str(out_file),
        ])
        assert code == 0
        payload = json.loads(out_file.read_text())
        expected = score(reference, labels, bundle.classes)
        assert payload["confusion"] == expected.confusion.tolist()
    print("[A4] PASS - alpha endpoints match single-branch pipelines item-for-item")


def test_a5_checkpoint_determinism_across_threads(tmp_path):
    """Two cmd_train subprocesses with equal config and different thread caps
    must write byte-identical checkpoint directories."""
    bundle_path = tmp_path / "bundle"
    save_bundle(generate(SynthSpec(n_train=96, n_val=48, n_test=16, seed=33)), bundle_path)
    config_path = tmp_path / "run.json"
    config_path.write_text(
        json.dumps({
            "bundle": str(bundle_path),
            "out": "placeholder",
            "train": {"epochs": 3, "batch_size": 32, "mlp_hidden_dims": [24], "seed": 4},
        }),
        "utf-8",
    )

    outputs = []
    for run, threads in (("one", "1"), ("two", "7"), ("three", "1")):
        out_dir = tmp_path / run
        env = {**os.environ, "CATALOG_CORE_THREADS": threads}
        proc = subprocess.run(
            [sys.executable, "-m", "catalog_core.cli", "train",
             "--config", str(config_path), "--out", str(out_dir)],
            env=env, capture_output=True, text=True, timeout=300,
        )
        assert proc.returncode == 0, proc.stderr
        outputs.append(out_dir)

    names = ["checkpoint.json", "params.f32", "velocity.f32"]
    for name in names:
        first = (outputs[0] / name).read_bytes()
        assert (outputs[1] / name).read_bytes() == first, f"{name} differs across thread caps"
        assert (outputs[2] / name).read_bytes() == first, f"{name} differs across repeat runs"
    print("[A5] PASS - byte-identical checkpoints across thread caps and repeat runs")


def test_a6_invariance_suite():
    """Module invariants, each over at least 100 random instances."""
    rng = np.random.default_rng(606)

    for _ in range(100):  # cosine scale invariance
        rows = rng.normal(size=(int(rng.integers(1, 8)), int(rng.integers(2, 10))))
        refs = rng.normal(size=(int(rng.integers(1, 8)), rows.shape[1]))
        base = cosine_similarity_matrix(rows, refs)
        scaled_rows = rows * rng.uniform(0.001, 1000.0, size=(rows.shape[0], 1))
        scaled_refs = refs * rng.uniform(0.001, 1000.0, size=(refs.shape[0], 1))
        assert np.max(np.abs(cosine_similarity_matrix(scaled_rows, scaled_refs) - base)) < 1e-12

    for _ in range(100):  # centroid permutation invariance and linearity
        shape = (int(rng.integers(1, 5)), int(rng.integers(1, 7)), int(rng.integers(1, 6)))
        block_a = rng.normal(size=shape)
        block_b = rng.normal(size=shape)
        permuted = block_a[:, rng.permutation(shape[1]), :]
        assert np.max(np.abs(compose_class_embeddings(permuted) - compose_class_embeddings(block_a))) < 1e-12
        s, t = rng.normal(size=2)
        lhs = compose_class_embeddings(s * block_a + t * block_b)
        rhs = s * compose_class_embeddings(block_a) + t * compose_class_embeddings(block_b)
        assert np.max(np.abs(lhs - rhs)) < 1e-12

    for _ in range(100):  # loss row-shift invariance and gradient row sums
        scores = rng.uniform(-1, 1, size=(int(rng.integers(1, 9)), int(rng.integers(1, 9))))
        labels = rng.integers(0, scores.shape[1], size=scores.shape[0])
        tau = float(rng.uniform(0.05, 1.5))
        result = contrastive_loss(scores, labels, tau)
        shifted = scores.copy()
        shifted[rng.integers(0, scores.shape[0])] += rng.uniform(-50, 50)
        assert abs(contrastive_loss(shifted, labels, tau).loss - result.loss) < 1e-10
        assert np.max(np.abs(result.grad.sum(axis=1))) < 1e-12

    for _ in range(100):  # fusion convexity bounds
        shape = (int(rng.integers(1, 8)), int(rng.integers(1, 8)))
        w = rng.uniform(-1, 1, size=shape)
        q = rng.uniform(-1, 1, size=shape)
        s = fuse(w, q, FusionConfig(alpha=float(rng.uniform(0, 1))))
        assert np.all(s >= np.minimum(w, q) - 1e-12) and np.all(s <= np.maximum(w, q) + 1e-12)

    print("[A6] PASS - scale/permutation/linearity/row-shift/row-sum/convexity, 100 instances each")


def test_a7_format_conformance(tmp_path):
    """Round-trip identity plus detection of every single-defect injection."""
    bundle = generate(SynthSpec(n_train=12, n_val=6, n_test=6, n_classes=3, prompts_per_class=4, seed=55))
    save_bundle(bundle, tmp_path / "rt")
    assert load_bundle(tmp_path / "rt") == bundle

    def fresh():
        return generate(SynthSpec(n_train=8, n_val=4, n_test=4, n_classes=3, prompts_per_class=3, seed=56))

    def inject_nan_image(b):
        b.image["train"][0, 0] = np.nan

    def inject_inf_image_text(b):
        b.image_text["val"][1, 2] = np.inf

    def inject_nan_prompts(b):
        b.class_prompts[1, 0, 0] = np.nan

    def inject_label_high(b):
        b.splits["train"].labels[0] = len(b.classes)

    def inject_label_negative(b):
        b.splits["train"].labels[1] = -1

    def inject_length_mismatch(b):
        s = b.splits["train"]
        b.splits["train"] = DatasetSplit(s.name, s.item_ids + ["orphan"], s.labels)

    def inject_image_rows(b):
        b.image["train"] = b.image["train"][:-1]

    def inject_image_text_rows(b):
        b.image_text["train"] = np.vstack([b.image_text["train"], b.image_text["train"][:1]])

    def inject_image_dim(b):
        b.image["val"] = np.zeros((b.image["val"].shape[0], b.image["val"].shape[1] + 1))

    def inject_image_text_dim_split(b):
        b.image_text["val"] = np.zeros((b.image_text["val"].shape[0], 7))

    def inject_duplicate_class(b):
        b.classes[2] = b.classes[0]

    def inject_empty_catalog(b):
        b.classes = []

    def inject_empty_prompts(b):
        b.class_prompts = np.zeros((3, 0, b.class_prompts.shape[2]))

    def inject_prompt_class_count(b):
        b.class_prompts = b.class_prompts[:-1]

    def inject_missing_matrix(b):
        del b.image["test"]

    defects = {
        "NonFiniteValue/image": (inject_nan_image, "NonFiniteValue"),
        "NonFiniteValue/image_text": (inject_inf_image_text, "NonFiniteValue"),
        "NonFiniteValue/prompts": (inject_nan_prompts, "NonFiniteValue"),
        "LabelOutOfRange/high": (inject_label_high, "LabelOutOfRange"),
        "LabelOutOfRange/negative": (inject_label_negative, "LabelOutOfRange"),
        "LengthMismatch": (inject_length_mismatch, "LengthMismatch"),
        "RowCountMismatch/image": (inject_image_rows, "RowCountMismatch"),
        "RowCountMismatch/image_text": (inject_image_text_rows, "RowCountMismatch"),
        "DimMismatch/image": (inject_image_dim, "DimMismatch"),
        "DimMismatch/image_text": (inject_image_text_dim_split, "DimMismatch"),
        "DuplicateClassName": (inject_duplicate_class, "DuplicateClassName"),
        "EmptyCatalog": (inject_empty_catalog, "EmptyCatalog"),
        "EmptyBlock": (inject_empty_prompts, "EmptyBlock"),
        "RowCountMismatch/prompts": (inject_prompt_class_count, "RowCountMismatch"),
        "MissingMatrix": (inject_missing_matrix, "MissingMatrix"),
    }

    assert validate_bundle(fresh()) == []
    for name, (inject, expected_tag) in defects.items():
        b = fresh()
        inject(b)
        violations = validate_bundle(b)
        assert violations, f"defect {name} went undetected"
        assert any(expected_tag in v for v in violations), f"defect {name}: got {violations}"

    # corruption on disk is caught by the checksum at load time
    blob = tmp_path / "rt" / "train.image.f32"
    raw = bytearray(blob.read_bytes())
    raw[4] ^= 0x01
    blob.write_bytes(bytes(raw))
    with pytest.raises(Exception, match="CRC-32"):
        load_bundle(tmp_path / "rt")

    print(f"[A7] PASS - round trip bit-exact, {len(defects)} defect injections all detected")
