"""Command-line entry point.

Subcommands wire the library into reproducible workflows: synth ->
validate -> train -> eval / sweep-alpha / ablate. Every command is
deterministic given its inputs and seeds, never mutates an input
bundle, and emits machine-parseable JSON on stdout under ``--json``.

Exit codes: 0 success, 1 validation failure (invalid bundle or config),
2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys
import zlib
from pathlib import Path

import numpy as np

from .errors import CatalogError, ConfigError, IoError

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_RUNTIME = 2


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except CatalogError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="catalog-core",
        description="Multi-modal fusion and contrastive projection-head training "
        "on embedding bundles.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a bundle directory against every format invariant")
    p.add_argument("--bundle", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(handler=_cmd_validate)

    p = sub.add_parser("compose-text", help="write the composed class-text matrix as an f32 blob")
    p.add_argument("--bundle", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(handler=_cmd_compose_text)

    p = sub.add_parser("train", help="train the projection head per a JSON run config")
    p.add_argument("--config", required=True)
    p.add_argument("--bundle", help="override the config file's bundle path")
    p.add_argument("--out", help="override the config file's checkpoint path")
    p.add_argument("--seed", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--json", action="store_true")
    p.set_defaults(handler=_cmd_train)

    p = sub.add_parser("eval", help="classify a split and report accuracy")
    p.add_argument("--bundle", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--alpha", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--out", help="also write the report JSON here")
    p.add_argument("--confusion-csv", help="write the confusion matrix as CSV")
    p.add_argument("--json", action="store_true")
    p.set_defaults(handler=_cmd_eval)

    p = sub.add_parser("sweep-alpha", help="accuracy at each fusion weight of a grid")
    p.add_argument("--bundle", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--grid", required=True, help="comma-separated alphas, e.g. 0,0.5,1")
    p.add_argument("--tau", type=float)
    p.add_argument("--out", help="write the CSV here instead of stdout")
    p.add_argument("--json", action="store_true")
    p.set_defaults(handler=_cmd_sweep_alpha)

    p = sub.add_parser("ablate", help="accuracy per branch/prompt toggle combination")
    p.add_argument("--bundle", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--alpha", type=float, default=0.6)
    p.add_argument("--tau", type=float, default=0.1)
    for flag in ("clip", "vlm", "llm", "templates"):
        p.add_argument(f"--{flag}", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--json", action="store_true")
    p.set_defaults(handler=_cmd_ablate)

    p = sub.add_parser("synth", help="write a synthetic bundle")
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int, default=8)
    p.add_argument("--train-items", type=int, default=2000)
    p.add_argument("--val-items", type=int, default=500)
    p.add_argument("--test-items", type=int, default=500)
    p.add_argument("--dim-image", type=int, default=32)
    p.add_argument("--dim-image-text", type=int, default=48)
    p.add_argument("--prompts", type=int, default=6)
    p.add_argument("--separation", type=float, default=0.5)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--shift-angle", type=float, default=0.25)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", action="store_true")
    p.set_defaults(handler=_cmd_synth)

    return parser


def _emit(args, payload: dict, human: str) -> None:
    if args.json:
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        print(human)


def _write_text(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, "utf-8")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _cmd_validate(args) -> int:
    from .bundle import load_bundle, validate_bundle

    try:
        bundle = load_bundle(args.bundle)
        violations = validate_bundle(bundle)
    except CatalogError as exc:
        violations = [f"{type(exc).__name__}: {exc}"]
    payload = {"bundle": args.bundle, "violations": violations}
    human = (
        f"{args.bundle}: OK"
        if not violations
        else "\n".join([f"{args.bundle}: {len(violations)} violation(s)"] + [f"  {v}" for v in violations])
    )
    _emit(args, payload, human)
    return EXIT_OK if not violations else EXIT_INVALID


def _cmd_compose_text(args) -> int:
    from .bundle import load_bundle
    from .compose import compose_class_embeddings

    bundle = load_bundle(args.bundle)
    class_text = compose_class_embeddings(bundle.class_prompts)
    blob = np.ascontiguousarray(class_text, dtype="<f4").tobytes()
    out = Path(args.out)
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_bytes(blob)
    except OSError as exc:
        raise IoError(f"cannot write {out}: {exc}") from exc
    payload = {
        "file": str(out),
        "rows": int(class_text.shape[0]),
        "dim": int(class_text.shape[1]),
        "crc32": zlib.crc32(blob),
    }
    _emit(args, payload, f"wrote {out} ({payload['rows']}x{payload['dim']} f32, crc32 {payload['crc32']})")
    return EXIT_OK


_TRAIN_CONFIG_KEYS = {
    "alpha", "tau", "learning_rate", "momentum", "batch_size", "epochs",
    "dropout_rate", "patience", "seed", "mlp_hidden_dims",
}


def _load_run_config(path: str) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {p} not found")
    try:
        doc = json.loads(p.read_text("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise ConfigError(f"{p}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{p}: top level must be an object")
    allowed = {"bundle", "out", "preset", "train"}
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"{p}: unknown keys {sorted(unknown)} (allowed: {sorted(allowed)})")
    train_doc = doc.get("train", {})
    if not isinstance(train_doc, dict):
        raise ConfigError(f"{p}: 'train' must be an object")
    unknown = set(train_doc) - _TRAIN_CONFIG_KEYS
    if unknown:
        raise ConfigError(f"{p}: unknown train keys {sorted(unknown)}")
    return doc


def _cmd_train(args) -> int:
    from dataclasses import asdict, replace

    from .bundle import load_bundle
    from .train import PRESETS, TrainConfig, save_checkpoint, train

    doc = _load_run_config(args.config)
    bundle_path = args.bundle or doc.get("bundle")
    out_path = args.out or doc.get("out")
    if not bundle_path:
        raise ConfigError("no bundle path (set 'bundle' in the config or pass --bundle)")
    if not out_path:
        raise ConfigError("no checkpoint path (set 'out' in the config or pass --out)")

    preset = doc.get("preset")
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r} (have {sorted(PRESETS)})")
        base = PRESETS[preset]
    else:
        base = TrainConfig()
    overrides = dict(doc.get("train", {}))
    if "mlp_hidden_dims" in overrides:
        overrides["mlp_hidden_dims"] = tuple(overrides["mlp_hidden_dims"])
    for flag in ("seed", "alpha", "tau"):
        value = getattr(args, flag)
        if value is not None:
            overrides[flag] = value
    try:
        config = replace(base, **overrides)
    except TypeError as exc:
        raise ConfigError(f"bad train config: {exc}") from exc

    bundle = load_bundle(bundle_path)
    checkpoint = train(bundle, config)
    save_checkpoint(checkpoint, out_path)
    payload = {
        "checkpoint": str(out_path),
        "epochs_run": checkpoint.epoch,
        "best_val_accuracy": checkpoint.best_val_accuracy,
        "history": [[loss, acc] for loss, acc in checkpoint.history],
        "config": {**asdict(config), "mlp_hidden_dims": list(config.mlp_hidden_dims)},
    }
    _emit(
        args,
        payload,
        f"trained {checkpoint.epoch} epoch(s); best val top-1 {checkpoint.best_val_accuracy:.4f}; "
        f"checkpoint at {out_path}",
    )
    return EXIT_OK


def _resolve_eval_config(args, checkpoint):
    from .align import FusionConfig

    if checkpoint is not None:
        alpha = checkpoint.config.alpha if args.alpha is None else args.alpha
        tau = checkpoint.config.tau if args.tau is None else args.tau
    else:
        alpha = 1.0 if args.alpha is None else args.alpha
        tau = 0.1 if args.tau is None else args.tau
    return FusionConfig(alpha=alpha, tau=tau)


def _cmd_eval(args) -> int:
    from .bundle import load_bundle
    from .evaluate import evaluate_split
    from .train import load_checkpoint

    bundle = load_bundle(args.bundle)
    checkpoint = load_checkpoint(args.checkpoint) if args.checkpoint else None
    config = _resolve_eval_config(args, checkpoint)
    params = checkpoint.params if checkpoint else None
    report = evaluate_split(bundle, args.split, params, config)

    payload = {"alpha": config.alpha, "tau": config.tau, **report.to_json_dict()}
    if args.out:
        _write_text(Path(args.out), json.dumps(payload, indent=2, sort_keys=True) + "\n")
    if args.confusion_csv:
        _write_confusion_csv(Path(args.confusion_csv), bundle.classes, report.confusion)
    lines = [
        f"split {report.split_name}: top-1 {report.top1_accuracy:.4f} over {report.n_items} items "
        f"(alpha {config.alpha}, tau {config.tau})"
    ]
    for name in sorted(report.per_class_accuracy):
        lines.append(f"  {name}: {report.per_class_accuracy[name]:.4f}")
    _emit(args, payload, "\n".join(lines))
    return EXIT_OK


def _write_confusion_csv(path: Path, classes: list[str], confusion: np.ndarray) -> None:
    rows = ["true\\pred," + ",".join(classes)]
    for name, row in zip(classes, confusion):
        rows.append(name + "," + ",".join(str(int(v)) for v in row))
    _write_text(path, "\n".join(rows) + "\n")


def _cmd_sweep_alpha(args) -> int:
    from .bundle import load_bundle
    from .evaluate import alpha_sweep
    from .train import load_checkpoint

    try:
        grid = [float(v) for v in args.grid.split(",") if v.strip() != ""]
    except ValueError as exc:
        raise ConfigError(f"bad --grid value: {exc}") from exc
    if not grid:
        raise ConfigError("--grid must list at least one alpha")

    bundle = load_bundle(args.bundle)
    checkpoint = load_checkpoint(args.checkpoint)
    tau = args.tau if args.tau is not None else checkpoint.config.tau
    results = alpha_sweep(bundle, args.split, checkpoint.params, tau, grid)

    csv_text = "alpha,top1_accuracy\n" + "".join(f"{a},{acc}\n" for a, acc in results)
    if args.out:
        _write_text(Path(args.out), csv_text)
    if args.json:
        print(json.dumps({"split": args.split, "tau": tau, "sweep": results}, indent=2))
    elif not args.out:
        print(csv_text, end="")
    else:
        print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_ablate(args) -> int:
    from .bundle import load_bundle
    from .evaluate import AblationSpec, build_ablation_config, classify, compose_class_text, score
    from .train import load_checkpoint

    bundle = load_bundle(args.bundle)
    checkpoint = load_checkpoint(args.checkpoint) if args.checkpoint else None
    params = checkpoint.params if checkpoint else None

    toggles = (args.clip, args.vlm, args.llm, args.templates)
    if any(t is not None for t in toggles):
        specs = [
            AblationSpec(
                use_clip_branch=args.clip if args.clip is not None else True,
                use_vlm_branch=args.vlm if args.vlm is not None else True,
                use_llm_descriptions=args.llm if args.llm is not None else True,
                use_templates=args.templates if args.templates is not None else True,
            )
        ]
    else:
        specs = _standard_ablation_grid()

    records = []
    for spec in specs:
        config, selection = build_ablation_config(spec, default_alpha=args.alpha, tau=args.tau)
        class_text = compose_class_text(bundle, selection)
        predictions = classify(bundle, args.split, params, config, class_text=class_text)
        report = score(predictions, bundle.splits[args.split].labels, bundle.classes, split_name=args.split)
        records.append(
            {
                "clip": spec.use_clip_branch,
                "vlm": spec.use_vlm_branch,
                "llm": spec.use_llm_descriptions,
                "templates": spec.use_templates,
                "alpha": config.alpha,
                "top1_accuracy": report.top1_accuracy,
            }
        )

    header = f"{'clip':>5} {'vlm':>5} {'llm':>5} {'templates':>9} {'alpha':>6} {'top1':>8}"
    lines = [header] + [
        f"{_mark(r['clip']):>5} {_mark(r['vlm']):>5} {_mark(r['llm']):>5} "
        f"{_mark(r['templates']):>9} {r['alpha']:>6.2f} {r['top1_accuracy']:>8.4f}"
        for r in records
    ]
    _emit(args, {"split": args.split, "rows": records}, "\n".join(lines))
    return EXIT_OK


def _mark(flag: bool) -> str:
    return "on" if flag else "off"


def _standard_ablation_grid():
    from .evaluate import AblationSpec

    grid = []
    for clip, vlm in ((False, True), (True, False)):
        for llm in (False, True):
            for templates in (False, True):
                grid.append(AblationSpec(clip, vlm, llm, templates))
    grid.append(AblationSpec(True, True, True, True))
    return grid


def _cmd_synth(args) -> int:
    from .bundle import save_bundle
    from .synth import SynthSpec, generate

    spec = SynthSpec(
        n_classes=args.classes,
        n_train=args.train_items,
        n_val=args.val_items,
        n_test=args.test_items,
        dim_image=args.dim_image,
        dim_image_text=args.dim_image_text,
        prompts_per_class=args.prompts,
        cluster_separation=args.separation,
        noise_sigma=args.noise,
        domain_shift_angle=args.shift_angle,
        seed=args.seed,
    )
    bundle = generate(spec)
    save_bundle(bundle, args.out)
    payload = {
        "bundle": args.out,
        "classes": spec.n_classes,
        "splits": {name: len(split.item_ids) for name, split in bundle.splits.items()},
        "dims": {"image": spec.dim_image, "image_text": spec.dim_image_text, "prompts": spec.prompts_per_class},
        "seed": spec.seed,
    }
    _emit(args, payload, f"wrote synthetic bundle to {args.out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
