"""Embedding-bundle data model and its bit-exact on-disk format.

A bundle directory contains everything the pipeline consumes: class
names, per-split item ids and labels, image embeddings, image-text
embeddings, and the per-class prompt-embedding block. Layout:

    manifest.json           UTF-8 JSON, sorted keys, 2-space indent:
                            {
                              "format_version": 1,
                              "dims": {"F": int, "F_prime": int, "M": int},
                              "splits": [
                                {"name": str, "n_rows": int,
                                 "item_ids_file": str, "labels_file": str,
                                 "image_blob": str, "image_text_blob": str,
                                 "crc32": {"labels": int, "image": int,
                                           "image_text": int}},
                                ...sorted by name...
                              ],
                              "class_prompts_blob": {"file": str, "crc32": int},
                              "meta": {str: str}
                            }
    classes.json            JSON array of class-name strings
    <split>.item_ids.txt    one item id per line, UTF-8
    <split>.labels.u32      raw little-endian uint32
    <split>.image.f32       raw little-endian float32, row-major, n_rows x F
    <split>.image_text.f32  raw little-endian float32, row-major, n_rows x F_prime
    class_prompts.f32       raw little-endian float32, |C| x M x F
                            (class-major, then prompt, then coordinate)

Storage is 32-bit; in-memory arrays are float64 so downstream gradient
checks are not polluted by storage precision. CRC-32 (zlib) of every
binary blob is kept in the manifest so corruption is detected at load.

Bundles are immutable after load and safe to share across workers;
load/save are single-writer operations.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ChecksumMismatchError,
    DimensionMismatchError,
    IoError,
    LabelOutOfRangeError,
    ManifestSchemaError,
    MissingFileError,
    NonFiniteValueError,
)

FORMAT_VERSION = 1

MANIFEST_NAME = "manifest.json"
CLASSES_NAME = "classes.json"
CLASS_PROMPTS_NAME = "class_prompts.f32"


@dataclass(frozen=True)
class DatasetSplit:
    """Item ids and integer labels for one named split."""

    name: str
    item_ids: list[str]
    labels: np.ndarray  # int64, one per item

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DatasetSplit):
            return NotImplemented
        return (
            self.name == other.name
            and self.item_ids == other.item_ids
            and np.array_equal(self.labels, other.labels)
        )


@dataclass
class EmbeddingBundle:
    """In-memory form of a bundle directory.

    ``classes`` fixes the canonical class/column order everywhere.
    ``image[s]`` has dim F, ``image_text[s]`` dim F_prime, and
    ``class_prompts`` is the (|C|, M, F) prompt-embedding block.
    """

    classes: list[str]
    splits: dict[str, DatasetSplit]
    image: dict[str, np.ndarray]
    image_text: dict[str, np.ndarray]
    class_prompts: np.ndarray
    meta: dict[str, str] = field(default_factory=dict)

    @property
    def dim_image(self) -> int:
        return int(self.class_prompts.shape[2])

    @property
    def dim_image_text(self) -> int:
        for mat in self.image_text.values():
            return int(mat.shape[1])
        return 0

    @property
    def prompts_per_class(self) -> int:
        return int(self.class_prompts.shape[1])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EmbeddingBundle):
            return NotImplemented
        return (
            self.classes == other.classes
            and self.splits == other.splits
            and self.meta == other.meta
            and _array_maps_equal(self.image, other.image)
            and _array_maps_equal(self.image_text, other.image_text)
            and np.array_equal(self.class_prompts, other.class_prompts)
        )


def _array_maps_equal(a: dict[str, np.ndarray], b: dict[str, np.ndarray]) -> bool:
    return a.keys() == b.keys() and all(np.array_equal(a[k], b[k]) for k in a)


# ---------------------------------------------------------------------------
# save


def save_bundle(bundle: EmbeddingBundle, path: str | Path) -> None:
    """Write ``bundle`` to ``path`` in the directory layout above.

    Writing the same bundle twice produces byte-identical files; nothing
    (timestamps included) is injected beyond the bundle's own fields.
    """
    root = Path(path)
    try:
        root.mkdir(parents=True, exist_ok=True)

        split_entries = []
        for name in sorted(bundle.splits):
            split = bundle.splits[name]
            labels_bytes = np.asarray(split.labels, dtype="<u4").tobytes()
            image_bytes = _to_f32_bytes(bundle.image[name])
            image_text_bytes = _to_f32_bytes(bundle.image_text[name])
            for item in split.item_ids:
                if "\n" in item:
                    raise IoError(f"split {name!r}: item id {item!r} contains a newline")
            ids_text = "".join(f"{item}\n" for item in split.item_ids)

            (root / f"{name}.item_ids.txt").write_bytes(ids_text.encode("utf-8"))
            (root / f"{name}.labels.u32").write_bytes(labels_bytes)
            (root / f"{name}.image.f32").write_bytes(image_bytes)
            (root / f"{name}.image_text.f32").write_bytes(image_text_bytes)

            split_entries.append(
                {
                    "name": name,
                    "n_rows": len(split.item_ids),
                    "item_ids_file": f"{name}.item_ids.txt",
                    "labels_file": f"{name}.labels.u32",
                    "image_blob": f"{name}.image.f32",
                    "image_text_blob": f"{name}.image_text.f32",
                    "crc32": {
                        "labels": zlib.crc32(labels_bytes),
                        "image": zlib.crc32(image_bytes),
                        "image_text": zlib.crc32(image_text_bytes),
                    },
                }
            )

        prompts_bytes = _to_f32_bytes(bundle.class_prompts)
        (root / CLASS_PROMPTS_NAME).write_bytes(prompts_bytes)

        manifest = {
            "format_version": FORMAT_VERSION,
            "dims": {
                "F": bundle.dim_image,
                "F_prime": bundle.dim_image_text,
                "M": bundle.prompts_per_class,
            },
            "splits": split_entries,
            "class_prompts_blob": {
                "file": CLASS_PROMPTS_NAME,
                "crc32": zlib.crc32(prompts_bytes),
            },
            "meta": dict(sorted(bundle.meta.items())),
        }
        manifest_text = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
        (root / MANIFEST_NAME).write_bytes(manifest_text.encode("utf-8"))

        classes_text = json.dumps(bundle.classes, indent=2) + "\n"
        (root / CLASSES_NAME).write_bytes(classes_text.encode("utf-8"))
    except OSError as exc:
        raise IoError(f"cannot write bundle to {root}: {exc}") from exc


def _to_f32_bytes(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f4").tobytes()


# ---------------------------------------------------------------------------
# load


def load_bundle(path: str | Path) -> EmbeddingBundle:
    """Read and fully check a bundle directory.

    Every structural defect raises a specific error naming the file or
    field: MissingFileError, ManifestSchemaError, DimensionMismatchError,
    ChecksumMismatchError, NonFiniteValueError, LabelOutOfRangeError.
    """
    root = Path(path)
    manifest = _read_manifest(root)
    classes = _read_classes(root)

    dims = manifest["dims"]
    dim_image, dim_image_text, n_prompts = dims["F"], dims["F_prime"], dims["M"]

    prompts_entry = manifest["class_prompts_blob"]
    prompts_raw = _read_blob(root, prompts_entry["file"], prompts_entry["crc32"])
    expected = 4 * len(classes) * n_prompts * dim_image
    if len(prompts_raw) != expected:
        raise DimensionMismatchError(
            f"{prompts_entry['file']}: expected {expected} bytes "
            f"({len(classes)}x{n_prompts}x{dim_image} float32), got {len(prompts_raw)}"
        )
    class_prompts = (
        np.frombuffer(prompts_raw, dtype="<f4")
        .astype(np.float64)
        .reshape(len(classes), n_prompts, dim_image)
    )
    _check_finite(class_prompts, prompts_entry["file"])

    splits: dict[str, DatasetSplit] = {}
    image: dict[str, np.ndarray] = {}
    image_text: dict[str, np.ndarray] = {}
    for entry in manifest["splits"]:
        name = entry["name"]
        if name in splits:
            raise ManifestSchemaError(f"manifest.json: duplicate split name {name!r}")
        n_rows = entry["n_rows"]

        item_ids = _read_item_ids(root, entry["item_ids_file"], n_rows)
        labels = _read_labels(root, entry, n_rows, len(classes))
        image[name] = _read_matrix(root, entry["image_blob"], entry["crc32"]["image"], n_rows, dim_image)
        image_text[name] = _read_matrix(
            root, entry["image_text_blob"], entry["crc32"]["image_text"], n_rows, dim_image_text
        )
        splits[name] = DatasetSplit(name=name, item_ids=item_ids, labels=labels)

    return EmbeddingBundle(
        classes=classes,
        splits=splits,
        image=image,
        image_text=image_text,
        class_prompts=class_prompts,
        meta=dict(manifest["meta"]),
    )


def _read_manifest(root: Path) -> dict:
    path = root / MANIFEST_NAME
    if not path.is_file():
        raise MissingFileError(f"{path} not found")
    try:
        manifest = json.loads(path.read_text("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise ManifestSchemaError(f"manifest.json: not valid JSON ({exc})") from exc

    if not isinstance(manifest, dict):
        raise ManifestSchemaError("manifest.json: top level must be an object")
    for key in ("format_version", "dims", "splits", "class_prompts_blob", "meta"):
        if key not in manifest:
            raise ManifestSchemaError(f"manifest.json: missing key {key!r}")
    if manifest["format_version"] != FORMAT_VERSION:
        raise ManifestSchemaError(
            f"manifest.json: format_version {manifest['format_version']!r} "
            f"unsupported (expected {FORMAT_VERSION})"
        )

    dims = manifest["dims"]
    if not isinstance(dims, dict):
        raise ManifestSchemaError("manifest.json: dims must be an object")
    for key in ("F", "F_prime", "M"):
        if not isinstance(dims.get(key), int) or isinstance(dims.get(key), bool) or dims[key] < 0:
            raise ManifestSchemaError(f"manifest.json: dims.{key} must be a non-negative integer")

    if not isinstance(manifest["splits"], list):
        raise ManifestSchemaError("manifest.json: splits must be an array")
    for i, entry in enumerate(manifest["splits"]):
        if not isinstance(entry, dict):
            raise ManifestSchemaError(f"manifest.json: splits[{i}] must be an object")
        for key in ("name", "item_ids_file", "labels_file", "image_blob", "image_text_blob"):
            if not isinstance(entry.get(key), str):
                raise ManifestSchemaError(f"manifest.json: splits[{i}].{key} must be a string")
        if not isinstance(entry.get("n_rows"), int) or entry["n_rows"] < 0:
            raise ManifestSchemaError(f"manifest.json: splits[{i}].n_rows must be a non-negative integer")
        crc = entry.get("crc32")
        if not isinstance(crc, dict) or set(crc) != {"labels", "image", "image_text"}:
            raise ManifestSchemaError(
                f"manifest.json: splits[{i}].crc32 must map labels/image/image_text to checksums"
            )

    blob = manifest["class_prompts_blob"]
    if not isinstance(blob, dict) or not isinstance(blob.get("file"), str) or "crc32" not in blob:
        raise ManifestSchemaError("manifest.json: class_prompts_blob must carry 'file' and 'crc32'")

    meta = manifest["meta"]
    if not isinstance(meta, dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in meta.items()
    ):
        raise ManifestSchemaError("manifest.json: meta must be a string-to-string map")
    return manifest


def _read_classes(root: Path) -> list[str]:
    path = root / CLASSES_NAME
    if not path.is_file():
        raise MissingFileError(f"{path} not found")
    try:
        classes = json.loads(path.read_text("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise ManifestSchemaError(f"classes.json: not valid JSON ({exc})") from exc
    if not isinstance(classes, list) or not all(isinstance(c, str) for c in classes):
        raise ManifestSchemaError("classes.json: must be an array of strings")
    if not classes:
        raise ManifestSchemaError("classes.json: catalog is empty")
    if len(set(classes)) != len(classes):
        dupes = sorted({c for c in classes if classes.count(c) > 1})
        raise ManifestSchemaError(f"classes.json: duplicate class names {dupes}")
    return classes


def _read_blob(root: Path, name: str, crc: int) -> bytes:
    path = root / name
    if not path.is_file():
        raise MissingFileError(f"{path} not found")
    raw = path.read_bytes()
    if zlib.crc32(raw) != crc:
        raise ChecksumMismatchError(f"{name}: CRC-32 mismatch (file corrupt?)")
    return raw


def _read_item_ids(root: Path, name: str, n_rows: int) -> list[str]:
    path = root / name
    if not path.is_file():
        raise MissingFileError(f"{path} not found")
    text = path.read_text("utf-8")
    # one id per "\n"-terminated line; splitlines() would eat \r inside ids
    item_ids = text.split("\n")
    if item_ids and item_ids[-1] == "":
        item_ids.pop()
    if len(item_ids) != n_rows:
        raise DimensionMismatchError(f"{name}: {len(item_ids)} ids but manifest declares {n_rows} rows")
    return item_ids


def _read_labels(root: Path, entry: dict, n_rows: int, n_classes: int) -> np.ndarray:
    name = entry["labels_file"]
    raw = _read_blob(root, name, entry["crc32"]["labels"])
    if len(raw) != 4 * n_rows:
        raise DimensionMismatchError(f"{name}: expected {4 * n_rows} bytes (u32 x {n_rows}), got {len(raw)}")
    labels = np.frombuffer(raw, dtype="<u4").astype(np.int64)
    if labels.size and labels.max() >= n_classes:
        idx = int(np.argmax(labels >= n_classes))
        raise LabelOutOfRangeError(
            f"{name}: label {int(labels[idx])} at index {idx} out of range (catalog size {n_classes})"
        )
    return labels


def _read_matrix(root: Path, name: str, crc: int, n_rows: int, dim: int) -> np.ndarray:
    raw = _read_blob(root, name, crc)
    expected = 4 * n_rows * dim
    if len(raw) != expected:
        raise DimensionMismatchError(
            f"{name}: expected {expected} bytes ({n_rows}x{dim} float32), got {len(raw)}"
        )
    mat = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(n_rows, dim)
    _check_finite(mat, name)
    return mat


def _check_finite(arr: np.ndarray, name: str) -> None:
    if not np.isfinite(arr).all():
        flat = int(np.argmin(np.isfinite(arr).ravel()))
        pos = np.unravel_index(flat, arr.shape)
        raise NonFiniteValueError(f"{name}: non-finite value at index {tuple(int(p) for p in pos)}")


# ---------------------------------------------------------------------------
# validation


def validate_bundle(bundle: EmbeddingBundle) -> list[str]:
    """Return a description of every invariant violation (empty if none).

    Violations are data, not errors; each names the defect kind, the
    field, and the index where it was found.
    """
    violations: list[str] = []

    if not bundle.classes:
        violations.append("EmptyCatalog: classes list is empty")
    seen: set[str] = set()
    for i, name in enumerate(bundle.classes):
        if name in seen:
            violations.append(f"DuplicateClassName: classes[{i}] = {name!r} repeats an earlier name")
        seen.add(name)

    prompts = bundle.class_prompts
    if prompts.ndim != 3:
        violations.append(f"DimMismatch: class_prompts must be 3-d (classes x prompts x dim), got {prompts.ndim}-d")
        return violations
    n_classes, n_prompts, dim_image = prompts.shape
    if n_classes == 0 or n_prompts == 0:
        violations.append(f"EmptyBlock: class_prompts has shape {prompts.shape}")
    if bundle.classes and n_classes != len(bundle.classes):
        violations.append(
            f"RowCountMismatch: class_prompts has {n_classes} classes, catalog has {len(bundle.classes)}"
        )
    violations.extend(_finite_violations(prompts, "class_prompts"))

    for name in sorted(set(bundle.splits) | set(bundle.image) | set(bundle.image_text)):
        split = bundle.splits.get(name)
        if split is None:
            violations.append(f"MissingSplit: matrices present for {name!r} but no split entry")
            continue
        n_items = len(split.item_ids)
        if split.labels.shape[0] != n_items:
            violations.append(
                f"LengthMismatch: split {name!r} has {split.labels.shape[0]} labels for {n_items} item_ids"
            )
        bad = np.nonzero((split.labels < 0) | (split.labels >= len(bundle.classes)))[0]
        if bad.size:
            i = int(bad[0])
            violations.append(
                f"LabelOutOfRange: split {name!r} label {int(split.labels[i])} at index {i} "
                f"(catalog size {len(bundle.classes)})"
            )

        for kind, matrices, dim_expected in (
            ("image", bundle.image, dim_image),
            ("image_text", bundle.image_text, None),
        ):
            mat = matrices.get(name)
            if mat is None:
                violations.append(f"MissingMatrix: split {name!r} has no {kind} matrix")
                continue
            if mat.shape[0] != split.labels.shape[0]:
                violations.append(
                    f"RowCountMismatch: {kind}[{name!r}] has {mat.shape[0]} rows, split has "
                    f"{split.labels.shape[0]} labels"
                )
            if dim_expected is not None and mat.shape[1] != dim_expected:
                violations.append(
                    f"DimMismatch: {kind}[{name!r}] dim {mat.shape[1]} != class_prompts dim {dim_expected}"
                )
            violations.extend(_finite_violations(mat, f"{kind}[{name!r}]"))

    # all image_text matrices must agree on F_prime
    dims_seen = {name: int(mat.shape[1]) for name, mat in bundle.image_text.items()}
    if len(set(dims_seen.values())) > 1:
        violations.append(f"DimMismatch: image_text dims differ across splits: {dims_seen}")

    return violations


def _finite_violations(arr: np.ndarray, name: str) -> list[str]:
    finite = np.isfinite(arr)
    if finite.all():
        return []
    flat = int(np.argmin(finite.ravel()))
    pos = tuple(int(p) for p in np.unravel_index(flat, arr.shape))
    return [f"NonFiniteValue: {name} at index {pos}"]
