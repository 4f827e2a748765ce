/** Writer for the bundle directory format the core pipeline consumes.
 *
 * Layout (all multi-byte values little-endian):
 *   manifest.json            format_version, dims {F, F_prime, M}, split
 *                            table with per-blob CRC-32, prompt-block entry,
 *                            string meta
 *   classes.json             class-name array, fixes column order
 *   <split>.item_ids.txt     one id per line
 *   <split>.labels.u32       uint32 labels
 *   <split>.image.f32        float32 row-major, n_rows x F
 *   <split>.image_text.f32   float32 row-major, n_rows x F_prime
 *   class_prompts.f32        float32, |C| x M x F, class-major
 *
 * The block row layout (base / templates / descriptions) is declared in
 * meta as prompt_rows.* so downstream prompt-set ablations can slice it.
 */

import { mkdirSync, writeFileSync } from "node:fs";
import { join } from "node:path";

import { crc32 } from "./crc32.js";
import type { ExtractionJob, ExtractionParts, Matrix } from "./types.js";

export const FORMAT_VERSION = 1;

export function writeBundle(job: ExtractionJob, parts: ExtractionParts): void {
  const root = job.outputBundle;
  mkdirSync(root, { recursive: true });

  const splitEntries = [];
  const splits = [...parts.scan.splits].sort((a, b) => (a.name < b.name ? -1 : 1));
  for (const split of splits) {
    const labelsBytes = packU32(split.labels);
    const imageBytes = packF32(parts.image.get(split.name)!);
    const imageTextBytes = packF32(parts.imageText.get(split.name)!);
    const idsText = split.itemIds.map((id) => `${id}\n`).join("");

    writeFileSync(join(root, `${split.name}.item_ids.txt`), idsText, "utf-8");
    writeFileSync(join(root, `${split.name}.labels.u32`), labelsBytes);
    writeFileSync(join(root, `${split.name}.image.f32`), imageBytes);
    writeFileSync(join(root, `${split.name}.image_text.f32`), imageTextBytes);

    splitEntries.push({
      name: split.name,
      n_rows: split.itemIds.length,
      item_ids_file: `${split.name}.item_ids.txt`,
      labels_file: `${split.name}.labels.u32`,
      image_blob: `${split.name}.image.f32`,
      image_text_blob: `${split.name}.image_text.f32`,
      crc32: {
        labels: crc32(labelsBytes),
        image: crc32(imageBytes),
        image_text: crc32(imageTextBytes),
      },
    });
  }

  const promptBytes = packF32({
    rows: parts.prompts.nClasses * parts.prompts.promptsPerClass,
    dim: parts.prompts.dim,
    values: parts.prompts.values,
  });
  writeFileSync(join(root, "class_prompts.f32"), promptBytes);

  const imageTextDim = splits.length > 0 ? parts.imageText.get(splits[0]!.name)!.dim : 0;
  const manifest = {
    format_version: FORMAT_VERSION,
    dims: {
      F: parts.prompts.dim,
      F_prime: imageTextDim,
      M: parts.prompts.promptsPerClass,
    },
    splits: splitEntries,
    class_prompts_blob: { file: "class_prompts.f32", crc32: crc32(promptBytes) },
    meta: {
      ...parts.meta,
      "prompt_rows.base": String(parts.prompts.layout.base),
      "prompt_rows.templates": String(parts.prompts.layout.templates),
      "prompt_rows.llm": String(parts.prompts.layout.llm),
    },
  };
  writeFileSync(join(root, "manifest.json"), canonicalJson(manifest) + "\n", "utf-8");
  writeFileSync(join(root, "classes.json"), JSON.stringify(parts.scan.classes, null, 2) + "\n", "utf-8");
}

function packU32(values: number[]): Uint8Array {
  const buffer = new Uint8Array(values.length * 4);
  const view = new DataView(buffer.buffer);
  values.forEach((value, i) => view.setUint32(i * 4, value, true));
  return buffer;
}

function packF32(matrix: Matrix): Uint8Array {
  const buffer = new Uint8Array(matrix.values.length * 4);
  const view = new DataView(buffer.buffer);
  matrix.values.forEach((value, i) => view.setFloat32(i * 4, value, true));
  return buffer;
}

/** JSON with recursively sorted keys; byte-stable across runs. */
export function canonicalJson(value: unknown): string {
  return JSON.stringify(sortKeys(value), null, 2);
}

function sortKeys(value: unknown): unknown {
  if (Array.isArray(value)) return value.map(sortKeys);
  if (value !== null && typeof value === "object") {
    return Object.fromEntries(
      Object.keys(value as Record<string, unknown>)
        .sort()
        .map((key) => [key, sortKeys((value as Record<string, unknown>)[key])]),
    );
  }
  return value;
}
