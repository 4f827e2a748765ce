/** The extraction pipeline: images + prompt text -> embedding bundle.
 *
 * Stages (all deterministic given the same inputs and encoders):
 *   1. scanDataset            - walk <imageDir>/<split>/<class>/<file>
 *   2. generateVlmDescriptions- caption files, skipping ones that exist
 *   3. extractImageEmbeddings - image encoder, dim F
 *   4. encodeDescriptions     - long-text encoder over captions, dim F_prime
 *   5. extractPromptEmbeddings- text encoder over templates + class sentences
 *   6. writeBundle            - the on-disk format the core consumes
 */

import { existsSync, mkdirSync, readFileSync, readdirSync, statSync, writeFileSync } from "node:fs";
import { dirname, join } from "node:path";

import { writeBundle } from "./bundle.js";
import { crc32 } from "./crc32.js";
import { makeImageEncoder, makeTextEncoder, type ImageEncoder, type TextEncoder } from "./encoders.js";
import { makeCaptioner, VlmUnavailableError } from "./vlm.js";
import {
  ExtractionError,
  type DatasetScan,
  type ExtractionJob,
  type ExtractionParts,
  type Matrix,
  type PromptBlock,
  type SplitItems,
} from "./types.js";

export const BASE_PROMPT = "A photo of a {}";

const IMAGE_EXTENSIONS = new Set([".png", ".ppm", ".pgm"]);

// --- stage 1: dataset scan ---------------------------------------------------

export function scanDataset(job: ExtractionJob): DatasetScan {
  const classes = readClassList(job.classListFile);
  const classIndex = new Map(classes.map((name, i) => [name, i]));

  // job invariant: every class has a description file, possibly empty
  for (const name of classes) {
    const file = join(job.descriptionsDir, `${name}.txt`);
    if (!existsSync(file)) {
      throw new ExtractionError(
        `class ${name} has no description file (${file}); create an empty placeholder if none exist`,
      );
    }
  }

  if (!existsSync(job.imageDir) || !statSync(job.imageDir).isDirectory()) {
    throw new ExtractionError(`image directory ${job.imageDir} does not exist`);
  }
  const splits: SplitItems[] = [];
  for (const splitName of listDirs(job.imageDir)) {
    const itemIds: string[] = [];
    const labels: number[] = [];
    for (const className of listDirs(join(job.imageDir, splitName))) {
      const label = classIndex.get(className);
      if (label === undefined) {
        throw new ExtractionError(
          `image directory contains class ${splitName}/${className} not present in ${job.classListFile}`,
        );
      }
      const dir = join(job.imageDir, splitName, className);
      for (const file of readdirSync(dir).sort()) {
        if (!IMAGE_EXTENSIONS.has(extension(file))) continue;
        itemIds.push(`${splitName}/${className}/${file}`);
        labels.push(label);
      }
    }
    // keep item order stable and label order aligned under one sort
    const order = itemIds.map((_, i) => i).sort((a, b) => (itemIds[a]! < itemIds[b]! ? -1 : 1));
    splits.push({
      name: splitName,
      itemIds: order.map((i) => itemIds[i]!),
      labels: order.map((i) => labels[i]!),
    });
  }
  if (splits.every((split) => split.itemIds.length === 0)) {
    throw new ExtractionError(`no images found under ${job.imageDir}`);
  }
  return { classes, splits };
}

function readClassList(path: string): string[] {
  if (!existsSync(path)) throw new ExtractionError(`class list ${path} not found`);
  let doc: unknown;
  try {
    doc = JSON.parse(readFileSync(path, "utf-8"));
  } catch (err) {
    throw new ExtractionError(`${path}: not valid JSON (${(err as Error).message})`);
  }
  if (!Array.isArray(doc) || doc.length === 0 || !doc.every((c) => typeof c === "string" && c.length > 0)) {
    throw new ExtractionError(`${path}: must be a non-empty JSON array of class names`);
  }
  if (new Set(doc).size !== doc.length) {
    throw new ExtractionError(`${path}: class names must be unique`);
  }
  return doc as string[];
}

function listDirs(path: string): string[] {
  return readdirSync(path, { withFileTypes: true })
    .filter((entry) => entry.isDirectory())
    .map((entry) => entry.name)
    .sort();
}

function extension(file: string): string {
  const dot = file.lastIndexOf(".");
  return dot < 0 ? "" : file.slice(dot).toLowerCase();
}

// --- stage 2: captions -------------------------------------------------------

export interface CaptionLog {
  generated: number;
  existing: number;
  /** item id -> CRC-32 of the caption text on disk */
  checksums: Record<string, number>;
}

export function generateVlmDescriptions(job: ExtractionJob, scan: DatasetScan): CaptionLog {
  const captioner = makeCaptioner(job.encoders.vlm, job.device);
  const log: CaptionLog = { generated: 0, existing: 0, checksums: {} };

  for (const split of scan.splits) {
    const missing: string[] = [];
    for (const itemId of split.itemIds) {
      if (existsSync(captionPath(job, itemId))) {
        log.existing++;
      } else {
        missing.push(itemId);
      }
    }
    if (missing.length > 0 && captioner === null) {
      throw new VlmUnavailableError(
        `${missing.length} caption file(s) missing under ${job.vlmDescriptionsDir} and vlm is "none" ` +
          `(first missing: ${missing[0]})`,
      );
    }
    for (let start = 0; start < missing.length; start += job.batchSize) {
      const batch = missing.slice(start, start + job.batchSize);
      const captions = captioner!.caption(batch.map((itemId) => join(job.imageDir, itemId)));
      batch.forEach((itemId, i) => {
        const path = captionPath(job, itemId);
        mkdirSync(dirname(path), { recursive: true });
        writeFileSync(path, captions[i]! + "\n", "utf-8");
        log.generated++;
      });
    }
    for (const itemId of split.itemIds) {
      log.checksums[itemId] = crc32(readFileSync(captionPath(job, itemId)));
    }
  }
  return log;
}

function captionPath(job: ExtractionJob, itemId: string): string {
  return join(job.vlmDescriptionsDir, `${itemId}.txt`);
}

// --- stages 3 and 4: per-item embeddings --------------------------------------

export function extractImageEmbeddings(
  job: ExtractionJob,
  scan: DatasetScan,
  encoder?: ImageEncoder,
): Map<string, Matrix> {
  const enc = encoder ?? makeImageEncoder(job.encoders.image, job.device);
  const result = new Map<string, Matrix>();
  for (const split of scan.splits) {
    const rows: Float64Array[] = [];
    for (let start = 0; start < split.itemIds.length; start += job.batchSize) {
      const batch = split.itemIds.slice(start, start + job.batchSize);
      rows.push(...enc.encodeImages(batch.map((itemId) => join(job.imageDir, itemId))));
    }
    result.set(split.name, stackRows(rows, enc.dim, `image[${split.name}]`));
  }
  return result;
}

export function encodeDescriptions(
  job: ExtractionJob,
  scan: DatasetScan,
  encoder?: TextEncoder,
): Map<string, Matrix> {
  const enc = encoder ?? makeTextEncoder(job.encoders.longText, job.device);
  const result = new Map<string, Matrix>();
  for (const split of scan.splits) {
    const texts = split.itemIds.map((itemId) => {
      const path = captionPath(job, itemId);
      if (!existsSync(path)) {
        throw new ExtractionError(`caption file ${path} missing; run the caption stage first`);
      }
      return readFileSync(path, "utf-8").trim();
    });
    const rows: Float64Array[] = [];
    for (let start = 0; start < texts.length; start += job.batchSize) {
      rows.push(...enc.encodeTexts(texts.slice(start, start + job.batchSize)));
    }
    result.set(split.name, stackRows(rows, enc.dim, `image_text[${split.name}]`));
  }
  return result;
}

function stackRows(rows: Float64Array[], dim: number, name: string): Matrix {
  const values = new Float64Array(rows.length * dim);
  rows.forEach((row, i) => {
    if (row.length !== dim) {
      throw new ExtractionError(`${name}: row ${i} has width ${row.length}, expected ${dim}`);
    }
    values.set(row, i * dim);
  });
  return { rows: rows.length, dim, values };
}

// --- stage 5: class prompt block ----------------------------------------------

export function listClassPrompts(
  job: ExtractionJob,
  className: string,
  templates: string[],
  sentences: string[],
  padTo: number,
): string[] {
  const prompts: string[] = [];
  if (job.includeBasePrompt) prompts.push(BASE_PROMPT.replace(/\{\}/g, className));
  prompts.push(...templates.map((t) => t.replace(/\{\}/g, className)));
  prompts.push(...sentences);
  // classes with fewer description sentences repeat the base prompt so the
  // block stays rectangular
  while (prompts.length < padTo) prompts.push(BASE_PROMPT.replace(/\{\}/g, className));
  return prompts;
}

export function extractPromptEmbeddings(
  job: ExtractionJob,
  scan: DatasetScan,
  encoder?: TextEncoder,
): PromptBlock {
  const enc = encoder ?? makeTextEncoder(job.encoders.text, job.device);
  const templates = readTemplates(job.templatesFile);
  const perClassSentences = scan.classes.map((name) => readSentences(join(job.descriptionsDir, `${name}.txt`)));
  const maxSentences = Math.max(...perClassSentences.map((s) => s.length));
  const baseRows = job.includeBasePrompt ? 1 : 0;
  const promptsPerClass = baseRows + templates.length + maxSentences;
  if (promptsPerClass === 0) {
    throw new ExtractionError("no prompts at all: empty template list and no description sentences");
  }

  const rows: Float64Array[] = [];
  scan.classes.forEach((className, c) => {
    const prompts = listClassPrompts(job, className, templates, perClassSentences[c]!, promptsPerClass);
    for (let start = 0; start < prompts.length; start += job.batchSize) {
      rows.push(...enc.encodeTexts(prompts.slice(start, start + job.batchSize)));
    }
  });
  const stacked = stackRows(rows, enc.dim, "class_prompts");
  return {
    nClasses: scan.classes.length,
    promptsPerClass,
    dim: enc.dim,
    values: stacked.values,
    layout: { base: baseRows, templates: templates.length, llm: maxSentences },
  };
}

export function readTemplates(path: string): string[] {
  if (!existsSync(path)) throw new ExtractionError(`template file ${path} not found`);
  return readFileSync(path, "utf-8")
    .split("\n")
    .map((line) => line.trim())
    .filter((line) => line.length > 0);
}

function readSentences(path: string): string[] {
  return readFileSync(path, "utf-8")
    .split("\n")
    .map((line) => line.trim())
    .filter((line) => line.length > 0);
}

// --- orchestration -------------------------------------------------------------

export interface ExtractionSummary {
  bundle: string;
  classes: number;
  splits: Record<string, number>;
  dims: { image: number; imageText: number; promptsPerClass: number };
  captions: CaptionLog;
}

export function runExtraction(job: ExtractionJob): ExtractionSummary {
  const scan = scanDataset(job);
  const captions = generateVlmDescriptions(job, scan);

  const imageEncoder = makeImageEncoder(job.encoders.image, job.device);
  const textEncoder = makeTextEncoder(job.encoders.text, job.device);
  const longTextEncoder = makeTextEncoder(job.encoders.longText, job.device);
  if (textEncoder.dim !== imageEncoder.dim) {
    throw new ExtractionError(
      `text encoder width ${textEncoder.dim} must match image encoder width ${imageEncoder.dim}; ` +
        "both branches score against the same class-text matrix",
    );
  }

  const parts: ExtractionParts = {
    scan,
    image: extractImageEmbeddings(job, scan, imageEncoder),
    imageText: encodeDescriptions(job, scan, longTextEncoder),
    prompts: extractPromptEmbeddings(job, scan, textEncoder),
    meta: {
      generator: "catalog-extractor",
      "encoder.image": imageEncoder.name,
      "encoder.text": textEncoder.name,
      "encoder.long_text": longTextEncoder.name,
      "encoder.vlm": job.encoders.vlm,
      ...job.meta,
    },
  };
  writeBundle(job, parts);
  return {
    bundle: job.outputBundle,
    classes: scan.classes.length,
    splits: Object.fromEntries(scan.splits.map((split) => [split.name, split.itemIds.length])),
    dims: {
      image: imageEncoder.dim,
      imageText: longTextEncoder.dim,
      promptsPerClass: parts.prompts.promptsPerClass,
    },
    captions,
  };
}
