/** Encoder registry.
 *
 * Built-ins are deterministic, dependency-free featurizers so the whole
 * pipeline runs offline: `colorgrad-<dim>` turns an image into per-cell
 * color statistics and gradient-orientation histograms; `hashgram-<dim>`
 * hashes character n-grams into a signed bag-of-features vector. They are
 * real (if deliberately simple) encoders, not semantic models; to plug in
 * a CLIP/BERT-class model, point `external:<command>` at any process that
 * speaks the one-JSON-object-per-line protocol (see externalRequest).
 *
 * Every encoder declares its output width; the bundle manifest records the
 * width actually measured from the instance, never an assumed constant.
 */

import { spawnSync } from "node:child_process";

import { loadImage } from "./images.js";
import { ExtractionError, type RgbImage } from "./types.js";

export interface ImageEncoder {
  readonly name: string;
  readonly dim: number;
  encodeImages(paths: string[]): Float64Array[];
}

export interface TextEncoder {
  readonly name: string;
  readonly dim: number;
  encodeTexts(texts: string[]): Float64Array[];
}

export function makeImageEncoder(name: string, device = "cpu"): ImageEncoder {
  if (name.startsWith("external:")) {
    return new ExternalEncoder(name, device);
  }
  const match = /^colorgrad-(\d+)$/.exec(name);
  if (match) {
    return new ColorGradEncoder(Number.parseInt(match[1]!, 10));
  }
  throw new ExtractionError(`unknown image encoder ${name} (try colorgrad-512 or external:<command>)`);
}

export function makeTextEncoder(name: string, device = "cpu"): TextEncoder {
  if (name.startsWith("external:")) {
    return new ExternalEncoder(name, device);
  }
  const match = /^hashgram-(\d+)$/.exec(name);
  if (match) {
    const dim = Number.parseInt(match[1]!, 10);
    if (dim < 8) throw new ExtractionError(`hashgram width must be >= 8, got ${dim}`);
    return new HashGramEncoder(dim);
  }
  throw new ExtractionError(`unknown text encoder ${name} (try hashgram-512 or external:<command>)`);
}

// --- colorgrad: grid color stats + gradient orientation histogram ----------

const CELL_FEATURES = 8; // mean r,g,b; luminance mean,std; 3-bin orientation + magnitude

class ColorGradEncoder implements ImageEncoder {
  readonly name: string;
  readonly dim: number;
  private readonly grid: number;

  constructor(dim: number) {
    const grid = Math.sqrt(dim / CELL_FEATURES);
    if (!Number.isInteger(grid)) {
      throw new ExtractionError(
        `colorgrad width must be ${CELL_FEATURES} * g^2 (128, 512, 2048, ...), got ${dim}`,
      );
    }
    this.grid = grid;
    this.dim = dim;
    this.name = `colorgrad-${dim}`;
  }

  encodeImages(paths: string[]): Float64Array[] {
    return paths.map((path) => this.encodeOne(loadImage(path)));
  }

  private encodeOne(image: RgbImage): Float64Array {
    const { width, height, pixels } = image;
    const g = this.grid;
    const features = new Float64Array(this.dim);
    const luma = (i: number) =>
      (0.299 * pixels[i * 3]! + 0.587 * pixels[i * 3 + 1]! + 0.114 * pixels[i * 3 + 2]!) / 255;

    for (let cy = 0; cy < g; cy++) {
      for (let cx = 0; cx < g; cx++) {
        const x0 = Math.floor((cx * width) / g);
        const x1 = Math.max(Math.floor(((cx + 1) * width) / g), x0 + 1);
        const y0 = Math.floor((cy * height) / g);
        const y1 = Math.max(Math.floor(((cy + 1) * height) / g), y0 + 1);

        let r = 0;
        let gr = 0;
        let b = 0;
        let lumSum = 0;
        let lumSq = 0;
        let count = 0;
        const hist = [0, 0, 0]; // horizontal, vertical, diagonal gradient energy
        let magnitude = 0;

        for (let y = y0; y < y1 && y < height; y++) {
          for (let x = x0; x < x1 && x < width; x++) {
            const i = y * width + x;
            r += pixels[i * 3]! / 255;
            gr += pixels[i * 3 + 1]! / 255;
            b += pixels[i * 3 + 2]! / 255;
            const l = luma(i);
            lumSum += l;
            lumSq += l * l;
            count++;
            if (x + 1 < width && y + 1 < height) {
              const dx = luma(i + 1) - l;
              const dy = luma(i + width) - l;
              const mag = Math.hypot(dx, dy);
              magnitude += mag;
              if (mag > 1e-9) {
                const angle = Math.atan2(dy, dx); // [-pi, pi]
                const bin = Math.min(Math.floor(((angle + Math.PI) / (2 * Math.PI)) * 3), 2);
                hist[bin]! += mag;
              }
            }
          }
        }

        const mean = lumSum / count;
        const variance = Math.max(lumSq / count - mean * mean, 0);
        const base = (cy * g + cx) * CELL_FEATURES;
        features[base] = r / count;
        features[base + 1] = gr / count;
        features[base + 2] = b / count;
        features[base + 3] = mean;
        features[base + 4] = Math.sqrt(variance);
        features[base + 5] = hist[0]! / count;
        features[base + 6] = hist[1]! / count;
        features[base + 7] = hist[2]! / count + magnitude / count;
      }
    }
    return l2Normalize(features);
  }
}

// --- hashgram: signed character n-gram hashing ------------------------------

class HashGramEncoder implements TextEncoder {
  readonly name: string;

  constructor(readonly dim: number) {
    this.name = `hashgram-${dim}`;
  }

  encodeTexts(texts: string[]): Float64Array[] {
    return texts.map((text) => this.encodeOne(text));
  }

  private encodeOne(text: string): Float64Array {
    const features = new Float64Array(this.dim);
    const normalized = ` ${text.toLowerCase().replace(/\s+/g, " ").trim()} `;
    for (const n of [2, 3, 4]) {
      for (let i = 0; i + n <= normalized.length; i++) {
        const hash = fnv1a(normalized, i, n);
        const index = hash % this.dim;
        const sign = (hash >>> 17) & 1 ? 1 : -1;
        features[index]! += sign;
      }
    }
    // an all-zero embedding would break cosine downstream; a constant
    // fallback keeps degenerate inputs (empty string) representable
    let any = false;
    for (const v of features) if (v !== 0) any = true;
    if (!any) features[0] = 1;
    return l2Normalize(features);
  }
}

function fnv1a(text: string, start: number, length: number): number {
  let hash = 0x811c9dc5;
  for (let i = start; i < start + length; i++) {
    hash ^= text.charCodeAt(i);
    hash = Math.imul(hash, 0x01000193);
  }
  return hash >>> 0;
}

function l2Normalize(vector: Float64Array): Float64Array {
  let sq = 0;
  for (const v of vector) sq += v * v;
  const norm = Math.sqrt(sq);
  if (norm > 0) {
    for (let i = 0; i < vector.length; i++) vector[i]! /= norm;
  }
  return vector;
}

// --- external adapter --------------------------------------------------------
//
// Protocol: the command receives one JSON object per stdin line and must
// answer one JSON object per stdout line, in order:
//   {"op": "info"}                        -> {"dim": <int>}
//   {"op": "embed_image", "path": "..."}  -> {"embedding": [..]}
//   {"op": "embed_text", "text": "..."}   -> {"embedding": [..]}
//   {"op": "caption", "path": "..."}      -> {"caption": "..."}

export function externalRequest(command: string, requests: object[], device: string): unknown[] {
  const proc = spawnSync(command, {
    shell: true,
    input: requests.map((r) => JSON.stringify(r)).join("\n") + "\n",
    encoding: "utf-8",
    env: { ...process.env, EXTRACTOR_DEVICE: device },
    maxBuffer: 256 * 1024 * 1024,
  });
  if (proc.status !== 0) {
    throw new ExtractionError(
      `external command failed (${command}): status ${proc.status}\n${proc.stderr}`,
    );
  }
  const lines = proc.stdout.split("\n").filter((line) => line.trim() !== "");
  if (lines.length !== requests.length) {
    throw new ExtractionError(
      `external command ${command}: expected ${requests.length} responses, got ${lines.length}`,
    );
  }
  return lines.map((line) => JSON.parse(line));
}

class ExternalEncoder implements ImageEncoder, TextEncoder {
  readonly name: string;
  readonly dim: number;
  private readonly command: string;

  constructor(name: string, private readonly device: string) {
    this.name = name;
    this.command = name.slice("external:".length);
    const [info] = externalRequest(this.command, [{ op: "info" }], device) as [{ dim?: number }];
    if (!info || typeof info.dim !== "number" || info.dim < 1) {
      throw new ExtractionError(`external encoder ${this.command} returned no usable dim`);
    }
    this.dim = info.dim;
  }

  encodeImages(paths: string[]): Float64Array[] {
    return this.embed(paths.map((path) => ({ op: "embed_image", path })));
  }

  encodeTexts(texts: string[]): Float64Array[] {
    return this.embed(texts.map((text) => ({ op: "embed_text", text })));
  }

  private embed(requests: object[]): Float64Array[] {
    const responses = externalRequest(this.command, requests, this.device) as {
      embedding?: number[];
    }[];
    return responses.map((response, i) => {
      if (!response.embedding || response.embedding.length !== this.dim) {
        throw new ExtractionError(
          `external encoder ${this.command}: response ${i} has no ${this.dim}-wide embedding`,
        );
      }
      return Float64Array.from(response.embedding);
    });
  }
}
