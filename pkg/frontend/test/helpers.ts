/** Fixture builders: procedural images and a full on-disk dataset. */

import { mkdirSync, writeFileSync } from "node:fs";
import { join } from "node:path";
import { deflateSync } from "node:zlib";

import type { ExtractionJob } from "../src/types.js";
import { parseJob } from "../src/job.js";

export type PixelFn = (x: number, y: number) => [number, number, number];

export function writePpm(path: string, width: number, height: number, pixel: PixelFn): void {
  const header = Buffer.from(`P6\n${width} ${height}\n255\n`, "ascii");
  const body = Buffer.alloc(width * height * 3);
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const [r, g, b] = pixel(x, y);
      const i = (y * width + x) * 3;
      body[i] = r;
      body[i + 1] = g;
      body[i + 2] = b;
    }
  }
  writeFileSync(path, Buffer.concat([header, body]));
}

/** Minimal PNG encoder (8-bit RGB, filter 0) to exercise the decoder. */
export function writePng(path: string, width: number, height: number, pixel: PixelFn): void {
  const raw = Buffer.alloc(height * (width * 3 + 1));
  for (let y = 0; y < height; y++) {
    raw[y * (width * 3 + 1)] = 0; // filter: none
    for (let x = 0; x < width; x++) {
      const [r, g, b] = pixel(x, y);
      const i = y * (width * 3 + 1) + 1 + x * 3;
      raw[i] = r;
      raw[i + 1] = g;
      raw[i + 2] = b;
    }
  }
  const ihdr = Buffer.alloc(13);
  ihdr.writeUInt32BE(width, 0);
  ihdr.writeUInt32BE(height, 4);
  ihdr[8] = 8; // bit depth
  ihdr[9] = 2; // color type: RGB
  const png = Buffer.concat([
    Buffer.from([0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a]),
    chunk("IHDR", ihdr),
    chunk("IDAT", deflateSync(raw)),
    chunk("IEND", Buffer.alloc(0)),
  ]);
  writeFileSync(path, png);
}

function chunk(kind: string, body: Buffer): Buffer {
  const out = Buffer.alloc(12 + body.length);
  out.writeUInt32BE(body.length, 0);
  out.write(kind, 4, "ascii");
  body.copy(out, 8);
  out.writeUInt32BE(pngCrc(out.subarray(4, 8 + body.length)), 8 + body.length);
  return out;
}

function pngCrc(data: Buffer): number {
  let crc = 0xffffffff;
  for (const byte of data) {
    crc ^= byte;
    for (let k = 0; k < 8; k++) {
      crc = crc & 1 ? 0xedb88320 ^ (crc >>> 1) : crc >>> 1;
    }
  }
  return (crc ^ 0xffffffff) >>> 0;
}

/** Noisy but deterministic texture per (class, index). */
function texture(classIndex: number, itemIndex: number): PixelFn {
  return (x, y) => {
    const wave = Math.sin(x * 0.7 + itemIndex) * Math.cos(y * 0.5 + classIndex * 2.1);
    const noise = Math.abs(Math.sin(x * 12.9898 + y * 78.233 + itemIndex * 3.7)) * 50;
    if (classIndex === 0) {
      return [150 + wave * 60, 90 + noise * 0.4, 40]; // brown-ish, dog-like coat
    }
    return [100 + noise * 0.5, 100 + wave * 50, 105 + wave * 40]; // gray-ish coat
  };
}

export interface FixtureOptions {
  classes?: string[];
  imagesPerClass?: Record<string, number>;
  sentences?: Record<string, string[]>;
  includeBasePrompt?: boolean;
  vlm?: string;
  templates?: string[];
}

export const DEFAULT_TEMPLATES = [
  "a photo captured by a camera trap of a {}.",
  "a camera trap image of the {}.",
  "a dark camera trap image of a {}.",
];

/** Build a complete dataset tree + job file; returns the parsed job. */
export function makeFixtureDataset(root: string, options: FixtureOptions = {}): ExtractionJob {
  const classes = options.classes ?? ["cat", "dog"];
  const perClass = options.imagesPerClass ?? Object.fromEntries(classes.map((c) => [c, 5]));
  const sentences =
    options.sentences ??
    Object.fromEntries(classes.map((c, i) => [c, [`a ${c} has a distinctive coat pattern ${i}.`]]));

  mkdirSync(join(root, "descriptions"), { recursive: true });
  writeFileSync(join(root, "classes.json"), JSON.stringify(classes, null, 2) + "\n");
  writeFileSync(
    join(root, "templates.txt"),
    (options.templates ?? DEFAULT_TEMPLATES).join("\n") + "\n",
  );
  classes.forEach((name) => {
    writeFileSync(join(root, "descriptions", `${name}.txt`), (sentences[name] ?? []).join("\n") + "\n");
  });

  classes.forEach((name, classIndex) => {
    const count = perClass[name] ?? 0;
    const trainDir = join(root, "images", "train", name);
    mkdirSync(trainDir, { recursive: true });
    for (let i = 0; i < count; i++) {
      writePpm(join(trainDir, `img_${i}.ppm`), 24, 20, texture(classIndex, i));
    }
    const valDir = join(root, "images", "val", name);
    mkdirSync(valDir, { recursive: true });
    writePpm(join(valDir, `img_0.ppm`), 24, 20, texture(classIndex, 100));
  });

  const jobDoc = {
    imageDir: "images",
    classListFile: "classes.json",
    templatesFile: "templates.txt",
    descriptionsDir: "descriptions",
    vlmDescriptionsDir: "captions",
    encoders: {
      image: "colorgrad-128",
      text: "hashgram-128",
      longText: "hashgram-96",
      vlm: options.vlm ?? "statcap",
    },
    batchSize: 4,
    includeBasePrompt: options.includeBasePrompt ?? false,
    outputBundle: "bundle",
  };
  writeFileSync(join(root, "job.json"), JSON.stringify(jobDoc, null, 2) + "\n");

  const resolved = parseJob(jobDoc);
  return {
    ...resolved,
    imageDir: join(root, "images"),
    classListFile: join(root, "classes.json"),
    templatesFile: join(root, "templates.txt"),
    descriptionsDir: join(root, "descriptions"),
    vlmDescriptionsDir: join(root, "captions"),
    outputBundle: join(root, "bundle"),
  };
}
