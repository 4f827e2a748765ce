/** Minimal self-contained image decoding: PPM/PGM (binary) and PNG.
 *
 * PNG support covers the cases the pipeline produces and consumes:
 * 8-bit depth, grayscale / RGB / RGBA / gray+alpha, non-interlaced.
 * Anything else should be converted upstream.
 */

import { readFileSync } from "node:fs";
import { inflateSync } from "node:zlib";

import { ExtractionError, type RgbImage } from "./types.js";

export function loadImage(path: string): RgbImage {
  let raw: Buffer;
  try {
    raw = readFileSync(path);
  } catch (err) {
    throw new ExtractionError(`cannot read image ${path}: ${(err as Error).message}`);
  }
  try {
    if (raw.length >= 8 && raw.readUInt32BE(0) === 0x89504e47) {
      return decodePng(raw);
    }
    if (raw.length >= 2 && raw[0] === 0x50 && (raw[1] === 0x35 || raw[1] === 0x36)) {
      return decodePnm(raw);
    }
  } catch (err) {
    throw new ExtractionError(`cannot decode ${path}: ${(err as Error).message}`);
  }
  throw new ExtractionError(`cannot decode ${path}: unsupported format (use PNG, PPM, or PGM)`);
}

// --- PNM (P5 gray / P6 rgb, 8-bit binary) ---------------------------------

export function decodePnm(raw: Buffer): RgbImage {
  let pos = 2;
  const fields: number[] = [];
  while (fields.length < 3) {
    while (pos < raw.length && isSpace(raw[pos]!)) pos++;
    if (raw[pos] === 0x23) {
      // comment runs to end of line
      while (pos < raw.length && raw[pos] !== 0x0a) pos++;
      continue;
    }
    let start = pos;
    while (pos < raw.length && !isSpace(raw[pos]!)) pos++;
    fields.push(Number.parseInt(raw.toString("ascii", start, pos), 10));
  }
  pos++; // single whitespace after maxval
  const [width, height, maxval] = fields as [number, number, number];
  if (!Number.isFinite(width) || !Number.isFinite(height) || maxval !== 255) {
    throw new Error(`bad PNM header (w=${width} h=${height} maxval=${maxval})`);
  }
  const channels = raw[1] === 0x36 ? 3 : 1;
  const expected = width * height * channels;
  if (raw.length - pos < expected) {
    throw new Error(`PNM payload truncated: need ${expected}, have ${raw.length - pos}`);
  }
  const pixels = new Uint8Array(width * height * 3);
  for (let i = 0; i < width * height; i++) {
    if (channels === 3) {
      pixels[i * 3] = raw[pos + i * 3]!;
      pixels[i * 3 + 1] = raw[pos + i * 3 + 1]!;
      pixels[i * 3 + 2] = raw[pos + i * 3 + 2]!;
    } else {
      const v = raw[pos + i]!;
      pixels[i * 3] = v;
      pixels[i * 3 + 1] = v;
      pixels[i * 3 + 2] = v;
    }
  }
  return { width, height, pixels };
}

function isSpace(byte: number): boolean {
  return byte === 0x20 || byte === 0x09 || byte === 0x0a || byte === 0x0d;
}

// --- PNG -------------------------------------------------------------------

const CHANNELS: Record<number, number> = { 0: 1, 2: 3, 4: 2, 6: 4 };

export function decodePng(raw: Buffer): RgbImage {
  let pos = 8;
  let width = 0;
  let height = 0;
  let colorType = -1;
  const idat: Buffer[] = [];
  while (pos + 8 <= raw.length) {
    const length = raw.readUInt32BE(pos);
    const kind = raw.toString("ascii", pos + 4, pos + 8);
    const body = raw.subarray(pos + 8, pos + 8 + length);
    if (kind === "IHDR") {
      width = body.readUInt32BE(0);
      height = body.readUInt32BE(4);
      const bitDepth = body[8]!;
      colorType = body[9]!;
      const interlace = body[12]!;
      if (bitDepth !== 8) throw new Error(`unsupported PNG bit depth ${bitDepth}`);
      if (!(colorType in CHANNELS)) throw new Error(`unsupported PNG color type ${colorType}`);
      if (interlace !== 0) throw new Error("interlaced PNG not supported");
    } else if (kind === "IDAT") {
      idat.push(Buffer.from(body));
    } else if (kind === "IEND") {
      break;
    }
    pos += 12 + length; // length + type + payload + crc
  }
  if (width === 0 || height === 0 || idat.length === 0) {
    throw new Error("PNG missing IHDR or IDAT");
  }
  const channels = CHANNELS[colorType]!;
  const data = inflateSync(Buffer.concat(idat));
  const stride = width * channels;
  if (data.length < height * (stride + 1)) {
    throw new Error("PNG pixel data truncated");
  }

  // undo per-scanline filters into `recon`
  const recon = new Uint8Array(height * stride);
  for (let y = 0; y < height; y++) {
    const filter = data[y * (stride + 1)]!;
    const rowIn = data.subarray(y * (stride + 1) + 1, (y + 1) * (stride + 1));
    const rowStart = y * stride;
    for (let x = 0; x < stride; x++) {
      const left = x >= channels ? recon[rowStart + x - channels]! : 0;
      const up = y > 0 ? recon[rowStart - stride + x]! : 0;
      const upLeft = y > 0 && x >= channels ? recon[rowStart - stride + x - channels]! : 0;
      let value = rowIn[x]!;
      switch (filter) {
        case 0:
          break;
        case 1:
          value = (value + left) & 0xff;
          break;
        case 2:
          value = (value + up) & 0xff;
          break;
        case 3:
          value = (value + ((left + up) >> 1)) & 0xff;
          break;
        case 4:
          value = (value + paeth(left, up, upLeft)) & 0xff;
          break;
        default:
          throw new Error(`unknown PNG filter ${filter}`);
      }
      recon[rowStart + x] = value;
    }
  }

  const pixels = new Uint8Array(width * height * 3);
  for (let i = 0; i < width * height; i++) {
    const offset = i * channels;
    if (channels >= 3) {
      pixels[i * 3] = recon[offset]!;
      pixels[i * 3 + 1] = recon[offset + 1]!;
      pixels[i * 3 + 2] = recon[offset + 2]!;
    } else {
      const v = recon[offset]!;
      pixels[i * 3] = v;
      pixels[i * 3 + 1] = v;
      pixels[i * 3 + 2] = v;
    }
  }
  return { width, height, pixels };
}

function paeth(a: number, b: number, c: number): number {
  const p = a + b - c;
  const pa = Math.abs(p - a);
  const pb = Math.abs(p - b);
  const pc = Math.abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}
