/** Caption generation for the image-text branch.
 *
 * `statcap` is a deterministic rule-based describer working from image
 * statistics; it keeps the pipeline runnable with no model downloads.
 * `external:<command>` forwards to a real VLM process (same line protocol
 * as the encoders); `none` requires every caption file to exist already.
 */

import { externalRequest } from "./encoders.js";
import { loadImage } from "./images.js";
import { ExtractionError } from "./types.js";

export class VlmUnavailableError extends ExtractionError {}

export interface Captioner {
  readonly name: string;
  caption(paths: string[]): string[];
}

export function makeCaptioner(name: string, device = "cpu"): Captioner | null {
  if (name === "none") return null;
  if (name === "statcap") return new StatCaptioner();
  if (name.startsWith("external:")) return new ExternalCaptioner(name, device);
  throw new ExtractionError(`unknown vlm ${name} (try statcap, none, or external:<command>)`);
}

const HUE_WORDS: [number, string][] = [
  [30, "reddish-brown"],
  [75, "tawny yellow"],
  [150, "greenish"],
  [255, "bluish-gray"],
  [330, "purplish"],
  [360, "reddish-brown"],
];

class StatCaptioner implements Captioner {
  readonly name = "statcap";

  caption(paths: string[]): string[] {
    return paths.map((path) => {
      const { width, height, pixels } = loadImage(path);
      let r = 0;
      let g = 0;
      let b = 0;
      const n = width * height;
      for (let i = 0; i < n; i++) {
        r += pixels[i * 3]!;
        g += pixels[i * 3 + 1]!;
        b += pixels[i * 3 + 2]!;
      }
      r /= n * 255;
      g /= n * 255;
      b /= n * 255;
      const brightness = 0.299 * r + 0.587 * g + 0.114 * b;
      const saturation = Math.max(r, g, b) - Math.min(r, g, b);
      const tone =
        saturation < 0.04 ? (brightness < 0.35 ? "dark gray" : "pale gray") : hueWord(r, g, b);
      const light = brightness < 0.3 ? "dim" : brightness < 0.65 ? "moderately lit" : "bright";
      return (
        `the animal has a predominantly ${tone} coat. ` +
        `the body fills the ${width >= height ? "wide" : "tall"} frame. ` +
        `the photograph is ${light} overall.`
      );
    });
  }
}

function hueWord(r: number, g: number, b: number): string {
  const max = Math.max(r, g, b);
  const min = Math.min(r, g, b);
  const delta = max - min;
  let hue: number;
  if (delta === 0) hue = 0;
  else if (max === r) hue = 60 * (((g - b) / delta + 6) % 6);
  else if (max === g) hue = 60 * ((b - r) / delta + 2);
  else hue = 60 * ((r - g) / delta + 4);
  for (const [limit, word] of HUE_WORDS) {
    if (hue < limit) return word;
  }
  return "reddish-brown";
}

class ExternalCaptioner implements Captioner {
  readonly name: string;
  private readonly command: string;

  constructor(name: string, private readonly device: string) {
    this.name = name;
    this.command = name.slice("external:".length);
  }

  caption(paths: string[]): string[] {
    const responses = externalRequest(
      this.command,
      paths.map((path) => ({ op: "caption", path })),
      this.device,
    ) as { caption?: string }[];
    return responses.map((response, i) => {
      if (typeof response.caption !== "string" || response.caption.length === 0) {
        throw new ExtractionError(`external vlm ${this.command}: response ${i} has no caption`);
      }
      return response.caption;
    });
  }
}
