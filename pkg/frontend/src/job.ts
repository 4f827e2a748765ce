/** Job-file loading and validation (strict: unknown keys are errors). */

import { readFileSync } from "node:fs";
import { dirname, resolve } from "node:path";
import { z } from "zod";

import { ExtractionError, type ExtractionJob } from "./types.js";

const encoderSchema = z
  .object({
    image: z.string().min(1).default("colorgrad-512"),
    text: z.string().min(1).default("hashgram-512"),
    longText: z.string().min(1).default("hashgram-768"),
    vlm: z.string().min(1).default("statcap"),
  })
  .strict();

const jobSchema = z
  .object({
    imageDir: z.string().min(1),
    classListFile: z.string().min(1),
    templatesFile: z.string().min(1),
    descriptionsDir: z.string().min(1),
    vlmDescriptionsDir: z.string().min(1),
    encoders: encoderSchema.default({}),
    batchSize: z.number().int().min(1).default(16),
    device: z.string().default("cpu"),
    includeBasePrompt: z.boolean().default(false),
    outputBundle: z.string().min(1),
    meta: z.record(z.string(), z.string()).default({}),
  })
  .strict();

/** Parse and validate a job document; paths stay as given. */
export function parseJob(doc: unknown): ExtractionJob {
  const result = jobSchema.safeParse(doc);
  if (!result.success) {
    const issues = result.error.issues
      .map((issue) => `${issue.path.join(".") || "(root)"}: ${issue.message}`)
      .join("; ");
    throw new ExtractionError(`invalid job: ${issues}`);
  }
  return result.data;
}

/** Load a job file; relative paths resolve against the file's directory. */
export function loadJob(path: string): ExtractionJob {
  let text: string;
  try {
    text = readFileSync(path, "utf-8");
  } catch (err) {
    throw new ExtractionError(`cannot read job file ${path}: ${(err as Error).message}`);
  }
  let doc: unknown;
  try {
    doc = JSON.parse(text);
  } catch (err) {
    throw new ExtractionError(`${path}: not valid JSON (${(err as Error).message})`);
  }
  const job = parseJob(doc);
  const base = dirname(resolve(path));
  const rel = (p: string) => resolve(base, p);
  return {
    ...job,
    imageDir: rel(job.imageDir),
    classListFile: rel(job.classListFile),
    templatesFile: rel(job.templatesFile),
    descriptionsDir: rel(job.descriptionsDir),
    vlmDescriptionsDir: rel(job.vlmDescriptionsDir),
    outputBundle: rel(job.outputBundle),
  };
}
