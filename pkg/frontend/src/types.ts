/** Shared shapes for the extraction pipeline. */

export interface ExtractionJob {
  /** Root of the image tree: <imageDir>/<split>/<className>/<file>. */
  imageDir: string;
  /** JSON array of class names; fixes the label/column order. */
  classListFile: string;
  /** Template list, one per line, "{}" as the class-name slot. */
  templatesFile: string;
  /** Per-class description sentences: <descriptionsDir>/<class>.txt (may be empty). */
  descriptionsDir: string;
  /** Per-item caption files <vlmDescriptionsDir>/<itemId>.txt; generated here when absent. */
  vlmDescriptionsDir: string;
  encoders: {
    /** image embeddings, dim F */
    image: string;
    /** prompt embeddings, dim F (must match the image encoder width) */
    text: string;
    /** caption embeddings, dim F_prime */
    longText: string;
    /** caption generator; "none" requires captions to exist already */
    vlm: string;
  };
  batchSize: number;
  /** Placement hint forwarded to external encoders; built-ins ignore it. */
  device: string;
  /** Prepend the generic base prompt as prompt row 0 (enables template ablations downstream). */
  includeBasePrompt: boolean;
  outputBundle: string;
  /** Extra provenance copied into the bundle manifest verbatim. */
  meta: Record<string, string>;
}

export interface RgbImage {
  width: number;
  height: number;
  /** Row-major RGB triples, values 0..255. */
  pixels: Uint8Array;
}

export interface SplitItems {
  name: string;
  /** Relative paths under imageDir, sorted; these are the item ids. */
  itemIds: string[];
  labels: number[];
}

export interface DatasetScan {
  classes: string[];
  splits: SplitItems[];
}

/** One dense row-major matrix of embeddings. */
export interface Matrix {
  rows: number;
  dim: number;
  values: Float64Array;
}

export interface PromptBlock {
  nClasses: number;
  promptsPerClass: number;
  dim: number;
  /** class-major, then prompt, then coordinate */
  values: Float64Array;
  layout: { base: number; templates: number; llm: number };
}

export interface ExtractionParts {
  scan: DatasetScan;
  image: Map<string, Matrix>;
  imageText: Map<string, Matrix>;
  prompts: PromptBlock;
  meta: Record<string, string>;
}

export class ExtractionError extends Error {}
