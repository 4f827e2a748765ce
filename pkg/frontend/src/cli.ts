#!/usr/bin/env node
/** catalog-extract: run an extraction job and write an embedding bundle. */

import yargs from "yargs";
import { hideBin } from "yargs/helpers";

import { loadJob } from "./job.js";
import { generateVlmDescriptions, runExtraction, scanDataset } from "./extract.js";
import { ExtractionError } from "./types.js";

async function main(): Promise<number> {
  const argv = await yargs(hideBin(process.argv))
    .scriptName("catalog-extract")
    .usage("$0 --job <job.json> [--captions-only]")
    .option("job", {
      type: "string",
      demandOption: true,
      describe: "extraction job file (paths resolve relative to it)",
    })
    .option("captions-only", {
      type: "boolean",
      default: false,
      describe: "only generate missing caption files, then stop",
    })
    .strict()
    .parse();

  try {
    const job = loadJob(argv.job);
    if (argv["captions-only"]) {
      const log = generateVlmDescriptions(job, scanDataset(job));
      console.log(JSON.stringify({ captions: log }, null, 2));
      return 0;
    }
    const summary = runExtraction(job);
    console.log(JSON.stringify(summary, null, 2));
    return 0;
  } catch (err) {
    if (err instanceof ExtractionError) {
      console.error(`error: ${err.message}`);
      return 1;
    }
    throw err;
  }
}

main().then(
  (code) => process.exit(code),
  (err) => {
    console.error(err);
    process.exit(2);
  },
);
