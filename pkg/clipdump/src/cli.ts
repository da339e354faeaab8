#!/usr/bin/env node
/** Command-line entry points: extract (trees -> FEMB/FCLS/manifest) and
 * zeroshot (score embeddings against a prompt classifier). */

import yargs from "yargs";
import { hideBin } from "yargs/helpers";

import { ClipEncoder, Encoder, MockEncoder } from "./encoder.js";
import { extractAll } from "./extract.js";
import { zeroShotAccuracy } from "./zeroshot.js";

async function makeEncoder(kind: string, model: string, dim: number, seed: number): Promise<Encoder> {
  if (kind === "clip") {
    return ClipEncoder.create(model);
  }
  if (kind === "mock") {
    return new MockEncoder(dim, seed);
  }
  throw new Error(`unknown encoder '${kind}' (expected 'clip' or 'mock')`);
}

export async function main(argv: string[]): Promise<number> {
  let exitCode = 0;
  await yargs(argv)
    .scriptName("clipdump")
    .command(
      "extract",
      "embed class-per-folder image trees into FEMB/FCLS files",
      (args) =>
        args
          .option("data-root", { type: "string", demandOption: true,
                                 describe: "directory with one image tree per domain" })
          .option("out", { type: "string", demandOption: true })
          .option("domains", { type: "string",
                               describe: "comma-separated domain folders (default: all)" })
          .option("template", { type: "string", default: "a picture of a {class}" })
          .option("encoder", { type: "string", default: "clip", choices: ["clip", "mock"] })
          .option("model", { type: "string", default: "Xenova/clip-vit-base-patch32" })
          .option("dim", { type: "number", default: 512,
                           describe: "embedding width of the mock encoder" })
          .option("seed", { type: "number", default: 0,
                            describe: "projection seed of the mock encoder" }),
      async (args) => {
        try {
          const encoder = await makeEncoder(args.encoder, args.model, args.dim, args.seed);
          const summary = await extractAll(
            {
              dataRoot: args["data-root"],
              outDir: args.out,
              template: args.template,
              encoder,
            },
            args.domains ? args.domains.split(",").map((s) => s.trim()) : undefined,
          );
          console.log(
            `encoder ${encoder.name}: ${summary.classes.length} classes, ` +
              `dimension ${summary.dimension}`,
          );
          for (const domain of summary.domains) {
            console.log(
              `  ${domain.name}: ${domain.records} records ` +
                `(${domain.skipped} skipped) -> ${domain.path}`,
            );
          }
          console.log(`classifier -> ${summary.classifierPath}`);
          console.log(`manifest -> ${summary.manifestPath}`);
        } catch (error) {
          console.error(`extract failed: ${(error as Error).message}`);
          exitCode = 1;
        }
      },
    )
    .command(
      "zeroshot",
      "classify stored embeddings with a prompt classifier (no training)",
      (args) =>
        args
          .option("embeddings", { type: "string", demandOption: true })
          .option("classifier", { type: "string", demandOption: true }),
      async (args) => {
        try {
          const accuracy = zeroShotAccuracy(args.embeddings, args.classifier);
          console.log(`zero-shot accuracy = ${accuracy.toFixed(4)}`);
        } catch (error) {
          console.error(`zeroshot failed: ${(error as Error).message}`);
          exitCode = 1;
        }
      },
    )
    .demandCommand(1)
    .strict()
    .help()
    .parseAsync();
  return exitCode;
}

const invokedDirectly =
  process.argv[1] !== undefined &&
  import.meta.url === new URL(`file://${process.argv[1]}`).href;
if (invokedDirectly) {
  main(hideBin(process.argv)).then((code) => {
    process.exitCode = code;
  });
}
