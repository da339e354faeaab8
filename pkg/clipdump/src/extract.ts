/**
 * Walk class-per-folder image trees (one tree per domain) and emit one
 * FEMB file per domain, one FCLS classifier from class prompts, and a
 * manifest tying them together.
 *
 * Class indices come from case-sensitive lexicographic folder-name
 * order, which must be identical across domains: downstream training
 * aligns classifier rows with labels purely by index.
 */

import * as fs from "node:fs";
import * as path from "node:path";

import { Encoder } from "./encoder.js";
import { IMAGE_EXTENSIONS } from "./images.js";
import {
  EmbeddingRecord,
  Manifest,
  writeFcls,
  writeFemb,
  writeManifest,
} from "./formats.js";

export interface ExtractionJob {
  dataRoot: string;
  outDir: string;
  template: string; // must contain "{class}"
  encoder: Encoder;
  warn?: (message: string) => void;
}

export interface DomainTree {
  name: string;
  /** class name -> sorted image paths */
  classFiles: Map<string, string[]>;
}

export interface ExtractionSummary {
  manifestPath: string;
  classifierPath: string;
  dimension: number;
  classes: string[];
  domains: { name: string; path: string; records: number; skipped: number }[];
}

function listDirectories(parent: string): string[] {
  return fs
    .readdirSync(parent, { withFileTypes: true })
    .filter((entry) => entry.isDirectory())
    .map((entry) => entry.name)
    .sort();
}

function listImages(parent: string): string[] {
  return fs
    .readdirSync(parent, { withFileTypes: true })
    .filter((entry) => entry.isFile() && IMAGE_EXTENSIONS.has(path.extname(entry.name).toLowerCase()))
    .map((entry) => path.join(parent, entry.name))
    .sort();
}

export function scanDataset(dataRoot: string, domainNames?: string[]): DomainTree[] {
  if (!fs.existsSync(dataRoot)) {
    throw new Error(`data root does not exist: ${dataRoot}`);
  }
  const names = domainNames && domainNames.length > 0 ? [...domainNames].sort() : listDirectories(dataRoot);
  if (names.length === 0) {
    throw new Error(`no domain directories under ${dataRoot}`);
  }
  const trees: DomainTree[] = [];
  let reference: string[] | null = null;
  for (const name of names) {
    const domainDir = path.join(dataRoot, name);
    if (!fs.existsSync(domainDir)) {
      throw new Error(`domain directory does not exist: ${domainDir}`);
    }
    const classNames = listDirectories(domainDir);
    if (classNames.length === 0) {
      throw new Error(`domain ${name} has no class folders`);
    }
    if (reference === null) {
      reference = classNames;
    } else if (JSON.stringify(classNames) !== JSON.stringify(reference)) {
      throw new Error(
        `class folders differ between domains: ${name} has [${classNames}], ` +
          `expected [${reference}]`,
      );
    }
    const classFiles = new Map<string, string[]>();
    for (const className of classNames) {
      const files = listImages(path.join(domainDir, className));
      if (files.length === 0) {
        throw new Error(`class folder is empty: ${path.join(domainDir, className)}`);
      }
      classFiles.set(className, files);
    }
    trees.push({ name, classFiles });
  }
  return trees;
}

export async function extractDomain(
  job: ExtractionJob,
  tree: DomainTree,
  classes: string[],
): Promise<{ records: EmbeddingRecord[]; skipped: number }> {
  const warn = job.warn ?? ((message) => console.warn(message));
  const records: EmbeddingRecord[] = [];
  let skipped = 0;
  for (let label = 0; label < classes.length; label++) {
    let encoded = 0;
    for (const filePath of tree.classFiles.get(classes[label]) ?? []) {
      try {
        records.push({ label, feature: await job.encoder.embedImage(filePath) });
        encoded += 1;
      } catch (error) {
        skipped += 1;
        warn(`skipping unreadable image ${filePath}: ${(error as Error).message}`);
      }
    }
    if (encoded === 0) {
      throw new Error(
        `no readable images for class '${classes[label]}' in domain '${tree.name}'`,
      );
    }
  }
  return { records, skipped };
}

export async function extractClassifier(
  job: ExtractionJob,
  classes: string[],
): Promise<Float32Array[]> {
  if (!job.template.includes("{class}")) {
    throw new Error(`prompt template must contain '{class}', got: ${job.template}`);
  }
  const rows: Float32Array[] = [];
  for (const className of classes) {
    rows.push(await job.encoder.embedText(job.template.replaceAll("{class}", className)));
  }
  return rows;
}

export async function extractAll(
  job: ExtractionJob,
  domainNames?: string[],
): Promise<ExtractionSummary> {
  const trees = scanDataset(job.dataRoot, domainNames);
  const classes = [...trees[0].classFiles.keys()];
  fs.mkdirSync(job.outDir, { recursive: true });

  const classifierRows = await extractClassifier(job, classes);
  const dimension = classifierRows[0].length;

  const domains: ExtractionSummary["domains"] = [];
  const manifest: Manifest = { dimension, classes, domains: [] };
  for (const tree of trees) {
    const { records, skipped } = await extractDomain(job, tree, classes);
    for (const record of records) {
      if (record.feature.length !== dimension) {
        throw new Error(
          `encoder width changed mid-run: got ${record.feature.length}, expected ${dimension}`,
        );
      }
    }
    const fileName = `${tree.name}.femb`;
    writeFemb(
      { dimension, classCount: classes.length, records },
      path.join(job.outDir, fileName),
    );
    manifest.domains.push({ name: tree.name, path: fileName });
    domains.push({ name: tree.name, path: fileName, records: records.length, skipped });
  }

  const classifierPath = path.join(job.outDir, "classifier.fcls");
  writeFcls(classifierRows, dimension, classifierPath);
  const manifestPath = path.join(job.outDir, "manifest.json");
  writeManifest(manifest, manifestPath);
  return { manifestPath, classifierPath, dimension, classes, domains };
}
