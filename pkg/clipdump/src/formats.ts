/**
 * Binary embedding/classifier file formats and the dataset manifest.
 *
 * Layouts (little-endian, float32 payloads):
 *   FEMB: magic "FEMB" | version u32=1 | d u32 | K u32 | N u64
 *         | N records of (label u32, d float32)
 *   FCLS: magic "FCLS" | version u32=1 | K u32 | d u32 | K*d float32
 *   Manifest: JSON { dimension, classes: string[], domains: [{name, path}] }
 *
 * These match the consumer's readers byte for byte; round-trip tests on
 * both sides keep them locked together.
 */

import * as fs from "node:fs";
import * as path from "node:path";

export const FEMB_MAGIC = "FEMB";
export const FCLS_MAGIC = "FCLS";
export const FORMAT_VERSION = 1;

export interface EmbeddingRecord {
  label: number;
  feature: Float32Array;
}

export interface EmbeddingFile {
  dimension: number;
  classCount: number;
  records: EmbeddingRecord[];
}

export interface ManifestDomain {
  name: string;
  path: string;
}

export interface Manifest {
  dimension: number;
  classes: string[];
  domains: ManifestDomain[];
}

function checkFeature(feature: Float32Array, dimension: number, index: number): void {
  if (feature.length !== dimension) {
    throw new Error(
      `record ${index}: feature has ${feature.length} values, expected ${dimension}`,
    );
  }
  let normSquared = 0;
  for (const value of feature) {
    if (!Number.isFinite(value)) {
      throw new Error(`record ${index}: feature contains a non-finite value`);
    }
    normSquared += value * value;
  }
  if (Math.sqrt(normSquared) <= 1e-12) {
    throw new Error(`record ${index}: feature norm is zero to working precision`);
  }
}

export function encodeFemb(file: EmbeddingFile): Buffer {
  const { dimension, classCount, records } = file;
  const header = Buffer.alloc(4 + 4 + 4 + 4 + 8);
  header.write(FEMB_MAGIC, 0, "ascii");
  header.writeUInt32LE(FORMAT_VERSION, 4);
  header.writeUInt32LE(dimension, 8);
  header.writeUInt32LE(classCount, 12);
  header.writeBigUInt64LE(BigInt(records.length), 16);

  const recordSize = 4 + 4 * dimension;
  const body = Buffer.alloc(recordSize * records.length);
  records.forEach((record, index) => {
    if (record.label < 0 || record.label >= classCount) {
      throw new Error(`record ${index}: label ${record.label} out of range`);
    }
    checkFeature(record.feature, dimension, index);
    const offset = index * recordSize;
    body.writeUInt32LE(record.label, offset);
    for (let j = 0; j < dimension; j++) {
      body.writeFloatLE(record.feature[j], offset + 4 + 4 * j);
    }
  });
  return Buffer.concat([header, body]);
}

export function writeFemb(file: EmbeddingFile, filePath: string): void {
  fs.writeFileSync(filePath, encodeFemb(file));
}

export function readFemb(filePath: string): EmbeddingFile {
  const buffer = fs.readFileSync(filePath);
  if (buffer.length < 24) {
    throw new Error(`${filePath}: truncated header`);
  }
  if (buffer.toString("ascii", 0, 4) !== FEMB_MAGIC) {
    throw new Error(`${filePath}: bad magic`);
  }
  if (buffer.readUInt32LE(4) !== FORMAT_VERSION) {
    throw new Error(`${filePath}: unsupported version`);
  }
  const dimension = buffer.readUInt32LE(8);
  const classCount = buffer.readUInt32LE(12);
  const count = Number(buffer.readBigUInt64LE(16));
  const recordSize = 4 + 4 * dimension;
  if (buffer.length !== 24 + recordSize * count) {
    throw new Error(`${filePath}: payload size mismatch`);
  }
  const records: EmbeddingRecord[] = [];
  for (let index = 0; index < count; index++) {
    const offset = 24 + index * recordSize;
    const label = buffer.readUInt32LE(offset);
    if (label >= classCount) {
      throw new Error(`${filePath}: record ${index} label ${label} out of range`);
    }
    const feature = new Float32Array(dimension);
    for (let j = 0; j < dimension; j++) {
      feature[j] = buffer.readFloatLE(offset + 4 + 4 * j);
    }
    records.push({ label, feature });
  }
  return { dimension, classCount, records };
}

export function encodeFcls(rows: Float32Array[], dimension: number): Buffer {
  const header = Buffer.alloc(16);
  header.write(FCLS_MAGIC, 0, "ascii");
  header.writeUInt32LE(FORMAT_VERSION, 4);
  header.writeUInt32LE(rows.length, 8);
  header.writeUInt32LE(dimension, 12);
  const body = Buffer.alloc(4 * rows.length * dimension);
  rows.forEach((row, index) => {
    checkFeature(row, dimension, index);
    for (let j = 0; j < dimension; j++) {
      body.writeFloatLE(row[j], 4 * (index * dimension + j));
    }
  });
  return Buffer.concat([header, body]);
}

export function writeFcls(rows: Float32Array[], dimension: number, filePath: string): void {
  fs.writeFileSync(filePath, encodeFcls(rows, dimension));
}

export function readFcls(filePath: string): { dimension: number; rows: Float32Array[] } {
  const buffer = fs.readFileSync(filePath);
  if (buffer.length < 16) {
    throw new Error(`${filePath}: truncated header`);
  }
  if (buffer.toString("ascii", 0, 4) !== FCLS_MAGIC) {
    throw new Error(`${filePath}: bad magic`);
  }
  if (buffer.readUInt32LE(4) !== FORMAT_VERSION) {
    throw new Error(`${filePath}: unsupported version`);
  }
  const classCount = buffer.readUInt32LE(8);
  const dimension = buffer.readUInt32LE(12);
  if (buffer.length !== 16 + 4 * classCount * dimension) {
    throw new Error(`${filePath}: payload size mismatch`);
  }
  const rows: Float32Array[] = [];
  for (let index = 0; index < classCount; index++) {
    const row = new Float32Array(dimension);
    for (let j = 0; j < dimension; j++) {
      row[j] = buffer.readFloatLE(16 + 4 * (index * dimension + j));
    }
    rows.push(row);
  }
  return { dimension, rows };
}

export function writeManifest(manifest: Manifest, filePath: string): void {
  fs.writeFileSync(filePath, JSON.stringify(manifest, null, 2) + "\n");
}

export function readManifest(filePath: string): Manifest {
  const manifest = JSON.parse(fs.readFileSync(filePath, "utf-8")) as Manifest;
  for (const key of ["dimension", "classes", "domains"] as const) {
    if (!(key in manifest)) {
      throw new Error(`${filePath}: missing manifest key '${key}'`);
    }
  }
  for (const domain of manifest.domains) {
    const target = path.resolve(path.dirname(filePath), domain.path);
    if (!fs.existsSync(target)) {
      throw new Error(`${filePath}: referenced file does not exist: ${target}`);
    }
  }
  return manifest;
}
