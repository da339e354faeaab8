/**
 * Minimal image loading for the deterministic encoder: PNG (via pngjs)
 * and binary PPM (P6). The pretrained-encoder path decodes images
 * itself, so this module only needs to cover test/benchmark assets.
 */

import * as fs from "node:fs";
import { PNG } from "pngjs";

export interface RgbImage {
  width: number;
  height: number;
  /** Row-major RGB triples in [0, 1]. */
  pixels: Float64Array;
}

export const IMAGE_EXTENSIONS = new Set([".png", ".ppm", ".jpg", ".jpeg", ".bmp", ".gif"]);

export function decodePng(buffer: Buffer): RgbImage {
  const png = PNG.sync.read(buffer);
  const pixels = new Float64Array(png.width * png.height * 3);
  for (let i = 0; i < png.width * png.height; i++) {
    pixels[3 * i] = png.data[4 * i] / 255;
    pixels[3 * i + 1] = png.data[4 * i + 1] / 255;
    pixels[3 * i + 2] = png.data[4 * i + 2] / 255;
  }
  return { width: png.width, height: png.height, pixels };
}

export function decodePpm(buffer: Buffer): RgbImage {
  // P6 <width> <height> <maxval>\n followed by binary RGB bytes.
  const header = buffer.toString("ascii", 0, Math.min(buffer.length, 64));
  const match = /^P6\s+(\d+)\s+(\d+)\s+(\d+)\s/.exec(header);
  if (!match) {
    throw new Error("not a binary PPM (P6) file");
  }
  const [, w, h, max] = match;
  const width = Number(w);
  const height = Number(h);
  const maxval = Number(max);
  const start = match[0].length;
  if (buffer.length < start + width * height * 3) {
    throw new Error("truncated PPM payload");
  }
  const pixels = new Float64Array(width * height * 3);
  for (let i = 0; i < width * height * 3; i++) {
    pixels[i] = buffer[start + i] / maxval;
  }
  return { width, height, pixels };
}

export function loadImage(filePath: string): RgbImage {
  const buffer = fs.readFileSync(filePath);
  if (filePath.toLowerCase().endsWith(".ppm")) {
    return decodePpm(buffer);
  }
  if (filePath.toLowerCase().endsWith(".png")) {
    return decodePng(buffer);
  }
  throw new Error(`unsupported image format for the deterministic encoder: ${filePath}`);
}
