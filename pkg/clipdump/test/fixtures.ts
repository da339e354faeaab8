/** Tiny deterministic class-per-folder image trees for tests. */

import * as fs from "node:fs";
import * as path from "node:path";
import { PNG } from "pngjs";

const CLASS_COLORS: [number, number, number][] = [
  [0.9, 0.15, 0.1],
  [0.1, 0.85, 0.2],
  [0.15, 0.2, 0.9],
];

export function mulberry32(seed: number): () => number {
  let a = seed;
  return function () {
    a |= 0;
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export function writeClassImage(
  filePath: string,
  classIndex: number,
  shift: [number, number, number],
  rng: () => number,
  size = 12,
): void {
  const png = new PNG({ width: size, height: size });
  const base = CLASS_COLORS[classIndex % CLASS_COLORS.length];
  for (let i = 0; i < size * size; i++) {
    for (let channel = 0; channel < 3; channel++) {
      const value = base[channel] + shift[channel] + 0.25 * (rng() - 0.5);
      png.data[4 * i + channel] = Math.max(0, Math.min(255, Math.round(255 * value)));
    }
    png.data[4 * i + 3] = 255;
  }
  fs.writeFileSync(filePath, PNG.sync.write(png));
}

export interface TreeOptions {
  domains?: { name: string; shift: [number, number, number] }[];
  classes?: string[];
  imagesPerClass?: number;
  seed?: number;
}

export function makeTree(root: string, options: TreeOptions = {}): {
  domains: string[];
  classes: string[];
} {
  const domains = options.domains ?? [
    { name: "night", shift: [-0.08, -0.04, 0.05] },
    { name: "outdoor", shift: [0.06, -0.05, 0.03] },
    { name: "studio", shift: [0.0, 0.02, -0.02] },
  ];
  const classes = options.classes ?? ["circle", "square", "triangle"];
  const imagesPerClass = options.imagesPerClass ?? 24;
  const rng = mulberry32(options.seed ?? 7);
  fs.rmSync(root, { recursive: true, force: true });
  for (const domain of domains) {
    classes.forEach((className, classIndex) => {
      const dir = path.join(root, domain.name, className);
      fs.mkdirSync(dir, { recursive: true });
      for (let i = 0; i < imagesPerClass; i++) {
        writeClassImage(
          path.join(dir, `img${String(i).padStart(2, "0")}.png`),
          classIndex,
          domain.shift,
          rng,
        );
      }
    });
  }
  return { domains: domains.map((d) => d.name), classes };
}
