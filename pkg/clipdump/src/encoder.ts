/**
 * Embedding backends.
 *
 * `ClipEncoder` wraps a pretrained vision-language checkpoint through
 * transformers.js (an optional dependency, loaded dynamically): image
 * features come from the vision tower, class-prompt features from the
 * text tower, both through the joint projection.
 *
 * `MockEncoder` is a fully deterministic stand-in for offline use and
 * tests: images are downsampled to a fixed grid and pushed through a
 * seeded random projection, texts hash to seeded unit vectors. Same
 * inputs, same bytes, every run.
 */

import { IMAGE_EXTENSIONS, loadImage } from "./images.js";
import { SplitMix64, hashString } from "./rng.js";

export interface Encoder {
  readonly name: string;
  embedImage(filePath: string): Promise<Float32Array>;
  embedText(text: string): Promise<Float32Array>;
}

const GRID = 8; // downsample resolution per channel

export class MockEncoder implements Encoder {
  readonly name: string;
  readonly dimension: number;
  private readonly projection: Float64Array; // dimension x (3*GRID*GRID + 1)

  constructor(dimension = 512, seed = 0) {
    this.dimension = dimension;
    this.name = `mock-${dimension}-seed${seed}`;
    const inputs = 3 * GRID * GRID + 1;
    const rng = new SplitMix64(hashString(`projection:${seed}`));
    this.projection = new Float64Array(dimension * inputs);
    const scale = 1 / Math.sqrt(inputs);
    for (let i = 0; i < this.projection.length; i++) {
      this.projection[i] = scale * rng.normal();
    }
  }

  supports(filePath: string): boolean {
    const dot = filePath.lastIndexOf(".");
    return dot >= 0 && IMAGE_EXTENSIONS.has(filePath.slice(dot).toLowerCase());
  }

  async embedImage(filePath: string): Promise<Float32Array> {
    const image = loadImage(filePath);
    const grid = new Float64Array(3 * GRID * GRID + 1);
    const counts = new Float64Array(GRID * GRID);
    for (let y = 0; y < image.height; y++) {
      const cellY = Math.min(GRID - 1, Math.floor((y * GRID) / image.height));
      for (let x = 0; x < image.width; x++) {
        const cellX = Math.min(GRID - 1, Math.floor((x * GRID) / image.width));
        const cell = cellY * GRID + cellX;
        const pixel = 3 * (y * image.width + x);
        grid[3 * cell] += image.pixels[pixel];
        grid[3 * cell + 1] += image.pixels[pixel + 1];
        grid[3 * cell + 2] += image.pixels[pixel + 2];
        counts[cell] += 1;
      }
    }
    for (let cell = 0; cell < GRID * GRID; cell++) {
      const count = Math.max(counts[cell], 1);
      grid[3 * cell] /= count;
      grid[3 * cell + 1] /= count;
      grid[3 * cell + 2] /= count;
    }
    grid[3 * GRID * GRID] = 1; // constant component keeps the norm away from zero

    const inputs = grid.length;
    const output = new Float32Array(this.dimension);
    for (let k = 0; k < this.dimension; k++) {
      let total = 0;
      for (let j = 0; j < inputs; j++) {
        total += this.projection[k * inputs + j] * grid[j];
      }
      output[k] = total;
    }
    return output;
  }

  async embedText(text: string): Promise<Float32Array> {
    const rng = new SplitMix64(hashString(`text:${text}`));
    const output = new Float32Array(this.dimension);
    let normSquared = 0;
    for (let k = 0; k < this.dimension; k++) {
      output[k] = rng.normal();
      normSquared += output[k] * output[k];
    }
    const norm = Math.sqrt(normSquared);
    for (let k = 0; k < this.dimension; k++) {
      output[k] /= norm;
    }
    return output;
  }
}

/** Pretrained checkpoint via transformers.js; install `@xenova/transformers` to use. */
export class ClipEncoder implements Encoder {
  readonly name: string;
  private constructor(
    name: string,
    private readonly tokenizer: any,
    private readonly textModel: any,
    private readonly processor: any,
    private readonly visionModel: any,
    private readonly rawImage: any,
  ) {
    this.name = name;
  }

  static async create(model = "Xenova/clip-vit-base-patch32"): Promise<ClipEncoder> {
    let transformers: any;
    try {
      // Optional dependency: resolved at runtime only, so the specifier is
      // kept out of the static module graph.
      const specifier = "@xenova/transformers";
      transformers = await import(specifier);
    } catch {
      throw new Error(
        "the pretrained encoder needs the optional dependency '@xenova/transformers' " +
          "(npm install @xenova/transformers); use --encoder mock for the deterministic backend",
      );
    }
    const { AutoTokenizer, AutoProcessor, CLIPTextModelWithProjection,
            CLIPVisionModelWithProjection, RawImage } = transformers;
    const [tokenizer, textModel, processor, visionModel] = await Promise.all([
      AutoTokenizer.from_pretrained(model),
      CLIPTextModelWithProjection.from_pretrained(model),
      AutoProcessor.from_pretrained(model),
      CLIPVisionModelWithProjection.from_pretrained(model),
    ]);
    return new ClipEncoder(model, tokenizer, textModel, processor, visionModel, RawImage);
  }

  async embedImage(filePath: string): Promise<Float32Array> {
    const image = await this.rawImage.read(filePath);
    const inputs = await this.processor(image);
    const { image_embeds } = await this.visionModel(inputs);
    return Float32Array.from(image_embeds.data);
  }

  async embedText(text: string): Promise<Float32Array> {
    const tokens = this.tokenizer([text], { padding: true, truncation: true });
    const { text_embeds } = await this.textModel(tokens);
    return Float32Array.from(text_embeds.data);
  }
}
