/**
 * Zero-shot scoring: classify stored embeddings with a prompt-derived
 * classifier and no training at all (identity local map, cosine argmax).
 */

import { readFcls, readFemb } from "./formats.js";

function normalized(vector: Float32Array): Float64Array {
  let normSquared = 0;
  for (const value of vector) {
    normSquared += value * value;
  }
  const norm = Math.sqrt(normSquared) || 1;
  const unit = new Float64Array(vector.length);
  for (let i = 0; i < vector.length; i++) {
    unit[i] = vector[i] / norm;
  }
  return unit;
}

export function zeroShotAccuracy(embeddingsPath: string, classifierPath: string): number {
  const embeddings = readFemb(embeddingsPath);
  const classifier = readFcls(classifierPath);
  if (classifier.dimension !== embeddings.dimension) {
    throw new Error(
      `dimension mismatch: embeddings are ${embeddings.dimension}-d, ` +
        `classifier is ${classifier.dimension}-d`,
    );
  }
  if (classifier.rows.length !== embeddings.classCount) {
    throw new Error(
      `class count mismatch: embeddings declare ${embeddings.classCount}, ` +
        `classifier has ${classifier.rows.length} rows`,
    );
  }
  const rows = classifier.rows.map(normalized);
  let correct = 0;
  for (const record of embeddings.records) {
    const unit = normalized(record.feature);
    let best = 0;
    let bestScore = -Infinity;
    rows.forEach((row, index) => {
      let score = 0;
      for (let j = 0; j < unit.length; j++) {
        score += row[j] * unit[j];
      }
      if (score > bestScore) {
        bestScore = score;
        best = index;
      }
    });
    if (best === record.label) {
      correct += 1;
    }
  }
  return correct / embeddings.records.length;
}
