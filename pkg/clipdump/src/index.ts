export { ClipEncoder, Encoder, MockEncoder } from "./encoder.js";
export {
  extractAll,
  extractClassifier,
  extractDomain,
  scanDataset,
  type DomainTree,
  type ExtractionJob,
  type ExtractionSummary,
} from "./extract.js";
export {
  EmbeddingFile,
  EmbeddingRecord,
  Manifest,
  encodeFcls,
  encodeFemb,
  readFcls,
  readFemb,
  readManifest,
  writeFcls,
  writeFemb,
  writeManifest,
} from "./formats.js";
export { decodePng, decodePpm, loadImage, type RgbImage } from "./images.js";
export { zeroShotAccuracy } from "./zeroshot.js";
