"""Embedding datasets, binary file formats, manifests, splits, and the
synthetic domain-shift generator.

File formats (little-endian throughout):

  FEMB: magic "FEMB" | version u32=1 | d u32 | K u32 | N u64
        | N records of (label u32, d float32)
  FCLS: magic "FCLS" | version u32=1 | K u32 | d u32 | K*d float32 row-major

Payloads are float32 (the precision of typical encoder dumps); training
upcasts to float64. Classifier rows are L2-normalized on load so random
and embedding-derived initializations are comparable in scale.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cayley import BlockSpec, cayley_map
from .errors import (
    BadMagicError,
    DegenerateFeatureError,
    FileFormatError,
    LabelOutOfRangeError,
    TruncatedFileError,
    UnsupportedVersionError,
)
from .rng import SplitMix64, derive_seed

FEMB_MAGIC = b"FEMB"
FCLS_MAGIC = b"FCLS"
FORMAT_VERSION = 1

_FEMB_HEADER = struct.Struct("<4sIIIQ")
_FCLS_HEADER = struct.Struct("<4sIII")

# Feature vectors with norm at or below this are rejected at ingestion.
FEATURE_NORM_FLOOR = 1e-12

TRAIN_FRACTION = 0.6
VAL_FRACTION = 0.2
MIN_SPLIT_EXAMPLES = 5


@dataclass
class EmbeddingDataset:
    """Labeled d-dimensional feature vectors from one domain."""

    domain_name: str
    features: np.ndarray  # (n, d) float64
    labels: np.ndarray  # (n,) int64
    class_count: int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {self.features.shape}")
        if self.labels.shape != (self.features.shape[0],):
            raise ValueError("labels must be 1-D and parallel to features")
        if not np.all(np.isfinite(self.features)):
            raise DegenerateFeatureError("features contain non-finite values")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise LabelOutOfRangeError(
                f"labels must lie in [0, {self.class_count})"
            )
        norms = np.linalg.norm(self.features, axis=1)
        if np.any(norms <= FEATURE_NORM_FLOOR):
            raise DegenerateFeatureError("dataset contains a zero-norm feature vector")

    @property
    def dimension(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return self.features.shape[0]

    def subset(self, indices: np.ndarray, name_suffix: str = "") -> "EmbeddingDataset":
        return EmbeddingDataset(
            domain_name=self.domain_name + name_suffix,
            features=self.features[indices].copy(),
            labels=self.labels[indices].copy(),
            class_count=self.class_count,
        )


@dataclass
class SplitDataset:
    """60/20/20 train/val/test partition of one domain, with the seed recorded."""

    train: EmbeddingDataset
    val: EmbeddingDataset
    test: EmbeddingDataset
    seed: int

    @property
    def domain_name(self) -> str:
        return self.train.domain_name


def split(dataset: EmbeddingDataset, seed: int) -> SplitDataset:
    """Seeded shuffle then contiguous 60/20/20 cut (floor/floor/remainder)."""
    n = len(dataset)
    if n < MIN_SPLIT_EXAMPLES:
        raise ValueError(f"need at least {MIN_SPLIT_EXAMPLES} examples to split, got {n}")
    perm = SplitMix64(seed).permutation(n)
    n_train = int(TRAIN_FRACTION * n)
    n_val = int(VAL_FRACTION * n)
    return SplitDataset(
        train=dataset.subset(perm[:n_train]),
        val=dataset.subset(perm[n_train : n_train + n_val]),
        test=dataset.subset(perm[n_train + n_val :]),
        seed=seed,
    )


def _read_exact(handle, count: int, what: str) -> bytes:
    data = handle.read(count)
    if len(data) != count:
        raise TruncatedFileError(f"unexpected end of file while reading {what}")
    return data


def write_femb(dataset: EmbeddingDataset, path) -> None:
    path = Path(path)
    n, d = dataset.features.shape
    record = np.dtype([("label", "<u4"), ("feature", "<f4", (d,))])
    records = np.empty(n, dtype=record)
    records["label"] = dataset.labels.astype(np.uint32)
    records["feature"] = dataset.features.astype(np.float32)
    with path.open("wb") as handle:
        handle.write(_FEMB_HEADER.pack(FEMB_MAGIC, FORMAT_VERSION, d, dataset.class_count, n))
        handle.write(records.tobytes())


def read_femb(path) -> EmbeddingDataset:
    path = Path(path)
    with path.open("rb") as handle:
        magic, version, d, class_count, n = _FEMB_HEADER.unpack(
            _read_exact(handle, _FEMB_HEADER.size, "header")
        )
        if magic != FEMB_MAGIC:
            raise BadMagicError(f"{path}: expected magic {FEMB_MAGIC!r}, got {magic!r}")
        if version != FORMAT_VERSION:
            raise UnsupportedVersionError(f"{path}: unsupported version {version}")
        if d == 0 or class_count == 0:
            raise FileFormatError(f"{path}: dimension and class count must be positive")
        record = np.dtype([("label", "<u4"), ("feature", "<f4", (d,))])
        payload = _read_exact(handle, record.itemsize * n, "records")
        if handle.read(1):
            raise FileFormatError(f"{path}: trailing bytes after {n} records")
    records = np.frombuffer(payload, dtype=record)
    labels = records["label"].astype(np.int64)
    if labels.size and labels.max() >= class_count:
        raise LabelOutOfRangeError(
            f"{path}: label {labels.max()} out of range for {class_count} classes"
        )
    return EmbeddingDataset(
        domain_name=path.stem,
        features=records["feature"].astype(np.float64),
        labels=labels,
        class_count=class_count,
    )


def write_fcls(matrix: np.ndarray, path) -> None:
    path = Path(path)
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2:
        raise ValueError(f"classifier must be 2-D, got shape {matrix.shape}")
    k, d = matrix.shape
    with path.open("wb") as handle:
        handle.write(_FCLS_HEADER.pack(FCLS_MAGIC, FORMAT_VERSION, k, d))
        handle.write(matrix.astype("<f4").tobytes())


def read_fcls(path) -> np.ndarray:
    """Load a K x d classifier init; rows are L2-normalized on load."""
    path = Path(path)
    with path.open("rb") as handle:
        magic, version, k, d = _FCLS_HEADER.unpack(
            _read_exact(handle, _FCLS_HEADER.size, "header")
        )
        if magic != FCLS_MAGIC:
            raise BadMagicError(f"{path}: expected magic {FCLS_MAGIC!r}, got {magic!r}")
        if version != FORMAT_VERSION:
            raise UnsupportedVersionError(f"{path}: unsupported version {version}")
        if k == 0 or d == 0:
            raise FileFormatError(f"{path}: class count and dimension must be positive")
        payload = _read_exact(handle, 4 * k * d, "classifier rows")
        if handle.read(1):
            raise FileFormatError(f"{path}: trailing bytes after classifier rows")
    rows = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(k, d)
    norms = np.linalg.norm(rows, axis=1)
    if np.any(norms <= FEATURE_NORM_FLOOR):
        raise DegenerateFeatureError(f"{path}: classifier contains a zero-norm row")
    return rows / norms[:, None]


@dataclass
class DomainEntry:
    name: str
    path: str


@dataclass
class Manifest:
    """Experiment inventory: dimension, class names, and per-domain files."""

    dimension: int
    classes: list[str]
    domains: list[DomainEntry]
    root: Path = Path(".")

    @property
    def class_count(self) -> int:
        return len(self.classes)

    def domain_path(self, entry: DomainEntry) -> Path:
        path = Path(entry.path)
        return path if path.is_absolute() else self.root / path

    def to_json(self) -> dict:
        return {
            "dimension": self.dimension,
            "classes": list(self.classes),
            "domains": [{"name": d.name, "path": d.path} for d in self.domains],
        }


def save_manifest(manifest: Manifest, path) -> None:
    Path(path).write_text(json.dumps(manifest.to_json(), indent=2) + "\n", encoding="utf-8")


def load_manifest(path) -> Manifest:
    """Parse a manifest and verify every referenced file exists and agrees on d and K."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"{path}: invalid JSON: {exc}") from exc
    for key in ("dimension", "classes", "domains"):
        if key not in raw:
            raise FileFormatError(f"{path}: missing manifest key {key!r}")
    manifest = Manifest(
        dimension=int(raw["dimension"]),
        classes=[str(c) for c in raw["classes"]],
        domains=[DomainEntry(name=str(d["name"]), path=str(d["path"])) for d in raw["domains"]],
        root=path.parent,
    )
    for entry in manifest.domains:
        file_path = manifest.domain_path(entry)
        if not file_path.exists():
            raise FileFormatError(f"{path}: referenced file does not exist: {file_path}")
        dataset = read_femb(file_path)
        if dataset.dimension != manifest.dimension:
            raise FileFormatError(
                f"{file_path}: dimension {dataset.dimension} does not match "
                f"manifest dimension {manifest.dimension}"
            )
        if dataset.class_count != manifest.class_count:
            raise FileFormatError(
                f"{file_path}: class count {dataset.class_count} does not match "
                f"manifest ({manifest.class_count} classes)"
            )
    return manifest


def load_domains(manifest: Manifest) -> list[EmbeddingDataset]:
    datasets = []
    for entry in manifest.domains:
        dataset = read_femb(manifest.domain_path(entry))
        dataset.domain_name = entry.name
        datasets.append(dataset)
    return datasets


@dataclass
class SyntheticResult:
    manifest: Manifest
    manifest_path: Path
    classifier_path: Path | None
    prototypes: np.ndarray  # (K, d) unit rows
    rotations: dict[str, np.ndarray]  # per-domain orthogonal map


def _random_rotation(dimension: int, scale: float, rng: SplitMix64) -> np.ndarray:
    """Orthogonal map from the Cayley image of a random skew parameter."""
    if scale == 0.0:
        return np.eye(dimension)
    x = scale * (2.0 * rng.uniforms(dimension * dimension) - 1.0).reshape(
        dimension, dimension
    )
    return cayley_map(x, BlockSpec(dimension)).q


def generate_synthetic(
    out_dir,
    *,
    dimension: int,
    class_count: int,
    domains: int,
    per_domain: int,
    noise: float,
    seed: int,
    rotation: float = 1.0,
    write_classifier: bool = True,
) -> SyntheticResult:
    """Rotated-prototype benchmark standing in for a frozen encoder.

    K shared unit-norm class prototypes are drawn once; each domain gets
    its own orthogonal rotation, and every example is the rotated image
    of (prototype + Gaussian noise), renormalized to the unit sphere. By
    construction the shift between domains is exactly an orthogonal map,
    so applying the inverse rotation recovers the prototype geometry.
    """
    if dimension < 2 or class_count < 2:
        raise ValueError("need dimension >= 2 and class_count >= 2")
    if per_domain < 50:
        raise ValueError("need at least 50 examples per domain")
    if domains < 1:
        raise ValueError("need at least one domain")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    proto_rng = SplitMix64(derive_seed(seed, "prototypes"))
    prototypes = proto_rng.normals(class_count * dimension).reshape(class_count, dimension)
    prototypes /= np.linalg.norm(prototypes, axis=1)[:, None]

    entries = []
    rotations: dict[str, np.ndarray] = {}
    for index in range(domains):
        name = f"domain{index}"
        domain_rng = SplitMix64(derive_seed(seed, "domain", name))
        rot = _random_rotation(dimension, rotation, domain_rng)
        rotations[name] = rot
        features = np.empty((per_domain, dimension))
        labels = np.empty(per_domain, dtype=np.int64)
        for i in range(per_domain):
            label = i % class_count
            while True:
                sample = prototypes[label] + noise * domain_rng.normals(dimension)
                rotated = rot @ sample
                norm = np.linalg.norm(rotated)
                if norm > 1e-9:
                    break
            features[i] = rotated / norm
            labels[i] = label
        dataset = EmbeddingDataset(
            domain_name=name, features=features, labels=labels, class_count=class_count
        )
        file_name = f"{name}.femb"
        write_femb(dataset, out_dir / file_name)
        entries.append(DomainEntry(name=name, path=file_name))

    classifier_path = None
    if write_classifier:
        classifier_path = out_dir / "classifier.fcls"
        write_fcls(prototypes, classifier_path)

    manifest = Manifest(
        dimension=dimension,
        classes=[f"class{c}" for c in range(class_count)],
        domains=entries,
        root=out_dir,
    )
    manifest_path = out_dir / "manifest.json"
    save_manifest(manifest, manifest_path)
    return SyntheticResult(
        manifest=manifest,
        manifest_path=manifest_path,
        classifier_path=classifier_path,
        prototypes=prototypes,
        rotations=rotations,
    )
