"""Dataset ingestion, synthesis, normalization, and corpus construction.

A corpus is an ordered list of binary-labelled tabular datasets trimmed to a
common record count. The position of a dataset in the corpus defines both its
data index and the index of its true label vector, so ground truth is always
the identity assignment.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAX_RECORD_COUNT = 2000


@dataclass
class NormStats:
    """Per-column z-scoring statistics, computed from the training subset only."""

    mean: np.ndarray
    std: np.ndarray
    train_fraction: float


@dataclass
class Dataset:
    """A named feature matrix with a binary label vector."""

    name: str
    features: np.ndarray  # (m, u) float64
    labels: np.ndarray  # (m,) float64 with values in {0, 1}
    norm_stats: NormStats | None = None

    @property
    def n_records(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def validate(self) -> None:
        if self.features.ndim != 2:
            raise ValueError(f"dataset {self.name!r}: features must be 2-D")
        if self.labels.shape != (self.features.shape[0],):
            raise ValueError(f"dataset {self.name!r}: labels must match feature rows")
        if not np.isin(self.labels, (0.0, 1.0)).all():
            raise ValueError(f"dataset {self.name!r}: labels must contain only 0 and 1")
        if not np.isfinite(self.features).all():
            raise ValueError(f"dataset {self.name!r}: features contain non-finite values")


@dataclass
class Corpus:
    """Ordered datasets sharing a common record count."""

    datasets: list[Dataset]
    record_count: int
    max_features: int

    @property
    def n_datasets(self) -> int:
        return len(self.datasets)

    def truth(self) -> np.ndarray:
        """Ground-truth assignment: dataset i owns label vector i."""
        return np.arange(self.n_datasets)


@dataclass
class SyntheticSpec:
    """Recipe for a reproducible synthetic corpus.

    Labels are thresholded noisy linear functions of the features:
    ``signal_strength`` mixes the hidden weighted feature sum with independent
    noise, and ``noise_rate`` flips each final label independently. The
    threshold is placed at a mild random quantile so classes stay balanced.
    """

    n_datasets: int
    n_features: list[int]
    signal_strength: float = 1.0
    noise_rate: float = 0.0
    seed: int = 0
    n_records: int = MAX_RECORD_COUNT

    def validate(self) -> None:
        if self.n_datasets < 1:
            raise ValueError("n_datasets must be positive")
        if len(self.n_features) != self.n_datasets:
            raise ValueError("n_features must list one width per dataset")
        if any(u < 1 for u in self.n_features):
            raise ValueError("feature counts must be positive")
        if not 0.0 < self.signal_strength <= 1.0:
            raise ValueError("signal_strength must be in (0, 1]")
        if not 0.0 <= self.noise_rate < 0.5:
            raise ValueError("noise_rate must be in [0, 0.5)")
        if self.n_records < 2:
            raise ValueError("n_records must be at least 2")


@dataclass
class DecoySpec:
    """Synthetic corpus that defeats per-feature similarity scoring.

    Each dataset's label depends on a weighted sum over pairs of strongly
    correlated feature columns carrying opposite weights, so every individual
    column is nearly uncorrelated with the label even though the joint signal
    is clean. On top of that, ``n_decoys`` extra columns are correlated with
    the *next* dataset's label vector, steering column-wise similarity scores
    toward a wrong assignment.
    """

    n_datasets: int
    n_signal_features: int = 8  # paired columns; must be even
    n_decoys: int = 2
    pair_correlation: float = 0.98
    decoy_strength: float = 0.6
    noise_rate: float = 0.05
    seed: int = 0
    n_records: int = MAX_RECORD_COUNT

    def validate(self) -> None:
        if self.n_datasets < 2:
            raise ValueError("decoy corpus needs at least 2 datasets")
        if self.n_signal_features < 2 or self.n_signal_features % 2:
            raise ValueError("n_signal_features must be a positive even number")
        if self.n_decoys < 0:
            raise ValueError("n_decoys must be non-negative")
        if not 0.0 <= self.pair_correlation < 1.0:
            raise ValueError("pair_correlation must be in [0, 1)")
        if not 0.0 < self.decoy_strength < 1.0:
            raise ValueError("decoy_strength must be in (0, 1)")
        if not 0.0 <= self.noise_rate < 0.5:
            raise ValueError("noise_rate must be in [0, 0.5)")
        if self.n_records < 2:
            raise ValueError("n_records must be at least 2")


def _map_binary_labels(raw: list[str], column_name: str) -> np.ndarray:
    """Map a two-valued raw label column onto {0, 1}.

    Numeric values are ordered numerically, anything else lexicographically;
    the lower value becomes 0.
    """
    distinct = sorted(set(raw))
    if len(distinct) != 2:
        raise ValueError(
            f"non-binary label column {column_name!r}: found {len(distinct)} distinct values"
        )
    try:
        ordered = sorted(distinct, key=float)
    except ValueError:
        ordered = distinct
    mapping = {ordered[0]: 0.0, ordered[1]: 1.0}
    return np.array([mapping[v] for v in raw])


def _read_csv(path: Path, label_column: str | int) -> tuple[np.ndarray, list[str], str]:
    """Parse a headered CSV into (features, raw label strings, label column name)."""
    if not path.exists():
        raise FileNotFoundError(f"dataset file not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file, header row required") from None
        rows = [row for row in reader if row]

    if isinstance(label_column, int):
        if not 0 <= label_column < len(header):
            raise ValueError(f"{path}: label column index {label_column} out of range")
        label_idx = label_column
    else:
        try:
            label_idx = header.index(label_column)
        except ValueError:
            raise ValueError(f"{path}: no column named {label_column!r}") from None

    if not rows:
        raise ValueError(f"{path}: no data rows")

    features = np.empty((len(rows), len(header) - 1))
    raw_labels: list[str] = []
    for r, row in enumerate(rows):
        if len(row) != len(header):
            raise ValueError(f"{path}: row {r + 1} has {len(row)} cells, expected {len(header)}")
        raw_labels.append(row[label_idx].strip())
        k = 0
        for i, cell in enumerate(row):
            if i == label_idx:
                continue
            try:
                features[r, k] = float(cell)
            except ValueError:
                raise ValueError(
                    f"{path}: non-numeric value {cell!r} at row {r + 1}, column {header[i]!r}"
                ) from None
            k += 1
    return features, raw_labels, header[label_idx]


def load_csv(path: str | Path, label_column: str | int, name: str | None = None) -> Dataset:
    """Load a headered CSV into a Dataset, mapping the label column to {0, 1}."""
    path = Path(path)
    features, raw_labels, label_name = _read_csv(path, label_column)
    labels = _map_binary_labels(raw_labels, label_name)
    return Dataset(name=name or path.stem, features=features, labels=labels)


def binarize_multiclass(
    features: np.ndarray,
    labels: np.ndarray,
    class_a: int,
    class_b: int,
    name: str | None = None,
) -> Dataset:
    """Keep only rows labelled class_a or class_b, relabelled to 0 and 1."""
    if class_a == class_b:
        raise ValueError("classes must differ")
    labels = np.asarray(labels)
    for cls in (class_a, class_b):
        if not (labels == cls).any():
            raise ValueError(f"class {cls} absent from labels")
    keep = (labels == class_a) | (labels == class_b)
    new_labels = np.where(labels[keep] == class_b, 1.0, 0.0)
    return Dataset(
        name=name or f"pair_{class_a}v{class_b}",
        features=np.asarray(features, dtype=float)[keep].copy(),
        labels=new_labels,
    )


def normalize_zscore(d: Dataset, train_fraction: float = 0.8) -> Dataset:
    """Z-score each feature column using statistics from the leading train rows.

    Population standard deviation is used; zero-variance columns become
    all-zero instead of raising, since flattened images routinely contain
    constant border pixels.
    """
    if not 0.0 < train_fraction <= 1.0:
        raise ValueError("train_fraction must be in (0, 1]")
    m = d.n_records
    n_train = int(m * train_fraction)
    if n_train < 2:
        raise ValueError(
            f"dataset {d.name!r}: train_fraction {train_fraction} leaves {n_train} rows, need >= 2"
        )
    train = d.features[:n_train]
    mean = train.mean(axis=0)
    std = train.std(axis=0)  # population
    constant = std == 0.0
    safe_std = np.where(constant, 1.0, std)
    normalized = (d.features - mean) / safe_std
    normalized[:, constant] = 0.0
    stats = NormStats(mean=mean, std=std, train_fraction=train_fraction)
    out = Dataset(name=d.name, features=normalized, labels=d.labels.copy(), norm_stats=stats)
    out.validate()
    return out


def truncate_corpus(datasets: list[Dataset], record_count: int) -> Corpus:
    """Trim every dataset to its first record_count rows and assemble a Corpus."""
    if record_count < 1:
        raise ValueError("record_count must be positive")
    if record_count > MAX_RECORD_COUNT:
        raise ValueError(f"record_count {record_count} exceeds cap of {MAX_RECORD_COUNT}")
    if not datasets:
        raise ValueError("corpus needs at least one dataset")
    for d in datasets:
        if d.n_records < record_count:
            raise ValueError(
                f"dataset {d.name!r} has {d.n_records} rows, fewer than record_count {record_count}"
            )
    trimmed = [
        Dataset(
            name=d.name,
            features=d.features[:record_count].copy(),
            labels=d.labels[:record_count].copy(),
            norm_stats=d.norm_stats,
        )
        for d in datasets
    ]
    for d in trimmed:
        d.validate()
    max_features = max(d.n_features for d in trimmed)
    return Corpus(datasets=trimmed, record_count=record_count, max_features=max_features)


def _balanced_threshold_labels(latent: np.ndarray, rng: np.random.Generator,
                               quantile_range: tuple[float, float]) -> np.ndarray:
    """Threshold a latent score at a random mild quantile, keeping classes balanced."""
    q = rng.uniform(*quantile_range)
    threshold = np.quantile(latent, q)
    return (latent > threshold).astype(float)


def _flip_labels(labels: np.ndarray, noise_rate: float, rng: np.random.Generator) -> np.ndarray:
    if noise_rate <= 0.0:
        return labels
    flips = rng.random(labels.shape[0]) < noise_rate
    return np.where(flips, 1.0 - labels, labels)


def generate_synthetic(spec: SyntheticSpec) -> list[Dataset]:
    """Draw reproducible synthetic datasets whose labels follow a hidden weighted sum."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    datasets = []
    for i, width in enumerate(spec.n_features):
        features = rng.standard_normal((spec.n_records, width))
        hidden = rng.standard_normal(width)
        score = features @ hidden
        scale = score.std()
        score = score / scale if scale > 0 else score
        s = spec.signal_strength
        latent = s * score + (1.0 - s) * rng.standard_normal(spec.n_records)
        labels = _balanced_threshold_labels(latent, rng, (0.4, 0.6))
        labels = _flip_labels(labels, spec.noise_rate, rng)
        d = Dataset(name=f"synth{i}", features=features, labels=labels)
        d.validate()
        datasets.append(d)
    return datasets


def generate_decoy_synthetic(spec: DecoySpec) -> list[Dataset]:
    """Draw datasets with paired-column signals and decoys pointing at wrong labels.

    Two passes: labels first (they depend only on each dataset's own signal
    columns), then decoy columns, which need the neighbouring dataset's labels.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n_pairs = spec.n_signal_features // 2
    rho = spec.pair_correlation

    signals: list[np.ndarray] = []
    labels: list[np.ndarray] = []
    for _ in range(spec.n_datasets):
        cols = []
        latent = np.zeros(spec.n_records)
        for _ in range(n_pairs):
            base = rng.standard_normal(spec.n_records)
            twin = rho * base + np.sqrt(1.0 - rho**2) * rng.standard_normal(spec.n_records)
            weight = rng.uniform(0.5, 1.5)
            cols.extend([base, twin])
            latent += weight * (base - twin)
        y = _balanced_threshold_labels(latent, rng, (0.45, 0.55))
        y = _flip_labels(y, spec.noise_rate, rng)
        signals.append(np.column_stack(cols))
        labels.append(y)

    tau = spec.decoy_strength
    datasets = []
    for i in range(spec.n_datasets):
        wrong = labels[(i + 1) % spec.n_datasets]
        centered = 2.0 * wrong - 1.0
        decoys = [
            tau * centered + np.sqrt(1.0 - tau**2) * rng.standard_normal(spec.n_records)
            for _ in range(spec.n_decoys)
        ]
        features = np.column_stack([signals[i]] + decoys) if decoys else signals[i]
        d = Dataset(name=f"decoy{i}", features=features, labels=labels[i])
        d.validate()
        datasets.append(d)
    return datasets


def load_manifest(path: str | Path) -> Corpus:
    """Build a corpus from a JSON manifest.

    Schema::

        {
          "record_count": 1000,            # required
          "train_fraction": 0.8,           # optional, z-scoring train split
          "normalize": true,               # optional, default true
          "datasets": [                    # optional list of CSV sources
            {"path": "a.csv", "label_column": "y"},
            {"path": "digits.csv", "label_column": 64, "classes": [0, 1]}
          ],
          "synthetic": { ...SyntheticSpec fields... },     # optional
          "decoy_synthetic": { ...DecoySpec fields... }    # optional
        }

    CSV paths are resolved relative to the manifest file. Dataset order is
    the manifest order: csv entries, then synthetic, then decoy_synthetic.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"manifest not found: {path}")
    with path.open() as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: invalid JSON ({exc})") from None

    if "record_count" not in doc:
        raise ValueError(f"{path}: manifest must declare record_count")
    record_count = int(doc["record_count"])
    train_fraction = float(doc.get("train_fraction", 0.8))
    normalize = bool(doc.get("normalize", True))

    datasets: list[Dataset] = []
    for entry in doc.get("datasets", []):
        csv_path = Path(entry["path"])
        if not csv_path.is_absolute():
            csv_path = path.parent / csv_path
        label_column = entry["label_column"]
        if "classes" in entry:
            # multiclass source: read raw labels numerically, then keep one class pair
            features, raw_labels, label_name = _read_csv(csv_path, label_column)
            try:
                multiclass = np.array([float(v) for v in raw_labels])
            except ValueError:
                raise ValueError(
                    f"{csv_path}: class-pair binarization needs numeric labels in {label_name!r}"
                ) from None
            a, b = entry["classes"]
            d = binarize_multiclass(
                features, multiclass, a, b, name=entry.get("name") or csv_path.stem
            )
        else:
            d = load_csv(csv_path, label_column, name=entry.get("name"))
        datasets.append(d)

    if "synthetic" in doc:
        datasets.extend(generate_synthetic(SyntheticSpec(**doc["synthetic"])))
    if "decoy_synthetic" in doc:
        datasets.extend(generate_decoy_synthetic(DecoySpec(**doc["decoy_synthetic"])))

    if not datasets:
        raise ValueError(f"{path}: manifest declares no datasets")

    if normalize:
        datasets = [normalize_zscore(d, train_fraction) for d in datasets]
    return truncate_corpus(datasets, record_count)
