"""Embedding datasets, episodes, synthetic generation and JSON-Lines I/O.

Embeddings are plain float64 numpy arrays. A dataset maps each class
identifier to an ``(n_samples, dim)`` array; an episode holds the support
and query embeddings of one N-way K-shot task together with local labels
in ``0..N-1``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from typing import Mapping

import numpy as np


class DatasetError(ValueError):
    """Base class for dataset validation and parsing errors."""


class DatasetFormatError(DatasetError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DimensionMismatchError(DatasetFormatError):
    pass


class EmptyDatasetError(DatasetError):
    pass


class CapacityError(ValueError):
    """Raised when a dataset cannot supply the requested episode shape."""


SPLITS = ("train", "validation", "test")


@dataclass(frozen=True)
class EmbeddingDataset:
    """Embeddings grouped by class.

    Attributes:
        split: One of ``"train"``, ``"validation"`` or ``"test"``.
        classes: Mapping from class identifier to an ``(n, dim)`` array.
    """

    split: str
    classes: Mapping[str, np.ndarray]

    def __post_init__(self):
        if self.split not in SPLITS:
            raise DatasetError(f"unknown split {self.split!r}")
        if not self.classes:
            raise EmptyDatasetError("dataset has no classes")
        arrays = {}
        dim = None
        for label, emb in self.classes.items():
            emb = np.array(emb, dtype=np.float64)
            if emb.ndim != 2 or emb.shape[0] == 0 or emb.shape[1] == 0:
                raise DatasetError(f"class {label!r}: expected a non-empty (n, dim) array")
            if dim is None:
                dim = emb.shape[1]
            elif emb.shape[1] != dim:
                raise DimensionMismatchError(
                    f"class {label!r} has dimension {emb.shape[1]}, expected {dim}"
                )
            if not np.all(np.isfinite(emb)):
                raise DatasetError(f"class {label!r} contains non-finite values")
            emb.setflags(write=False)
            arrays[label] = emb
        object.__setattr__(self, "classes", arrays)

    @property
    def dim(self) -> int:
        return next(iter(self.classes.values())).shape[1]

    @property
    def labels(self) -> list[str]:
        return list(self.classes)

    def __len__(self) -> int:
        return sum(v.shape[0] for v in self.classes.values())

    def __eq__(self, other):
        if not isinstance(other, EmbeddingDataset):
            return NotImplemented
        return (
            self.split == other.split
            and list(self.classes) == list(other.classes)
            and all(np.array_equal(self.classes[k], other.classes[k]) for k in self.classes)
        )

    __hash__ = None

    def normalized(self) -> "EmbeddingDataset":
        """Return a copy with every embedding scaled to unit L2 norm."""
        out = {}
        for label, emb in self.classes.items():
            norms = np.linalg.norm(emb, axis=1, keepdims=True)
            out[label] = emb / np.where(norms > 0, norms, 1.0)
        return EmbeddingDataset(self.split, out)


@dataclass(frozen=True)
class Episode:
    """One N-way K-shot task.

    ``support_labels`` and ``query_labels`` are local indices; ``classes[n]``
    is the dataset class identifier of local class ``n``.
    """

    support: np.ndarray
    support_labels: np.ndarray
    query: np.ndarray
    query_labels: np.ndarray
    classes: tuple
    ways: int
    shots: int
    queries_per_class: int

    def __post_init__(self):
        n, k, m = self.ways, self.shots, self.queries_per_class
        if min(n, k, m) < 1:
            raise ValueError("ways, shots and queries_per_class must be positive")
        if self.support.shape[0] != n * k or self.query.shape[0] != n * m:
            raise ValueError("support/query sizes do not match the episode shape")
        if self.support.shape[1] != self.query.shape[1]:
            raise DimensionMismatchError("support and query dimensions differ")
        if len(self.classes) != n or len(set(self.classes)) != n:
            raise ValueError("classes must list N distinct identifiers")
        if not np.array_equal(np.bincount(self.support_labels, minlength=n), np.full(n, k)):
            raise ValueError("support must hold exactly K samples per class")
        if not np.array_equal(np.bincount(self.query_labels, minlength=n), np.full(n, m)):
            raise ValueError("query must hold exactly M samples per class")

    @property
    def class_map(self) -> dict:
        return {c: i for i, c in enumerate(self.classes)}

    @property
    def dim(self) -> int:
        return self.support.shape[1]

    def digest(self) -> str:
        """SHA-256 over the episode's arrays; used to verify paired sampling."""
        h = hashlib.sha256()
        for arr in (self.support, self.support_labels, self.query, self.query_labels):
            h.update(np.ascontiguousarray(arr).tobytes())
        h.update(repr(self.classes).encode())
        return h.hexdigest()


@dataclass(frozen=True)
class SyntheticConfig:
    dimension: int = 16
    train_classes: int = 40
    test_classes: int = 20
    samples_per_class: int = 50
    mean_scale: float = 1.0
    within_std: float = 0.6
    seed: int = 7

    def __post_init__(self):
        for name in ("dimension", "train_classes", "test_classes", "samples_per_class"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not self.mean_scale > 0:
            raise ValueError("mean_scale must be > 0")
        if not self.within_std > 0:
            raise ValueError("within_std must be > 0")

    @classmethod
    def from_json(cls, path) -> "SyntheticConfig":
        with open(path) as fh:
            raw = json.load(fh)
        unknown = set(raw) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown synthetic config keys: {sorted(unknown)}")
        return cls(**raw)

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2)
            fh.write("\n")


def generate_synthetic(config: SyntheticConfig) -> tuple[EmbeddingDataset, EmbeddingDataset]:
    """Draw isotropic Gaussian classes for a train and a test split.

    Each class gets a mean with i.i.d. ``N(0, mean_scale^2)`` coordinates;
    samples are that mean plus i.i.d. ``N(0, within_std^2)`` noise.
    """
    rng = np.random.default_rng(config.seed)
    d, n = config.dimension, config.samples_per_class

    def draw(prefix, count):
        classes = {}
        for c in range(count):
            mu = rng.normal(0.0, config.mean_scale, size=d)
            classes[f"{prefix}_{c:04d}"] = mu + rng.normal(0.0, config.within_std, size=(n, d))
        return classes

    train = EmbeddingDataset("train", draw("train", config.train_classes))
    test = EmbeddingDataset("test", draw("test", config.test_classes))
    return train, test


def sample_episode(
    dataset: EmbeddingDataset,
    ways: int,
    shots: int,
    queries: int,
    rng: np.random.Generator,
) -> Episode:
    """Sample an N-way K-shot episode with M queries per class.

    Classes are drawn uniformly without replacement; within each class
    ``shots + queries`` samples are drawn without replacement, the first
    ``shots`` going to the support set.
    """
    labels = dataset.labels
    if len(labels) < ways:
        raise CapacityError(f"dataset has {len(labels)} classes, episode needs {ways}")
    need = shots + queries
    for label in labels:
        if dataset.classes[label].shape[0] < need:
            raise CapacityError(
                f"class {label!r} has {dataset.classes[label].shape[0]} samples, "
                f"episode needs {need}"
            )

    chosen = rng.choice(len(labels), size=ways, replace=False)
    support, query = [], []
    for c in chosen:
        emb = dataset.classes[labels[c]]
        idx = rng.choice(emb.shape[0], size=need, replace=False)
        support.append(emb[idx[:shots]])
        query.append(emb[idx[shots:]])

    local = np.arange(ways)
    return Episode(
        support=np.concatenate(support),
        support_labels=np.repeat(local, shots),
        query=np.concatenate(query),
        query_labels=np.repeat(local, queries),
        classes=tuple(labels[c] for c in chosen),
        ways=ways,
        shots=shots,
        queries_per_class=queries,
    )


def write_dataset(dataset: EmbeddingDataset, path) -> None:
    """Write one ``{"label", "embedding"}`` JSON record per sample."""
    with open(path, "w") as fh:
        for label, emb in dataset.classes.items():
            for row in emb:
                # float repr round-trips float64 exactly
                fh.write(json.dumps({"label": label, "embedding": row.tolist()}))
                fh.write("\n")


def load_dataset(path, split: str = "test") -> EmbeddingDataset:
    """Read a JSON-Lines embedding file.

    Blank lines are skipped. The dimension is taken from the first record.

    Raises:
        DatasetFormatError: A line is not a valid record (carries ``.line``).
        DimensionMismatchError: A record's dimension differs from the first.
        EmptyDatasetError: The file contains no records.
    """
    rows: dict[str, list] = {}
    dim = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetFormatError(f"invalid JSON ({exc.msg})", lineno) from None
            if not isinstance(rec, dict) or "label" not in rec or "embedding" not in rec:
                raise DatasetFormatError("record needs 'label' and 'embedding'", lineno)
            label, emb = rec["label"], rec["embedding"]
            if not isinstance(label, (str, int)) or isinstance(label, bool):
                raise DatasetFormatError("label must be a string or integer", lineno)
            if (
                not isinstance(emb, list)
                or not emb
                or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in emb)
            ):
                raise DatasetFormatError("embedding must be a non-empty list of numbers", lineno)
            if dim is None:
                dim = len(emb)
            elif len(emb) != dim:
                raise DimensionMismatchError(
                    f"embedding has dimension {len(emb)}, expected {dim}", lineno
                )
            if not all(np.isfinite(emb)):
                raise DatasetFormatError("embedding contains non-finite values", lineno)
            rows.setdefault(str(label), []).append(emb)
    if not rows:
        raise EmptyDatasetError(f"{path}: no records")
    return EmbeddingDataset(split, {k: np.asarray(v, dtype=np.float64) for k, v in rows.items()})
