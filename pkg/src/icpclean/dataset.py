"""Dataset container, CSV ingestion, seeded splitting and label-noise injection."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np


class DataError(ValueError):
    """Raised for malformed input data (bad files, cells, or label ids)."""


@dataclass(frozen=True)
class LabelSpace:
    classes: tuple[str, ...]

    def __post_init__(self):
        classes = tuple(str(c) for c in self.classes)
        object.__setattr__(self, "classes", classes)
        if not classes:
            raise DataError("label space must contain at least one class")
        if len(set(classes)) != len(classes):
            raise DataError(f"duplicate class names in {classes!r}")

    def __len__(self):
        return len(self.classes)

    @property
    def index(self) -> dict[str, int]:
        return {name: i for i, name in enumerate(self.classes)}

    def encode(self, names: Sequence[str]) -> np.ndarray:
        idx = self.index
        try:
            return np.array([idx[str(n)] for n in names], dtype=np.int64)
        except KeyError as exc:
            raise DataError(f"unknown class name {exc.args[0]!r}") from None

    def decode(self, ids) -> list[str]:
        return [self.classes[int(i)] for i in ids]


@dataclass(frozen=True, eq=False)
class Dataset:
    """Dense feature matrix with integer class ids and stable sample ids.

    Instances are immutable: the arrays are copied on construction and
    flagged read-only, so a dataset can be shared between workers.
    """

    features: np.ndarray
    labels: np.ndarray
    label_space: LabelSpace
    sample_ids: tuple[str, ...] = None
    feature_names: tuple[str, ...] = None

    def __post_init__(self):
        X = np.array(self.features, dtype=np.float64, copy=True)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.ndim != 2:
            raise DataError(f"features must be 2-D, got shape {X.shape}")
        n, d = X.shape
        if n < 1:
            raise DataError("dataset must contain at least one sample")
        if not np.all(np.isfinite(X)):
            r, c = np.argwhere(~np.isfinite(X))[0]
            raise DataError(f"non-finite feature value at row {r}, column {c}")
        y = np.array(self.labels, dtype=np.int64, copy=True).reshape(-1)
        if y.shape[0] != n:
            raise DataError(f"{y.shape[0]} labels for {n} samples")
        m = len(self.label_space)
        if y.size and (y.min() < 0 or y.max() >= m):
            raise DataError(f"label ids must lie in [0, {m - 1}]")
        ids = self.sample_ids
        ids = tuple(str(i) for i in range(n)) if ids is None else tuple(str(i) for i in ids)
        if len(ids) != n:
            raise DataError(f"{len(ids)} sample ids for {n} samples")
        if len(set(ids)) != n:
            raise DataError("sample ids must be unique")
        names = self.feature_names
        names = tuple(f"f{j}" for j in range(d)) if names is None else tuple(map(str, names))
        if len(names) != d:
            raise DataError(f"{len(names)} feature names for {d} columns")
        X.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "sample_ids", ids)
        object.__setattr__(self, "feature_names", names)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.label_space)

    def __len__(self):
        return self.n

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)

    def take(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(
            self.features[idx],
            self.labels[idx],
            self.label_space,
            tuple(self.sample_ids[i] for i in idx),
            self.feature_names,
        )

    def with_labels(self, labels) -> "Dataset":
        return Dataset(self.features, labels, self.label_space, self.sample_ids, self.feature_names)

    def with_features(self, features, feature_names=None) -> "Dataset":
        return Dataset(features, self.labels, self.label_space, self.sample_ids, feature_names)

    def concat(self, other: "Dataset") -> "Dataset":
        if other.label_space != self.label_space:
            raise DataError("cannot concatenate datasets with different label spaces")
        if other.d != self.d:
            raise DataError(f"feature width mismatch: {self.d} vs {other.d}")
        return Dataset(
            np.vstack([self.features, other.features]),
            np.concatenate([self.labels, other.labels]),
            self.label_space,
            self.sample_ids + other.sample_ids,
            self.feature_names,
        )

    def to_csv(self, path, label_column: str = "label"):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["id", *self.feature_names, label_column])
            for sid, row, lab in zip(self.sample_ids, self.features, self.labels):
                writer.writerow([sid, *(repr(float(v)) for v in row), self.label_space.classes[lab]])


def load_csv(path, label_column: str = "label", label_space: LabelSpace | None = None) -> Dataset:
    """Read a dataset from a header-led CSV file.

    Every column other than ``label_column`` (and an optional ``id``
    column) must hold finite decimal numbers. Classes are ordered by first
    appearance unless an explicit ``label_space`` is given, which lets
    several files share one id mapping.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if label_column not in header:
            raise DataError(f"{path}: missing label column {label_column!r}")
        label_pos = header.index(label_column)
        id_pos = header.index("id") if "id" in header else None
        feat_pos = [j for j in range(len(header)) if j not in (label_pos, id_pos)]
        rows, labels, ids = [], [], []
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise DataError(f"{path}: line {lineno} has {len(rec)} cells, expected {len(header)}")
            vals = []
            for j in feat_pos:
                cell = rec[j].strip()
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: non-numeric value {cell!r} at line {lineno}, column {header[j]!r}"
                    ) from None
                if not math.isfinite(v):
                    raise DataError(
                        f"{path}: non-finite value {cell!r} at line {lineno}, column {header[j]!r}"
                    )
                vals.append(v)
            rows.append(vals)
            labels.append(rec[label_pos].strip())
            ids.append(rec[id_pos].strip() if id_pos is not None else str(len(ids)))
    if not rows:
        raise DataError(f"{path}: no data rows")
    if label_space is None:
        label_space = LabelSpace(tuple(dict.fromkeys(labels)))
    X = np.array(rows, dtype=np.float64).reshape(len(rows), len(feat_pos))
    return Dataset(X, label_space.encode(labels), label_space, ids, [header[j] for j in feat_pos])


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.6
    val_frac: float = 0.2
    test_frac: float = 0.2
    proper_frac: float = 0.8
    stratified: bool = True
    seed: int = 0

    def __post_init__(self):
        for name in ("train_frac", "val_frac", "test_frac", "proper_frac"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        total = self.train_frac + self.val_frac + self.test_frac
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"train/val/test fractions sum to {total}, expected 1")

    @property
    def part_fractions(self) -> tuple[float, float, float, float]:
        t = self.train_frac
        return (t * self.proper_frac, t * (1.0 - self.proper_frac), self.val_frac, self.test_frac)


PARTS = ("proper", "calibration", "validation", "test")


@dataclass(frozen=True)
class FourWaySplit:
    proper: Dataset
    calibration: Dataset
    validation: Dataset
    test: Dataset

    @property
    def training(self) -> Dataset:
        return self.proper.concat(self.calibration)

    def manifest(self) -> dict[str, list[str]]:
        return {p: list(getattr(self, p).sample_ids) for p in PARTS}

    def save(self, directory, label_column: str = "label"):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for p in PARTS:
            getattr(self, p).to_csv(directory / f"{p}.csv", label_column)
        (directory / "manifest.json").write_text(json.dumps(self.manifest(), indent=1))


def apportion(total: int, fractions: Sequence[float]) -> list[int]:
    """Largest-remainder apportionment of ``total`` items over ``fractions``.

    Remainders are compared after rounding to 9 decimals so that float noise
    such as ``50 * 0.48 == 23.999999999999996`` does not decide ties; equal
    remainders go to the earlier part.
    """
    quotas = [round(total * f, 9) for f in fractions]
    counts = [math.floor(q) for q in quotas]
    left = total - sum(counts)
    order = sorted(range(len(fractions)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in order[:left]:
        counts[i] += 1
    return counts


def split(ds: Dataset, spec: SplitSpec) -> FourWaySplit:
    """Partition ``ds`` into proper/calibration/validation/test parts."""
    rng = np.random.default_rng(spec.seed)
    fracs = spec.part_fractions
    buckets = [[] for _ in PARTS]
    if spec.stratified:
        for c in range(ds.n_classes):
            members = np.flatnonzero(ds.labels == c)
            if members.size == 0:
                continue
            if members.size < len(PARTS):
                raise DataError(
                    f"class {ds.label_space.classes[c]!r} has {members.size} samples; "
                    f"stratified split needs at least {len(PARTS)}"
                )
            members = members[rng.permutation(members.size)]
            start = 0
            for b, k in zip(buckets, apportion(members.size, fracs)):
                b.extend(members[start:start + k].tolist())
                start += k
    else:
        order = rng.permutation(ds.n)
        start = 0
        for b, k in zip(buckets, apportion(ds.n, fracs)):
            b.extend(order[start:start + k].tolist())
            start += k
    for name, b in zip(PARTS, buckets):
        if not b:
            raise DataError(f"split leaves the {name} part empty (n={ds.n})")
    return FourWaySplit(*(ds.take(sorted(b)) for b in buckets))


@dataclass(frozen=True)
class NoiseSpec:
    fraction: float = 0.0
    mode: str = "shuffle"
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.fraction <= 1.0:
            raise ValueError(f"noise fraction must lie in [0, 1], got {self.fraction}")
        if self.mode not in ("shuffle", "flip"):
            raise ValueError(f"unknown noise mode {self.mode!r}")


def permute_labels(ds: Dataset, spec: NoiseSpec) -> tuple[Dataset, np.ndarray]:
    """Corrupt a fraction of the labels of ``ds``.

    Returns the relabelled dataset and a boolean mask that is true where the
    new label differs from the original one. In ``shuffle`` mode the chosen
    labels are permuted among themselves, so some keep their value; in
    ``flip`` mode every chosen label moves to a different class.
    """
    m = ds.n_classes
    if spec.mode == "flip" and m < 2:
        raise DataError("flip mode needs at least two classes")
    rng = np.random.default_rng(spec.seed)
    k = int(math.floor(spec.fraction * ds.n + 0.5))
    chosen = np.sort(rng.choice(ds.n, size=k, replace=False)) if k else np.empty(0, np.int64)
    labels = ds.labels.copy()
    if k:
        if spec.mode == "shuffle":
            labels[chosen] = labels[chosen][rng.permutation(k)]
        else:
            labels[chosen] = (labels[chosen] + rng.integers(1, m, size=k)) % m
    return ds.with_labels(labels), labels != ds.labels
