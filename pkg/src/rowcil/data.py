"""Datasets: synthetic Gaussian clusters, a CSV loader, and disjoint task splits."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CsvParseError, InputError

TRAIN_FRACTION = 0.8


@dataclass
class Dataset:
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    num_classes: int

    def __post_init__(self):
        if len(self.x_train) == 0:
            raise InputError("train split is empty")
        if len(self.x_test) and self.x_train.shape[1] != self.x_test.shape[1]:
            raise InputError("train and test feature dims differ")
        for y in (self.y_train, self.y_test):
            if np.any(y < 0) or np.any(y >= self.num_classes):
                raise InputError(f"labels must lie in [0, {self.num_classes})")

    @property
    def feature_dim(self) -> int:
        return self.x_train.shape[1]


@dataclass
class Task:
    classes: np.ndarray  # global labels, local index = position
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray

    def to_local(self, y) -> np.ndarray:
        lookup = {int(c): i for i, c in enumerate(self.classes)}
        return np.array([lookup[int(c)] for c in y], dtype=int)


@dataclass
class TaskSequence:
    tasks: list[Task]
    class_order: np.ndarray

    def __len__(self) -> int:
        return len(self.tasks)

    def __iter__(self):
        return iter(self.tasks)

    def __getitem__(self, k: int) -> Task:
        return self.tasks[k]


def _n_train(n: int) -> int:
    return min(max(int(n * TRAIN_FRACTION), 1), max(n - 1, 1))


def _stratified(x: np.ndarray, y: np.ndarray, num_classes: int) -> Dataset:
    """First 80% of each class's rows (in given order) to train, rest to test."""
    tr, te = [], []
    for c in range(num_classes):
        idx = np.flatnonzero(y == c)
        cut = _n_train(len(idx))
        tr.append(idx[:cut])
        te.append(idx[cut:])
    tr, te = np.concatenate(tr), np.concatenate(te).astype(int)
    return Dataset(x[tr], y[tr], x[te], y[te], num_classes)


def gen_gaussian_clusters(num_classes: int, dim: int, n_per_class: int,
                          spread: float, seed: int = 0, radius: float = 1.0) -> Dataset:
    """Isotropic Gaussian blobs around well-separated means.

    Means are orthonormal directions scaled by ``radius`` when
    ``num_classes <= dim``, otherwise random points on the sphere.
    """
    if num_classes < 2 or dim < 1:
        raise InputError("need num_classes >= 2 and dim >= 1")
    if n_per_class < 2:
        raise InputError("need at least 2 samples per class")
    rng = np.random.default_rng(seed)
    if num_classes <= dim:
        q, _ = np.linalg.qr(rng.standard_normal((dim, num_classes)))
        means = q.T * radius
    else:
        means = rng.standard_normal((num_classes, dim))
        means *= radius / np.linalg.norm(means, axis=1, keepdims=True)
    x = np.concatenate([m + spread * rng.standard_normal((n_per_class, dim)) for m in means])
    y = np.repeat(np.arange(num_classes), n_per_class)
    order = np.concatenate([rng.permutation(n_per_class) + c * n_per_class for c in range(num_classes)])
    return _stratified(x[order], y[order], num_classes)


def write_csv(dataset: Dataset, path) -> None:
    """Train rows then test rows, so ``load_csv`` reproduces the same split."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label"] + [f"f{i}" for i in range(dataset.feature_dim)])
        for x, y in ((dataset.x_train, dataset.y_train), (dataset.x_test, dataset.y_test)):
            for row, label in zip(x, y):
                w.writerow([int(label)] + [repr(float(v)) for v in row])


def load_csv(path) -> Dataset:
    """Read ``label,f0,f1,...`` rows; each class is split 80/20 in file order."""
    path = Path(path)
    if not path.is_file():
        raise CsvParseError(f"{path}: no such file")
    labels, rows = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0].strip() != "label" or len(header) < 2:
            raise CsvParseError(f"{path}:1: header must be 'label,f0,f1,...'")
        width = len(header)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise CsvParseError(f"{path}:{lineno}: expected {width} fields, got {len(row)}")
            try:
                label = int(row[0])
            except ValueError:
                raise CsvParseError(f"{path}:{lineno}: label {row[0]!r} is not an integer") from None
            try:
                feats = [float(v) for v in row[1:]]
            except ValueError as exc:
                raise CsvParseError(f"{path}:{lineno}: {exc}") from None
            if label < 0:
                raise CsvParseError(f"{path}:{lineno}: negative label {label}")
            if not np.all(np.isfinite(feats)):
                raise CsvParseError(f"{path}:{lineno}: non-finite feature")
            labels.append(label)
            rows.append(feats)
    if not rows:
        raise CsvParseError(f"{path}: no data rows")
    y = np.array(labels, dtype=int)
    return _stratified(np.array(rows, dtype=np.float64), y, int(y.max()) + 1)


def split_tasks(dataset: Dataset, num_tasks: int, class_order_seed: int | None = None) -> TaskSequence:
    """Chunk a (seeded) permutation of the class labels into equal disjoint tasks.

    ``class_order_seed=None`` keeps the identity order.
    """
    if num_tasks < 1 or dataset.num_classes % num_tasks:
        raise InputError(f"{dataset.num_classes} classes cannot be split into {num_tasks} equal tasks")
    if class_order_seed is None:
        order = np.arange(dataset.num_classes)
    else:
        order = np.random.default_rng(class_order_seed).permutation(dataset.num_classes)
    per = dataset.num_classes // num_tasks
    tasks = []
    for k in range(num_tasks):
        classes = order[k * per:(k + 1) * per]
        tr = np.isin(dataset.y_train, classes)
        te = np.isin(dataset.y_test, classes)
        tasks.append(Task(classes.copy(), dataset.x_train[tr], dataset.y_train[tr],
                          dataset.x_test[te], dataset.y_test[te]))
    return TaskSequence(tasks, order)
