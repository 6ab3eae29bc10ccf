"""Class-balanced replay memory with a fixed global budget."""

from __future__ import annotations

import numpy as np

from .errors import EmptyMemoryError, InputError, QuotaError


class ReplayBuffer:
    """Stores raw inputs per class; every class gets an (almost) equal share.

    Samples are kept as ``(x, label, task_id)`` with global labels.
    """

    def __init__(self, budget: int, seed: int = 0):
        if budget < 1:
            raise InputError("budget must be positive")
        self.budget = int(budget)
        self.rng = np.random.default_rng(seed)
        self._x: dict[int, np.ndarray] = {}
        self._task: dict[int, int] = {}

    def __len__(self) -> int:
        return sum(len(v) for v in self._x.values())

    @property
    def classes(self) -> list[int]:
        return sorted(self._x)

    @property
    def task_ids(self) -> list[int]:
        return sorted(set(self._task.values()))

    def class_counts(self) -> dict[int, int]:
        return {c: len(self._x[c]) for c in self.classes}

    def quotas(self, classes: list[int]) -> dict[int, int]:
        """Equal split of the budget; the remainder goes to the smallest labels."""
        n = len(classes)
        base, extra = divmod(self.budget, n)
        if base == 0:
            raise QuotaError(f"budget {self.budget} is smaller than {n} classes")
        return {c: base + (1 if rank < extra else 0) for rank, c in enumerate(sorted(classes))}

    def _subset(self, x: np.ndarray, quota: int) -> np.ndarray:
        if len(x) <= quota:
            return x
        keep = np.sort(self.rng.permutation(len(x))[:quota])
        return x[keep]

    def rebalance_and_insert(self, x, y, task_id: int) -> "ReplayBuffer":
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y)
        new_classes = sorted(int(c) for c in np.unique(y))
        clash = set(new_classes) & set(self._x)
        if clash:
            raise InputError(f"classes {sorted(clash)} are already stored")
        quota = self.quotas(self.classes + new_classes)
        for c in self.classes:
            self._x[c] = self._subset(self._x[c], quota[c])
        for c in new_classes:
            self._x[c] = self._subset(x[y == c], quota[c]).copy()
            self._task[c] = int(task_id)
        return self

    def samples(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """All stored ``(x, labels, task_ids)`` ordered by class label."""
        if not self._x:
            dim = 0
            return np.empty((0, dim)), np.empty(0, dtype=int), np.empty(0, dtype=int)
        xs = [self._x[c] for c in self.classes]
        ys = [np.full(len(self._x[c]), c, dtype=int) for c in self.classes]
        ts = [np.full(len(self._x[c]), self._task[c], dtype=int) for c in self.classes]
        return np.concatenate(xs), np.concatenate(ys), np.concatenate(ts)

    def upsample_to(self, n: int, seed: int):
        """Exactly ``n`` stored samples: a shuffled pass over the buffer, topped
        up with uniform draws with replacement when the buffer is smaller."""
        if len(self) == 0:
            raise EmptyMemoryError("replay buffer is empty")
        x, y, t = self.samples()
        rng = np.random.default_rng(seed)
        idx = rng.permutation(len(x))[:n]
        if len(idx) < n:
            idx = np.concatenate([idx, rng.integers(0, len(x), size=n - len(idx))])
        return x[idx], y[idx], t[idx]

    def pseudo_split(self, task_id: int):
        """Partition the buffer into the samples of ``task_id`` and the rest."""
        if task_id not in self._task.values():
            raise InputError(f"task {task_id} has no samples in the buffer")
        x, y, t = self.samples()
        own = t == task_id
        return (x[own], y[own], t[own]), (x[~own], y[~own], t[~own])
