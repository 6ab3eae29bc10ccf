"""Continual-learning metrics and the task-weight bound multipliers."""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from .errors import InputError, StateError


class AccuracyLedger:
    """``acc[i, t]``: accuracy on task ``i`` after learning task ``t`` (0-based, ``i <= t``)."""

    def __init__(self, num_tasks: int):
        self.acc = np.full((num_tasks, num_tasks), np.nan)

    @property
    def num_tasks(self) -> int:
        return self.acc.shape[0]

    def record(self, task: int, after: int, value: float) -> None:
        if task > after:
            raise InputError("only tasks learned so far can be recorded")
        if not 0.0 <= value <= 1.0:
            raise InputError(f"accuracy {value} outside [0, 1]")
        self.acc[task, after] = value

    def row(self, t: int) -> np.ndarray:
        """Accuracies of tasks ``1..t`` after learning ``t`` tasks."""
        vals = self.acc[:t, t - 1]
        if t < 1 or np.any(np.isnan(vals)):
            raise StateError(f"accuracies after task {t} are incomplete")
        return vals


def aca(ledger: AccuracyLedger, t: int) -> float:
    """Average accuracy over all ``t`` tasks seen so far."""
    return float(ledger.row(t).mean())


def forgetting_sum(ledger: AccuracyLedger, t: int) -> float:
    if t < 2:
        raise InputError("forgetting needs at least two tasks")
    final = ledger.row(t)[:-1]
    first = np.diag(ledger.acc)[: t - 1]
    if np.any(np.isnan(first)):
        raise StateError("just-trained accuracies are missing")
    return float(np.sum(first - final))


def forgetting(ledger: AccuracyLedger, t: int) -> float:
    """Mean drop from each earlier task's just-learned accuracy to its current one."""
    return forgetting_sum(ledger, t) / (t - 1)


def _weights(pi) -> list[Fraction]:
    w = [Fraction(p) for p in pi]
    if not w:
        raise InputError("need at least one task weight")
    if any(p <= 0 for p in w):
        raise InputError("task weights must be positive")
    if abs(float(sum(w)) - 1.0) > 1e-9:
        raise InputError(f"task weights must sum to 1, got {float(sum(w))}")
    return w


def _prefix(w: list[Fraction]) -> list[Fraction]:
    out = [Fraction(0)]
    for p in w:
        out.append(out[-1] + p)
    return out


def bound_multiplier_seq(pi) -> float:
    """``max_k sum_{t<=k} pi[t:T] / pi[1:k]``, evaluated in exact rationals."""
    w = _weights(pi)
    pre = _prefix(w)
    T = len(w)
    best = max(
        sum((pre[T] - pre[t - 1]) / pre[k] for t in range(1, k + 1))
        for k in range(1, T + 1)
    )
    return float(best)


def bound_multiplier_replay(pi) -> float:
    """``max_k k * pi[1:T] / pi[1:k]``, evaluated in exact rationals."""
    w = _weights(pi)
    pre = _prefix(w)
    T = len(w)
    return float(max(k * pre[T] / pre[k] for k in range(1, T + 1)))
