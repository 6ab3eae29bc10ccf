"""
Hard attention to the task.

Each task owns one real-valued embedding per maskable layer. During training
the gate is ``sigmoid(s * e)`` with ``s`` annealed across an epoch; at
evaluation the gate is the binarized version at ``s_max``. Units claimed by
any earlier task are recorded in an accumulated binary mask, and gradients of
weights joining two claimed units are zeroed so those paths stay frozen.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import CapacityExhaustedError, ShapeError

BINARY_THRESHOLD = 0.5
EMBEDDING_GRAD_CLIP = 10.0


def sigmoid(x):
    # split on sign so large |x| never overflows exp
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class TaskMask:
    embeddings: list[np.ndarray]

    @classmethod
    def create(cls, widths: Sequence[int], rng: np.random.Generator) -> "TaskMask":
        return cls([rng.standard_normal(w) for w in widths])

    @property
    def widths(self) -> list[int]:
        return [e.shape[0] for e in self.embeddings]

    def gates(self, s: float) -> list[np.ndarray]:
        return [sigmoid(s * e) for e in self.embeddings]

    def binarize(self, s_max: float) -> list[np.ndarray]:
        return [(g >= BINARY_THRESHOLD).astype(np.float64) for g in self.gates(s_max)]


@dataclass
class AccumulatedMask:
    layers: list[np.ndarray]

    @classmethod
    def zeros(cls, widths: Sequence[int]) -> "AccumulatedMask":
        return cls([np.zeros(w) for w in widths])

    @property
    def widths(self) -> list[int]:
        return [a.shape[0] for a in self.layers]

    def copy(self) -> "AccumulatedMask":
        return AccumulatedMask([a.copy() for a in self.layers])

    def used_fraction(self) -> float:
        total = sum(a.size for a in self.layers)
        return float(sum(a.sum() for a in self.layers) / total)


def gate_gradients(weight_grads: list[np.ndarray], bias_grads: list[np.ndarray],
                   accumulated: AccumulatedMask) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Zero the gradient of every weight whose two endpoint units are claimed.

    ``dW'[i, j] = (1 - min(acc_l[i], acc_{l-1}[j])) * dW[i, j]``. Raw inputs
    carry no mask and count as always claimed, so first-layer weights freeze
    exactly when their output unit is claimed. Bias gradients are gated by the
    output unit alone.
    """
    if len(weight_grads) != len(accumulated.layers) or len(bias_grads) != len(accumulated.layers):
        raise ShapeError("accumulated mask must cover every maskable layer")
    new_w, new_b = [], []
    for l, (dw, db) in enumerate(zip(weight_grads, bias_grads)):
        out_side = accumulated.layers[l]
        if l == 0:
            in_side = np.ones(dw.shape[1])
        else:
            in_side = accumulated.layers[l - 1]
        if dw.shape != (out_side.shape[0], in_side.shape[0]) or db.shape != out_side.shape:
            raise ShapeError(f"layer {l}: gradient shapes {dw.shape}/{db.shape} do not match mask")
        keep = 1.0 - np.minimum(out_side[:, None], in_side[None, :])
        new_w.append(dw * keep)
        new_b.append(db * (1.0 - out_side))
    return new_w, new_b


def mask_regularizer(mask: TaskMask, s: float, accumulated: AccumulatedMask):
    """Sparsity penalty on units not yet claimed, with its embedding gradient.

    ``L = sum a_i (1 - acc_i) / sum (1 - acc_i)`` over all layers and units.
    """
    if mask.widths != accumulated.widths:
        raise ShapeError("task mask and accumulated mask widths differ")
    free = [1.0 - a for a in accumulated.layers]
    denom = float(sum(f.sum() for f in free))
    if denom <= 0.0:
        raise CapacityExhaustedError("all units are consumed by earlier tasks")
    gates = mask.gates(s)
    loss = float(sum((g * f).sum() for g, f in zip(gates, free)) / denom)
    grads = [f / denom * s * g * (1.0 - g) for g, f in zip(gates, free)]
    return loss, grads


def gate_to_embedding_grads(gate_grads: list[np.ndarray], mask: TaskMask, s: float) -> list[np.ndarray]:
    """Chain ``dL/da`` through ``a = sigmoid(s e)``."""
    return [dg * s * g * (1.0 - g) for dg, g in zip(gate_grads, mask.gates(s))]


def clip_embedding_grads(grads: list[np.ndarray], limit: float = EMBEDDING_GRAD_CLIP) -> list[np.ndarray]:
    return [np.clip(g, -limit, limit) for g in grads]


def anneal_scale(batch_index: int, batches_per_epoch: int, s_max: float) -> float:
    """Linear ramp from ``1/s_max`` at the first batch to ``s_max`` at the last."""
    if batches_per_epoch < 1:
        raise ValueError("batches_per_epoch must be >= 1")
    if batches_per_epoch == 1:
        return float(s_max)
    s_min = 1.0 / s_max
    frac = batch_index / (batches_per_epoch - 1)
    s = s_min + (s_max - s_min) * frac
    return float(min(max(s, s_min), s_max))


def finalize_task_mask(mask: TaskMask, accumulated: AccumulatedMask, s_max: float) -> AccumulatedMask:
    binary = mask.binarize(s_max)
    return AccumulatedMask([np.maximum(a, b) for a, b in zip(accumulated.layers, binary)])
