"""
Task-id and class-incremental scoring.

The task probability combines a feature-level Mahalanobis coefficient with the
maximum in-distribution softmax probability of each task's OOD head; the final
class-incremental probability of ``(task, class)`` is the within-task
probability times the task probability.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import InputError, ShapeError, StateError
from .nn import linear, softmax

COV_EPS = 1e-6
COV_EPS_FLOOR = 1e-12
MD_DELTA = 1e-6

MODES = ("full", "no_wp", "no_wp_no_md", "concat_logits")


@dataclass
class TaskStats:
    means: np.ndarray  # (n_classes, dim), row order = local class index
    cov: np.ndarray
    factor: tuple

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return cho_solve(self.factor, rhs)


def fit_task_stats(features, labels, eps: float = COV_EPS) -> TaskStats:
    """Class means and the shared covariance ``sum_y Cov_y + eps * I``.

    Per-class covariances use the biased (divide by n) form; ``eps`` is scaled
    by ``trace / dim`` so the ridge is relative to the feature scale.
    """
    u = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    if u.ndim != 2 or y.shape != (u.shape[0],):
        raise ShapeError("features must be (n, dim) with one label per row")
    classes = np.unique(y)
    if not np.array_equal(classes, np.arange(len(classes))):
        raise InputError("labels must be local indices 0..C-1")
    dim = u.shape[1]
    means = np.empty((len(classes), dim))
    scatter = np.zeros((dim, dim))
    for c in classes:
        uc = u[y == c]
        if len(uc) < 2:
            raise InputError(f"class {c} has fewer than 2 samples")
        means[c] = uc.mean(axis=0)
        d = uc - means[c]
        scatter += d.T @ d / len(uc)
    ridge = max(eps * np.trace(scatter) / dim, COV_EPS_FLOOR)
    cov = scatter + ridge * np.eye(dim)
    cov = 0.5 * (cov + cov.T)
    return TaskStats(means, cov, cho_factor(cov, lower=True))


def mahalanobis(stats: TaskStats, u) -> np.ndarray:
    """Distances ``(n, n_classes)`` from each row of ``u`` to every class mean."""
    u = np.atleast_2d(np.asarray(u, dtype=np.float64))
    if u.shape[1] != stats.dim:
        raise ShapeError(f"feature dim {u.shape[1]} != stats dim {stats.dim}")
    out = np.empty((u.shape[0], stats.means.shape[0]))
    for c, mu in enumerate(stats.means):
        d = u - mu
        sq = np.einsum("nd,dn->n", d, stats.solve(d.T))
        out[:, c] = np.sqrt(np.maximum(sq, 0.0))
    return out


def md_coefficient(stats: TaskStats, u, delta: float = MD_DELTA) -> np.ndarray:
    """``max_y 1 / max(MD(u; mu_y, Sigma), delta)`` per row of ``u``."""
    md = mahalanobis(stats, u)
    return (1.0 / np.maximum(md, delta)).max(axis=1)


@dataclass
class CilPrediction:
    table: np.ndarray   # (n, total classes), tasks concatenated in order
    tp: np.ndarray      # (n, n_tasks)
    wp: list[np.ndarray]  # per task (n, |Y_k|)
    task: np.ndarray    # chosen task index per sample
    local_class: np.ndarray
    label: np.ndarray   # chosen global label


def _task_outputs(model, x, k: int):
    u = model.features(x, k)
    ood_logits = linear(model.heads[k].ood, u)
    return u, ood_logits


def tp_probability(model, x, use_md: bool = True, delta: float = MD_DELTA) -> np.ndarray:
    """``P(task k | x)`` for every trained task, normalised across tasks."""
    raw = _raw_tp(model, x, use_md, delta)
    return raw / raw.sum(axis=1, keepdims=True)


def _raw_tp(model, x, use_md, delta, cache=None):
    cols = []
    for k in range(model.num_tasks):
        u, logits = cache[k] if cache is not None else _task_outputs(model, x, k)
        # OOD logit stays in the softmax denominator but not in the max
        msp = softmax(logits)[:, :-1].max(axis=1)
        c = md_coefficient(model.stats[k], u, delta) if use_md else 1.0
        cols.append(c * msp)
    return np.stack(cols, axis=1)


def predict_cil(model, x, mode: str = "full", delta: float = MD_DELTA) -> CilPrediction:
    """Class-incremental prediction without task id.

    ``full`` uses the WP head for within-task probabilities; ``no_wp`` uses the
    renormalised in-distribution part of the OOD head instead; ``no_wp_no_md``
    additionally drops the distance coefficient. ``concat_logits`` is the
    multi-head baseline: argmax over the concatenated in-distribution logits.
    Ties go to the lowest ``(task, class)``.
    """
    if mode not in MODES:
        raise InputError(f"unknown mode {mode!r}; expected one of {MODES}")
    if model.num_tasks == 0:
        raise StateError("model has no trained tasks")
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))

    outs = [_task_outputs(model, x, k) for k in range(model.num_tasks)]
    if mode == "concat_logits":
        wp = [softmax(logits[:, :-1]) for _, logits in outs]
        table = np.concatenate([logits[:, :-1] for _, logits in outs], axis=1)
        tp = np.full((x.shape[0], model.num_tasks), 1.0 / model.num_tasks)
    else:
        if mode == "full":
            wp = [softmax(linear(model.heads[k].wp, u)) for k, (u, _) in enumerate(outs)]
        else:
            wp = [softmax(logits[:, :-1]) for _, logits in outs]
        raw = _raw_tp(model, x, mode == "full" or mode == "no_wp", delta, cache=outs)
        tp = raw / raw.sum(axis=1, keepdims=True)
        table = np.concatenate([w * tp[:, [k]] for k, w in enumerate(wp)], axis=1)

    flat = table.argmax(axis=1)
    offsets = np.cumsum([0] + [w.shape[1] for w in wp])
    task = np.searchsorted(offsets, flat, side="right") - 1
    local = flat - offsets[task]
    label = np.array([model.heads[k].classes[j] for k, j in zip(task, local)], dtype=int)
    return CilPrediction(table, tp, wp, task, local, label)
