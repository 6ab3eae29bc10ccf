"""
Three-step training of one task.

1. Train the shared extractor (through the task's soft mask) and the task's
   OOD head on current data plus upsampled replay negatives, with masked
   gradients and the mask sparsity penalty.
2. Freeze the extractor and fit the task's within-task (WP) head.
3. After the replay memory absorbs the new task, re-tune every task's OOD head
   on a pseudo split of the memory.

Feature statistics for the distance coefficient are fitted last.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import hat
from .errors import InputError, ShapeError
from .hat import AccumulatedMask, TaskMask
from .memory import ReplayBuffer
from .nn import Dense, Network, SgdState, backward, forward, linear, linear_backward, sgd_step, softmax_xent
from .scoring import COV_EPS, TaskStats, fit_task_stats

log = logging.getLogger(__name__)


@dataclass
class RowHyper:
    lr: float = 0.005
    momentum: float = 0.9
    batch_size: int = 64
    epochs: int = 20
    head_lr: float | None = None  # defaults to lr
    head_batch_size: int = 32
    wp_epochs: int = 5
    tp_epochs: int = 10
    s_max: float = 400.0
    emb_grad_clip: float = hat.EMBEDDING_GRAD_CLIP
    cov_eps: float = COV_EPS
    replay: bool = True  # False gives the HAT-only baseline

    @property
    def effective_head_lr(self) -> float:
        return self.lr if self.head_lr is None else self.head_lr


@dataclass
class TaskHeads:
    """OOD head (``|Y_k| + 1`` outputs, last = OOD) and WP head (``|Y_k|``)."""

    ood: Dense
    wp: Dense
    classes: np.ndarray  # global labels in local-index order

    @classmethod
    def create(cls, feature_dim: int, classes, rng: np.random.Generator) -> "TaskHeads":
        n = len(classes)
        return cls(
            Dense.glorot(feature_dim, n + 1, rng, activation=None),
            Dense.glorot(feature_dim, n, rng, activation=None),
            np.asarray(classes, dtype=int),
        )

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    def to_local(self, labels) -> np.ndarray:
        lookup = {int(c): i for i, c in enumerate(self.classes)}
        try:
            return np.array([lookup[int(c)] for c in labels], dtype=int)
        except KeyError as exc:
            raise InputError(f"label {exc.args[0]} is not a class of this task") from None


@dataclass
class StepLog:
    step1: list[float] = field(default_factory=list)
    step2: list[float] = field(default_factory=list)
    step3: dict[int, list[float]] = field(default_factory=dict)


class RowModel:
    """Shared masked extractor plus per-task heads, masks and statistics."""

    def __init__(self, sizes, budget: int, seed: int = 0):
        self.rng = np.random.default_rng(seed)
        self.net = Network.create(sizes, self.rng)
        self.buffer = ReplayBuffer(budget, seed=int(self.rng.integers(2**32)))
        self.task_masks: list[TaskMask] = []
        self.binary_masks: list[list[np.ndarray]] = []
        self.accumulated = AccumulatedMask.zeros(self.net.widths)
        self.heads: list[TaskHeads] = []
        self.stats: list[TaskStats] = []
        self.logs: list[StepLog] = []

    @property
    def num_tasks(self) -> int:
        return len(self.heads)

    def features(self, x, k: int) -> np.ndarray:
        """Extractor output for task ``k`` under its binarized mask."""
        feats, _ = forward(self.net, x, self.binary_masks[k])
        return feats

    def wp_logits(self, x, k: int) -> np.ndarray:
        return linear(self.heads[k].wp, self.features(x, k))

    def ood_logits(self, x, k: int) -> np.ndarray:
        return linear(self.heads[k].ood, self.features(x, k))

    def _seed(self) -> int:
        return int(self.rng.integers(2**32))


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    perm = rng.permutation(n)
    return [perm[i:i + batch_size] for i in range(0, n, batch_size)]


def train_step1(model: RowModel, x, y_local, hyper: RowHyper) -> list[float]:
    """Train the extractor and the newest task's OOD head. Returns per-epoch mean loss."""
    x = np.asarray(x, dtype=np.float64)
    y_local = np.asarray(y_local, dtype=int)
    n = len(x)
    if n == 0:
        raise InputError("task data is empty")
    k = model.num_tasks - 1
    mask, head = model.task_masks[k], model.heads[k]
    ood_label = head.num_classes
    use_ood = hyper.replay and len(model.buffer) > 0
    acc = model.accumulated

    params = model.net.params() + [head.ood.weight, head.ood.bias] + mask.embeddings
    state = SgdState(hyper.lr, hyper.momentum)
    history = []
    for epoch in range(hyper.epochs):
        if use_ood:
            x_neg, _, _ = model.buffer.upsample_to(n, model._seed())
        batches = _batches(n, hyper.batch_size, model.rng)
        losses = []
        for b, idx in enumerate(batches):
            s = hat.anneal_scale(b, len(batches), hyper.s_max)
            xb, yb = x[idx], y_local[idx]
            if use_ood:
                xb = np.concatenate([xb, x_neg[idx]])
                yb = np.concatenate([yb, np.full(len(idx), ood_label)])

            gates = mask.gates(s)
            feats, cache = forward(model.net, xb, gates)
            logits = linear(head.ood, feats)
            loss, dlogits = softmax_xent(logits, yb)
            dw_head, db_head, dfeats = linear_backward(head.ood, feats, dlogits)
            grads = backward(model.net, cache, dfeats)

            reg, reg_grads = hat.mask_regularizer(mask, s, acc)
            emb_grads = hat.gate_to_embedding_grads(grads.gates, mask, s)
            emb_grads = [g + r for g, r in zip(emb_grads, reg_grads)]
            emb_grads = hat.clip_embedding_grads(emb_grads, hyper.emb_grad_clip)

            dws, dbs = hat.gate_gradients(grads.weights, grads.biases, acc)
            net_grads = []
            for dw, db in zip(dws, dbs):
                net_grads += [dw, db]
            sgd_step(params, net_grads + [dw_head, db_head] + emb_grads, state)
            losses.append(loss + reg)
        history.append(float(np.mean(losses)))
        log.debug("task %d step1 epoch %d loss %.5f", k, epoch, history[-1])
    return history


def _fit_head(head: Dense, feats: np.ndarray, labels: np.ndarray, epochs: int,
              batch_size: int, lr: float, momentum: float, rng: np.random.Generator) -> list[float]:
    params = [head.weight, head.bias]
    state = SgdState(lr, momentum)
    history = []
    for _ in range(epochs):
        losses = []
        for idx in _batches(len(feats), batch_size, rng):
            u = feats[idx]
            loss, dlogits = softmax_xent(linear(head, u), labels[idx])
            dw, db, _ = linear_backward(head, u, dlogits)
            sgd_step(params, [dw, db], state)
            losses.append(loss)
        history.append(float(np.mean(losses)))
    return history


def train_step2(model: RowModel, x, y_local, hyper: RowHyper) -> list[float]:
    """Fit the newest task's WP head on frozen masked features."""
    k = model.num_tasks - 1
    feats = model.features(x, k)
    return _fit_head(model.heads[k].wp, feats, np.asarray(y_local, dtype=int), hyper.wp_epochs,
                     hyper.head_batch_size, hyper.effective_head_lr, hyper.momentum, model.rng)


def train_step3(model: RowModel, hyper: RowHyper) -> dict[int, list[float]]:
    """Re-tune every OOD head on a pseudo IND/OOD split of the replay memory.

    Heads are re-tuned one after another in task order; the extractor is frozen.
    """
    buffer_tasks = set(model.buffer.task_ids)
    missing = [k for k in range(model.num_tasks) if k not in buffer_tasks]
    if missing:
        raise InputError(f"replay buffer has no samples for tasks {missing}")
    histories = {}
    for k in range(model.num_tasks):
        head = model.heads[k]
        (x_in, y_in, _), (x_out, _, _) = model.buffer.pseudo_split(k)
        xs = np.concatenate([x_in, x_out])
        labels = np.concatenate([head.to_local(y_in), np.full(len(x_out), head.num_classes, dtype=int)])
        feats = model.features(xs, k)
        histories[k] = _fit_head(head.ood, feats, labels, hyper.tp_epochs, hyper.head_batch_size,
                                 hyper.effective_head_lr, hyper.momentum, model.rng)
    return histories


def train_task(model: RowModel, x, y, hyper: RowHyper, classes=None) -> RowModel:
    """Learn one new task from inputs ``x`` with global labels ``y``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=int)
    if len(x) == 0:
        raise InputError("task data is empty")
    if x.ndim != 2 or x.shape[1] != model.net.input_dim or y.shape != (len(x),):
        raise ShapeError("task inputs must be (n, input_dim) with one label per row")
    classes = np.unique(y) if classes is None else np.asarray(classes, dtype=int)
    seen = {int(c) for h in model.heads for c in h.classes}
    if seen & {int(c) for c in classes}:
        raise InputError("task classes overlap with earlier tasks")

    k = model.num_tasks
    model.task_masks.append(TaskMask.create(model.net.widths, model.rng))
    heads = TaskHeads.create(model.net.feature_dim, classes, model.rng)
    model.heads.append(heads)
    y_local = heads.to_local(y)
    steps = StepLog()

    steps.step1 = train_step1(model, x, y_local, hyper)
    model.binary_masks.append(model.task_masks[k].binarize(hyper.s_max))
    model.accumulated = hat.finalize_task_mask(model.task_masks[k], model.accumulated, hyper.s_max)

    steps.step2 = train_step2(model, x, y_local, hyper)
    if hyper.replay:
        model.buffer.rebalance_and_insert(x, y, k)
        steps.step3 = train_step3(model, hyper)

    model.stats.append(fit_task_stats(model.features(x, k), y_local, hyper.cov_eps))
    model.logs.append(steps)
    log.info("task %d done: %.1f%% of units claimed", k, 100 * model.accumulated.used_fraction())
    return model


def til_accuracy(model: RowModel, x, y, k: int) -> float:
    """Accuracy of task ``k``'s WP head when the task id is given."""
    head = model.heads[k]
    pred = model.wp_logits(x, k).argmax(axis=1)
    return float(np.mean(pred == head.to_local(y)))
