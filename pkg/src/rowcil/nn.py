"""
Minimal dense-network substrate.

Weights are stored ``(out, in)`` so that ``weight[i, j]`` connects input unit
``j`` of a layer to its output unit ``i``. Every layer output can be gated
element-wise by a vector in ``[0, 1]`` (the hook used by task masks). All
arithmetic is float64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InputError, NumericError, ShapeError

DTYPE = np.float64


@dataclass
class Dense:
    weight: np.ndarray
    bias: np.ndarray
    activation: str | None = "relu"

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    @classmethod
    def glorot(cls, in_dim: int, out_dim: int, rng: np.random.Generator,
               activation: str | None = "relu") -> "Dense":
        limit = math.sqrt(6.0 / (in_dim + out_dim))
        weight = rng.uniform(-limit, limit, size=(out_dim, in_dim))
        return cls(weight.astype(DTYPE), np.zeros(out_dim, dtype=DTYPE), activation)

    def copy(self) -> "Dense":
        return Dense(self.weight.copy(), self.bias.copy(), self.activation)


@dataclass
class Network:
    """Stack of ReLU layers; the last layer's output is the feature vector."""

    layers: list[Dense]

    def __post_init__(self):
        if not self.layers:
            raise ShapeError("network needs at least one layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.out_dim != nxt.in_dim:
                raise ShapeError(
                    f"layer dims do not chain: {prev.out_dim} -> {nxt.in_dim}"
                )

    @classmethod
    def create(cls, sizes: Sequence[int], rng: np.random.Generator) -> "Network":
        """``sizes = [input_dim, hidden_1, ..., feature_dim]``."""
        if len(sizes) < 2:
            raise ShapeError("sizes must include the input and at least one layer")
        return cls([Dense.glorot(a, b, rng) for a, b in zip(sizes, sizes[1:])])

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def feature_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def widths(self) -> list[int]:
        return [layer.out_dim for layer in self.layers]

    def params(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out += [layer.weight, layer.bias]
        return out

    def copy(self) -> "Network":
        return Network([layer.copy() for layer in self.layers])


@dataclass
class ForwardCache:
    inputs: list[np.ndarray]
    pre: list[np.ndarray]
    act: list[np.ndarray]
    gates: list[np.ndarray] | None


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    gates: list[np.ndarray] | None
    inputs: np.ndarray

    def flat(self) -> list[np.ndarray]:
        """Interleaved ``[dW0, db0, dW1, db1, ...]`` matching ``Network.params``."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out


def _as_batch(x) -> np.ndarray:
    x = np.asarray(x, dtype=DTYPE)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise ShapeError(f"expected a 2-D batch, got shape {x.shape}")
    return x


def _check_mask(net: Network, mask) -> list[np.ndarray] | None:
    if mask is None:
        return None
    if len(mask) != len(net.layers):
        raise ShapeError(f"mask has {len(mask)} layers, network has {len(net.layers)}")
    gates = []
    for l, (gate, layer) in enumerate(zip(mask, net.layers)):
        gate = np.asarray(gate, dtype=DTYPE)
        if gate.shape != (layer.out_dim,):
            raise ShapeError(f"mask[{l}] has shape {gate.shape}, expected ({layer.out_dim},)")
        if np.any(gate < 0.0) or np.any(gate > 1.0):
            raise InputError(f"mask[{l}] entries must lie in [0, 1]")
        gates.append(gate)
    return gates


def relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0)


def forward(net: Network, batch, mask=None) -> tuple[np.ndarray, ForwardCache]:
    x = _as_batch(batch)
    if x.shape[1] != net.input_dim:
        raise ShapeError(f"batch has {x.shape[1]} columns, network expects {net.input_dim}")
    if not np.all(np.isfinite(x)):
        raise NumericError("non-finite value in input batch")
    gates = _check_mask(net, mask)

    inputs, pres, acts = [], [], []
    h = x
    for l, layer in enumerate(net.layers):
        inputs.append(h)
        z = h @ layer.weight.T + layer.bias
        a = relu(z) if layer.activation == "relu" else z
        pres.append(z)
        acts.append(a)
        h = a * gates[l] if gates is not None else a
    return h, ForwardCache(inputs, pres, acts, gates)


def backward(net: Network, cache: ForwardCache, upstream) -> Gradients:
    """Backpropagate ``dLoss/dfeatures`` through the cached forward pass.

    Gate gradients are summed over the batch so they have the same shape
    as the gate vectors.
    """
    g = np.asarray(upstream, dtype=DTYPE)
    last = cache.act[-1]
    if g.shape != last.shape:
        raise ShapeError(f"upstream grad shape {g.shape} != features shape {last.shape}")

    n_layers = len(net.layers)
    dws: list = [None] * n_layers
    dbs: list = [None] * n_layers
    dgates: list | None = [None] * n_layers if cache.gates is not None else None
    for l in reversed(range(n_layers)):
        layer = net.layers[l]
        if cache.gates is not None:
            dgates[l] = np.sum(g * cache.act[l], axis=0)
            g = g * cache.gates[l]
        if layer.activation == "relu":
            g = g * (cache.pre[l] > 0.0)
        dws[l] = g.T @ cache.inputs[l]
        dbs[l] = g.sum(axis=0)
        g = g @ layer.weight
    return Gradients(dws, dbs, dgates, g)


def linear(head: Dense, u: np.ndarray) -> np.ndarray:
    return u @ head.weight.T + head.bias


def linear_backward(head: Dense, u: np.ndarray, grad: np.ndarray):
    """Returns ``(dW, db, du)`` for a purely linear head."""
    return grad.T @ u, grad.sum(axis=0), grad @ head.weight


def softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=DTYPE)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=DTYPE)
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax_xent(logits, labels) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch and its gradient w.r.t. the logits."""
    z = _as_batch(logits)
    y = np.asarray(labels)
    if y.ndim != 1 or y.shape[0] != z.shape[0]:
        raise ShapeError(f"labels shape {y.shape} does not match batch of {z.shape[0]}")
    if not np.issubdtype(y.dtype, np.integer):
        raise InputError("labels must be integer class indices")
    if np.any(y < 0) or np.any(y >= z.shape[1]):
        raise InputError(f"labels must lie in [0, {z.shape[1]})")
    n = z.shape[0]
    logp = log_softmax(z)
    rows = np.arange(n)
    loss = -float(logp[rows, y].mean())
    grad = np.exp(logp)
    grad[rows, y] -= 1.0
    return loss, grad / n


@dataclass
class SgdState:
    """Classical (heavy-ball) momentum: ``v = m*v + g; p -= lr*v``."""

    learning_rate: float
    momentum: float = 0.9
    velocity: list[np.ndarray] | None = field(default=None, repr=False)

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise InputError("learning_rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise InputError("momentum must lie in [0, 1)")


def sgd_step(params: list[np.ndarray], grads: list[np.ndarray], state: SgdState) -> list[np.ndarray]:
    """Update ``params`` in place and return them."""
    if len(params) != len(grads):
        raise ShapeError(f"{len(params)} params but {len(grads)} grads")
    if state.velocity is None:
        state.velocity = [np.zeros_like(p) for p in params]
    if len(state.velocity) != len(params):
        raise ShapeError("velocity buffers do not match parameter list")
    for p, g, v in zip(params, grads, state.velocity):
        if p.shape != g.shape or p.shape != v.shape:
            raise ShapeError(f"shape mismatch: param {p.shape}, grad {g.shape}, velocity {v.shape}")
        v *= state.momentum
        v += g
        p -= state.learning_rate * v
    return params
