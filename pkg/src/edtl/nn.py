"""Fully connected regression networks trained with mini-batch Adam.

Parameters are immutable values: every update returns a new
:class:`NetworkParams`, and layers that are not updated are carried over as
the very same array objects so frozen layers stay bit-identical.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from edtl.dataset import Dataset

ACTIVATIONS = ("relu", "linear")


class NetworkError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class LayerParams:
    weights: np.ndarray  # (out_dim, in_dim)
    bias: np.ndarray  # (out_dim,)
    activation: str = "relu"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise NetworkError(f"unknown activation {self.activation!r}")
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise NetworkError(
                f"bad layer shapes {self.weights.shape} / {self.bias.shape}")

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True, eq=False)
class NetworkParams:
    layers: tuple[LayerParams, ...]

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise NetworkError("network needs at least one layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if nxt.in_dim != prev.out_dim:
                raise NetworkError(
                    f"layer dims do not chain: {prev.out_dim} -> {nxt.in_dim}")

    def __len__(self):
        return len(self.layers)

    @property
    def dims(self) -> list[int]:
        return [self.layers[0].in_dim] + [l.out_dim for l in self.layers]

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Batched forward pass: ``(N, in_dim) -> (N,)`` for scalar nets."""
        h = np.asarray(x, dtype=float)
        single = h.ndim == 1
        h = np.atleast_2d(h)
        if h.shape[1] != self.in_dim:
            raise NetworkError(f"input has {h.shape[1]} features, net expects {self.in_dim}")
        for layer in self.layers:
            h = h @ layer.weights.T + layer.bias
            if layer.activation == "relu":
                h = np.maximum(h, 0.0)
        out = h[:, 0] if h.shape[1] == 1 else h
        return out[0] if single else out

    def replace_layer(self, i: int, layer: LayerParams) -> NetworkParams:
        layers = list(self.layers)
        layers[i] = layer
        return NetworkParams(tuple(layers))

    def equals(self, other: NetworkParams) -> bool:
        return len(self) == len(other) and all(
            a.activation == b.activation
            and np.array_equal(a.weights, b.weights)
            and np.array_equal(a.bias, b.bias)
            for a, b in zip(self.layers, other.layers))


@dataclass(frozen=True)
class FreezeMask:
    trainable: tuple[bool, ...]

    def __post_init__(self):
        object.__setattr__(self, "trainable", tuple(bool(t) for t in self.trainable))
        if not any(self.trainable):
            raise NetworkError("freeze mask leaves nothing trainable")

    @classmethod
    def all_trainable(cls, n_layers: int) -> FreezeMask:
        return cls((True,) * n_layers)

    def check(self, net: NetworkParams) -> None:
        if len(self.trainable) != len(net):
            raise NetworkError(
                f"mask has {len(self.trainable)} entries, net has {len(net)} layers")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 64
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon_adam: float = 1e-8
    seed: int = 0

    def with_seed(self, seed: int) -> TrainConfig:
        return TrainConfig(**{**asdict(self), "seed": seed})


@dataclass(frozen=True)
class AdamState:
    first_moment: tuple[tuple[np.ndarray, np.ndarray], ...]
    second_moment: tuple[tuple[np.ndarray, np.ndarray], ...]
    # Per-layer counts: a frozen layer's bias correction does not advance.
    steps: tuple[int, ...] = field(default=())

    @classmethod
    def zeros(cls, net: NetworkParams) -> AdamState:
        z = tuple((np.zeros_like(l.weights), np.zeros_like(l.bias)) for l in net.layers)
        return cls(z, z, (0,) * len(net))

    @property
    def step_count(self) -> int:
        return max(self.steps, default=0)


Gradients = list  # [(dW, db), ...] mirroring NetworkParams.layers


def init_network(layer_dims: Sequence[int], seed: int) -> NetworkParams:
    """He-uniform weights, zero biases, relu hidden layers and a linear head."""
    dims = [int(d) for d in layer_dims]
    if len(dims) < 2:
        raise NetworkError("need at least input and output dims")
    if any(d <= 0 for d in dims):
        raise NetworkError(f"non-positive layer dim in {dims}")
    rng = np.random.default_rng(seed)
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(dims, dims[1:])):
        act = "linear" if i == len(dims) - 2 else "relu"
        layers.append(he_uniform_layer(fan_in, fan_out, rng, act))
    return NetworkParams(tuple(layers))


def he_uniform_layer(fan_in: int, fan_out: int, rng: np.random.Generator,
                     activation: str = "relu") -> LayerParams:
    limit = np.sqrt(6.0 / fan_in)
    w = rng.uniform(-limit, limit, size=(fan_out, fan_in))
    return LayerParams(w, np.zeros(fan_out), activation)


def forward(net: NetworkParams, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != net.in_dim:
        raise NetworkError(f"expected a vector of length {net.in_dim}")
    return float(net.predict(x))


def mse_loss(y, yhat) -> float:
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape:
        raise NetworkError("length mismatch")
    if y.size == 0:
        raise NetworkError("empty vectors")
    r = y - yhat
    return float(r @ r) / y.size


def _forward_cache(net: NetworkParams, x: np.ndarray):
    acts = [x]
    pre = []
    h = x
    for layer in net.layers:
        z = h @ layer.weights.T + layer.bias
        pre.append(z)
        h = np.maximum(z, 0.0) if layer.activation == "relu" else z
        acts.append(h)
    return pre, acts


def preactivations(net: NetworkParams, x) -> list[np.ndarray]:
    """Pre-activation values of every layer, for kink-distance checks."""
    return _forward_cache(net, np.atleast_2d(np.asarray(x, dtype=float)))[0]


def backward(net: NetworkParams, batch_x, batch_y) -> Gradients:
    """Exact gradient of the mean squared error over the batch."""
    x = np.atleast_2d(np.asarray(batch_x, dtype=float))
    y = np.asarray(batch_y, dtype=float).reshape(-1)
    if x.shape[0] == 0:
        raise NetworkError("empty batch")
    if x.shape[1] != net.in_dim or y.shape[0] != x.shape[0]:
        raise NetworkError("batch dimensions do not match network")
    pre, acts = _forward_cache(net, x)
    n = x.shape[0]
    delta = (2.0 / n) * (acts[-1] - y[:, None])
    grads: list = [None] * len(net)
    for i in range(len(net) - 1, -1, -1):
        layer = net.layers[i]
        if layer.activation == "relu":
            delta = delta * (pre[i] > 0)
        grads[i] = (delta.T @ acts[i], delta.sum(axis=0))
        if i > 0:
            delta = delta @ layer.weights
    return grads


def adam_step(net: NetworkParams, grads: Gradients, state: AdamState,
              mask: FreezeMask, cfg: TrainConfig) -> tuple[NetworkParams, AdamState]:
    mask.check(net)
    b1, b2 = cfg.beta1, cfg.beta2
    layers, m_out, v_out, steps = [], [], [], []
    for i, layer in enumerate(net.layers):
        m_i, v_i, t = state.first_moment[i], state.second_moment[i], state.steps[i]
        if not mask.trainable[i]:
            layers.append(layer)
            m_out.append(m_i)
            v_out.append(v_i)
            steps.append(t)
            continue
        t += 1
        new_params, new_m, new_v = [], [], []
        for p, g, m, v in zip((layer.weights, layer.bias), grads[i], m_i, v_i):
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * (g * g)
            m_hat = m / (1 - b1 ** t)
            v_hat = v / (1 - b2 ** t)
            new_params.append(p - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.epsilon_adam))
            new_m.append(m)
            new_v.append(v)
        layers.append(LayerParams(new_params[0], new_params[1], layer.activation))
        m_out.append(tuple(new_m))
        v_out.append(tuple(new_v))
        steps.append(t)
    return NetworkParams(tuple(layers)), AdamState(tuple(m_out), tuple(v_out), tuple(steps))


def train(net: NetworkParams, ds: Dataset, cfg: TrainConfig,
          mask: FreezeMask | None = None) -> NetworkParams:
    """Mini-batch Adam on MSE; one seeded shuffle per epoch, last batch may be short."""
    if len(ds) == 0:
        raise NetworkError("empty dataset")
    if ds.n_features != net.in_dim:
        raise NetworkError(
            f"dataset has {ds.n_features} features, net expects {net.in_dim}")
    mask = mask or FreezeMask.all_trainable(len(net))
    mask.check(net)
    rng = np.random.default_rng(cfg.seed)
    state = AdamState.zeros(net)
    x, y = ds.rows, ds.targets
    n = len(ds)
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            grads = backward(net, x[idx], y[idx])
            net, state = adam_step(net, grads, state, mask, cfg)
    return net


def flat_params(net: NetworkParams) -> np.ndarray:
    return np.concatenate([np.concatenate([l.weights.ravel(), l.bias]) for l in net.layers])


def flat_grads(grads: Gradients) -> np.ndarray:
    return np.concatenate([np.concatenate([gw.ravel(), gb]) for gw, gb in grads])


def unflatten(net: NetworkParams, theta: np.ndarray) -> NetworkParams:
    layers, pos = [], 0
    for l in net.layers:
        nw, nb = l.weights.size, l.bias.size
        w = theta[pos:pos + nw].reshape(l.weights.shape)
        b = theta[pos + nw:pos + nw + nb]
        pos += nw + nb
        layers.append(LayerParams(w.copy(), b.copy(), l.activation))
    return NetworkParams(tuple(layers))


def grad_check(net: NetworkParams, x, y, h: float = 1e-5,
               floor: float = 1e-6) -> float:
    """Worst relative error between ``backward`` and central differences.

    Relative error is ``|a - n| / max(|a|, |n|, floor)``; the floor keeps
    parameters with vanishing gradient (dead units) from dividing by zero.
    """
    if h <= 0:
        raise NetworkError("h must be positive")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    analytic = flat_grads(backward(net, x, y))
    theta = flat_params(net)
    worst = 0.0
    for k in range(theta.size):
        tp = theta.copy()
        tp[k] += h
        tm = theta.copy()
        tm[k] -= h
        lp = mse_loss(y, np.atleast_1d(unflatten(net, tp).predict(x)))
        lm = mse_loss(y, np.atleast_1d(unflatten(net, tm).predict(x)))
        num = (lp - lm) / (2 * h)
        err = abs(analytic[k] - num) / max(abs(analytic[k]), abs(num), floor)
        worst = max(worst, err)
    return worst


# -- serialization -------------------------------------------------------------

def network_to_dict(net: NetworkParams, config: TrainConfig | None = None,
                    seed: int | None = None) -> dict:
    return {
        "dims": net.dims,
        "activations": [l.activation for l in net.layers],
        "weights": [[float(v) for v in l.weights.ravel()] for l in net.layers],
        "biases": [[float(v) for v in l.bias] for l in net.layers],
        "config": asdict(config) if config is not None else None,
        "seed": seed,
    }


def network_from_dict(d: dict) -> NetworkParams:
    dims = d["dims"]
    layers = []
    for i, act in enumerate(d["activations"]):
        w = np.array(d["weights"][i], dtype=float).reshape(dims[i + 1], dims[i])
        b = np.array(d["biases"][i], dtype=float)
        layers.append(LayerParams(w, b, act))
    return NetworkParams(tuple(layers))


def save_network(net: NetworkParams, path, config: TrainConfig | None = None,
                 seed: int | None = None) -> None:
    # json writes floats with repr(), the shortest round-tripping decimal.
    Path(path).write_text(json.dumps(network_to_dict(net, config, seed)))


def load_network(path) -> NetworkParams:
    return network_from_dict(json.loads(Path(path).read_text()))
