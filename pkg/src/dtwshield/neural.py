"""Two-hidden-layer MLP with hand-written backprop and an Adam optimizer."""
from __future__ import annotations

import json
from pathlib import Path
from typing import List, Sequence

import numpy as np

from .core import ConfigError


class TrainingDiverged(FloatingPointError):
    pass


class Mlp:
    """Affine-ReLU-affine-ReLU-affine network on row-major batches.

    ``params`` is the flat list [W1, b1, W2, b2, W3, b3] with W of shape
    (fan_in, fan_out). ``output`` is "identity" or "tanh".
    """

    def __init__(self, dims: Sequence[int], params: List[np.ndarray], output: str = "identity"):
        if output not in ("identity", "tanh"):
            raise ConfigError(f"unknown output activation {output!r}")
        self.dims = tuple(int(d) for d in dims)
        self.params = params
        self.output = output

    @classmethod
    def init(cls, dims: Sequence[int], seed: int, output: str = "identity") -> "Mlp":
        dims = list(dims)
        if len(dims) != 4 or any(int(d) < 1 for d in dims):
            raise ConfigError(f"dims must be [in, h1, h2, out] with positive entries, got {dims}")
        rng = np.random.default_rng(seed)
        params = []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            params.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            params.append(rng.uniform(-bound, bound, size=fan_out))
        return cls(dims, params, output)

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    def copy(self) -> "Mlp":
        return Mlp(self.dims, [p.copy() for p in self.params], self.output)

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.dims[0]:
            raise ConfigError(f"expected input dimension {self.dims[0]}, got {x.shape[-1]}")
        return x

    def forward(self, x) -> np.ndarray:
        x = self._check(x)
        W1, b1, W2, b2, W3, b3 = self.params
        h = np.maximum(x @ W1 + b1, 0.0)
        h = np.maximum(h @ W2 + b2, 0.0)
        y = h @ W3 + b3
        return np.tanh(y) if self.output == "tanh" else y

    __call__ = forward

    def forward_cache(self, x):
        x = np.atleast_2d(self._check(x))
        W1, b1, W2, b2, W3, b3 = self.params
        z1 = x @ W1 + b1
        a1 = np.maximum(z1, 0.0)
        z2 = a1 @ W2 + b2
        a2 = np.maximum(z2, 0.0)
        y = a2 @ W3 + b3
        if self.output == "tanh":
            y = np.tanh(y)
        return y, (x, z1, a1, z2, a2, y)

    def backward(self, cache, dy):
        """Gradients of sum(dy * y) w.r.t. the parameters and the input."""
        x, z1, a1, z2, a2, y = cache
        W1, _, W2, _, W3, _ = self.params
        if self.output == "tanh":
            dy = dy * (1.0 - y * y)
        dW3 = a2.T @ dy
        db3 = dy.sum(axis=0)
        dz2 = (dy @ W3.T) * (z2 > 0)
        dW2 = a1.T @ dz2
        db2 = dz2.sum(axis=0)
        dz1 = (dz2 @ W2.T) * (z1 > 0)
        dW1 = x.T @ dz1
        db1 = dz1.sum(axis=0)
        dx = dz1 @ W1.T
        return [dW1, db1, dW2, db2, dW3, db3], dx

    def soft_update(self, source: "Mlp", tau: float) -> None:
        for p, q in zip(self.params, source.params):
            p *= 1.0 - tau
            p += tau * q

    def to_dict(self) -> dict:
        return {"dims": list(self.dims), "output": self.output, "params": [p.tolist() for p in self.params]}

    @classmethod
    def from_dict(cls, obj: dict) -> "Mlp":
        dims = obj["dims"]
        params = [np.asarray(p, dtype=np.float64) for p in obj["params"]]
        shapes = []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            shapes += [(fan_in, fan_out), (fan_out,)]
        if [p.shape for p in params] != shapes:
            raise ConfigError("checkpoint parameter shapes do not match its dims header")
        return cls(dims, params, obj.get("output", "identity"))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), separators=(",", ":")), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Mlp":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


class Adam:
    def __init__(self, params: List[np.ndarray], lr: float = 3e-4, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params: List[np.ndarray], grads: List[np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def _mse_forward(net: Mlp, x, target):
    target = np.atleast_2d(np.asarray(target, dtype=np.float64))
    y, cache = net.forward_cache(x)
    if target.shape != y.shape:
        raise ConfigError(f"target shape {target.shape} does not match output shape {y.shape}")
    err = y - target
    return float(np.mean(err * err)), err, cache


def mse_grad(net: Mlp, x, target):
    """Mean squared error over all batch entries and its parameter gradients."""
    loss, err, cache = _mse_forward(net, x, target)
    grads, _ = net.backward(cache, 2.0 * err / err.size)
    return loss, grads


def train_step(net: Mlp, optim: Adam, x, target) -> float:
    """One Adam update on the batch; returns the loss measured before the update."""
    if len(np.atleast_2d(x)) == 0:
        raise ConfigError("empty batch")
    with np.errstate(invalid="ignore", over="ignore"):
        loss, err, cache = _mse_forward(net, x, target)
    if not np.isfinite(loss):
        raise TrainingDiverged(f"loss is {loss}")
    grads, _ = net.backward(cache, 2.0 * err / err.size)
    optim.step(net.params, grads)
    return loss
