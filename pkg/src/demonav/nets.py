"""Small dense networks with explicit backprop, written against numpy only.

Everything runs in float64 on 2D batches. Gradients are exact (no averaging
hidden inside the layers); callers scale the output gradient themselves, so
loss conventions stay visible at the call site.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

ACTIVATIONS = ("relu", "sigmoid", "tanh", "linear")

# final-layer weights start near zero so early policies and values are tame
FINAL_INIT_SPAN = 3e-3


@dataclass(frozen=True)
class LayerSpec:
    in_dim: int
    out_dim: int
    activation: str

    def __post_init__(self):
        if self.in_dim <= 0 or self.out_dim <= 0:
            raise ValueError(f"layer dims must be positive, got {self.in_dim}x{self.out_dim}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "sigmoid":
        return _sigmoid(z)
    if kind == "tanh":
        return np.tanh(z)
    return z


def _activation_grad(z: np.ndarray, a: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return (z > 0.0).astype(np.float64)
    if kind == "sigmoid":
        return a * (1.0 - a)
    if kind == "tanh":
        return 1.0 - a * a
    return np.ones_like(z)


class DenseNet:
    """A chain of fully connected layers, y = act(x W + b) per layer.

    `small_final` draws the last layer from a tight uniform span instead of the
    fan-in rule; nets that feed into a larger assembly switch it off.
    """

    def __init__(self, specs, rng: np.random.Generator | None = None,
                 small_final: bool = True):
        specs = tuple(specs)
        if not specs:
            raise ValueError("a net needs at least one layer")
        for prev, cur in zip(specs, specs[1:]):
            if prev.out_dim != cur.in_dim:
                raise ValueError(f"layer dims do not chain: {prev.out_dim} -> {cur.in_dim}")
        self.specs = specs
        self.weights = [np.zeros((s.in_dim, s.out_dim)) for s in specs]
        self.biases = [np.zeros(s.out_dim) for s in specs]
        if rng is not None:
            self.initialize(rng, small_final)

    def initialize(self, rng: np.random.Generator, small_final: bool = True) -> None:
        for i, s in enumerate(self.specs):
            if small_final and i == len(self.specs) - 1:
                span = FINAL_INIT_SPAN
            else:
                span = 1.0 / np.sqrt(s.in_dim)
            self.weights[i][...] = rng.uniform(-span, span, (s.in_dim, s.out_dim))
            self.biases[i][...] = rng.uniform(-span, span, s.out_dim)

    @property
    def params(self) -> list:
        """Parameter arrays by reference, weights and biases interleaved."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    @property
    def in_dim(self) -> int:
        return self.specs[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.specs[-1].out_dim

    def forward(self, x: np.ndarray):
        """Returns (output, cache); cache feeds backward()."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ValueError(f"expected input (n, {self.in_dim}), got {x.shape}")
        cache = []
        for w, b, s in zip(self.weights, self.biases, self.specs):
            z = x @ w + b
            a = _activate(z, s.activation)
            cache.append((x, z, a))
            x = a
        return x, cache

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, cache, grad_out: np.ndarray, with_params: bool = True):
        """Backpropagate grad_out (same shape as the output) through the cache.

        Returns (param_grads, grad_in); param_grads is None when with_params is
        false, otherwise a list aligned with .params. Gradients are summed over
        the batch, not averaged.
        """
        gy = np.asarray(grad_out, dtype=np.float64)
        grads = [None] * (2 * len(self.specs)) if with_params else None
        for i in range(len(self.specs) - 1, -1, -1):
            x, z, a = cache[i]
            dz = gy * _activation_grad(z, a, self.specs[i].activation)
            if with_params:
                grads[2 * i] = x.T @ dz
                grads[2 * i + 1] = dz.sum(axis=0)
            gy = dz @ self.weights[i].T
        return grads, gy

    def copy_from(self, other: "DenseNet") -> None:
        if self.specs != other.specs:
            raise ValueError("cannot copy between nets with different shapes")
        for dst, src in zip(self.params, other.params):
            dst[...] = src


def soft_update(target_params, source_params, tau: float) -> None:
    """Blend source into target in place: t <- (1 - tau) t + tau s."""
    if len(target_params) != len(source_params):
        raise ValueError("parameter lists differ in length")
    for t, s in zip(target_params, source_params):
        t *= 1.0 - tau
        t += tau * s


class Adam:
    """Adam over a list of parameter arrays, updated in place.

    One shared step counter; bias correction per update. Rejects non-finite
    gradients outright rather than poisoning the parameters.
    """

    def __init__(self, params, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        if lr <= 0:
            raise ValueError("lr must be > 0")
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]

    def step(self, grads) -> None:
        if len(grads) != len(self.params):
            raise ValueError("gradient list does not match parameter list")
        for g in grads:
            if not np.all(np.isfinite(g)):
                raise FloatingPointError("non-finite gradient passed to Adam")
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, m, v, g in zip(self.params, self.m, self.v, grads):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state_arrays(self) -> dict:
        """Moment estimates keyed for serialization, by reference."""
        out = {}
        for i, (m, v) in enumerate(zip(self.m, self.v)):
            out[f"m{i}"] = m
            out[f"v{i}"] = v
        return out


def specs_to_json(specs) -> str:
    return json.dumps([[s.in_dim, s.out_dim, s.activation] for s in specs])


def specs_from_json(text: str) -> tuple:
    return tuple(LayerSpec(int(i), int(o), a) for i, o, a in json.loads(text))
