"""Actor and critic assemblies on top of the dense-net core.

The actor emits a normalized command pair: a sigmoid channel in [0, 1] for
forward speed and a tanh channel in [-1, 1] for turn rate, scaled by the speed
limits only at the edge. The critic consumes the same normalized pair, merged
into its second layer after one state-only layer, and returns an unbounded
scalar value.
"""
from __future__ import annotations

import numpy as np

from .env import OBS_DIM
from .nets import DenseNet, LayerSpec, _sigmoid

DEFAULT_WIDTH = 500


def _hidden(width: int, n: int, in_dim: int):
    specs = [LayerSpec(in_dim, width, "relu")]
    for _ in range(n - 1):
        specs.append(LayerSpec(width, width, "relu"))
    return specs


class Actor:
    def __init__(self, max_linear: float, max_angular: float, width: int = DEFAULT_WIDTH,
                 obs_dim: int = OBS_DIM, rng: np.random.Generator | None = None):
        self.max_linear = float(max_linear)
        self.max_angular = float(max_angular)
        self.net = DenseNet(_hidden(width, 3, obs_dim) + [LayerSpec(width, 2, "linear")],
                            rng)

    @property
    def params(self):
        return self.net.params

    def clone(self) -> "Actor":
        twin = Actor(self.max_linear, self.max_angular,
                     width=self.net.specs[0].out_dim, obs_dim=self.net.in_dim)
        twin.net.copy_from(self.net)
        return twin

    def actions_normalized(self, obs: np.ndarray):
        """Normalized command pair for a batch, plus the cache for backward."""
        y, cache = self.net.forward(obs)
        out = np.column_stack([_sigmoid(y[:, 0]), np.tanh(y[:, 1])])
        return out, (cache, out)

    def act(self, obs: np.ndarray) -> np.ndarray:
        """Scaled command [linear, angular] for a single observation."""
        norm, _ = self.actions_normalized(np.asarray(obs, dtype=np.float64)[None, :])
        return norm[0] * np.array([self.max_linear, self.max_angular])

    def backward_from_normalized(self, cache, grad_norm: np.ndarray, with_params: bool = True):
        """Backprop a gradient w.r.t. the normalized command pair.

        Chains through the output squashes first, then the dense stack.
        Returns the same (param_grads, grad_obs) contract as DenseNet.backward.
        """
        net_cache, out = cache
        gy = np.column_stack([
            grad_norm[:, 0] * out[:, 0] * (1.0 - out[:, 0]),
            grad_norm[:, 1] * (1.0 - out[:, 1] ** 2),
        ])
        return self.net.backward(net_cache, gy, with_params)


class Critic:
    def __init__(self, width: int = DEFAULT_WIDTH, obs_dim: int = OBS_DIM,
                 rng: np.random.Generator | None = None):
        self.width = width
        # one layer reads the state alone; the command joins at the second
        self.state_net = DenseNet([LayerSpec(obs_dim, width, "relu")],
                                  rng, small_final=False)
        self.merge_net = DenseNet([LayerSpec(width + 2, width, "relu"),
                                   LayerSpec(width, width, "relu"),
                                   LayerSpec(width, 1, "linear")], rng)

    @property
    def params(self):
        return self.state_net.params + self.merge_net.params

    def clone(self) -> "Critic":
        twin = Critic(width=self.width, obs_dim=self.state_net.in_dim)
        twin.state_net.copy_from(self.state_net)
        twin.merge_net.copy_from(self.merge_net)
        return twin

    def q(self, obs: np.ndarray, act_norm: np.ndarray):
        """Values (n, 1) for a batch of observations and normalized commands."""
        act_norm = np.asarray(act_norm, dtype=np.float64)
        if act_norm.ndim != 2 or act_norm.shape[1] != 2:
            raise ValueError(f"expected normalized commands (n, 2), got {act_norm.shape}")
        h, state_cache = self.state_net.forward(obs)
        merged = np.concatenate([h, act_norm], axis=1)
        q, merge_cache = self.merge_net.forward(merged)
        return q, (state_cache, merge_cache)

    def values(self, obs: np.ndarray, act_norm: np.ndarray) -> np.ndarray:
        return self.q(obs, act_norm)[0]

    def backward(self, cache, grad_q: np.ndarray, with_params: bool = True):
        """Backprop a gradient w.r.t. q.

        Returns (param_grads, grad_obs, grad_act_norm); param_grads aligns
        with .params and is None when with_params is false.
        """
        state_cache, merge_cache = cache
        merge_grads, gm = self.merge_net.backward(merge_cache, grad_q, with_params)
        grad_h = gm[:, :self.width]
        grad_act = gm[:, self.width:]
        state_grads, grad_obs = self.state_net.backward(state_cache, grad_h, with_params)
        grads = state_grads + merge_grads if with_params else None
        return grads, grad_obs, grad_act

    def grad_action(self, obs: np.ndarray, act_norm: np.ndarray) -> np.ndarray:
        """d q / d normalized command, one row per sample."""
        q, cache = self.q(obs, act_norm)
        _, _, grad_act = self.backward(cache, np.ones_like(q), with_params=False)
        return grad_act
