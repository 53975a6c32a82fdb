"""Prioritized experience replay with pinned demonstration slots.

Priorities follow p = delta^2 + grad_weight * |dQ/da|^2 + floor (+ bonus for
demonstration transitions). Leaves of the sum tree hold p^alpha; sampling is
stratified over equal mass segments, and importance weights are normalized by
the largest weight in the batch.

Demonstrations occupy the first slots permanently; live experience cycles
through the remainder. Priority updates carry a per-slot generation stamp so a
late update cannot touch a slot that has been overwritten since sampling.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .env import Action, Transition

REBUILD_INTERVAL = 10000  # exact tree refresh cadence, counters in set_many calls


class SumTree:
    """Flat binary sum tree over `capacity` leaves, padded to a power of two."""

    def __init__(self, capacity: int):
        if capacity <= 0:
            raise ValueError("capacity must be > 0")
        self.capacity = capacity
        self.depth = (capacity - 1).bit_length()
        self.padded = 1 << self.depth
        self.nodes = np.zeros(2 * self.padded - 1)
        self._updates = 0

    @property
    def total(self) -> float:
        return float(self.nodes[0])

    def get(self, index: int) -> float:
        return float(self.nodes[self.padded - 1 + index])

    def leaves(self) -> np.ndarray:
        return self.nodes[self.padded - 1:self.padded - 1 + self.capacity]

    def set(self, index: int, value: float) -> None:
        node = self.padded - 1 + index
        delta = value - self.nodes[node]
        self.nodes[node] = value
        while node:
            node = (node - 1) // 2
            self.nodes[node] += delta

    def set_many(self, indices: np.ndarray, values: np.ndarray) -> None:
        """Batch update; with repeated indices the last value wins."""
        indices = np.asarray(indices, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        rev = indices[::-1]
        uniq, pos = np.unique(rev, return_index=True)
        vals = values[::-1][pos]
        node = uniq + self.padded - 1
        delta = vals - self.nodes[node]
        self.nodes[node] = vals
        while node[0]:
            node = (node - 1) // 2
            np.add.at(self.nodes, node, delta)
        self._updates += 1
        if self._updates % REBUILD_INTERVAL == 0:
            self.rebuild()

    def rebuild(self) -> None:
        """Recompute every internal node exactly from the leaves."""
        start, width = self.padded - 1, self.padded
        while width > 1:
            child = self.nodes[start:start + width]
            width //= 2
            start -= width
            self.nodes[start:start + width] = child[0::2] + child[1::2]

    def find(self, mass: np.ndarray) -> np.ndarray:
        """Leaf index whose cumulative interval contains each mass value."""
        u = np.asarray(mass, dtype=np.float64).copy()
        node = np.zeros(u.shape, dtype=np.int64)
        for _ in range(self.depth):
            left = 2 * node + 1
            left_sum = self.nodes[left]
            go_left = u < left_sum
            node = np.where(go_left, left, left + 1)
            u = np.where(go_left, u, u - left_sum)
        return node - (self.padded - 1)


@dataclass(frozen=True)
class PerConfig:
    capacity: int = 200000
    alpha: float = 0.6
    priority_floor: float = 0.01
    demo_bonus: float = 1.0
    grad_weight: float = 0.1

    def __post_init__(self):
        if self.capacity <= 0:
            raise ValueError("capacity must be > 0")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.priority_floor <= 0:
            raise ValueError("priority_floor must be > 0")
        if self.demo_bonus < 0 or self.grad_weight < 0:
            raise ValueError("demo_bonus and grad_weight must be >= 0")


def compute_priority(td_error: float, action_grad: np.ndarray, demo: bool,
                     config: PerConfig) -> float:
    """Scalar priority before the alpha exponent."""
    g = np.asarray(action_grad, dtype=np.float64)
    p = td_error * td_error + config.grad_weight * float(g @ g) + config.priority_floor
    if demo:
        p += config.demo_bonus
    return p


def importance_weight(prob: float, size: int, beta: float) -> float:
    """Unnormalized correction weight for one sampled transition."""
    return (1.0 / (size * prob)) ** beta


class SampledBatch(NamedTuple):
    indices: np.ndarray
    generations: np.ndarray
    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_obs: np.ndarray
    dones: np.ndarray
    demos: np.ndarray
    probs: np.ndarray
    weights_raw: np.ndarray
    weights: np.ndarray


class ReplayBuffer:
    def __init__(self, config: PerConfig = PerConfig(), obs_dim: int = 28,
                 rng: np.random.Generator | None = None):
        self.config = config
        c = config.capacity
        self.obs = np.zeros((c, obs_dim))
        self.actions = np.zeros((c, 2))
        self.rewards = np.zeros(c)
        self.next_obs = np.zeros((c, obs_dim))
        self.dones = np.zeros(c)
        self.demos = np.zeros(c, dtype=bool)
        self.generations = np.zeros(c, dtype=np.int64)
        self.tree = SumTree(c)
        self.rng = rng if rng is not None else np.random.default_rng()
        self.demo_count = 0
        self.live_count = 0
        self._next_live = 0
        self.max_priority = 1.0
        self.stale_skips = 0

    @property
    def size(self) -> int:
        return self.demo_count + min(self.live_count, self.config.capacity - self.demo_count)

    def _write(self, slot: int, t: Transition, demo: bool) -> None:
        self.obs[slot] = t.s
        self.actions[slot] = (t.a.linear, t.a.angular)
        self.rewards[slot] = t.r
        self.next_obs[slot] = t.s_next
        self.dones[slot] = 1.0 if t.done else 0.0
        self.demos[slot] = demo
        self.generations[slot] += 1
        self.tree.set(slot, self._mass(self.max_priority, demo))

    def _mass(self, priority: float, demo: bool) -> float:
        if demo:
            priority = priority + self.config.demo_bonus
        return priority ** self.config.alpha

    def seed_demonstrations(self, transitions) -> None:
        """Install demonstrations into permanent slots. Once, before live data."""
        if self.demo_count:
            raise RuntimeError("demonstrations already installed")
        if self.live_count:
            raise RuntimeError("cannot install demonstrations after live transitions")
        transitions = list(transitions)
        if len(transitions) >= self.config.capacity:
            raise ValueError(f"{len(transitions)} demonstrations do not leave room "
                             f"for live data in capacity {self.config.capacity}")
        for i, t in enumerate(transitions):
            self._write(i, t, demo=True)
        self.demo_count = len(transitions)

    def push(self, t: Transition) -> None:
        room = self.config.capacity - self.demo_count
        if room <= 0:
            raise RuntimeError("no live slots left beside the demonstrations")
        slot = self.demo_count + self._next_live
        self._write(slot, t, demo=False)
        self._next_live = (self._next_live + 1) % room
        self.live_count += 1

    def sample(self, n: int, beta: float) -> SampledBatch:
        if self.size == 0:
            raise RuntimeError("cannot sample from an empty buffer")
        if n <= 0:
            raise ValueError("batch size must be > 0")
        total = self.tree.total
        segment = total / n
        u = (np.arange(n) + self.rng.uniform(0.0, 1.0, n)) * segment
        u = np.minimum(u, np.nextafter(total, 0.0))
        idx = self.tree.find(u)
        probs = self.tree.nodes[self.tree.padded - 1 + idx] / total
        weights_raw = (1.0 / (self.size * probs)) ** beta
        weights = weights_raw / weights_raw.max()
        return SampledBatch(
            indices=idx,
            generations=self.generations[idx].copy(),
            obs=self.obs[idx].copy(),
            actions=self.actions[idx].copy(),
            rewards=self.rewards[idx].copy(),
            next_obs=self.next_obs[idx].copy(),
            dones=self.dones[idx].copy(),
            demos=self.demos[idx].copy(),
            probs=probs,
            weights_raw=weights_raw,
            weights=weights,
        )

    def update_priorities(self, indices: np.ndarray, generations: np.ndarray,
                          td_errors: np.ndarray, action_grads: np.ndarray) -> int:
        """Refresh priorities for sampled slots; stale slots are skipped.

        Returns the number of slots actually updated.
        """
        indices = np.asarray(indices)
        fresh = self.generations[indices] == np.asarray(generations)
        self.stale_skips += int(np.size(fresh) - np.count_nonzero(fresh))
        if not np.any(fresh):
            return 0
        idx = indices[fresh]
        d = np.asarray(td_errors, dtype=np.float64)[fresh]
        g = np.asarray(action_grads, dtype=np.float64)[fresh]
        p = d * d + self.config.grad_weight * np.sum(g * g, axis=1) + self.config.priority_floor
        mass = np.where(self.demos[idx], (p + self.config.demo_bonus) ** self.config.alpha,
                        p ** self.config.alpha)
        self.tree.set_many(idx, mass)
        self.max_priority = max(self.max_priority, float(p.max()))
        return int(np.count_nonzero(fresh))


def transition_from_arrays(obs, action, reward, next_obs, done, demo) -> Transition:
    return Transition(s=np.asarray(obs, dtype=np.float64),
                      a=Action(float(action[0]), float(action[1])),
                      r=float(reward),
                      s_next=np.asarray(next_obs, dtype=np.float64),
                      done=bool(done),
                      demo=bool(demo))
