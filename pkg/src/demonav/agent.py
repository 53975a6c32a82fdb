"""Deterministic-policy actor-critic learner over the replay buffer.

One train step: form targets from the slow-moving twin networks, fit the
critic to them under importance weights, push the actor along the critic's
action gradient, then blend both twins toward the live networks. The report
carries everything the buffer needs to refresh priorities.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .env import Action, EnvConfig
from .nets import Adam, soft_update, specs_from_json, specs_to_json
from .policy import DEFAULT_WIDTH, Actor, Critic

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class NoiseConfig:
    """Gaussian exploration noise on the scaled command, decayed per action."""

    linear_sigma: float = 0.05
    angular_sigma: float = 0.4
    decay: float = 0.99995
    floor_fraction: float = 0.1

    def __post_init__(self):
        if self.linear_sigma < 0 or self.angular_sigma < 0:
            raise ValueError("noise scales must be >= 0")
        if not 0.0 < self.decay <= 1.0:
            raise ValueError("decay must lie in (0, 1]")
        if not 0.0 <= self.floor_fraction <= 1.0:
            raise ValueError("floor_fraction must lie in [0, 1]")


@dataclass(frozen=True)
class AgentConfig:
    gamma: float = 0.99
    tau: float = 0.001
    batch_size: int = 64
    actor_lr: float = 1e-4
    critic_lr: float = 1e-4
    hidden_width: int = DEFAULT_WIDTH
    noise: NoiseConfig = field(default_factory=NoiseConfig)

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must lie in (0, 1]")
        if self.batch_size <= 0:
            raise ValueError("batch_size must be > 0")
        if self.actor_lr <= 0 or self.critic_lr <= 0:
            raise ValueError("learning rates must be > 0")
        if self.hidden_width <= 0:
            raise ValueError("hidden_width must be > 0")


class TrainStepReport(NamedTuple):
    critic_loss: float
    actor_objective: float
    mean_q: float
    td_errors: np.ndarray
    action_grads: np.ndarray


class DdpgAgent:
    def __init__(self, env_config: EnvConfig = EnvConfig(),
                 config: AgentConfig = AgentConfig(),
                 rng: np.random.Generator | None = None, obs_dim: int = 28):
        if rng is None:
            rng = np.random.default_rng()
        self.env_config = env_config
        self.config = config
        self.rng = rng
        w = config.hidden_width
        self.actor = Actor(env_config.max_linear_speed, env_config.max_angular_speed,
                           width=w, obs_dim=obs_dim, rng=rng)
        self.critic = Critic(width=w, obs_dim=obs_dim, rng=rng)
        self.actor_target = self.actor.clone()
        self.critic_target = self.critic.clone()
        self.actor_opt = Adam(self.actor.params, config.actor_lr)
        self.critic_opt = Adam(self.critic.params, config.critic_lr)
        self.noise_scale = 1.0
        self.train_steps = 0
        self._act_scale = np.array([env_config.max_linear_speed,
                                    env_config.max_angular_speed])

    # -- acting ------------------------------------------------------------

    def select_action(self, obs: np.ndarray, explore: bool = True) -> Action:
        """Policy output for one observation, optionally with decayed noise."""
        cmd = self.actor.act(obs)
        if explore:
            n = self.config.noise
            cmd = cmd + self.noise_scale * self.rng.normal(
                0.0, [n.linear_sigma, n.angular_sigma])
            self.noise_scale = max(self.noise_scale * n.decay, n.floor_fraction)
        lin = float(np.clip(cmd[0], 0.0, self.env_config.max_linear_speed))
        ang = float(np.clip(cmd[1], -self.env_config.max_angular_speed,
                            self.env_config.max_angular_speed))
        return Action(lin, ang)

    def _normalize(self, actions: np.ndarray) -> np.ndarray:
        return np.asarray(actions, dtype=np.float64) / self._act_scale

    def q_value(self, obs: np.ndarray, action: Action) -> float:
        """Current critic estimate for one observation and command."""
        act = self._normalize([[action.linear, action.angular]])
        return float(self.critic.values(obs[None, :], act)[0, 0])

    # -- learning ----------------------------------------------------------

    def train_step(self, batch) -> TrainStepReport:
        n = len(batch.obs)
        gamma = self.config.gamma

        # bootstrap target from the twin networks
        next_act, _ = self.actor_target.actions_normalized(batch.next_obs)
        next_q = self.critic_target.values(batch.next_obs, next_act)[:, 0]
        y = batch.rewards + gamma * (1.0 - batch.dones) * next_q

        act_norm = self._normalize(batch.actions)
        q, cache = self.critic.q(batch.obs, act_norm)
        delta = y - q[:, 0]

        # value slope along the command, taken before the critic moves;
        # the buffer folds it into the refreshed priorities
        _, _, action_grads = self.critic.backward(cache, np.ones_like(q),
                                                  with_params=False)

        grad_q = (-2.0 / n) * (batch.weights * delta)[:, None]
        critic_grads, _, _ = self.critic.backward(cache, grad_q)
        self.critic_opt.step(critic_grads)

        # ascend the refreshed critic along the policy's own actions
        pi_act, pi_cache = self.actor.actions_normalized(batch.obs)
        q_pi, q_cache = self.critic.q(batch.obs, pi_act)
        _, _, g_act = self.critic.backward(q_cache, np.full_like(q_pi, -1.0 / n),
                                           with_params=False)
        actor_grads, _ = self.actor.backward_from_normalized(pi_cache, g_act)
        self.actor_opt.step(actor_grads)

        soft_update(self.actor_target.params, self.actor.params, self.config.tau)
        soft_update(self.critic_target.params, self.critic.params, self.config.tau)
        self.train_steps += 1

        return TrainStepReport(
            critic_loss=float(np.mean(batch.weights * delta * delta)),
            actor_objective=float(np.mean(q_pi)),
            mean_q=float(np.mean(q)),
            td_errors=delta,
            action_grads=action_grads,
        )

    # -- persistence -------------------------------------------------------

    def save_checkpoint(self, path: str | Path) -> None:
        meta = {
            "version": CHECKPOINT_VERSION,
            "obs_dim": self.actor.net.in_dim,
            "actor_specs": specs_to_json(self.actor.net.specs),
            "critic_state_specs": specs_to_json(self.critic.state_net.specs),
            "critic_merge_specs": specs_to_json(self.critic.merge_net.specs),
            "gamma": self.config.gamma,
            "tau": self.config.tau,
            "batch_size": self.config.batch_size,
            "actor_lr": self.config.actor_lr,
            "critic_lr": self.config.critic_lr,
            "hidden_width": self.config.hidden_width,
            "noise": [self.config.noise.linear_sigma, self.config.noise.angular_sigma,
                      self.config.noise.decay, self.config.noise.floor_fraction],
            "max_linear_speed": self.env_config.max_linear_speed,
            "max_angular_speed": self.env_config.max_angular_speed,
            "noise_scale": self.noise_scale,
            "train_steps": self.train_steps,
            "actor_opt_t": self.actor_opt.t,
            "critic_opt_t": self.critic_opt.t,
        }
        arrays = {"__meta__": np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)}
        for tag, params in (("a", self.actor.params), ("c", self.critic.params),
                            ("ta", self.actor_target.params),
                            ("tc", self.critic_target.params)):
            for i, p in enumerate(params):
                arrays[f"{tag}{i}"] = p
        for tag, opt in (("oa", self.actor_opt), ("oc", self.critic_opt)):
            for key, arr in opt.state_arrays().items():
                arrays[f"{tag}_{key}"] = arr
        with open(path, "wb") as f:  # keep the exact filename, no .npz suffix games
            np.savez(f, **arrays)

    @classmethod
    def load_checkpoint(cls, path: str | Path,
                        env_config: EnvConfig = EnvConfig()) -> "DdpgAgent":
        with np.load(path) as data:
            meta = json.loads(bytes(data["__meta__"]))
            if meta.get("version") != CHECKPOINT_VERSION:
                raise ValueError(f"unsupported checkpoint version {meta.get('version')!r}")
            if (meta["max_linear_speed"] != env_config.max_linear_speed
                    or meta["max_angular_speed"] != env_config.max_angular_speed):
                raise ValueError("checkpoint was trained under different speed limits")
            noise = NoiseConfig(*meta["noise"])
            config = AgentConfig(gamma=meta["gamma"], tau=meta["tau"],
                                 batch_size=meta["batch_size"], actor_lr=meta["actor_lr"],
                                 critic_lr=meta["critic_lr"],
                                 hidden_width=meta["hidden_width"], noise=noise)
            agent = cls(env_config, config, rng=np.random.default_rng(0),
                        obs_dim=meta["obs_dim"])
            expect = {
                "actor_specs": specs_to_json(agent.actor.net.specs),
                "critic_state_specs": specs_to_json(agent.critic.state_net.specs),
                "critic_merge_specs": specs_to_json(agent.critic.merge_net.specs),
            }
            for key, val in expect.items():
                if specs_from_json(meta[key]) != specs_from_json(val):
                    raise ValueError(f"checkpoint {key} does not match this build")
            for tag, params in (("a", agent.actor.params), ("c", agent.critic.params),
                                ("ta", agent.actor_target.params),
                                ("tc", agent.critic_target.params)):
                for i, p in enumerate(params):
                    p[...] = data[f"{tag}{i}"]
            for tag, opt in (("oa", agent.actor_opt), ("oc", agent.critic_opt)):
                for key, arr in opt.state_arrays().items():
                    arr[...] = data[f"{tag}_{key}"]
            agent.actor_opt.t = int(meta["actor_opt_t"])
            agent.critic_opt.t = int(meta["critic_opt_t"])
            agent.noise_scale = float(meta["noise_scale"])
            agent.train_steps = int(meta["train_steps"])
        return agent
