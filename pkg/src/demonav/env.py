"""Episodic differential-drive environment.

State exposed to the policy is a 28-vector: 24 normalized laser beams, the goal
in polar form (distance, bearing), and the previous velocity command. Rewards
are derived from the observation values themselves, so re-scoring a recorded
transition offline reproduces the online reward bit for bit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .geometry import Pose, WorldSpec, lidar_scan, min_clearance, wrap_angle

# Sensor model: 24 beams over (-90 deg, +90 deg), 3.5 m range. The observation
# layout below is frozen; checkpoints depend on it.
N_BEAMS = 24
SCAN_FOV = math.pi
SCAN_RANGE = 3.5
OBS_DIM = N_BEAMS + 4
IDX_GOAL_DIST = N_BEAMS
IDX_GOAL_BEARING = N_BEAMS + 1
IDX_PREV_LINEAR = N_BEAMS + 2
IDX_PREV_ANGULAR = N_BEAMS + 3

# Placement rules used by reset().
PLACEMENT_MARGIN = 0.1
MIN_START_GOAL_SEPARATION = 1.0
MAX_PLACEMENT_ATTEMPTS = 1000


@dataclass(frozen=True)
class Action:
    """Velocity command: forward speed in m/s, turn rate in rad/s."""

    linear: float
    angular: float


@dataclass(frozen=True)
class EnvConfig:
    dt: float = 0.1
    max_linear_speed: float = 0.26
    min_linear_speed: float = 0.05
    max_angular_speed: float = 1.82
    goal_radius: float = 0.3
    collision_distance: float = 0.25
    robot_radius: float = 0.22
    arrival_reward: float = 100.0
    collision_reward: float = -10.0
    turn_penalty: float = -0.5
    slow_penalty: float = -0.5
    progress_gain: float = 1.0
    max_episode_steps: int = 500

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be > 0")
        for name in ("goal_radius", "collision_distance", "robot_radius",
                     "max_linear_speed", "max_angular_speed"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if not self.min_linear_speed < self.max_linear_speed:
            raise ValueError("min_linear_speed must be < max_linear_speed")
        if self.arrival_reward <= 0:
            raise ValueError("arrival_reward must be > 0")
        for name in ("collision_reward", "turn_penalty", "slow_penalty"):
            if getattr(self, name) >= 0:
                raise ValueError(f"{name} must be < 0")
        if self.max_episode_steps <= 0:
            raise ValueError("max_episode_steps must be > 0")


class RewardParts(NamedTuple):
    total: float
    progress: float
    collision: float
    turn: float
    slow: float


def compute_reward(d_goal_prev: float, d_goal: float, d_obstacle: float,
                   action: Action, config: EnvConfig) -> RewardParts:
    """Score one step from goal distances, obstacle clearance and the command.

    Progress pays the signed distance gained toward the goal (arrival bonus when
    within goal_radius); obstacle proximity is penalized in two bands; spinning
    near the angular limit and crawling below the minimum speed each cost a
    fixed penalty.
    """
    if d_goal < config.goal_radius:
        progress = config.arrival_reward
    else:
        progress = config.progress_gain * (d_goal_prev - d_goal)
    if d_obstacle < config.collision_distance:
        collision = 2.0 * config.collision_reward
    elif d_obstacle < 2.0 * config.collision_distance:
        collision = config.collision_reward
    else:
        collision = 0.0
    turn = config.turn_penalty if abs(action.angular) > 0.8 * config.max_angular_speed else 0.0
    slow = config.slow_penalty if action.linear < config.min_linear_speed else 0.0
    total = progress + collision + turn + slow
    return RewardParts(total, progress, collision, turn, slow)


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    reward_parts: RewardParts
    done: bool
    done_reason: str  # arrival | collision | timeout | running


@dataclass
class Transition:
    s: np.ndarray
    a: Action
    r: float
    s_next: np.ndarray
    done: bool
    demo: bool = False


def validate_observation(obs: np.ndarray) -> None:
    """Raise if an observation vector violates the frozen layout or its ranges."""
    obs = np.asarray(obs)
    if obs.shape != (OBS_DIM,):
        raise ValueError(f"observation must have shape ({OBS_DIM},), got {obs.shape}")
    beams = obs[:N_BEAMS]
    if not (np.all(beams > 0.0) and np.all(beams <= 1.0)):
        raise ValueError("laser entries must lie in (0, 1]")
    if not 0.0 <= obs[IDX_GOAL_DIST] <= 1.0:
        raise ValueError("goal distance must lie in [0, 1]")
    if not -1.0 <= obs[IDX_GOAL_BEARING] <= 1.0:
        raise ValueError("goal bearing must lie in [-1, 1]")
    if not 0.0 <= obs[IDX_PREV_LINEAR] <= 1.0:
        raise ValueError("previous linear speed must lie in [0, 1]")
    if not -1.0 <= obs[IDX_PREV_ANGULAR] <= 1.0:
        raise ValueError("previous angular speed must lie in [-1, 1]")


class RobotEnv:
    """Unicycle robot in a static world, driven by velocity commands.

    `reset(seed)` places robot and goal; `step(action)` advances one control
    interval. Identical seeds and action sequences replay identical episodes.
    """

    def __init__(self, world: WorldSpec, config: EnvConfig = EnvConfig()):
        self.world = world
        self.config = config
        self._diagonal = world.bounds.diagonal
        self.pose: Optional[Pose] = None
        self.goal: Optional[tuple[float, float]] = None
        self._obs: Optional[np.ndarray] = None
        self._prev_action = Action(0.0, 0.0)
        self._steps = 0
        self._done = True

    # -- episode setup -----------------------------------------------------

    def reset(self, seed: int | np.random.SeedSequence) -> np.ndarray:
        rng = np.random.default_rng(seed)
        clearance = self.config.robot_radius + PLACEMENT_MARGIN
        pose = None
        for _ in range(MAX_PLACEMENT_ATTEMPTS):
            x, y, h = self._sample_in(rng, self.world.spawn_region, heading=True)
            if min_clearance((x, y), self.world) > clearance:
                pose = Pose(x, y, wrap_angle(h))
                break
        if pose is None:
            raise RuntimeError("could not place robot: spawn_region too tight for clearance rule")
        goal = None
        for _ in range(MAX_PLACEMENT_ATTEMPTS):
            gx, gy = self._sample_in(rng, self.world.goal_region)
            if (min_clearance((gx, gy), self.world) > clearance
                    and math.hypot(gx - pose.x, gy - pose.y) >= MIN_START_GOAL_SEPARATION):
                goal = (gx, gy)
                break
        if goal is None:
            raise RuntimeError("could not place goal: goal_region too tight for "
                               "clearance/separation rules")
        return self._begin_episode(pose, goal)

    def reset_to(self, pose: Pose, goal: tuple[float, float]) -> np.ndarray:
        """Test hook: start an episode from a fixed pose and goal."""
        return self._begin_episode(Pose(pose.x, pose.y, wrap_angle(pose.heading)), goal)

    def _begin_episode(self, pose: Pose, goal: tuple[float, float]) -> np.ndarray:
        self.pose = pose
        self.goal = goal
        self._prev_action = Action(0.0, 0.0)
        self._steps = 0
        self._done = False
        self._obs = self._observe()
        return self._obs.copy()

    @staticmethod
    def _sample_in(rng: np.random.Generator, region, heading: bool = False):
        x = rng.uniform(region.lo[0], region.hi[0])
        y = rng.uniform(region.lo[1], region.hi[1])
        if heading:
            return x, y, rng.uniform(-math.pi, math.pi)
        return x, y

    # -- stepping ----------------------------------------------------------

    def step(self, action: Action) -> StepResult:
        if self._done:
            raise RuntimeError("step() called on a finished episode; call reset() first")
        cfg = self.config
        if not 0.0 <= action.linear <= cfg.max_linear_speed:
            raise ValueError(f"linear speed {action.linear} outside [0, {cfg.max_linear_speed}]")
        if abs(action.angular) > cfg.max_angular_speed:
            raise ValueError(f"angular speed {action.angular} outside "
                             f"[-{cfg.max_angular_speed}, {cfg.max_angular_speed}]")

        p = self.pose
        x = p.x + action.linear * math.cos(p.heading) * cfg.dt
        y = p.y + action.linear * math.sin(p.heading) * cfg.dt
        h = wrap_angle(p.heading + action.angular * cfg.dt)
        self.pose = Pose(x, y, h)

        d_goal_prev = float(self._obs[IDX_GOAL_DIST]) * self._diagonal
        self._prev_action = action
        obs = self._observe()
        d_goal = float(obs[IDX_GOAL_DIST]) * self._diagonal
        d_obstacle = float(obs[:N_BEAMS].min()) * SCAN_RANGE

        parts = compute_reward(d_goal_prev, d_goal, d_obstacle, action, cfg)
        self._steps += 1
        if d_goal < cfg.goal_radius:
            reason = "arrival"
        elif d_obstacle < cfg.collision_distance:
            reason = "collision"
        elif self._steps >= cfg.max_episode_steps:
            reason = "timeout"
        else:
            reason = "running"
        self._done = reason != "running"
        self._obs = obs
        return StepResult(obs.copy(), parts.total, parts, self._done, reason)

    # -- observation assembly ---------------------------------------------

    def _observe(self) -> np.ndarray:
        p = self.pose
        beams = lidar_scan(p, self.world, N_BEAMS, SCAN_FOV, SCAN_RANGE)
        obs = np.empty(OBS_DIM)
        obs[:N_BEAMS] = np.minimum(beams, SCAN_RANGE) / SCAN_RANGE
        gx, gy = self.goal
        obs[IDX_GOAL_DIST] = math.hypot(gx - p.x, gy - p.y) / self._diagonal
        obs[IDX_GOAL_BEARING] = wrap_angle(math.atan2(gy - p.y, gx - p.x) - p.heading) / math.pi
        obs[IDX_PREV_LINEAR] = self._prev_action.linear / self.config.max_linear_speed
        obs[IDX_PREV_ANGULAR] = self._prev_action.angular / self.config.max_angular_speed
        return obs

    @property
    def raw_beams(self) -> np.ndarray:
        """Un-normalized distances of the last scan, in meters."""
        return self._obs[:N_BEAMS] * SCAN_RANGE

    @property
    def goal_distance(self) -> float:
        return float(self._obs[IDX_GOAL_DIST]) * self._diagonal

    @property
    def goal_bearing(self) -> float:
        return float(self._obs[IDX_GOAL_BEARING]) * math.pi

    @property
    def steps_taken(self) -> int:
        return self._steps

    @property
    def episode_over(self) -> bool:
        return self._done

    @property
    def arena_diagonal(self) -> float:
        return self._diagonal
