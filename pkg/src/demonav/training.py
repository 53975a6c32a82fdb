"""Training runs, policy evaluation, scripted demonstrations, offline rescoring.

Every random draw in a run descends from one root seed through named streams,
so a finished run can be reproduced byte for byte, metrics log included.
"""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .agent import AgentConfig, DdpgAgent, NoiseConfig
from .assets import world_path
from .demos import load_demos
from .env import (
    IDX_GOAL_DIST,
    N_BEAMS,
    SCAN_RANGE,
    Action,
    EnvConfig,
    RobotEnv,
    Transition,
    compute_reward,
)
from .geometry import WorldSpec, load_world
from .replay import PerConfig, ReplayBuffer

MODES = ("proposed", "baseline-ddpg")

# seed stream ids; every consumer of randomness gets its own lane
STREAM_AGENT = 0
STREAM_EPISODES = 1
STREAM_REPLAY = 2
STREAM_EVAL = 3
STREAM_PILOT = 4

BETA_START = 0.4
BETA_END = 1.0


def stream_rng(seed: int, stream: int, *extra: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, stream, *extra]))


@dataclass(frozen=True)
class RunConfig:
    world: str = "env1_cluttered"
    mode: str = "proposed"
    total_steps: int = 200000
    eval_interval: int = 2500
    eval_missions: int = 20
    metrics_window: int = 4000
    seed: int = 0
    demo_file: Optional[str] = None
    min_demos: int = 1000
    learning_starts: int = 1000
    env: EnvConfig = field(default_factory=EnvConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    replay: PerConfig = field(default_factory=PerConfig)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.total_steps <= 0 or self.eval_interval <= 0 or self.eval_missions <= 0:
            raise ValueError("step and mission counts must be > 0")
        if self.learning_starts < self.agent.batch_size:
            raise ValueError("learning_starts must cover at least one batch")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        for key, sub in (("env", EnvConfig), ("agent", AgentConfig), ("replay", PerConfig)):
            if key in d and not isinstance(d[key], sub):
                params = dict(d[key] or {})
                if key == "agent" and isinstance(params.get("noise"), dict):
                    params["noise"] = NoiseConfig(**params["noise"])
                d[key] = sub(**params)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown run config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_yaml(cls, path: str | Path) -> "RunConfig":
        with open(path) as f:
            return cls.from_dict(yaml.safe_load(f) or {})

    def to_yaml(self, path: str | Path) -> None:
        with open(path, "w") as f:
            yaml.safe_dump(self.to_dict(), f, sort_keys=False)

    def effective_replay(self) -> PerConfig:
        """Replay settings with the baseline ablation applied."""
        if self.mode == "baseline-ddpg":
            return dataclasses.replace(self.replay, alpha=0.0, demo_bonus=0.0)
        return self.replay


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

@dataclass
class MissionResult:
    outcome: str
    steps: int
    path_length: float
    mean_abs_turn: float
    mean_turn_change: float
    final_goal_distance: float


@dataclass
class EvalReport:
    missions: list

    @property
    def n(self) -> int:
        return len(self.missions)

    @property
    def success_rate(self) -> float:
        return sum(m.outcome == "arrival" for m in self.missions) / self.n

    @property
    def collisions(self) -> int:
        return sum(m.outcome == "collision" for m in self.missions)

    @property
    def timeouts(self) -> int:
        return sum(m.outcome == "timeout" for m in self.missions)

    @property
    def mean_steps_success(self) -> float:
        steps = [m.steps for m in self.missions if m.outcome == "arrival"]
        return float(np.mean(steps)) if steps else float("nan")

    @property
    def smoothness(self) -> float:
        """Mean over missions of the mean per-step turn-rate change."""
        return float(np.mean([m.mean_turn_change for m in self.missions]))

    @property
    def mean_abs_turn(self) -> float:
        return float(np.mean([m.mean_abs_turn for m in self.missions]))

    def to_dict(self) -> dict:
        return {
            "missions": [dataclasses.asdict(m) for m in self.missions],
            "success_rate": self.success_rate,
            "collisions": self.collisions,
            "timeouts": self.timeouts,
            "mean_steps_success": self.mean_steps_success,
            "smoothness": self.smoothness,
            "mean_abs_turn": self.mean_abs_turn,
        }


def run_mission(agent: DdpgAgent, env: RobotEnv, seed_parts) -> MissionResult:
    obs = env.reset(np.random.SeedSequence(list(seed_parts)))
    path = 0.0
    turns = []
    changes = []
    while True:
        action = agent.select_action(obs, explore=False)
        res = env.step(action)
        path += action.linear * env.config.dt
        if turns:
            changes.append(abs(action.angular - turns[-1]))
        turns.append(action.angular)
        obs = res.observation
        if res.done:
            return MissionResult(
                outcome=res.done_reason,
                steps=env.steps_taken,
                path_length=path,
                mean_abs_turn=float(np.mean(np.abs(turns))),
                mean_turn_change=float(np.mean(changes)) if changes else 0.0,
                final_goal_distance=env.goal_distance,
            )


def evaluate(agent: DdpgAgent, world: WorldSpec, env_config: EnvConfig,
             n_missions: int, seed: int, round_id: int = 0) -> EvalReport:
    env = RobotEnv(world, env_config)
    missions = [run_mission(agent, env, (seed, STREAM_EVAL, round_id, m))
                for m in range(n_missions)]
    return EvalReport(missions)


# ---------------------------------------------------------------------------
# Metrics logs
# ---------------------------------------------------------------------------

METRICS_HEADER = "# step reward q episode outcome"
EVALS_HEADER = ("# step success_rate collisions timeouts mean_steps_success "
                "smoothness mean_abs_turn")


def format_metrics_row(step: int, reward: float, q: float, episode: int,
                       outcome: str) -> str:
    return f"{step} {reward!r} {q!r} {episode} {outcome or '-'}"


def format_eval_row(step: int, report: EvalReport) -> str:
    return (f"{step} {report.success_rate!r} {report.collisions} {report.timeouts} "
            f"{report.mean_steps_success!r} {report.smoothness!r} "
            f"{report.mean_abs_turn!r}")


def read_metrics(path: str | Path) -> dict:
    steps, rewards, qs, episodes, outcomes = [], [], [], [], []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            s, r, q, ep, out = line.split(" ")
            steps.append(int(s))
            rewards.append(float(r))
            qs.append(float(q))
            episodes.append(int(ep))
            outcomes.append("" if out == "-" else out)
    return {"step": np.array(steps), "reward": np.array(rewards), "q": np.array(qs),
            "episode": np.array(episodes), "outcome": outcomes}


def read_evals(path: str | Path) -> list:
    rows = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            s, sr, c, t, ms, sm, mt = line.split(" ")
            rows.append({"step": int(s), "success_rate": float(sr),
                         "collisions": int(c), "timeouts": int(t),
                         "mean_steps_success": float(ms), "smoothness": float(sm),
                         "mean_abs_turn": float(mt)})
    return rows


def moving_average(values, window: int) -> np.ndarray:
    """Trailing mean over up to `window` samples, one output per input."""
    if window <= 0:
        raise ValueError("window must be > 0")
    x = np.asarray(values, dtype=np.float64)
    csum = np.concatenate([[0.0], np.cumsum(x)])
    n = len(x)
    idx = np.arange(n) + 1
    lo = np.maximum(idx - window, 0)
    return (csum[idx] - csum[lo]) / (idx - lo)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    checkpoint: Path
    metrics: Path
    evals_file: Path
    evals: list
    episodes: int
    final_noise_scale: float


def train(config: RunConfig, out_dir: str | Path, echo=print) -> TrainResult:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    world = load_world(world_path(config.world))
    env = RobotEnv(world, config.env)
    agent = DdpgAgent(config.env, config.agent,
                      rng=stream_rng(config.seed, STREAM_AGENT))
    buffer = ReplayBuffer(config.effective_replay(), rng=stream_rng(config.seed, STREAM_REPLAY))

    if config.mode == "proposed":
        if not config.demo_file:
            raise ValueError("proposed mode needs a demonstration file")
        demos = load_demos(config.demo_file, expected_world=world.name, config=config.env)
        if len(demos) < config.min_demos:
            raise ValueError(f"{len(demos)} demonstrations in {config.demo_file}, "
                             f"need at least {config.min_demos}")
        buffer.seed_demonstrations(demos)
        echo(f"installed {len(demos)} demonstration transitions")
    elif config.demo_file:
        echo("baseline mode: demonstration file ignored")

    config.to_yaml(out / "run_config.yaml")
    metrics_path = out / "metrics.log"
    evals_path = out / "evals.log"
    ckpt_path = out / "checkpoint.npz"
    evals = []

    episode = 0
    obs = env.reset(np.random.SeedSequence([config.seed, STREAM_EPISODES, episode]))
    with open(metrics_path, "w") as mf, open(evals_path, "w") as ef:
        mf.write(METRICS_HEADER + "\n")
        ef.write(EVALS_HEADER + "\n")
        for step in range(1, config.total_steps + 1):
            action = agent.select_action(obs, explore=True)
            res = env.step(action)
            # a timeout truncates the episode but is not an absorbing state
            absorbing = res.done and res.done_reason != "timeout"
            buffer.push(Transition(s=obs, a=action, r=res.reward,
                                   s_next=res.observation, done=absorbing))
            q_here = agent.q_value(obs, action)
            mf.write(format_metrics_row(step, res.reward, q_here, episode,
                                        res.done_reason if res.done else "") + "\n")
            obs = res.observation
            if res.done:
                episode += 1
                obs = env.reset(np.random.SeedSequence(
                    [config.seed, STREAM_EPISODES, episode]))

            if step >= config.learning_starts and buffer.size >= config.agent.batch_size:
                frac = min(1.0, step / config.total_steps)
                beta = BETA_START + (BETA_END - BETA_START) * frac
                batch = buffer.sample(config.agent.batch_size, beta)
                report = agent.train_step(batch)
                buffer.update_priorities(batch.indices, batch.generations,
                                         report.td_errors, report.action_grads)

            if step % config.eval_interval == 0:
                round_id = step // config.eval_interval
                report = evaluate(agent, world, config.env, config.eval_missions,
                                  config.seed, round_id)
                evals.append({"step": step, **{k: v for k, v in report.to_dict().items()
                                               if k != "missions"}})
                ef.write(format_eval_row(step, report) + "\n")
                agent.save_checkpoint(out / f"checkpoint_step{step:07d}.npz")
                echo(f"step {step}: success {report.success_rate:.2f} "
                     f"collisions {report.collisions} smoothness {report.smoothness:.3f}")

    agent.save_checkpoint(ckpt_path)
    return TrainResult(checkpoint=ckpt_path, metrics=metrics_path,
                       evals_file=evals_path, evals=evals, episodes=episode,
                       final_noise_scale=agent.noise_scale)


# ---------------------------------------------------------------------------
# Scripted pilot demonstrations
# ---------------------------------------------------------------------------

PILOT_STEER_GAIN = 2.0
PILOT_TURN_CAP = 0.75          # fraction of the angular limit; stays under penalty
PILOT_SLOWDOWN_RANGE = 0.7     # start easing off below this front clearance, meters
PILOT_HARD_STOP = 0.3          # front clearance where speed bottoms out
PILOT_FLANK_RANGE = 0.55       # any beam under this forces an evasive turn


def pilot_action(beams: np.ndarray, bearing: float, config: EnvConfig) -> Action:
    """Reactive goal-seeking steering from the raw scan and goal bearing.

    Head toward the goal, bounded below the turn-penalty band; swing away
    from the nearest obstacle when the path ahead tightens or a flank beam
    reports imminent contact. The throttle scales with the clearance that
    matters: straight ahead normally, the closing obstacle while evading.
    """
    third = len(beams) // 3
    front = float(np.min(beams[third:len(beams) - third]))
    nearest = int(np.argmin(beams))
    near_dist = float(beams[nearest])

    cap = PILOT_TURN_CAP * config.max_angular_speed
    steer = float(np.clip(PILOT_STEER_GAIN * bearing, -cap, cap))
    clearance = front
    if front < PILOT_SLOWDOWN_RANGE or near_dist < PILOT_FLANK_RANGE:
        steer = cap if nearest < len(beams) // 2 else -cap
        clearance = min(front, near_dist)

    span = PILOT_SLOWDOWN_RANGE - PILOT_HARD_STOP
    frac = float(np.clip((clearance - PILOT_HARD_STOP) / span, 0.0, 1.0))
    speed = config.min_linear_speed + frac * (config.max_linear_speed
                                              - config.min_linear_speed)
    return Action(speed, steer)


def collect_pilot_demos(world: WorldSpec, env_config: EnvConfig, n: int,
                        seed: int, max_episodes: int = 10000) -> list:
    """Exactly n demonstration transitions from successful scripted runs.

    Episodes that collide or time out are discarded whole. Raises if the pilot
    cannot hold a 50% success rate early on (the world is then too hard for
    scripted driving and needs tele-operation instead).
    """
    kept = []
    attempts = 0
    successes = 0
    while len(kept) < n:
        if attempts >= max_episodes:
            raise RuntimeError(f"pilot produced only {len(kept)}/{n} transitions "
                               f"in {max_episodes} episodes")
        env = RobotEnv(world, env_config)
        obs = env.reset(np.random.SeedSequence([seed, STREAM_PILOT, attempts]))
        attempts += 1
        episode = []
        while True:
            action = pilot_action(env.raw_beams, env.goal_bearing, env_config)
            res = env.step(action)
            episode.append(Transition(s=obs, a=action, r=res.reward,
                                      s_next=res.observation,
                                      done=res.done and res.done_reason != "timeout",
                                      demo=True))
            obs = res.observation
            if res.done:
                break
        if res.done_reason == "arrival":
            successes += 1
            kept.extend(episode)
        if attempts == 50 and successes < 25:
            raise RuntimeError(f"pilot succeeded in only {successes}/50 early episodes; "
                               "this world needs human demonstrations")
    return kept[:n]


# ---------------------------------------------------------------------------
# Offline rescoring
# ---------------------------------------------------------------------------

@dataclass
class RescoreReport:
    total: int
    mismatches: int
    max_abs_difference: float

    @property
    def clean(self) -> bool:
        return self.mismatches == 0


def rescore_transitions(transitions, world: WorldSpec,
                        config: EnvConfig) -> RescoreReport:
    """Re-derive each recorded reward from its stored observations.

    The reward depends only on quantities present in the observation pair and
    the command, so a faithful recording reproduces it exactly, bit for bit.
    """
    diagonal = world.bounds.diagonal
    mismatches = 0
    worst = 0.0
    for t in transitions:
        parts = compute_reward(float(t.s[IDX_GOAL_DIST]) * diagonal,
                               float(t.s_next[IDX_GOAL_DIST]) * diagonal,
                               float(np.min(t.s_next[:N_BEAMS])) * SCAN_RANGE,
                               t.a, config)
        if parts.total != t.r:
            mismatches += 1
            worst = max(worst, abs(parts.total - t.r))
    return RescoreReport(total=len(transitions), mismatches=mismatches,
                         max_abs_difference=worst)


def rescore_demo_file(path: str | Path, world: WorldSpec,
                      config: EnvConfig) -> RescoreReport:
    return rescore_transitions(load_demos(path, expected_world=world.name,
                                          config=config), world, config)
