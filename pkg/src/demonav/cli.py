"""Command line entry points."""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .agent import DdpgAgent
from .assets import run_config_path, world_path
from .demos import load_demos, save_demos
from .geometry import load_world
from .training import (
    MODES,
    RunConfig,
    collect_pilot_demos,
    evaluate,
    rescore_transitions,
    train,
)


def _load_run_config(args) -> RunConfig:
    config = RunConfig.from_yaml(run_config_path(args.config))
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "steps", None) is not None:
        overrides["total_steps"] = args.steps
    if getattr(args, "mode", None) is not None:
        overrides["mode"] = args.mode
    if getattr(args, "world", None) is not None:
        overrides["world"] = args.world
    if getattr(args, "demo_file", None) is not None:
        overrides["demo_file"] = args.demo_file
    return dataclasses.replace(config, **overrides) if overrides else config


def _cmd_train(args) -> int:
    config = _load_run_config(args)
    out_dir = args.out or f"runs/{config.mode}-seed{config.seed}"
    result = train(config, out_dir)
    print(f"finished {config.total_steps} steps, {result.episodes} episodes")
    print(f"checkpoint: {result.checkpoint}")
    print(f"metrics:    {result.metrics}")
    return 0


def _cmd_evaluate(args) -> int:
    config = RunConfig.from_yaml(run_config_path(args.config))
    world = load_world(world_path(args.world or config.world))
    agent = DdpgAgent.load_checkpoint(args.checkpoint, config.env)
    report = evaluate(agent, world, config.env, config.eval_missions, args.seed)
    print(f"missions:  {report.n}")
    print(f"success:   {report.success_rate:.2f}")
    print(f"collisions {report.collisions}, timeouts {report.timeouts}")
    print(f"mean steps to goal: {report.mean_steps_success:.1f}")
    print(f"smoothness (mean turn change): {report.smoothness:.4f} rad/s")
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        with open(args.out, "w") as f:
            json.dump(report.to_dict(), f, indent=2)
        print(f"report: {args.out}")
    return 0


def _cmd_pilot_demos(args) -> int:
    config = RunConfig.from_yaml(run_config_path(args.config))
    world = load_world(world_path(args.world))
    transitions = collect_pilot_demos(world, config.env, args.steps, args.seed)
    save_demos(args.out, transitions, world.name)
    print(f"wrote {len(transitions)} demonstration transitions to {args.out}")
    return 0


def _cmd_rescore_demos(args) -> int:
    config = RunConfig.from_yaml(run_config_path(args.config))
    world = load_world(world_path(args.world))
    transitions = load_demos(args.demo_file, expected_world=world.name,
                             config=config.env)
    report = rescore_transitions(transitions, world, config.env)
    print(f"{report.total} transitions, {report.mismatches} reward mismatches")
    if report.mismatches:
        print(f"largest difference: {report.max_abs_difference!r}")
    if args.out:
        from .env import IDX_GOAL_DIST, N_BEAMS, SCAN_RANGE, compute_reward
        import numpy as np
        diagonal = world.bounds.diagonal
        rescored = [
            dataclasses.replace(
                t,
                r=compute_reward(float(t.s[IDX_GOAL_DIST]) * diagonal,
                                 float(t.s_next[IDX_GOAL_DIST]) * diagonal,
                                 float(np.min(t.s_next[:N_BEAMS])) * SCAN_RANGE,
                                 t.a, config.env).total)
            for t in transitions
        ]
        save_demos(args.out, rescored, world.name)
        print(f"regenerated file: {args.out}")
    return 1 if report.mismatches else 0


def _cmd_plot(args) -> int:
    from .plots import plot_run
    config = RunConfig.from_yaml(run_config_path(args.config))
    out = plot_run(args.run_dir, args.out, window=config.metrics_window)
    print(f"figure: {out}")
    return 0


def _cmd_teleop_serve(args) -> int:
    from .teleop import serve
    host, _, port = args.bind.rpartition(":")
    config = RunConfig.from_yaml(run_config_path(args.config))
    world = load_world(world_path(args.world))
    serve(world, config.env, host=host or "127.0.0.1", port=int(port),
          demo_out=args.demo_out, seed=args.seed)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="demonav",
        description="Demonstration-boosted collision-avoidance training "
                    "in a 2D lidar simulator.")
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run a training session")
    t.add_argument("--config", default="desk", help="run config name or path")
    t.add_argument("--seed", type=int, help="override the config seed")
    t.add_argument("--steps", type=int, help="override total training steps")
    t.add_argument("--mode", choices=MODES, help="override the training mode")
    t.add_argument("--world", help="override the world name or path")
    t.add_argument("--demo-file", help="demonstration file for proposed mode")
    t.add_argument("--out", help="output directory")
    t.set_defaults(func=_cmd_train)

    e = sub.add_parser("evaluate", help="run seeded missions from a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--config", default="desk")
    e.add_argument("--world", help="world name or path (default: from config)")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", help="write the full report as JSON")
    e.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("pilot-demos", help="record scripted demonstrations")
    p.add_argument("--world", required=True)
    p.add_argument("--config", default="desk")
    p.add_argument("--steps", type=int, default=1000,
                   help="number of transitions to record")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="demonstration file to write")
    p.set_defaults(func=_cmd_pilot_demos)

    r = sub.add_parser("rescore-demos",
                       help="recompute recorded rewards and report mismatches")
    r.add_argument("--demo-file", required=True)
    r.add_argument("--world", required=True)
    r.add_argument("--config", default="desk")
    r.add_argument("--out", help="write the regenerated file here")
    r.set_defaults(func=_cmd_rescore_demos)

    pl = sub.add_parser("plot", help="render training curves from a run directory")
    pl.add_argument("run_dir")
    pl.add_argument("--config", default="desk")
    pl.add_argument("--out", required=True, help="image file to write")
    pl.set_defaults(func=_cmd_plot)

    ts = sub.add_parser("teleop-serve", help="serve the tele-operation websocket")
    ts.add_argument("--world", required=True)
    ts.add_argument("--config", default="desk")
    ts.add_argument("--bind", default="127.0.0.1:8500")
    ts.add_argument("--demo-out", default="teleop_demos.jsonl")
    ts.add_argument("--seed", type=int, default=0)
    ts.set_defaults(func=_cmd_teleop_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
