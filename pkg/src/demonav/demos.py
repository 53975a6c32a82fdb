"""Demonstration files: one JSON transition per line.

Floats are written with full repr precision, so a load/save cycle preserves
every value bit for bit and recorded rewards can be re-derived exactly.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .env import OBS_DIM, Action, EnvConfig, Transition, validate_observation

DEMO_FILE_VERSION = 1


def save_demos(path: str | Path, transitions, world_name: str) -> None:
    with open(path, "w") as f:
        for t in transitions:
            row = {
                "version": DEMO_FILE_VERSION,
                "world": world_name,
                "s": [float(v) for v in t.s],
                "a": [float(t.a.linear), float(t.a.angular)],
                "r": float(t.r),
                "s2": [float(v) for v in t.s_next],
                "done": bool(t.done),
            }
            f.write(json.dumps(row) + "\n")


def load_demos(path: str | Path, expected_world: str | None = None,
               config: EnvConfig = EnvConfig()) -> list:
    """Read and validate a demonstration file; transitions come back demo-tagged."""
    out = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as e:
                raise ValueError(f"{path}:{lineno}: not valid JSON: {e}") from None
            try:
                _check_row(row, expected_world, config)
            except ValueError as e:
                raise ValueError(f"{path}:{lineno}: {e}") from None
            out.append(Transition(
                s=np.array(row["s"], dtype=np.float64),
                a=Action(float(row["a"][0]), float(row["a"][1])),
                r=float(row["r"]),
                s_next=np.array(row["s2"], dtype=np.float64),
                done=bool(row["done"]),
                demo=True,
            ))
    return out


def _check_row(row: dict, expected_world, config: EnvConfig) -> None:
    if row.get("version") != DEMO_FILE_VERSION:
        raise ValueError(f"unsupported file version {row.get('version')!r}")
    if expected_world is not None and row.get("world") != expected_world:
        raise ValueError(f"recorded in world {row.get('world')!r}, expected {expected_world!r}")
    for key in ("s", "s2"):
        vec = row.get(key)
        if not isinstance(vec, list) or len(vec) != OBS_DIM:
            raise ValueError(f"{key} must be a list of {OBS_DIM} numbers")
        validate_observation(np.array(vec, dtype=np.float64))
    a = row.get("a")
    if not isinstance(a, list) or len(a) != 2:
        raise ValueError("a must be [linear, angular]")
    if not 0.0 <= a[0] <= config.max_linear_speed:
        raise ValueError(f"linear speed {a[0]} outside [0, {config.max_linear_speed}]")
    if abs(a[1]) > config.max_angular_speed:
        raise ValueError(f"angular speed {a[1]} outside limit {config.max_angular_speed}")
    if not isinstance(row.get("done"), bool):
        raise ValueError("done must be a boolean")
    if not isinstance(row.get("r"), (int, float)):
        raise ValueError("r must be a number")
