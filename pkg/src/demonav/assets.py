"""Lookup of packaged worlds, run configs and the built-in UI page.

Paths passed on the command line resolve as-is; bare names fall back to the
files shipped inside the package (e.g. ``env1_desk`` or ``desk.yaml``).
"""
from __future__ import annotations

from importlib import resources
from pathlib import Path


def _resolve(kind: str, name_or_path: str | Path) -> Path:
    p = Path(name_or_path)
    if p.exists():
        return p
    candidates = [p.name] if p.suffix else [f"{p.name}.yaml"]
    base = resources.files("demonav").joinpath(f"data/{kind}")
    for cand in candidates:
        packaged = base.joinpath(cand)
        if packaged.is_file():
            return Path(str(packaged))
    raise FileNotFoundError(f"no {kind[:-1]} file at {name_or_path!r} and no packaged "
                            f"{kind[:-1]} of that name")


def world_path(name_or_path: str | Path) -> Path:
    return _resolve("worlds", name_or_path)


def run_config_path(name_or_path: str | Path) -> Path:
    return _resolve("configs", name_or_path)


def builtin_ui_dir() -> Path:
    return Path(str(resources.files("demonav").joinpath("data/ui")))
