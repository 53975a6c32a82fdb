"""Static training-curve figures rendered from run logs."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .training import moving_average, read_evals, read_metrics  # noqa: E402


def plot_run(run_dir: str | Path, out_path: str | Path, window: int = 4000) -> Path:
    """Reward and Q curves (smoothed) plus evaluation success, saved as an image."""
    run_dir = Path(run_dir)
    m = read_metrics(run_dir / "metrics.log")
    if len(m["step"]) == 0:
        raise ValueError(f"no metric rows in {run_dir / 'metrics.log'}")
    evals_file = run_dir / "evals.log"
    evals = read_evals(evals_file) if evals_file.exists() else []

    fig, (ax_r, ax_q) = plt.subplots(2, 1, figsize=(9, 7), sharex=True)
    ax_r.plot(m["step"], moving_average(m["reward"], window), color="tab:blue")
    ax_r.set_ylabel(f"reward (mean of last {window})")
    ax_r.grid(alpha=0.3)
    if evals:
        ax_s = ax_r.twinx()
        ax_s.plot([e["step"] for e in evals], [e["success_rate"] for e in evals],
                  color="tab:green", marker="o", linestyle="--")
        ax_s.set_ylabel("eval success rate", color="tab:green")
        ax_s.set_ylim(-0.05, 1.05)

    ax_q.plot(m["step"], moving_average(m["q"], window), color="tab:orange")
    ax_q.set_ylabel(f"Q (mean of last {window})")
    ax_q.set_xlabel("environment step")
    ax_q.grid(alpha=0.3)

    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path
