"""Figure rendering for benchmark reports.

Each sweep report gets a PNG rendered next to its delimited output: token
retention per stage versus FPS, and full-versus-gated tokenization latency
with the relative speedup.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .errors import IoError
from .synthbench import RetentionReport, TimingReport


def save_retention_figure(report: RetentionReport, path: str | Path) -> Path:
    """Plot pruning/merging retention ratios against FPS (log x)."""
    fps = [float(r.fps) for r in report.rows]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(fps, [r.pruning_ratio for r in report.rows], "o-", label="after gated pruning")
    ax.plot(fps, [r.merging_ratio for r in report.rows], "s-", label="after scene merging")
    ax.set_xscale("log")
    ax.set_xlabel("frame rate (fps)")
    ax.set_ylabel("token retention vs. baseline")
    ax.set_ylim(0.0, 1.05)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    return _save(fig, path)


def save_timing_figure(report: TimingReport, path: str | Path) -> Path:
    """Plot full vs gated tokenization time and the speedup per FPS."""
    fps = [float(r.fps) for r in report.rows]
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(6.0, 6.0), sharex=True)
    ax1.plot(fps, [r.full_tokenize_seconds for r in report.rows], "o-", label="full")
    ax1.plot(fps, [r.gated_tokenize_seconds for r in report.rows], "s-", label="gated")
    ax1.set_xscale("log")
    ax1.set_ylabel("tokenization time (s)")
    ax1.grid(True, which="both", alpha=0.3)
    ax1.legend()
    ax2.plot(fps, [r.speedup_percent for r in report.rows], "d-", color="tab:green")
    ax2.axhline(0.0, color="gray", linewidth=0.8)
    ax2.set_xscale("log")
    ax2.set_xlabel("frame rate (fps)")
    ax2.set_ylabel("speedup (%)")
    ax2.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    return _save(fig, path)


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    try:
        fig.savefig(path, dpi=120)
    except OSError as exc:
        raise IoError(f"cannot write figure to {path}: {exc}") from exc
    finally:
        plt.close(fig)
    return path
