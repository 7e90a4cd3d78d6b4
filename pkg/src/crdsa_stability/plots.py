"""Figure rendering for the CLI report path.

Every function writes a single-axes PNG next to the delimited output and
returns the path.  The Agg backend keeps rendering headless.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_POINT_COLORS = {"stable": "tab:green", "unstable": "tab:red"}


def _finish(fig, ax, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def drift_figure(profile, path, points=(), operating_backlog=None) -> Path:
    """Drift vs backlog with the zero line and any equilibria marked."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    states = np.arange(profile.drift.size)
    ax.plot(states, profile.drift, lw=1.4)
    ax.axhline(0.0, color="black", lw=0.8)
    for pt in points:
        ax.plot(
            [pt.backlog],
            [0.0],
            marker="o" if pt.local_stability == "stable" else "x",
            color=_POINT_COLORS.get(pt.local_stability, "tab:gray"),
            ms=8,
            ls="none",
            label=f"{pt.local_stability} @ {pt.backlog:.1f}",
        )
    if operating_backlog is not None:
        ax.axvline(operating_backlog, color="tab:green", lw=0.8, ls="--")
    cfg = profile.config
    ax.set_xlabel("backlog (users)")
    ax.set_ylabel("expected drift (users/epoch)")
    ax.set_title(f"{cfg.scheme} M={cfg.M} p0={cfg.p0:g} pr={cfg.pr:g}")
    if points:
        ax.legend(fontsize=8)
    return _finish(fig, ax, path)


def delay_sweep_figure(x, delays, path, xlabel, x_opt=None, target=None, logx=False) -> Path:
    """Delay against a swept parameter, with optimum and target markers."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    x = np.asarray(x, dtype=float)
    delays = np.asarray(delays, dtype=float)
    ax.plot(x, delays, marker=".", lw=1.2)
    if target is not None:
        ax.axhline(target, color="tab:red", lw=0.8, ls="--", label=f"target {target:g}")
    if x_opt is not None:
        ax.axvline(x_opt, color="tab:green", lw=0.8, ls="--", label=f"optimum {x_opt:g}")
    if logx:
        ax.set_xscale("log")
    finite = delays[np.isfinite(delays)]
    if finite.size and finite.max() > 0 and finite.max() / max(finite.min(), 1e-300) > 50:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("expected backlog delay (slots)")
    if target is not None or x_opt is not None:
        ax.legend(fontsize=8)
    return _finish(fig, ax, path)


def fet_times_figure(times, path, boundary) -> Path:
    """Mean first-entry time from each starting backlog below the boundary."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.plot(np.arange(len(times)), times, lw=1.4)
    ax.set_yscale("log")
    ax.set_xlabel("starting backlog (users)")
    ax.set_ylabel("mean first-entry time (epochs)")
    ax.set_title(f"absorbing boundary at backlog {boundary}")
    return _finish(fig, ax, path)


def fet_curve_figure(series, path, ylabel="mean first-entry time (slots)") -> Path:
    """One or more (label, pr values, FET values) series on a log-log grid."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for label, prs, fets in series:
        prs = np.asarray(prs, dtype=float)
        fets = np.asarray(fets, dtype=float)
        keep = np.isfinite(fets)
        ax.plot(prs[keep], fets[keep], marker=".", lw=1.2, label=label)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("retransmission probability")
    ax.set_ylabel(ylabel)
    ax.legend(fontsize=8)
    return _finish(fig, ax, path)


def throughput_figure(series, path) -> Path:
    """Load-throughput curves, one per labeled series of (G, S) arrays."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for label, loads, throughput in series:
        ax.plot(loads, throughput, lw=1.4, label=label)
    ax.set_xlabel("offered load (packets/slot)")
    ax.set_ylabel("throughput (packets/slot)")
    ax.legend(fontsize=8)
    return _finish(fig, ax, path)


def backlog_traces_figure(traces, path, max_traces=20, boundary=None) -> Path:
    """Backlog trajectories of the first few simulation runs."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for trace in traces[:max_traces]:
        ax.plot(np.arange(1, trace.epochs + 1), trace.backlog_after, lw=0.8, alpha=0.7)
    if boundary is not None:
        ax.axhline(boundary, color="tab:red", lw=0.9, ls="--", label=f"boundary {boundary}")
        ax.legend(fontsize=8)
    ax.set_xlabel("epoch")
    ax.set_ylabel("backlog after epoch (users)")
    return _finish(fig, ax, path)
