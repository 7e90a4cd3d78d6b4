"""Delimited and key-value output shared by the CLI subcommands.

CSV cells keep full precision (shortest round-trip decimal); the report
files round to four significant digits for reading comfort.  The report's
``generated`` line is the single permitted nondeterministic field.
"""

from __future__ import annotations

import csv
from datetime import datetime, timezone
from pathlib import Path

import numpy as np


def fmt_full(value) -> str:
    """Shortest decimal that round-trips; empty string for missing values."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def fmt_brief(value) -> str:
    """Four significant digits for human-readable summaries."""
    if value is None:
        return "n/a"
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.4g}"
    return str(value)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt_full(cell) for cell in row])
    return path


def write_report(path, title: str, pairs) -> Path:
    """Key-value summary; values are brief-formatted unless already strings."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    lines = [title, f"generated = {stamp}"]
    for key, value in pairs:
        rendered = value if isinstance(value, str) else fmt_brief(value)
        lines.append(f"{key} = {rendered}")
    path.write_text("\n".join(lines) + "\n")
    return path


def config_pairs(config) -> list:
    """Report lines describing a channel configuration."""
    pairs = [("scheme", config.scheme), ("M", config.M), ("p0", config.p0), ("pr", config.pr)]
    if config.is_crdsa:
        pairs += [
            ("d", config.d),
            ("num_slots", config.num_slots),
            ("max_iterations", config.max_iterations),
        ]
    return pairs
