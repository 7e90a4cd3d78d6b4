"""Empirical success distribution q(tau, upsilon) for a CRDSA configuration:
estimation, persistence, queries, and the load-throughput curve.

Tables store exact integer counts (count/trials are the probabilities), so
row-stochasticity is exact and files round-trip losslessly.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._kernels import decoded_count_hist
from .errors import ConfigurationError, TableFormatError, TableRangeError

FORMAT_VERSION = 1
_HEADER_KEYS = ("d", "num_slots", "max_iterations", "tau_max", "trials_per_tau", "master_seed")


@dataclass(frozen=True, eq=False)
class SuccessTable:
    """q(tau, upsilon) as integer counts over trials_per_tau frames per tau.

    counts[tau, upsilon] is the number of trials in which exactly upsilon of
    tau attempting users were decoded; rows are exact frequencies.
    """

    d: int
    num_slots: int
    max_iterations: int
    tau_max: int
    trials_per_tau: int
    master_seed: int
    counts: np.ndarray
    probs: np.ndarray = field(init=False, repr=False)
    mean_decoded: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        expected = (self.tau_max + 1, self.tau_max + 1)
        if counts.shape != expected:
            raise TableFormatError(f"counts shape {counts.shape}, expected {expected}")
        if (counts < 0).any():
            raise TableFormatError("negative count")
        for tau in range(self.tau_max + 1):
            if counts[tau, tau + 1 :].any():
                raise TableFormatError(f"row tau={tau} has mass above upsilon={tau}")
            row_sum = int(counts[tau].sum())
            if row_sum != self.trials_per_tau:
                raise TableFormatError(
                    f"row tau={tau} sums to {row_sum}, expected {self.trials_per_tau}"
                )
        object.__setattr__(self, "counts", counts)
        probs = counts / float(self.trials_per_tau)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "mean_decoded", probs @ np.arange(self.tau_max + 1))


@dataclass(frozen=True)
class ThroughputCurve:
    """(load G, throughput S) pairs in packets/slot, one per integer tau."""

    points: tuple[tuple[float, float], ...]

    def peak(self) -> tuple[float, float]:
        return max(self.points, key=lambda p: p[1])


def estimate_success_table(
    d: int,
    num_slots: int,
    max_iterations: int,
    tau_max: int,
    trials_per_tau: int,
    master_seed: int,
    workers: int | None = None,
) -> SuccessTable:
    """Estimate q by simulating trials_per_tau frames for every tau.

    Placement and peeling follow `sic_sim` semantics via the compiled kernel.
    Each (tau, trial) draws from a stream mixed from (master_seed, tau,
    trial), so the result is bit-identical for any worker count.
    """
    if tau_max < 1:
        raise ConfigurationError(f"tau_max must be >= 1, got {tau_max}")
    if trials_per_tau < 1:
        raise ConfigurationError(f"trials_per_tau must be >= 1, got {trials_per_tau}")
    if d < 1 or d > num_slots:
        raise ConfigurationError(f"need 1 <= d <= num_slots, got d={d}, num_slots={num_slots}")
    if max_iterations < 1:
        raise ConfigurationError(f"max_iterations must be >= 1, got {max_iterations}")
    seed = int(master_seed) & 0xFFFFFFFFFFFFFFFF
    counts = np.zeros((tau_max + 1, tau_max + 1), dtype=np.int64)

    def run_tau(tau: int) -> tuple[int, np.ndarray]:
        hist = np.zeros(tau + 1, dtype=np.int64)
        decoded_count_hist(
            tau, d, num_slots, max_iterations, trials_per_tau, np.uint64(seed), hist
        )
        return tau, hist

    if workers is None:
        workers = min(8, os.cpu_count() or 1)
    if workers <= 1:
        results = map(run_tau, range(tau_max + 1))
        for tau, hist in results:
            counts[tau, : tau + 1] = hist
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for tau, hist in pool.map(run_tau, range(tau_max + 1)):
                counts[tau, : tau + 1] = hist
    return SuccessTable(
        d=d,
        num_slots=num_slots,
        max_iterations=max_iterations,
        tau_max=tau_max,
        trials_per_tau=trials_per_tau,
        master_seed=int(master_seed),
        counts=counts,
    )


def query_q(table: SuccessTable, tau: int, upsilon: int) -> float:
    """Stored frequency of exactly upsilon successes among tau attempts."""
    tau = int(tau)
    if tau < 0 or tau > table.tau_max:
        raise TableRangeError(
            f"tau={tau} outside [0, {table.tau_max}]; build the table to cover the "
            "largest reachable attempt count"
        )
    upsilon = int(upsilon)
    if upsilon < 0 or upsilon > tau:
        return 0.0
    return float(table.probs[tau, upsilon])


def avg_success_prob(table: SuccessTable, attempts: float) -> float:
    """P_s(x) = E[upsilon | x]/x on integers (P_s(0)=1), linear in between."""
    x = float(attempts)
    if x < 0 or x > table.tau_max:
        raise TableRangeError(f"attempts={x} outside [0, {table.tau_max}]")
    grid = np.arange(table.tau_max + 1, dtype=float)
    ps = np.ones(table.tau_max + 1)
    ps[1:] = table.mean_decoded[1:] / grid[1:]
    return float(np.interp(x, grid, ps))


def throughput_curve(table: SuccessTable) -> ThroughputCurve:
    """Points (G, S) = (tau/N_s, E[upsilon|tau]/N_s) for every tau."""
    ns = float(table.num_slots)
    points = tuple(
        (tau / ns, float(table.mean_decoded[tau]) / ns) for tau in range(table.tau_max + 1)
    )
    return ThroughputCurve(points=points)


def save_table(table: SuccessTable, destination) -> None:
    """Write the self-describing text format: metadata header, then one line
    per tau listing upsilon:count pairs (zero counts omitted)."""
    lines = [f"format_version {FORMAT_VERSION}"]
    for key in _HEADER_KEYS:
        lines.append(f"{key} {getattr(table, key)}")
    lines.append("rows")
    for tau in range(table.tau_max + 1):
        row = table.counts[tau]
        pairs = " ".join(f"{u}:{int(row[u])}" for u in np.flatnonzero(row))
        lines.append(f"{tau} {pairs}".rstrip())
    Path(destination).write_text("\n".join(lines) + "\n")


def load_table(source) -> SuccessTable:
    """Parse and validate a table file; invariant violations name the row."""
    text = Path(source).read_text()
    meta: dict[str, int] = {}
    row_lines: list[str] = []
    in_rows = False
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if in_rows:
            row_lines.append(line)
            continue
        if line == "rows":
            in_rows = True
            continue
        key, _, value = line.partition(" ")
        try:
            meta[key] = int(value)
        except ValueError as exc:
            raise TableFormatError(f"bad header line {line!r}") from exc
    if meta.get("format_version") != FORMAT_VERSION:
        raise TableFormatError(
            f"unsupported format_version {meta.get('format_version')!r}, expected {FORMAT_VERSION}"
        )
    for key in _HEADER_KEYS:
        if key not in meta:
            raise TableFormatError(f"missing header key {key!r}")
    tau_max = meta["tau_max"]
    counts = np.zeros((tau_max + 1, tau_max + 1), dtype=np.int64)
    for line in row_lines:
        fields = line.split()
        try:
            tau = int(fields[0])
        except (ValueError, IndexError) as exc:
            raise TableFormatError(f"bad row line {line!r}") from exc
        if tau < 0 or tau > tau_max:
            raise TableFormatError(f"row tau={tau} outside [0, {tau_max}]")
        for pair in fields[1:]:
            u_str, _, c_str = pair.partition(":")
            try:
                upsilon, count = int(u_str), int(c_str)
            except ValueError as exc:
                raise TableFormatError(f"bad pair {pair!r} in row tau={tau}") from exc
            if upsilon < 0 or upsilon > tau_max:
                raise TableFormatError(f"upsilon={upsilon} out of range in row tau={tau}")
            counts[tau, upsilon] = count
    return SuccessTable(
        d=meta["d"],
        num_slots=meta["num_slots"],
        max_iterations=meta["max_iterations"],
        tau_max=tau_max,
        trials_per_tau=meta["trials_per_tau"],
        master_seed=meta["master_seed"],
        counts=counts,
    )
