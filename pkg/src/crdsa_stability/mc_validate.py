"""Closed-loop Monte Carlo simulation of the finite user population.

Simulates every user's fresh/backlogged state epoch by epoch (a frame for
the replica scheme, a slot for single-transmission contention) and records
the bookkeeping needed to validate the analytical chain: per-epoch outcome
counts, the backlog path, and per-packet dwell delays.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._kernels import decode_frame
from .channel_model import ChannelConfig, TransitionMatrix
from .errors import ConfigurationError


@dataclass(frozen=True)
class FrameOutcome:
    """Per-epoch success/failure split across the two populations."""

    fresh_success: int
    fresh_fail: int
    backlog_success: int
    backlog_fail: int
    backlog_after: int


@dataclass(frozen=True, eq=False)
class RunTrace:
    """One simulated run: per-epoch outcome arrays and completed delays.

    Delays are dwell times in epochs: the gap between a packet's first
    transmission attempt and the epoch it finally succeeds, so first-try
    successes contribute zero.
    """

    config: ChannelConfig
    epochs: int
    master_seed: int
    run_index: int
    fresh_success: np.ndarray
    fresh_fail: np.ndarray
    backlog_success: np.ndarray
    backlog_fail: np.ndarray
    backlog_after: np.ndarray
    delays_epochs: np.ndarray

    def outcome(self, epoch: int) -> FrameOutcome:
        """Outcome of a 1-based epoch."""
        i = epoch - 1
        return FrameOutcome(
            fresh_success=int(self.fresh_success[i]),
            fresh_fail=int(self.fresh_fail[i]),
            backlog_success=int(self.backlog_success[i]),
            backlog_fail=int(self.backlog_fail[i]),
            backlog_after=int(self.backlog_after[i]),
        )

    def first_hit(self, threshold: int) -> Optional[int]:
        """First 1-based epoch whose end-of-epoch backlog reaches threshold.

        Zero (or negative) thresholds are hit before anything happens; a
        threshold the run never reaches returns None.
        """
        if threshold <= 0:
            return 0
        peaks = np.maximum.accumulate(self.backlog_after)
        idx = int(np.searchsorted(peaks, threshold, side="left"))
        if idx >= peaks.size:
            return None
        return idx + 1


@dataclass(frozen=True)
class EmpiricalFet:
    mean_epochs: float
    runs_used: int
    runs_excluded: int


@dataclass(frozen=True)
class RunSummary:
    epochs: int
    time_avg_backlog: float
    throughput_pkt_slot: float
    mean_delay_slots: float
    packets_completed: int


def run_closed_loop(
    config: ChannelConfig,
    epochs: int,
    master_seed: int,
    run_index: int = 0,
    stop_at_backlog: Optional[int] = None,
) -> RunTrace:
    """Simulate the population for up to ``epochs`` epochs.

    Fresh users attempt with probability p0 and fall into the backlog on
    failure; backlogged users retry with probability pr and leave on
    success (no new traffic while backlogged).  Each run draws from an
    independent stream keyed by (master_seed, run_index), so batches are
    reproducible regardless of execution order.  ``stop_at_backlog``
    truncates the run at the end of the first epoch that reaches the given
    backlog, without changing the path up to that point.
    """
    if epochs < 1:
        raise ConfigurationError(f"epochs must be >= 1, got {epochs}")
    rng = np.random.default_rng(np.random.SeedSequence([int(master_seed), int(run_index)]))
    M = config.M
    p0, pr = config.p0, config.pr
    crdsa = config.is_crdsa
    if crdsa:
        d, num_slots, imax = config.d, config.num_slots, config.max_iterations

    backlogged = np.zeros(M, dtype=bool)
    first_attempt = np.zeros(M, dtype=np.int64)
    dec_mask = np.zeros(M, dtype=bool)
    decoded_buf = np.empty(M, dtype=np.bool_)

    fs = np.zeros(epochs, dtype=np.int64)
    fu = np.zeros(epochs, dtype=np.int64)
    bs = np.zeros(epochs, dtype=np.int64)
    bu = np.zeros(epochs, dtype=np.int64)
    after = np.zeros(epochs, dtype=np.int64)
    delay_chunks = []

    prev_backlog = 0
    n_done = epochs
    for l in range(1, epochs + 1):
        u = rng.random(M)
        attempt = np.where(backlogged, u < pr, u < p0)
        idx = np.flatnonzero(attempt)
        tau = idx.size

        if tau == 0:
            decoded_users = idx
        elif crdsa:
            if d == 2:
                a = rng.integers(0, num_slots, tau)
                b = rng.integers(0, num_slots - 1, tau)
                b += b >= a  # second replica lands in a distinct slot
                slots = np.stack((a, b), axis=1)
            else:
                slots = np.argsort(rng.random((tau, num_slots)), axis=1)[:, :d]
            buf = decoded_buf[:tau]
            decode_frame(slots, num_slots, imax, buf)
            decoded_users = idx[buf]
        else:
            decoded_users = idx if tau == 1 else idx[:0]

        dec_mask[:] = False
        dec_mask[decoded_users] = True
        fresh_att = attempt & ~backlogged
        back_att = attempt & backlogged
        FS = int(np.count_nonzero(dec_mask & fresh_att))
        BS = int(np.count_nonzero(dec_mask & back_att))
        FU = int(np.count_nonzero(fresh_att)) - FS
        BU = int(np.count_nonzero(back_att)) - BS
        # the decoded set must partition exactly across the two populations
        assert FS + BS == decoded_users.size
        assert FU >= 0 and BU >= 0

        if FS:
            delay_chunks.append(np.zeros(FS, dtype=np.int64))
        solved = back_att & dec_mask
        if BS:
            delay_chunks.append(l - first_attempt[solved])

        failed_fresh = fresh_att & ~dec_mask
        backlogged[failed_fresh] = True
        first_attempt[failed_fresh] = l
        backlogged[solved] = False

        nb = int(np.count_nonzero(backlogged))
        # backlog recursion: joiners are fresh failures, leavers are
        # backlogged successes
        assert nb == prev_backlog + FU - BS

        i = l - 1
        fs[i], fu[i], bs[i], bu[i], after[i] = FS, FU, BS, BU, nb
        prev_backlog = nb
        if stop_at_backlog is not None and nb >= stop_at_backlog:
            n_done = l
            break

    delays = (
        np.concatenate(delay_chunks) if delay_chunks else np.empty(0, dtype=np.int64)
    )
    return RunTrace(
        config=config,
        epochs=n_done,
        master_seed=int(master_seed),
        run_index=int(run_index),
        fresh_success=fs[:n_done],
        fresh_fail=fu[:n_done],
        backlog_success=bs[:n_done],
        backlog_fail=bu[:n_done],
        backlog_after=after[:n_done],
        delays_epochs=delays,
    )


def run_batch(
    config: ChannelConfig,
    runs: int,
    epochs: int,
    master_seed: int,
    run_index_start: int = 0,
    stop_at_backlog: Optional[int] = None,
) -> list:
    """Independent runs with per-run streams keyed off the master seed."""
    return [
        run_closed_loop(
            config,
            epochs,
            master_seed,
            run_index=run_index_start + r,
            stop_at_backlog=stop_at_backlog,
        )
        for r in range(runs)
    ]


def empirical_transition_matrix(traces, x_max: int) -> TransitionMatrix:
    """Frequency estimate of the backlog chain from observed state pairs.

    Rows are normalized by the total departures from each state, so mass
    leaving the [0, x_max] window leaks exactly like in the computed
    truncated matrix.  Rows never visited stay all-zero with a zero visit
    count.
    """
    if not traces:
        raise ConfigurationError("no traces supplied")
    cfg = traces[0].config
    if any(t.config != cfg for t in traces):
        raise ConfigurationError("traces mix different configurations")
    counts = np.zeros((x_max + 1, x_max + 1), dtype=np.int64)
    visits = np.zeros(x_max + 1, dtype=np.int64)
    for t in traces:
        before = np.concatenate(([0], t.backlog_after[:-1]))
        after = t.backlog_after
        in_rows = before <= x_max
        b = before[in_rows]
        a = after[in_rows]
        np.add.at(visits, b, 1)
        in_win = a <= x_max
        np.add.at(counts, (b[in_win], a[in_win]), 1)
    matrix = np.zeros(counts.shape, dtype=float)
    seen = visits > 0
    matrix[seen] = counts[seen] / visits[seen, None]
    return TransitionMatrix(
        x_max=x_max,
        matrix=matrix,
        config=cfg,
        table_ref=None,
        truncation_bound=0.0,
        row_visits=visits,
    )


def empirical_fet(traces, boundary: int) -> EmpiricalFet:
    """Mean first epoch at which the backlog reaches ``boundary``.

    Runs that never reach it within their horizon are excluded from the
    mean and reported in the exclusion count.
    """
    hits = [t.first_hit(boundary) for t in traces]
    used = [h for h in hits if h is not None]
    mean = float(np.mean(used)) if used else float("nan")
    return EmpiricalFet(
        mean_epochs=mean, runs_used=len(used), runs_excluded=len(hits) - len(used)
    )


def empirical_delay(traces) -> float:
    """Mean per-packet dwell delay over all completed packets, in slots."""
    packets = sum(t.delays_epochs.size for t in traces)
    if packets == 0:
        return float("nan")
    total = sum(float(t.delays_epochs.sum()) for t in traces)
    return total / packets * traces[0].config.epoch_slots


def trace_summary(trace: RunTrace) -> RunSummary:
    """Aggregate rates of a single run (throughput, backlog, delay)."""
    cfg = trace.config
    packets = int(trace.delays_epochs.size)
    slots = trace.epochs * cfg.epoch_slots
    mean_delay = (
        float(trace.delays_epochs.mean()) * cfg.epoch_slots if packets else float("nan")
    )
    return RunSummary(
        epochs=trace.epochs,
        time_avg_backlog=float(trace.backlog_after.mean()),
        throughput_pkt_slot=packets / slots,
        mean_delay_slots=mean_delay,
        packets_completed=packets,
    )
