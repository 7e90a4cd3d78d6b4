"""Closed-loop population simulator and its empirical estimators."""

import math

import numpy as np
import pytest

from crdsa_stability.channel_model import crdsa_config, sa_config
from crdsa_stability.mc_validate import (
    empirical_delay,
    empirical_fet,
    empirical_transition_matrix,
    run_batch,
    run_closed_loop,
    trace_summary,
)

SEED = 90210


def test_zero_arrival_keeps_backlog_empty():
    trace = run_closed_loop(sa_config(M=8, p0=0.0, pr=0.5), epochs=200, master_seed=SEED)
    assert np.all(trace.backlog_after == 0)
    assert trace.delays_epochs.size == 0
    assert np.all(trace.fresh_success == 0)
    assert np.all(trace.backlog_fail == 0)


def test_lone_user_succeeds_every_frame():
    # a single user's replicas never collide, so every frame completes a
    # packet on its first attempt (zero backlog delay by the dwell convention)
    cfg = crdsa_config(M=1, p0=1.0, pr=0.5, d=2, num_slots=4)
    trace = run_closed_loop(cfg, epochs=50, master_seed=SEED)
    assert np.all(trace.fresh_success == 1)
    assert np.all(trace.backlog_after == 0)
    assert trace.delays_epochs.size == 50
    assert np.all(trace.delays_epochs == 0)
    assert empirical_delay([trace]) == 0.0


def test_trace_is_deterministic():
    cfg = crdsa_config(M=10, p0=0.2, pr=0.4, d=2, num_slots=10)
    a = run_closed_loop(cfg, epochs=80, master_seed=SEED, run_index=3)
    b = run_closed_loop(cfg, epochs=80, master_seed=SEED, run_index=3)
    c = run_closed_loop(cfg, epochs=80, master_seed=SEED, run_index=4)
    assert np.array_equal(a.backlog_after, b.backlog_after)
    assert np.array_equal(a.delays_epochs, b.delays_epochs)
    assert np.array_equal(a.fresh_fail, b.fresh_fail)
    assert not np.array_equal(a.backlog_after, c.backlog_after)


def test_sa_pair_collides_forever():
    trace = run_closed_loop(sa_config(M=2, p0=1.0, pr=1.0), epochs=40, master_seed=SEED)
    assert trace.fresh_fail[0] == 2
    assert np.all(trace.backlog_after == 2)
    assert np.all(trace.backlog_fail[1:] == 2)
    assert trace.delays_epochs.size == 0
    assert math.isnan(empirical_delay([trace]))


@pytest.mark.parametrize(
    "cfg",
    [
        crdsa_config(M=12, p0=0.3, pr=0.5, d=2, num_slots=20),
        sa_config(M=12, p0=0.15, pr=0.35),
    ],
    ids=["frame-based", "slot-based"],
)
def test_bookkeeping_identities_hold(cfg):
    trace = run_closed_loop(cfg, epochs=150, master_seed=SEED)
    before = 0
    for l in range(1, trace.epochs + 1):
        out = trace.outcome(l)
        # attempts partition into successes and failures per population
        assert out.fresh_success >= 0 and out.backlog_success >= 0
        assert out.backlog_after == before + out.fresh_fail - out.backlog_success
        assert out.backlog_success + out.backlog_fail <= before
        assert out.fresh_success + out.fresh_fail <= cfg.M - before
        before = out.backlog_after
    # first-hit bookkeeping agrees with the stored path
    peak = int(trace.backlog_after.max())
    assert trace.first_hit(0) == 0
    if peak >= 1:
        l_hit = trace.first_hit(peak)
        assert trace.backlog_after[l_hit - 1] >= peak
        assert np.all(trace.backlog_after[: l_hit - 1] < peak)
    assert trace.first_hit(cfg.M + 1) is None


def test_stop_threshold_truncates_same_path():
    cfg = sa_config(M=20, p0=0.3, pr=0.2)
    full = run_closed_loop(cfg, epochs=300, master_seed=SEED)
    stopped = run_closed_loop(cfg, epochs=300, master_seed=SEED, stop_at_backlog=5)
    hit = full.first_hit(5)
    assert hit is not None
    assert stopped.epochs == hit
    assert np.array_equal(stopped.backlog_after, full.backlog_after[:hit])


def test_deterministic_toy_transition_row():
    # both users always transmit two replicas into the two slots: permanent
    # collision, so the chain jumps 0 -> 2 and stays
    cfg = crdsa_config(M=2, p0=1.0, pr=1.0, d=2, num_slots=2)
    traces = run_batch(cfg, runs=3, epochs=10, master_seed=SEED)
    tm = empirical_transition_matrix(traces, x_max=2)
    assert np.allclose(tm.matrix[0], [0.0, 0.0, 1.0])
    assert np.allclose(tm.matrix[2], [0.0, 0.0, 1.0])
    assert tm.row_visits[0] == 3
    assert tm.row_visits[1] == 0
    assert np.all(tm.matrix[1] == 0.0)


def test_observed_rows_sum_to_one_at_full_span():
    cfg = sa_config(M=15, p0=0.1, pr=0.3)
    traces = run_batch(cfg, runs=4, epochs=400, master_seed=SEED)
    tm = empirical_transition_matrix(traces, x_max=15)
    observed = tm.row_visits > 0
    assert observed.any()
    sums = tm.matrix.sum(axis=1)
    # frequencies sum to 1 up to float summation error
    assert np.allclose(sums[observed], 1.0, rtol=0.0, atol=1e-12)
    assert np.all(sums[~observed] == 0.0)


def test_truncated_empirical_rows_leak():
    cfg = sa_config(M=15, p0=0.25, pr=0.05)  # climbs quickly past any window
    traces = run_batch(cfg, runs=4, epochs=200, master_seed=SEED)
    tm = empirical_transition_matrix(traces, x_max=4)
    observed = tm.row_visits > 0
    assert np.all(tm.matrix.sum(axis=1)[observed] <= 1.0 + 1e-12)
    # some mass must escape the 5-state window from its top row
    assert tm.matrix.sum(axis=1)[4] < 1.0


def test_empirical_fet_trivial_boundaries():
    cfg = sa_config(M=6, p0=0.9, pr=0.1)
    traces = run_batch(cfg, runs=5, epochs=60, master_seed=SEED)
    zero = empirical_fet(traces, boundary=0)
    assert zero.mean_epochs == 0.0
    assert zero.runs_used == 5 and zero.runs_excluded == 0
    unreachable = empirical_fet(traces, boundary=7)
    assert unreachable.runs_used == 0 and unreachable.runs_excluded == 5
    assert math.isnan(unreachable.mean_epochs)


def test_empirical_fet_counts_first_crossing():
    cfg = sa_config(M=6, p0=0.9, pr=0.1)
    traces = run_batch(cfg, runs=8, epochs=80, master_seed=SEED)
    est = empirical_fet(traces, boundary=4)
    assert est.runs_excluded == 0
    assert est.mean_epochs >= 1.0
    hand = np.mean([t.first_hit(4) for t in traces])
    assert est.mean_epochs == pytest.approx(hand)


def test_little_closure_on_stable_run():
    cfg = sa_config(M=40, p0=0.008, pr=0.1)
    trace = run_closed_loop(cfg, epochs=100_000, master_seed=SEED)
    summary = trace_summary(trace)
    w_direct = summary.mean_delay_slots
    w_little = summary.time_avg_backlog / summary.throughput_pkt_slot
    assert summary.packets_completed > 10_000
    assert w_direct == pytest.approx(w_little, rel=0.02)


def test_summary_is_consistent_with_trace(small_table):
    cfg = crdsa_config(M=18, p0=0.05, pr=0.25, d=2, num_slots=20)
    trace = run_closed_loop(cfg, epochs=2000, master_seed=SEED)
    summary = trace_summary(trace)
    assert summary.epochs == 2000
    assert summary.packets_completed == trace.delays_epochs.size
    expected_thr = trace.delays_epochs.size / (2000 * 20)
    assert summary.throughput_pkt_slot == pytest.approx(expected_thr)
    assert summary.time_avg_backlog == pytest.approx(trace.backlog_after.mean())
    assert summary.mean_delay_slots == pytest.approx(trace.delays_epochs.mean() * 20)


def test_empirical_matrix_matches_computed_within_noise(default_table):
    # frame-based reference scenario: simulated transition frequencies agree
    # with the computed rows cell-by-cell within multinomial sampling noise
    from crdsa_stability.channel_model import transition_matrix

    cfg = crdsa_config(M=300, p0=0.19, pr=0.7, d=2, num_slots=100)
    x_max = 41
    computed = transition_matrix(cfg, table=default_table, x_max=x_max).matrix
    traces = run_batch(cfg, runs=400, epochs=25, master_seed=SEED)
    emp = empirical_transition_matrix(traces, x_max=x_max)
    checked = 0
    for x in range(x_max + 1):
        visits = emp.row_visits[x]
        if visits < 30:
            continue
        sigma = np.sqrt(computed[x] * (1.0 - computed[x]) / visits)
        gap = np.abs(emp.matrix[x] - computed[x])
        # the 3/visits cushion covers Poisson tails of near-empty cells,
        # where the normal 4-sigma band understates the noise
        assert np.all(
            gap <= 4.0 * sigma + 3.0 / visits
        ), f"row {x} deviates beyond sampling noise"
        checked += 1
    assert checked >= 10
