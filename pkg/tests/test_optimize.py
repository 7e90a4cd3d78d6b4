"""Delay-surface optimizations: pr*, max population, max traffic, loci."""

import numpy as np
import pytest

from crdsa_stability.channel_model import crdsa_config, sa_config
from crdsa_stability.errors import ConfigurationError
from crdsa_stability.optimize import (
    DEFAULT_P0_GRID,
    DEFAULT_PR_GRID,
    delay_locus,
    max_population,
    max_traffic,
    optimize_pr,
    write_locus_csv,
)
from crdsa_stability.stability import classify, expected_delay

# slot-based template matching the low-rate contention reference scenario
XI = sa_config(M=400, p0=2.63e-3, pr=0.5)


def test_default_grids_shapes():
    assert DEFAULT_PR_GRID.size == 60
    assert DEFAULT_PR_GRID[0] == pytest.approx(1e-4)
    assert DEFAULT_PR_GRID[-1] == pytest.approx(1.0)
    ratios = DEFAULT_PR_GRID[1:] / DEFAULT_PR_GRID[:-1]
    assert np.allclose(ratios, ratios[0])  # log spacing
    assert DEFAULT_P0_GRID.size == 200
    diffs = np.diff(DEFAULT_P0_GRID)
    assert np.allclose(diffs, diffs[0])  # linear spacing
    assert DEFAULT_P0_GRID[0] > 0.0 and DEFAULT_P0_GRID[-1] == 1.0


def test_no_traffic_prefers_largest_pr():
    # No arrivals: the backlog never forms, every pr is equally good at
    # zero delay, and the tie resolves to the grid maximum.
    result = optimize_pr(sa_config(M=50, p0=0.0, pr=0.5))
    assert result.feasible
    assert result.delay_slots == 0.0
    assert result.pr_opt == 1.0


def test_unconditional_overload_is_infeasible():
    # half the population arrives every slot: no pr can stabilize this
    result = optimize_pr(sa_config(M=50, p0=0.5, pr=0.5))
    assert not result.feasible
    assert result.pr_opt is None
    assert np.isnan(result.delay_slots)
    assert result.note != ""


def test_grid_rejects_bad_values():
    with pytest.raises(ConfigurationError):
        optimize_pr(XI, pr_grid=[])
    with pytest.raises(ConfigurationError):
        optimize_pr(XI, pr_grid=[0.0, 0.5])
    with pytest.raises(ConfigurationError):
        optimize_pr(XI, pr_grid=[0.5, 1.5])


def test_optimum_is_stable_local_minimum():
    result = optimize_pr(XI)
    assert result.feasible
    assert classify(XI.with_params(pr=result.pr_opt)).classification == "stable"
    assert result.delay_slots > 0.0

    # the refined optimum cannot lose to any stable grid point, and its grid
    # neighbourhood is locally convex around the refined value
    grid_delays = {}
    for pr in DEFAULT_PR_GRID:
        try:
            grid_delays[pr] = expected_delay(config=XI.with_params(pr=float(pr))).delay_slots
        except Exception:
            continue
    assert result.delay_slots <= min(grid_delays.values()) + 1e-9
    below = [pr for pr in grid_delays if pr < result.pr_opt]
    above = [pr for pr in grid_delays if pr > result.pr_opt]
    if below:
        assert grid_delays[max(below)] >= result.delay_slots - 1e-9
    if above:
        assert grid_delays[min(above)] >= result.delay_slots - 1e-9


def test_frame_scheme_smoke(small_table):
    template = crdsa_config(M=20, p0=0.3, pr=0.2, d=2, num_slots=20)
    result = optimize_pr(template, table=small_table)
    assert result.feasible
    assert 0.0 < result.pr_opt <= 1.0
    assert result.delay_slots >= 0.0
    report = classify(template.with_params(pr=result.pr_opt), table=small_table)
    assert report.classification == "stable"


def test_max_population_nondecreasing_in_target():
    m_range = np.arange(50, 451, 25)
    results = [
        max_population(2.63e-3, target, XI, M_range=m_range)
        for target in (250.0, 300.0, 350.0)
    ]
    values = [r.value for r in results]
    assert all(r.feasible for r in results)
    assert values == sorted(values)
    for r, target in zip(results, (250.0, 300.0, 350.0)):
        assert r.delay_slots <= target
        assert r.delay_target == target
        assert classify(XI.with_params(M=int(r.value), pr=r.pr_opt)).classification == "stable"


def test_zero_delay_target_infeasible():
    result = max_population(2.63e-3, 0.0, XI, M_range=np.arange(50, 201, 50))
    assert not result.feasible
    assert result.value is None


def test_max_traffic_vacuous_target_takes_largest_stable_p0():
    template = sa_config(M=30, p0=0.01, pr=0.1)
    grid = np.linspace(0.002, 0.05, 25)
    result = max_traffic(30, float("inf"), template, p0_grid=grid)
    assert result.feasible
    # oracle: scan the grid directly for the largest p0 admitting stability
    feasible_p0 = [
        p for p in grid if optimize_pr(template.with_params(p0=float(p))).feasible
    ]
    assert result.value == pytest.approx(max(feasible_p0))

    capped = max_traffic(30, 120.0, template, p0_grid=grid)
    assert capped.feasible
    assert capped.value <= result.value
    assert capped.delay_slots <= 120.0


def test_locus_exists_only_inside_feasible_region():
    m_range = np.arange(100, 401, 50)
    target = 300.0
    best = max_population(2.63e-3, target, XI, M_range=m_range)
    assert best.feasible
    rows = delay_locus(
        XI, delay_target=target, sweep_field="M", sweep_values=[150, int(best.value), 400]
    )
    swept = {v for v, _ in rows}
    assert 150 in swept  # well inside: the delay curve crosses the target
    assert 400 not in swept  # beyond the max population: no crossing
    for v, pr in rows:
        d = expected_delay(config=XI.with_params(M=int(v), pr=pr)).delay_slots
        assert d == pytest.approx(target, rel=5e-3)


def test_locus_rejects_bad_sweep():
    with pytest.raises(ConfigurationError):
        delay_locus(XI, delay_target=300.0, sweep_field="pr", sweep_values=[0.1])
    with pytest.raises(ConfigurationError):
        delay_locus(XI, delay_target=-3.0, sweep_field="M", sweep_values=[100])


def test_locus_csv_round_trips(tmp_path):
    rows = delay_locus(XI, delay_target=300.0, sweep_field="M", sweep_values=[150, 200])
    assert rows
    path = write_locus_csv(tmp_path / "locus.csv", 300.0, rows)
    lines = path.read_text().splitlines()
    assert lines[0] == "target_delay,swept_value,pr"
    assert len(lines) == len(rows) + 1
    for line, (value, pr) in zip(lines[1:], rows):
        target_s, value_s, pr_s = line.split(",")
        assert float(target_s) == 300.0
        assert float(value_s) == value
        assert float(pr_s) == pr  # full-precision cells round-trip exactly
