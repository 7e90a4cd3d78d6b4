"""Optimizations over the backlog-delay surface.

Three constrained searches: the retransmission probability minimizing the
stable-operation delay, the largest population meeting a delay target, and
the largest traffic-generation probability meeting a delay target, plus
extraction of equal-delay loci for contour plots.  All of them treat the
delay as defined only where the channel classifies stable; everything else
is infeasible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .channel_model import ChannelConfig
from .errors import ConfigurationError, NotApplicableError
from .stability import expected_delay

# Log grid resolving retransmission optima spread over four decades.
DEFAULT_PR_GRID = np.geomspace(1e-4, 1.0, 60)
# Linear grid for traffic-generation sweeps.
DEFAULT_P0_GRID = np.linspace(0.005, 1.0, 200)

_REFINE_LOG_WIDTH = 1e-3
_INF = float("inf")


@dataclass(frozen=True)
class OptimizationResult:
    """Outcome of a delay-surface search.

    ``value`` carries the second optimized argument (population size or
    traffic probability) when the search has one; plain pr searches leave
    it None.  Infeasible searches have NaN delay and a diagnostic note.
    """

    pr_opt: Optional[float]
    value: Optional[float]
    delay_slots: float
    delay_target: Optional[float]
    feasible: bool
    note: str = ""


def _stable_delay(config: ChannelConfig, table, mode: str) -> Optional[float]:
    """Backlog delay in slots, or None when the channel is not stable."""
    try:
        return expected_delay(config=config, table=table, mode=mode).delay_slots
    except NotApplicableError:
        return None


def _validated_grid(grid, default, name: str) -> np.ndarray:
    values = np.asarray(default if grid is None else grid, dtype=float)
    if values.size == 0:
        raise ConfigurationError(f"{name} grid is empty")
    if np.any(values <= 0.0) or np.any(values > 1.0):
        raise ConfigurationError(f"{name} grid must lie in (0, 1]")
    return np.sort(values)


def _golden_refine(evaluate, lo: float, hi: float, seed_x: float, seed_val: float):
    """Golden-section minimization in log space over [lo, hi].

    ``evaluate`` maps pr to a delay or None (treated as +inf).  The best
    point seen anywhere (including the seed from the coarse grid) wins, so
    plateaus resolve toward the seed rather than an arbitrary probe.
    """

    def g(t: float) -> float:
        v = evaluate(math.exp(t))
        return _INF if v is None else v

    a, b = math.log(lo), math.log(hi)
    best_x, best_v = seed_x, seed_val
    phi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - phi * (b - a)
    d = a + phi * (b - a)
    fc, fd = g(c), g(d)
    for t, v in ((c, fc), (d, fd)):
        if v < best_v:
            best_x, best_v = math.exp(t), v
    while (b - a) > _REFINE_LOG_WIDTH:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - phi * (b - a)
            fc = g(c)
            t, v = c, fc
        else:
            a, c, fc = c, d, fd
            d = a + phi * (b - a)
            fd = g(d)
            t, v = d, fd
        if v < best_v:
            best_x, best_v = math.exp(t), v
    return best_x, best_v


def optimize_pr(
    config_template: ChannelConfig,
    table=None,
    pr_grid=None,
    mode: str = "exact",
) -> OptimizationResult:
    """Retransmission probability minimizing the stable-operation delay.

    Scans the grid, keeping only stable classifications, then refines
    around the best grid point by golden-section search to a relative
    bracket width of 1e-3.  Equal delays tie toward the larger pr.
    """
    grid = _validated_grid(pr_grid, DEFAULT_PR_GRID, "pr")
    if config_template.p0 == 0.0:
        # No traffic: the backlog never forms, so any pr gives zero delay.
        return OptimizationResult(
            pr_opt=float(grid[-1]),
            value=None,
            delay_slots=0.0,
            delay_target=None,
            feasible=True,
        )

    def evaluate(pr: float) -> Optional[float]:
        return _stable_delay(config_template.with_params(pr=float(pr)), table, mode)

    best_i = None
    best_d = _INF
    for i, pr in enumerate(grid):
        dv = evaluate(pr)
        if dv is not None and dv <= best_d:  # ascending scan: ties take larger pr
            best_i, best_d = i, dv
    if best_i is None:
        return OptimizationResult(
            pr_opt=None,
            value=None,
            delay_slots=float("nan"),
            delay_target=None,
            feasible=False,
            note="no stable operating point anywhere on the retransmission grid",
        )

    pr_best, d_best = float(grid[best_i]), best_d
    lo = float(grid[max(best_i - 1, 0)])
    hi = float(grid[min(best_i + 1, grid.size - 1)])
    if lo < hi:
        pr_best, d_best = _golden_refine(evaluate, lo, hi, pr_best, d_best)
    return OptimizationResult(
        pr_opt=pr_best,
        value=None,
        delay_slots=d_best,
        delay_target=None,
        feasible=True,
    )


def _bisect_largest_feasible(candidates, evaluate_ok, all_delays):
    """Largest candidate passing ``evaluate_ok``, by index bisection.

    Bisection assumes feasibility is monotone (feasible below, infeasible
    above).  After the search, the assumption is verified on every point
    actually evaluated; any violation falls back to a full descending scan.
    """
    n = len(candidates)
    if evaluate_ok(n - 1):
        return candidates[n - 1]
    if not evaluate_ok(0):
        return None
    lo_i, hi_i = 0, n - 1
    while hi_i - lo_i > 1:
        mid = (lo_i + hi_i) // 2
        if evaluate_ok(mid):
            lo_i = mid
        else:
            hi_i = mid
    # monotonicity audit on the evaluated points: delay may not decrease as
    # the swept argument grows
    seen = sorted(all_delays)
    delays = [all_delays[k] for k in seen]
    monotone = all(delays[i] <= delays[i + 1] + 1e-9 for i in range(len(delays) - 1))
    if monotone:
        return candidates[lo_i]
    for i in range(n - 1, -1, -1):
        if evaluate_ok(i):
            return candidates[i]
    return None


def max_population(
    p0: float,
    delay_target: float,
    config_template: ChannelConfig,
    table=None,
    M_range=None,
    pr_grid=None,
    mode: str = "exact",
) -> OptimizationResult:
    """Largest population whose best stable delay meets the target."""
    if M_range is None:
        raise ConfigurationError("M_range is required")
    candidates = sorted({int(m) for m in np.asarray(M_range).ravel()})
    if not candidates:
        raise ConfigurationError("M_range is empty")

    cache = {}

    def result_at(i: int) -> OptimizationResult:
        if i not in cache:
            cfg = config_template.with_params(M=candidates[i], p0=float(p0))
            cache[i] = optimize_pr(cfg, table=table, pr_grid=pr_grid, mode=mode)
        return cache[i]

    delays = {}

    def ok(i: int) -> bool:
        r = result_at(i)
        delays[i] = r.delay_slots if r.feasible else _INF
        return r.feasible and r.delay_slots <= delay_target

    best = _bisect_largest_feasible(candidates, ok, delays)
    if best is None:
        return OptimizationResult(
            pr_opt=None,
            value=None,
            delay_slots=float("nan"),
            delay_target=float(delay_target),
            feasible=False,
            note="no population size in range meets the delay target",
        )
    r = cache[candidates.index(best)]
    return OptimizationResult(
        pr_opt=r.pr_opt,
        value=best,
        delay_slots=r.delay_slots,
        delay_target=float(delay_target),
        feasible=True,
    )


def max_traffic(
    M: int,
    delay_target: float,
    config_template: ChannelConfig,
    table=None,
    p0_grid=None,
    pr_grid=None,
    mode: str = "exact",
) -> OptimizationResult:
    """Largest traffic-generation probability meeting the delay target."""
    grid = _validated_grid(p0_grid, DEFAULT_P0_GRID, "p0")
    candidates = [float(p) for p in grid]

    cache = {}

    def result_at(i: int) -> OptimizationResult:
        if i not in cache:
            cfg = config_template.with_params(M=int(M), p0=candidates[i])
            cache[i] = optimize_pr(cfg, table=table, pr_grid=pr_grid, mode=mode)
        return cache[i]

    delays = {}

    def ok(i: int) -> bool:
        r = result_at(i)
        delays[i] = r.delay_slots if r.feasible else _INF
        return r.feasible and r.delay_slots <= delay_target

    best = _bisect_largest_feasible(candidates, ok, delays)
    if best is None:
        return OptimizationResult(
            pr_opt=None,
            value=None,
            delay_slots=float("nan"),
            delay_target=float(delay_target),
            feasible=False,
            note="no traffic probability on the grid meets the delay target",
        )
    r = cache[candidates.index(best)]
    return OptimizationResult(
        pr_opt=r.pr_opt,
        value=best,
        delay_slots=r.delay_slots,
        delay_target=float(delay_target),
        feasible=True,
    )


def _bisect_crossing(evaluate, lo: float, hi: float, target: float) -> float:
    """Log-space bisection for delay(pr) = target inside a sign bracket."""
    a, b = math.log(lo), math.log(hi)
    da = evaluate(lo)
    ga_neg = (da - target) < 0.0
    while (b - a) > 1e-4:
        m = 0.5 * (a + b)
        dm = evaluate(math.exp(m))
        gm_neg = False if dm is None else (dm - target) < 0.0
        if gm_neg == ga_neg:
            a = m
        else:
            b = m
    return math.exp(0.5 * (a + b))


def delay_locus(
    config_template: ChannelConfig,
    table=None,
    delay_target: float = None,
    sweep_field: str = "M",
    sweep_values=(),
    pr_grid=None,
    mode: str = "exact",
) -> list:
    """Points (swept value, pr) where the stable delay equals the target.

    The delay-vs-pr curve is U-shaped over the stable region, so each swept
    value contributes up to two branches. Values whose curve never crosses
    the target contribute nothing.
    """
    if delay_target is None or not delay_target > 0.0:
        raise ConfigurationError("delay_target must be positive")
    if sweep_field not in ("M", "p0"):
        raise ConfigurationError("sweep_field must be 'M' or 'p0'")
    grid = _validated_grid(pr_grid, DEFAULT_PR_GRID, "pr")

    rows = []
    for raw in sweep_values:
        value = int(raw) if sweep_field == "M" else float(raw)
        base = config_template.with_params(**{sweep_field: value})

        def evaluate(pr: float) -> Optional[float]:
            return _stable_delay(base.with_params(pr=float(pr)), table, mode)

        deltas = []
        for pr in grid:
            dv = evaluate(pr)
            deltas.append(None if dv is None else dv - delay_target)
        crossings = []
        for i in range(grid.size - 1):
            a, b = deltas[i], deltas[i + 1]
            if a is None or b is None:
                continue
            if a == 0.0:
                crossings.append(float(grid[i]))
            elif (a < 0.0 < b) or (a > 0.0 > b):
                crossings.append(
                    _bisect_crossing(evaluate, float(grid[i]), float(grid[i + 1]), delay_target)
                )
        if deltas[-1] == 0.0:
            crossings.append(float(grid[-1]))
        if len(crossings) > 2:
            crossings = [crossings[0], crossings[-1]]
        rows.extend((value, pr) for pr in crossings)
    return rows


def write_locus_csv(path, delay_target: float, points) -> Path:
    """Persist locus points as (target_delay, swept_value, pr) rows."""
    from .reporting import write_csv

    return write_csv(
        path,
        ("target_delay", "swept_value", "pr"),
        [(delay_target, value, pr) for value, pr in points],
    )
