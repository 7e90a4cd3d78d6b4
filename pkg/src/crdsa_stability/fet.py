"""Mean first-entry time into a critical or saturation backlog state.

The backlog chain is truncated at a boundary state: all transition mass to
states above the boundary is treated as absorption, and the mean number of
epochs until absorption solves the dense linear system t = e + P t over the
transient states.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .channel_model import ChannelConfig, transition_matrix
from .errors import ConfigurationError
from .stability import classify

RESIDUAL_LIMIT = 1e-8


@dataclass(frozen=True, eq=False)
class FetResult:
    """Mean epochs to first exceed ``boundary_state``, per starting backlog."""

    boundary_state: int
    times: np.ndarray  # T̄_i for starting backlog i in [0, boundary_state]
    headline: float  # T̄_0, the entry time from an empty backlog
    epoch_unit: str  # "frames" (frame-based scheme) or "slots"
    headline_slots: float
    residual: float


@dataclass(frozen=True)
class FetCurvePoint:
    pr: float
    boundary: Optional[int]
    rule: str
    fet_epochs: float
    fet_slots: float
    flag: str = ""


def solve_absorbing_times(transient_matrix) -> tuple:
    """Solve t = e + P t for a sub-stochastic transient block P.

    Returns the mean absorption times and the max-norm residual of the
    linear system. A singular system means no transient state can reach
    the absorbing set.
    """
    P = np.asarray(transient_matrix, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ConfigurationError(f"transient block must be square, got {P.shape}")
    n = P.shape[0]
    A = np.eye(n) - P
    e = np.ones(n)
    try:
        with warnings.catch_warnings():
            # deep-barrier chains trip scipy's rcond heuristic even though
            # the M-matrix solve stays backward stable; we check the
            # residual ourselves instead
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            times = scipy.linalg.solve(A, e)
    except np.linalg.LinAlgError as err:
        raise RuntimeError(
            f"absorbing system over {n} states is singular ({err}); "
            "no state reaches the boundary — check that the backlog can "
            "actually grow past it (e.g. fresh arrivals are possible)"
        ) from None
    residual = float(np.max(np.abs(A @ times - e)))
    return times, residual


def solve_fet(config: ChannelConfig, boundary: int, table=None) -> FetResult:
    """First-entry time into backlog states above ``boundary``.

    Builds the transition matrix over states [0, boundary] (everything
    beyond is absorbing) and solves for the mean entry times. The headline
    value is the time from an empty backlog. ``boundary`` must be below the
    population size; a zero boundary is degenerate (the start state already
    sits on the boundary) and reports zero.
    """
    boundary = int(boundary)
    if boundary < 0 or boundary >= config.M:
        raise ConfigurationError(
            f"boundary must be in [0, M), got {boundary} with M={config.M}"
        )
    unit = "frames" if config.is_crdsa else "slots"
    if boundary == 0:
        return FetResult(0, np.zeros(1), 0.0, unit, 0.0, 0.0)
    tm = transition_matrix(config, table=table, x_max=boundary)
    times, residual = solve_absorbing_times(tm.matrix)
    # entry times can be astronomically large (deep barriers), so judge the
    # solver by the residual relative to the solution magnitude
    if residual >= RESIDUAL_LIMIT * max(1.0, float(np.max(np.abs(times)))):
        raise RuntimeError(
            f"linear-system residual {residual:.3e} is large relative to the "
            "solution; the truncated chain solve cannot be trusted"
        )
    headline = float(times[0])
    return FetResult(
        boundary_state=boundary,
        times=times,
        headline=headline,
        epoch_unit=unit,
        headline_slots=headline * config.epoch_slots,
        residual=residual,
    )


def _boundary_from_report(report, rule: str, M: int) -> tuple:
    """Pick the boundary state for a curve point; returns (boundary, flag)."""
    kind = report.classification
    if rule == "critical":
        if kind == "instable":
            return int(np.ceil(report.points[1].backlog - 1e-9)), ""
        if kind == "overloaded":
            # no critical state exists; the lone equilibrium is the
            # saturation point, so measure the time to reach that instead
            b = min(int(np.ceil(report.points[0].backlog - 1e-9)), M - 1)
            return b, "critical state absent; used saturation boundary"
        return None, "stable: no critical state"
    if rule == "saturation":
        if kind == "instable":
            n_s = report.points[2].backlog
        elif kind == "overloaded":
            n_s = report.points[0].backlog
        else:
            return None, "stable: no saturation state"
        return min(int(np.ceil(n_s - 1e-9)), M - 1), ""
    raise ConfigurationError(f"unknown boundary rule {rule!r}")


def fet_curve(
    config_template: ChannelConfig,
    pr_values,
    boundary_rule: str = "critical",
    table=None,
    mode: str = "exact",
) -> list:
    """First-entry times across a retransmission-probability sweep.

    For each pr the equilibria are recomputed, the boundary is chosen by
    ``boundary_rule``, and the absorbing solve runs. Points whose rule has
    no defining state are flagged and carry NaN times instead of failing
    the whole sweep.
    """
    if boundary_rule not in ("critical", "saturation"):
        raise ConfigurationError(f"unknown boundary rule {boundary_rule!r}")
    points = []
    for pr in pr_values:
        cfg = config_template.with_params(pr=float(pr))
        report = classify(cfg, table=table, mode=mode)
        boundary, flag = _boundary_from_report(report, boundary_rule, cfg.M)
        if boundary is None:
            points.append(
                FetCurvePoint(float(pr), None, boundary_rule, float("nan"), float("nan"), flag)
            )
            continue
        result = solve_fet(cfg, boundary, table=table)
        points.append(
            FetCurvePoint(
                pr=float(pr),
                boundary=boundary,
                rule=boundary_rule,
                fet_epochs=result.headline,
                fet_slots=result.headline_slots,
                flag=flag,
            )
        )
    return points
