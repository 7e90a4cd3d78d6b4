"""Equilibrium analysis of the backlog drift profile.

Operating points are the zeros of the expected per-epoch backlog drift.  A
channel is classified by how many equilibria the drift admits and where they
sit: one low-backlog root means a stable channel, the classic three-root
pattern (stable / unstable / stable) means a bistable channel that can
collapse, and a lone root near saturation means the channel is overloaded.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .channel_model import ChannelConfig, DriftProfile, drift_profile
from .errors import ConfigurationError, NotApplicableError

# Drift magnitudes below this (users per epoch) are treated as zero when
# deciding whether the profile touches the axis without crossing it.
EPS_DRIFT = 1e-3

# A single equilibrium this deep into the population counts as saturation.
OVERLOAD_FRACTION = 0.8


@dataclass(frozen=True)
class EquilibriumPoint:
    """A zero of the drift, with its local character on the profile."""

    backlog: float
    local_stability: str  # "stable" or "unstable"
    throughput: float  # packets per slot at this backlog


@dataclass(frozen=True, eq=False)
class StabilityReport:
    classification: str  # "stable", "instable", or "overloaded"
    points: tuple
    profile: DriftProfile

    @property
    def operating_point(self) -> EquilibriumPoint:
        return self.points[0]


@dataclass(frozen=True)
class DelayReport:
    """Little's-law backlog delay at the stable operating point."""

    n_0: float  # equilibrium backlog (packets)
    S_0: float  # equilibrium throughput (packets per slot)
    delay_slots: float
    delay_frames: Optional[float]  # None when the epoch is a single slot
    note: str = ""


def _interp_throughput(profile: DriftProfile, x: float) -> float:
    states = np.arange(profile.drift.size)
    return float(np.interp(x, states, profile.throughput))


def find_equilibria(profile: DriftProfile) -> list:
    """Locate the zeros of the drift profile in increasing backlog order.

    Sign changes between adjacent states are resolved by linear
    interpolation.  Exact grid zeros are classified by the neighbouring
    signs; a zero touched from one side only is a merged root and yields
    a coincident stable/unstable pair so that downstream classification
    sees the same point count as an infinitesimally perturbed profile.
    """
    d = np.asarray(profile.drift, dtype=float)
    n = d.size
    if n == 0:
        raise ConfigurationError("drift profile has no states")

    if np.all(d <= 0.0):
        # Backlog only ever drains: the channel idles at the first state
        # where drift is effectively zero (the empty-backlog point).
        near = np.flatnonzero(np.abs(d) < EPS_DRIFT)
        x0 = int(near[0]) if near.size else int(np.argmax(d))
        return [EquilibriumPoint(float(x0), "stable", _interp_throughput(profile, x0))]
    if np.all(d >= 0.0):
        # Backlog only ever grows: everything piles up at saturation.
        x0 = n - 1
        return [EquilibriumPoint(float(x0), "stable", _interp_throughput(profile, x0))]

    points = []

    def add(x: float, kind: str) -> None:
        points.append(EquilibriumPoint(float(x), kind, _interp_throughput(profile, x)))

    i = 0
    while i < n - 1:
        a, b = d[i], d[i + 1]
        if a > 0.0 and b < 0.0:
            add(i + a / (a - b), "stable")
        elif a < 0.0 and b > 0.0:
            add(i + a / (a - b), "unstable")
        elif b == 0.0 and a != 0.0:
            # Zero run starting at i+1; place the root on its first state.
            j = i + 1
            while j + 1 < n and d[j + 1] == 0.0:
                j += 1
            # Boundary conventions: the reflecting floor at x=0 behaves like
            # positive pressure from below, saturation like negative beyond M.
            after = d[j + 1] if j + 1 < n else -1.0
            if a > 0.0 and after < 0.0:
                add(i + 1, "stable")
            elif a < 0.0 and after > 0.0:
                add(i + 1, "unstable")
            elif a > 0.0 and after > 0.0:
                add(i + 1, "stable")
                add(i + 1, "unstable")
            else:  # touched from below on both sides
                add(i + 1, "unstable")
                add(i + 1, "stable")
            i = j
        i += 1

    if d[0] == 0.0:
        # Leading zero run: mixed profiles guarantee a nonzero entry later.
        j = 0
        while d[j + 1] == 0.0:
            j += 1
        if d[j + 1] < 0.0:
            points.insert(0, EquilibriumPoint(0.0, "stable", _interp_throughput(profile, 0)))
        else:
            points.insert(0, EquilibriumPoint(0.0, "stable", _interp_throughput(profile, 0)))
            points.insert(1, EquilibriumPoint(0.0, "unstable", _interp_throughput(profile, 0)))

    return points


def _tangency_index(d: np.ndarray, root: float) -> Optional[int]:
    """Interior local maximum of drift beyond ``root`` that touches zero.

    The profile must first pull clearly away from the axis; a flat shelf
    adjacent to the operating point is not a tangency.
    """
    n = d.size
    start = None
    for i in range(int(np.ceil(root)), n):
        if d[i] < -EPS_DRIFT:
            start = i + 1
            break
    if start is None:
        return None
    best = None
    for i in range(start, n - 1):
        if d[i] >= d[i - 1] and d[i] >= d[i + 1] and -EPS_DRIFT < d[i] <= 0.0:
            if best is None or d[i] > d[best]:
                best = i
    return best


def classify_profile(profile: DriftProfile) -> StabilityReport:
    """Classify a drift profile as stable, instable, or overloaded."""
    points = find_equilibria(profile)
    M = profile.config.M

    if len(points) == 1:
        pt = points[0]
        if pt.backlog >= OVERLOAD_FRACTION * M:
            return StabilityReport("overloaded", tuple(points), profile)
        tangent = _tangency_index(profile.drift, pt.backlog)
        if tangent is not None:
            # The drift grazes the axis without crossing: a merged
            # unstable/stable pair sits at the graze point, so the channel
            # behaves like a bistable one for any perturbation.
            thr = _interp_throughput(profile, tangent)
            double = (
                EquilibriumPoint(float(tangent), "unstable", thr),
                EquilibriumPoint(float(tangent), "stable", thr),
            )
            return StabilityReport("instable", (pt, *double), profile)
        return StabilityReport("stable", tuple(points), profile)

    if len(points) == 3:
        return StabilityReport("instable", tuple(points), profile)

    # Noisy or degenerate profiles: keep the canonical three representatives.
    stable_pts = [p for p in points if p.local_stability == "stable"]
    unstable_after = None
    if stable_pts:
        unstable_after = next(
            (
                p
                for p in points
                if p.local_stability == "unstable" and p.backlog >= stable_pts[0].backlog
            ),
            None,
        )
    if stable_pts and unstable_after is not None:
        last_stable = next(
            (
                p
                for p in reversed(stable_pts)
                if p.backlog >= unstable_after.backlog
            ),
            None,
        )
        if last_stable is not None and last_stable is not stable_pts[0]:
            return StabilityReport(
                "instable", (stable_pts[0], unstable_after, last_stable), profile
            )
    # No coherent bistable pattern: fall back on the dominant stable point.
    anchor = stable_pts[0] if stable_pts else points[0]
    reduced = StabilityReport("stable", (anchor,), profile)
    if anchor.backlog >= OVERLOAD_FRACTION * M:
        reduced = StabilityReport("overloaded", (anchor,), profile)
    return reduced


def classify(config: ChannelConfig, table=None, mode: str = "exact") -> StabilityReport:
    """Build the drift profile for ``config`` and classify it."""
    return classify_profile(drift_profile(config, table=table, mode=mode))


def expected_delay(
    config: Optional[ChannelConfig] = None,
    table=None,
    mode: str = "exact",
    profile: Optional[DriftProfile] = None,
) -> DelayReport:
    """Average backlog delay at the stable operating point, via Little's law.

    Delay counts the epochs a packet spends waiting between its first
    transmission and the epoch it finally succeeds, so a packet that goes
    through on the first attempt contributes zero.  Raises
    :class:`NotApplicableError` when the channel is not stable.
    """
    if profile is None:
        if config is None:
            raise ConfigurationError("expected_delay needs a config or a drift profile")
        profile = drift_profile(config, table=table, mode=mode)
    report = classify_profile(profile)
    if report.classification != "stable":
        raise NotApplicableError(
            "expected delay is defined only for a stable channel; "
            f"this one is {report.classification}"
        )
    cfg = profile.config
    n_0 = report.points[0].backlog
    # At a drift root, throughput balances fresh arrivals exactly.
    S_0 = (cfg.M - n_0) * cfg.p0 / cfg.epoch_slots
    if n_0 == 0.0 and S_0 == 0.0:
        delay_slots = 0.0
    else:
        delay_slots = n_0 / S_0
    note = ""
    if n_0 < 1.0:
        note = (
            "equilibrium backlog is below one packet: most packets succeed on "
            "their first attempt, and the delay excludes that minimum service time"
        )
    delay_frames = delay_slots / cfg.epoch_slots if cfg.is_crdsa else None
    return DelayReport(
        n_0=n_0,
        S_0=S_0,
        delay_slots=delay_slots,
        delay_frames=delay_frames,
        note=note,
    )


def stability_boundary_p0(
    template: ChannelConfig,
    table=None,
    mode: str = "exact",
    p0_lo: float = 1e-4,
    p0_hi: float = 0.2,
    tol: float = 1e-4,
) -> float:
    """Largest fresh-arrival probability that keeps the channel stable.

    Bisects on the classification between ``p0_lo`` (must classify stable)
    and ``p0_hi`` (must not).  Returns the midpoint of the final bracket.
    """

    def stable_at(p0: float) -> bool:
        cfg = template.with_params(p0=p0)
        return classify(cfg, table=table, mode=mode).classification == "stable"

    if not stable_at(p0_lo):
        raise ConfigurationError(f"lower bracket p0={p0_lo} does not classify stable")
    if stable_at(p0_hi):
        raise ConfigurationError(f"upper bracket p0={p0_hi} still classifies stable")
    lo, hi = p0_lo, p0_hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if stable_at(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
