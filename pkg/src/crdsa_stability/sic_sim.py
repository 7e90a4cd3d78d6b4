"""Single CRDSA frame mechanics: replica placement and iterative
interference-cancellation peeling.

This is the readable reference implementation used directly by small-scale
analyses and tests; the success-table estimator runs the same semantics
through the compiled kernel in `_kernels`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class FrameLayout:
    """Replica placements for one frame: row u holds user u's d distinct slots."""

    num_slots: int
    placements: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if self.num_slots < 1:
            raise ConfigurationError(f"num_slots must be positive, got {self.num_slots}")
        for u, slots in enumerate(self.placements):
            if len(set(slots)) != len(slots):
                raise ConfigurationError(f"user {u} has duplicate replica slots {slots}")
            if any(s < 0 or s >= self.num_slots for s in slots):
                raise ConfigurationError(
                    f"user {u} has a slot outside [0, {self.num_slots}): {slots}"
                )

    @property
    def num_users(self) -> int:
        return len(self.placements)


@dataclass(frozen=True)
class SicOutcome:
    decoded_count: int
    iterations_used: int


def place_bursts(
    num_users: int, d: int, num_slots: int, rng: np.random.Generator
) -> FrameLayout:
    """Assign each user d distinct slots uniformly at random, independently
    across users."""
    if num_users < 0:
        raise ConfigurationError(f"num_users must be nonnegative, got {num_users}")
    if d < 1 or d > num_slots:
        raise ConfigurationError(f"need 1 <= d <= num_slots, got d={d}, num_slots={num_slots}")
    placements = tuple(
        tuple(int(s) for s in rng.choice(num_slots, size=d, replace=False))
        for _ in range(num_users)
    )
    return FrameLayout(num_slots=num_slots, placements=placements)


def run_sic(layout: FrameLayout, max_iterations: int) -> SicOutcome:
    """Iterative parallel peeling on a collision channel.

    In each iteration every slot holding exactly one not-yet-decoded burst
    decodes its user; all replicas of the users decoded in that iteration are
    then removed. Stops when an iteration decodes nobody or the iteration
    budget is exhausted. Perfect cancellation, no capture.
    """
    if max_iterations < 0:
        raise ConfigurationError(f"max_iterations must be nonnegative, got {max_iterations}")
    occupancy = np.zeros(layout.num_slots, dtype=np.int64)
    for slots in layout.placements:
        for s in slots:
            occupancy[s] += 1
    decoded = [False] * layout.num_users
    decoded_count = 0
    iterations_used = 0
    for _ in range(max_iterations):
        newly = [
            u
            for u, slots in enumerate(layout.placements)
            if not decoded[u] and any(occupancy[s] == 1 for s in slots)
        ]
        if not newly:
            break
        for u in newly:
            decoded[u] = True
            for s in layout.placements[u]:
                occupancy[s] -= 1
        decoded_count += len(newly)
        iterations_used += 1
        if decoded_count == layout.num_users:
            break
    return SicOutcome(decoded_count=decoded_count, iterations_used=iterations_used)
