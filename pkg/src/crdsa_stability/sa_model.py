"""Slotted ALOHA counterpart of the CRDSA chain: closed-form per-slot success
probability, drift, and backlog transitions for a finite population, plus the
infinite-population Poisson reference curve.

A slot succeeds iff exactly one user transmits in it; attempts are
independent Bernoulli draws (p0 for fresh users, pr for backlogged ones).
The backlog can therefore drop by at most one per slot.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import binom

from .channel_model import ChannelConfig, DriftProfile, TransitionMatrix, sa_config
from .errors import ConfigurationError


@dataclass(frozen=True)
class SaSlotModel:
    """Per-slot attempt probabilities of an SA population."""

    M: int
    p0: float
    pr: float

    def __post_init__(self):
        if self.M < 1:
            raise ConfigurationError(f"M must be >= 1, got {self.M}")
        for name in ("p0", "pr"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigurationError(f"{name} must be in [0, 1], got {v}")

    @classmethod
    def from_config(cls, config: ChannelConfig) -> "SaSlotModel":
        return cls(M=config.M, p0=config.p0, pr=config.pr)

    def as_config(self) -> ChannelConfig:
        return sa_config(self.M, self.p0, self.pr)


def sa_throughput(x_B: int, model: SaSlotModel) -> float:
    """Per-slot success probability with x_B users backlogged."""
    M, p0, pr = model.M, model.p0, model.pr
    if not 0 <= x_B <= M:
        raise ConfigurationError(f"x_B={x_B} outside [0, {M}]")
    f = M - x_B
    fresh_alone = f * p0 * (1 - p0) ** (f - 1) if f >= 1 else 0.0
    back_alone = x_B * pr * (1 - pr) ** (x_B - 1) if x_B >= 1 else 0.0
    return fresh_alone * (1 - pr) ** x_B + back_alone * (1 - p0) ** f


def sa_drift(x_B: int, model: SaSlotModel) -> float:
    """Expected backlog change per slot: arrivals minus successes."""
    return (model.M - x_B) * model.p0 - sa_throughput(x_B, model)


def sa_poisson_throughput(load: float) -> float:
    """Infinite-population reference S = G * exp(-G)."""
    if load < 0:
        raise ConfigurationError(f"load must be nonnegative, got {load}")
    return load * np.exp(-load)


def sa_transition_matrix(model: SaSlotModel, x_max: int) -> TransitionMatrix:
    """One-slot backlog transition matrix over states [0, x_max].

    Row n: P(n->n-1) = n*pr*(1-pr)^(n-1)*(1-p0)^(M-n);
    P(n->n+1) = (M-n)*p0*(1-p0)^(M-n-1)*(1-(1-pr)^n);
    P(n->n+k) = Binom(M-n, p0) at k for k >= 2; the rest stays put.
    Mass toward states above x_max is dropped (absorbed by the caller).
    """
    M, p0, pr = model.M, model.p0, model.pr
    if not 0 <= x_max <= M:
        raise ConfigurationError(f"x_max={x_max} outside [0, {M}]")
    full = np.zeros((x_max + 1, M + 1))
    for n in range(x_max + 1):
        f = M - n
        pf = binom.pmf(np.arange(f + 1), f, p0) if f >= 1 else np.ones(1)
        pb1 = n * pr * (1 - pr) ** (n - 1) if n >= 1 else 0.0
        no_back = (1 - pr) ** n
        row = full[n]
        if n >= 1:
            row[n - 1] = pb1 * (1 - p0) ** f
        stay = pf[0] * (1 - pb1)
        if f >= 1:
            stay += pf[1] * no_back
            row[n + 1] = pf[1] * (1 - no_back)
            row[n + 2 : n + f + 1] = pf[2:]
        row[n] = stay
    return TransitionMatrix(
        x_max=x_max, matrix=full[:, : x_max + 1].copy(), config=model.as_config()
    )


def sa_drift_profile(model: SaSlotModel) -> DriftProfile:
    """Drift (users/slot) and throughput (packets/slot) over all states."""
    states = range(model.M + 1)
    throughput = np.array([sa_throughput(n, model) for n in states])
    drift = (model.M - np.arange(model.M + 1)) * model.p0 - throughput
    return DriftProfile(
        config=model.as_config(), mode="closed_form", drift=drift, throughput=throughput
    )
