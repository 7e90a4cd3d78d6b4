"""Scheme-agnostic channel abstraction.

Houses the configuration record, the cross-scheme traffic conversion, and the
shared result containers (transition matrices, drift profiles). Dispatch
routes CRDSA to the q-table-driven chain in `markov` and Slotted ALOHA to the
closed forms in `sa_model`, so stability, optimization, and first-entry-time
analyses stay scheme-blind.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError

CRDSA = "crdsa"
SA = "sa"


@dataclass(frozen=True)
class ChannelConfig:
    """Full parameter set of one random-access configuration.

    CRDSA epochs are frames of num_slots slots; SA epochs are single slots.
    p0 is the fresh-transmission probability per epoch, pr the retransmission
    probability per epoch.
    """

    scheme: str
    M: int
    p0: float
    pr: float
    d: int | None = None
    num_slots: int | None = None
    max_iterations: int | None = None

    def __post_init__(self):
        if self.scheme not in (CRDSA, SA):
            raise ConfigurationError(f"unknown scheme {self.scheme!r}")
        if self.M < 1:
            raise ConfigurationError(f"M must be >= 1, got {self.M}")
        for name in ("p0", "pr"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigurationError(f"{name} must be in [0, 1], got {v}")
        if self.scheme == CRDSA:
            if self.d is None or self.num_slots is None or self.max_iterations is None:
                raise ConfigurationError("crdsa requires d, num_slots, and max_iterations")
            if self.d < 1 or self.d > self.num_slots:
                raise ConfigurationError(
                    f"need 1 <= d <= num_slots, got d={self.d}, num_slots={self.num_slots}"
                )
            if self.max_iterations < 1:
                raise ConfigurationError(
                    f"max_iterations must be >= 1, got {self.max_iterations}"
                )
        else:
            if self.d is not None or self.num_slots is not None or self.max_iterations is not None:
                raise ConfigurationError("sa takes no d/num_slots/max_iterations")

    @property
    def is_crdsa(self) -> bool:
        return self.scheme == CRDSA

    @property
    def epoch_slots(self) -> int:
        """Slots per decision epoch: a frame for CRDSA, one slot for SA."""
        return self.num_slots if self.scheme == CRDSA else 1

    def with_params(self, **kwargs) -> "ChannelConfig":
        return replace(self, **kwargs)


def crdsa_config(
    M: int, p0: float, pr: float, d: int = 2, num_slots: int = 100, max_iterations: int = 10
) -> ChannelConfig:
    return ChannelConfig(
        scheme=CRDSA, M=M, p0=p0, pr=pr, d=d, num_slots=num_slots, max_iterations=max_iterations
    )


def sa_config(M: int, p0: float, pr: float) -> ChannelConfig:
    return ChannelConfig(scheme=SA, M=M, p0=p0, pr=pr)


def convert_p0_sa(p0_crdsa: float, num_slots: int) -> float:
    """Per-slot fresh-traffic probability matching a per-frame CRDSA p0."""
    if not 0.0 <= p0_crdsa <= 1.0:
        raise ConfigurationError(f"p0 must be in [0, 1], got {p0_crdsa}")
    if num_slots < 1:
        raise ConfigurationError(f"num_slots must be >= 1, got {num_slots}")
    return p0_crdsa / num_slots


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    """Backlog transition probabilities P(x' | x) over states [0, x_max].

    When x_max < M, mass toward higher states is dropped (rows then sum to
    less than one); at x_max = M rows are stochastic to 1e-9.
    truncation_bound tracks binomial tail mass dropped during construction.
    row_visits carries observation counts for empirical matrices.
    """

    x_max: int
    matrix: np.ndarray
    config: ChannelConfig
    table_ref: object = None
    truncation_bound: float = 0.0
    row_visits: np.ndarray | None = None

    @property
    def states(self) -> np.ndarray:
        return np.arange(self.x_max + 1)


@dataclass(frozen=True, eq=False)
class DriftProfile:
    """Per-state expected backlog change (users/epoch) and throughput
    (packets/slot) over x in [0, M]."""

    config: ChannelConfig
    mode: str  # "exact" | "approx" | "closed_form"
    drift: np.ndarray
    throughput: np.ndarray


def drift_profile(config: ChannelConfig, table=None, mode: str = "exact") -> DriftProfile:
    """Scheme dispatch for the full drift profile."""
    if config.is_crdsa:
        from . import markov

        if table is None:
            raise ConfigurationError("crdsa drift profile requires a success table")
        return markov.drift_profile(config, table, mode=mode)
    from . import sa_model

    return sa_model.sa_drift_profile(sa_model.SaSlotModel.from_config(config))


def transition_matrix(config: ChannelConfig, table=None, x_max: int | None = None) -> TransitionMatrix:
    """Scheme dispatch for the backlog transition matrix."""
    if x_max is None:
        x_max = config.M
    if config.is_crdsa:
        from . import markov

        if table is None:
            raise ConfigurationError("crdsa transition matrix requires a success table")
        return markov.build_transition_matrix(config, table, x_max=x_max)
    from . import sa_model

    return sa_model.sa_transition_matrix(sa_model.SaSlotModel.from_config(config), x_max=x_max)
