"""The CRDSA backlog Markov chain driven by an estimated success table:
joint pmf, state transition probabilities, exact and interpolated-average
expected throughput, and per-frame drift.

Binomial factors come from scipy (log-space internally); summations drop
binomial tail entries below 1e-15, and the dropped mass is tracked on the
result rather than silently ignored.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.stats import binom

from .channel_model import ChannelConfig, DriftProfile, TransitionMatrix
from .errors import ConfigurationError, TableRangeError
from .success_model import SuccessTable, avg_success_prob

TRUNC_EPS = 1e-15


def _require_crdsa(config: ChannelConfig):
    if not config.is_crdsa:
        raise ConfigurationError("markov operations apply to crdsa configurations")


def _require_coverage(config: ChannelConfig, table: SuccessTable):
    if table.tau_max < config.M:
        raise TableRangeError(
            f"table covers tau <= {table.tau_max} but up to M={config.M} users may attempt"
        )


def _pmf_window(n: int, p: float) -> tuple[int, np.ndarray, float]:
    """Binomial(n, p) pmf restricted to entries >= TRUNC_EPS.

    Returns (lowest kept index, kept values, dropped tail mass).
    """
    if n == 0:
        return 0, np.ones(1), 0.0
    pmf = binom.pmf(np.arange(n + 1), n, p)
    keep = np.flatnonzero(pmf >= TRUNC_EPS)
    lo, hi = int(keep[0]), int(keep[-1])
    dropped = float(pmf[:lo].sum() + pmf[hi + 1 :].sum())
    return lo, pmf[lo : hi + 1], dropped


def joint_pmf(
    phi: int, rho: int, upsilon: int, x_B: int, config: ChannelConfig, table: SuccessTable
) -> float:
    """P(phi fresh attempts, rho retransmissions, upsilon successes | x_B)."""
    _require_crdsa(config)
    M = config.M
    if not 0 <= x_B <= M:
        raise ConfigurationError(f"x_B={x_B} outside [0, {M}]")
    if not 0 <= phi <= M - x_B:
        raise ConfigurationError(f"phi={phi} outside [0, {M - x_B}]")
    if not 0 <= rho <= x_B:
        raise ConfigurationError(f"rho={rho} outside [0, {x_B}]")
    if not 0 <= upsilon <= phi + rho:
        raise ConfigurationError(f"upsilon={upsilon} outside [0, {phi + rho}]")
    if phi + rho > table.tau_max:
        raise TableRangeError(f"tau={phi + rho} exceeds table range {table.tau_max}")
    return float(
        binom.pmf(phi, M - x_B, config.p0)
        * binom.pmf(rho, x_B, config.pr)
        * table.probs[phi + rho, upsilon]
    )


def transition_prob(
    x_B: int, x_B_next: int, config: ChannelConfig, table: SuccessTable
) -> float:
    """P(x_B -> x_B_next) summed over feasible (phi, rho) with
    upsilon = phi + x_B - x_B_next."""
    _require_crdsa(config)
    _require_coverage(config, table)
    M = config.M
    if not (0 <= x_B <= M and 0 <= x_B_next <= M):
        raise ConfigurationError(f"states ({x_B}, {x_B_next}) outside [0, {M}]")
    bf = binom.pmf(np.arange(M - x_B + 1), M - x_B, config.p0)
    br = binom.pmf(np.arange(x_B + 1), x_B, config.pr)
    # upsilon <= phi + rho reduces to rho >= x_B - x_B_next for every phi
    rho_lo = max(0, x_B - x_B_next)
    rhos = np.arange(rho_lo, x_B + 1)
    total = 0.0
    for phi in range(max(0, x_B_next - x_B), M - x_B + 1):
        upsilon = phi + x_B - x_B_next
        total += bf[phi] * float(br[rho_lo:] @ table.probs[phi + rhos, upsilon])
    return total


def build_transition_matrix(
    config: ChannelConfig, table: SuccessTable, x_max: int | None = None
) -> TransitionMatrix:
    """Transition matrix over [0, x_max]^2; mass toward states above x_max is
    dropped, which realizes the absorbing truncation used by the FET solver.

    Each row compounds the fresh/backlogged attempt binomials per total
    attempt count tau and correlates them with the q row by one convolution.
    """
    _require_crdsa(config)
    _require_coverage(config, table)
    M = config.M
    if x_max is None:
        x_max = M
    if not 0 <= x_max <= M:
        raise ConfigurationError(f"x_max={x_max} outside [0, {M}]")
    matrix = np.zeros((x_max + 1, x_max + 1))
    worst_drop = 0.0
    for x in range(x_max + 1):
        bf_lo, bf, bf_drop = _pmf_window(M - x, config.p0)
        br_lo, br, br_drop = _pmf_window(x, config.pr)
        worst_drop = max(worst_drop, bf_drop + br_drop)
        bf_hi = bf_lo + len(bf) - 1
        br_hi = br_lo + len(br) - 1
        row = matrix[x]
        for tau in range(bf_lo + br_lo, bf_hi + br_hi + 1):
            phi_lo = max(bf_lo, tau - br_hi)
            phi_hi = min(bf_hi, tau - br_lo)
            if phi_lo > phi_hi:
                continue
            w = bf[phi_lo - bf_lo : phi_hi - bf_lo + 1] * (
                br[tau - phi_hi - br_lo : tau - phi_lo - br_lo + 1][::-1]
            )
            conv = np.convolve(w, table.probs[tau, : tau + 1][::-1])
            # conv index j lands at x' = x + phi_lo + j - tau
            start = x + phi_lo - tau
            s = max(0, -start)
            e = min(len(conv), x_max + 1 - start)
            if s < e:
                row[start + s : start + e] += conv[s:e]
    return TransitionMatrix(
        x_max=x_max, matrix=matrix, config=config, table_ref=table, truncation_bound=worst_drop
    )


def expected_throughput_exact(x_B: int, config: ChannelConfig, table: SuccessTable) -> float:
    """Packets/slot from the full expectation over (phi, rho, upsilon)."""
    _require_crdsa(config)
    _require_coverage(config, table)
    M = config.M
    if not 0 <= x_B <= M:
        raise ConfigurationError(f"x_B={x_B} outside [0, {M}]")
    bf_lo, bf, _ = _pmf_window(M - x_B, config.p0)
    br_lo, br, _ = _pmf_window(x_B, config.pr)
    p_tau = np.convolve(bf, br)
    taus = np.arange(bf_lo + br_lo, bf_lo + br_lo + len(p_tau))
    return float(p_tau @ table.mean_decoded[taus]) / config.num_slots


def expected_throughput_approx(x_B: int, config: ChannelConfig, table: SuccessTable) -> float:
    """Packets/slot via the average success probability evaluated at the
    expected (generally fractional) attempt count."""
    _require_crdsa(config)
    _require_coverage(config, table)
    attempts = (config.M - x_B) * config.p0 + x_B * config.pr
    return attempts * avg_success_prob(table, attempts) / config.num_slots


def drift(
    x_B: int, config: ChannelConfig, table: SuccessTable, mode: str = "exact"
) -> float:
    """Expected backlog change per frame: (M - x_B) p0 - N_s S(x_B)."""
    if mode == "exact":
        s = expected_throughput_exact(x_B, config, table)
    elif mode == "approx":
        s = expected_throughput_approx(x_B, config, table)
    else:
        raise ConfigurationError(f"unknown throughput mode {mode!r}")
    return (config.M - x_B) * config.p0 - config.num_slots * s


@lru_cache(maxsize=4096)
def drift_profile(
    config: ChannelConfig, table: SuccessTable, mode: str = "exact"
) -> DriftProfile:
    """Drift and throughput over all states in one pass, cached per
    (config, table, mode). Tables hash by identity; configs by value."""
    _require_crdsa(config)
    _require_coverage(config, table)
    M = config.M
    if mode == "exact":
        throughput = np.array(
            [expected_throughput_exact(x, config, table) for x in range(M + 1)]
        )
    elif mode == "approx":
        throughput = np.array(
            [expected_throughput_approx(x, config, table) for x in range(M + 1)]
        )
    else:
        raise ConfigurationError(f"unknown throughput mode {mode!r}")
    states = np.arange(M + 1)
    values = (M - states) * config.p0 - config.num_slots * throughput
    return DriftProfile(config=config, mode=mode, drift=values, throughput=throughput)
