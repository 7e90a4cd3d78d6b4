"""Stability, delay, and first-entry-time analysis of CRDSA and Slotted ALOHA
random access with a finite user population.

The package estimates the per-frame success distribution q(tau, upsilon) of
CRDSA by Monte Carlo, drives a backlog Markov chain with it (closed forms for
Slotted ALOHA), classifies channel stability from the drift profile, computes
Little's-law delay, optimizes the retransmission probability, solves mean
first-entry times into the critical backlog region on an absorbing chain, and
cross-validates everything with a closed-loop population simulator.
"""

__version__ = "0.1.0"

from .channel_model import (  # noqa: F401
    ChannelConfig,
    DriftProfile,
    TransitionMatrix,
    convert_p0_sa,
    crdsa_config,
    sa_config,
)
from .errors import (  # noqa: F401
    ConfigurationError,
    InfeasibleError,
    NotApplicableError,
    TableFormatError,
    TableRangeError,
)
from .fet import (  # noqa: F401
    FetCurvePoint,
    FetResult,
    fet_curve,
    solve_absorbing_times,
    solve_fet,
)
from .mc_validate import (  # noqa: F401
    EmpiricalFet,
    FrameOutcome,
    RunSummary,
    RunTrace,
    empirical_delay,
    empirical_fet,
    empirical_transition_matrix,
    run_batch,
    run_closed_loop,
    trace_summary,
)
from .optimize import (  # noqa: F401
    DEFAULT_P0_GRID,
    DEFAULT_PR_GRID,
    OptimizationResult,
    delay_locus,
    max_population,
    max_traffic,
    optimize_pr,
    write_locus_csv,
)
from .sic_sim import FrameLayout, SicOutcome, place_bursts, run_sic  # noqa: F401
from .stability import (  # noqa: F401
    DelayReport,
    EquilibriumPoint,
    StabilityReport,
    classify,
    classify_profile,
    expected_delay,
    find_equilibria,
    stability_boundary_p0,
)
from .success_model import (  # noqa: F401
    SuccessTable,
    ThroughputCurve,
    avg_success_prob,
    estimate_success_table,
    load_table,
    query_q,
    save_table,
    throughput_curve,
)
