"""Equilibrium finding, stability classification, and Little's-law delay."""

import numpy as np
import pytest

from crdsa_stability.channel_model import DriftProfile, crdsa_config, sa_config
from crdsa_stability.errors import ConfigurationError, NotApplicableError
from crdsa_stability.stability import (
    EPS_DRIFT,
    classify,
    classify_profile,
    expected_delay,
    find_equilibria,
    stability_boundary_p0,
)


def synthetic_profile(drift, M=None, p0=0.01, epoch_slots=1):
    """Wrap a raw drift array in a DriftProfile with implied throughput."""
    drift = np.asarray(drift, dtype=float)
    M = len(drift) - 1 if M is None else M
    states = np.arange(len(drift))
    throughput = ((M - states) * p0 - drift) / epoch_slots
    cfg = sa_config(M=M, p0=p0, pr=0.5)
    return DriftProfile(config=cfg, mode="closed_form", drift=drift, throughput=throughput)


# ------------------------------------------------------------- equilibria


def test_single_downcross_interpolated():
    prof = synthetic_profile([1.0, 1.0, -1.0, -2.0])
    (pt,) = find_equilibria(prof)
    assert pt.backlog == pytest.approx(1.5)
    assert pt.local_stability == "stable"
    # throughput interpolates linearly between bracketing states
    assert pt.throughput == pytest.approx(np.interp(1.5, range(4), prof.throughput))


def test_three_crossings_follow_stable_unstable_stable_pattern():
    prof = synthetic_profile([2.0, -1.0, -0.5, 0.5, 1.0, -3.0, -4.0])
    pts = find_equilibria(prof)
    assert len(pts) == 3
    assert [p.local_stability for p in pts] == ["stable", "unstable", "stable"]
    assert pts[0].backlog < pts[1].backlog < pts[2].backlog
    assert pts[1].backlog == pytest.approx(2.5)


def test_nonnegative_drift_pins_saturation_end():
    prof = synthetic_profile([1.0, 0.5, 0.2, 0.0])
    pts = find_equilibria(prof)
    assert len(pts) == 1
    assert pts[0].backlog == 3.0


def test_nonpositive_drift_takes_first_near_zero_state():
    prof = synthetic_profile([0.0, -0.4, -0.9])
    pts = find_equilibria(prof)
    assert len(pts) == 1
    assert pts[0].backlog == 0.0
    assert pts[0].local_stability == "stable"


def test_exact_grid_zero_is_a_root():
    prof = synthetic_profile([1.0, 0.0, -1.0])
    (pt,) = find_equilibria(prof)
    assert pt.backlog == 1.0
    assert pt.local_stability == "stable"


def test_empty_profile_rejected():
    with pytest.raises(ConfigurationError):
        find_equilibria(synthetic_profile([]))


def test_local_stability_is_literal_on_the_profile():
    drift = np.array([3.0, 1.0, -1.0, -0.2, 0.3, 0.8, -2.0, -5.0])
    pts = find_equilibria(synthetic_profile(drift))
    for pt in pts:
        lo = int(np.floor(pt.backlog))
        hi = min(lo + 1, len(drift) - 1)
        if pt.local_stability == "stable":
            assert drift[lo] >= 0 >= drift[hi]
        else:
            assert drift[lo] <= 0 <= drift[hi]


# ----------------------------------------------------------- classification


def test_classify_pure_drain_is_stable_at_zero():
    report = classify(sa_config(M=20, p0=0.0, pr=0.4))
    assert report.classification == "stable"
    assert len(report.points) == 1
    assert report.points[0].backlog == 0.0


def test_classify_three_roots_instable():
    report = classify_profile(synthetic_profile([2.0, -1.0, 0.5, 1.0, -3.0, -4.0]))
    assert report.classification == "instable"
    assert len(report.points) == 3


def test_classify_overload_threshold():
    # single root at 9 of M=10 -> beyond 0.8 M
    drift = np.array([1.0] * 9 + [-1.0, -1.0])
    report = classify_profile(synthetic_profile(drift))
    assert report.classification == "overloaded"


def test_classify_tangency_synthesizes_double_point():
    # dips to within EPS_DRIFT of zero after the operating point, no crossing
    drift = np.array([1.0, -1.0, -0.8, -EPS_DRIFT / 3, -0.7, -1.5, -2.0])
    report = classify_profile(synthetic_profile(drift))
    assert report.classification == "instable"
    assert len(report.points) == 3
    assert report.points[1].backlog == report.points[2].backlog == 3.0
    assert [p.local_stability for p in report.points] == ["stable", "unstable", "stable"]


def test_classify_clear_negative_dip_stays_stable():
    drift = np.array([1.0, -1.0, -0.8, -0.2, -0.7, -1.5, -2.0])
    report = classify_profile(synthetic_profile(drift))
    assert report.classification == "stable"
    assert len(report.points) == 1


def test_many_noise_crossings_collapse_to_three():
    drift = np.array([2.0, -0.5, 0.01, -0.01, 0.02, -0.6, 0.5, 1.0, -2.0, -3.0])
    report = classify_profile(synthetic_profile(drift))
    assert report.classification == "instable"
    assert len(report.points) == 3
    assert [p.local_stability for p in report.points] == ["stable", "unstable", "stable"]


# ------------------------------------------------------------------- delay


def test_delay_requires_stability():
    drift = np.array([1.0] * 9 + [-1.0, -1.0])
    with pytest.raises(NotApplicableError, match="overloaded"):
        expected_delay(profile=synthetic_profile(drift))


def test_delay_identities_on_interpolated_root():
    prof = synthetic_profile([1.0, 1.0, -1.0, -2.0], p0=0.3)
    report = expected_delay(profile=prof)
    assert report.delay_slots * report.S_0 == pytest.approx(report.n_0, rel=1e-12)
    # at a drift root the interpolated throughput equals arrivals
    assert report.S_0 == pytest.approx((prof.config.M - report.n_0) * prof.config.p0)


def test_delay_lone_sa_user_is_zero():
    report = expected_delay(config=sa_config(M=1, p0=0.7, pr=0.4))
    assert report.n_0 == 0.0
    assert report.delay_slots == 0.0
    assert report.delay_frames is None
    assert "minimum service time" in report.note


def test_delay_frames_reported_for_frame_epochs(small_table):
    cfg = crdsa_config(M=15, p0=0.02, pr=0.3, d=2, num_slots=20)
    report = expected_delay(config=cfg, table=small_table)
    assert report.delay_frames == pytest.approx(report.delay_slots / 20)
    assert report.delay_slots == pytest.approx(report.n_0 / report.S_0)


def test_boundary_search_brackets_transition():
    # SA, M=80, pr=0.02: find smallest p0 whose classification leaves "stable"
    template = sa_config(M=80, p0=1e-4, pr=0.02)
    p_star = stability_boundary_p0(template, p0_lo=1e-4, p0_hi=0.08, tol=1e-5)
    assert 0.005 < p_star < 0.05
    assert classify(template.with_params(p0=p_star * 0.9)).classification == "stable"
    assert classify(template.with_params(p0=min(p_star * 1.1, 0.08))).classification != "stable"


def test_retransmission_hump_bistability_detected():
    # aggressive retransmission with light arrivals: service collapses past
    # the hump, so a second basin of attraction appears near saturation
    report = classify(sa_config(M=80, p0=1e-4, pr=0.25))
    assert report.classification == "instable"
    assert [p.local_stability for p in report.points] == ["stable", "unstable", "stable"]
    assert report.points[0].backlog < 1.0
    assert report.points[2].backlog == pytest.approx(80.0, abs=0.1)
