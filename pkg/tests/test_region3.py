import os

import numpy as np
import pytest

from flowcsma import (
    FluidState,
    SaturationConstants,
    TrafficProfile,
    fluid_drift,
    fluid_trajectory,
    region3_verdict,
    symmetric_boundary,
)
from flowcsma.oracle import read_constants_fixture

FIXTURE = os.path.join(os.path.dirname(__file__), "fixtures", "saturation_constants.txt")


def explicit_constants(pi0=0.3, pi13=0.4, pi21=0.37, pi23=0.41):
    return SaturationConstants(
        pi0=pi0, pi13=pi13, pi21=pi21, pi23=pi23, cap=0, truncation_errors={}, notes={}
    )


def fixture_constants(point=(0.5, 0.2, 0.5), cap=400):
    fx = read_constants_fixture(FIXTURE)
    return SaturationConstants(
        pi0=fx[("pi0", point, cap)],
        pi13=fx[("pi13", point, cap)],
        pi21=fx[("pi21", point, cap)],
        pi23=fx[("pi23", point, cap)],
        cap=cap,
        truncation_errors={},
        notes={},
    )


def simplex_grid(step=5):
    pts = []
    for i in range(step + 1):
        for j in range(step + 1 - i):
            k = step - i - j
            pts.append((i / step, j / step, k / step))
    return pts


def test_verdict_branch1_with_fixture_constants():
    cs = fixture_constants()
    traffic = TrafficProfile((0.5, 0.2, 0.5), 1.0)
    verdict = region3_verdict(traffic, constants=cs)
    assert verdict.classification == "positive_recurrent"
    assert verdict.matched_case == "branch-1"
    # just above the critical middle intensity the same constants reject it
    hot = TrafficProfile((0.5, cs.pi0 + cs.pi13 / 2 + 0.01, 0.5), 1.0)
    assert region3_verdict(hot, constants=cs).classification == "transient"


def test_verdict_case4_transient():
    verdict = region3_verdict(TrafficProfile((1.2, 0.2, 1.2), 1.0))
    assert verdict.classification == "transient"
    assert verdict.matched_case == "case-4"


def test_verdict_case5_boundary():
    boundary = region3_verdict(TrafficProfile((1.0, 1e-12, 1.0), 1.0))
    assert boundary.classification == "boundary"
    assert boundary.matched_case == "case-5"
    off = region3_verdict(TrafficProfile((1.0, 0.05, 1.0), 1.0))
    assert off.classification == "transient"


def test_verdict_branch2():
    # rho3 beyond the coupled bound but under the boosted one
    traffic = TrafficProfile((0.3, 0.15, 0.8), 1.0)
    verdict = region3_verdict(traffic)
    assert verdict.classification == "positive_recurrent"
    assert verdict.matched_case == "branch-2"
    # pi21 = 1 - 2*0.15/0.7 = 4/7: boosted bound = 0.65 + 0.35*4/7 = 0.85
    too_hot = TrafficProfile((0.3, 0.15, 0.9), 1.0)
    assert region3_verdict(too_hot).classification == "transient"


def test_verdict_symmetry_under_outer_swap():
    rng = np.random.default_rng(70)
    for _ in range(6):
        rho = rng.uniform(0.1, 1.2, size=3)
        a = region3_verdict(TrafficProfile(tuple(rho), 1.0), cap=60)
        b = region3_verdict(TrafficProfile((rho[2], rho[1], rho[0]), 1.0), cap=60)
        assert a.classification == b.classification


def test_requires_three_links():
    with pytest.raises(ValueError):
        region3_verdict(TrafficProfile((0.5, 0.5), 1.0))


def test_fluid_state_validation():
    with pytest.raises(ValueError):
        FluidState((0.5, 0.5, 0.5))
    with pytest.raises(ValueError):
        FluidState((-0.1, 0.6, 0.5))
    assert FluidState((0.0, 1.0, 0.0)).zero_set == frozenset({1, 3})


def test_drift_all_positive():
    traffic = TrafficProfile((0.4, 0.4, 0.4), 1.0)
    d = fluid_drift(FluidState((1 / 3, 1 / 3, 1 / 3)), traffic)
    assert d == pytest.approx([-0.6, 0.4, -0.6], abs=1e-12)


def test_drift_balanced_outer_queues():
    traffic = TrafficProfile((1.0, 0.4, 1.0), (1.0, 1.0, 1.0))
    d = fluid_drift(FluidState((0.3, 0.4, 0.3)), traffic)
    assert d == pytest.approx([0.0, 0.4, 0.0], abs=1e-12)


def test_drift_one_outer_zero():
    traffic = TrafficProfile((0.4, 0.1, 0.4), 1.0)
    d = fluid_drift(FluidState((0.0, 0.5, 0.5)), traffic)
    assert d == pytest.approx([0.0, 0.1 - 0.3, 0.4 - 0.7], abs=1e-12)
    d = fluid_drift(FluidState((0.5, 0.5, 0.0)), traffic)
    assert d == pytest.approx([0.4 - 0.7, 0.1 - 0.3, 0.0], abs=1e-12)


def test_drift_two_zero_formulas_exact():
    cs = explicit_constants()
    lam = (0.3, 0.1, 0.7)
    traffic = TrafficProfile(lam, 1.0)
    d = fluid_drift(FluidState((0.0, 0.0, 1.0)), traffic, constants=cs)
    expected3 = lam[2] - ((1 + lam[0]) / 2 + (1 - lam[0]) / 2 * cs.pi21)
    assert d == pytest.approx([0.0, 0.0, expected3], abs=1e-12)

    lam_m = (0.7, 0.1, 0.3)
    d = fluid_drift(FluidState((1.0, 0.0, 0.0)), TrafficProfile(lam_m, 1.0), constants=cs)
    expected1 = lam_m[0] - ((1 + lam_m[2]) / 2 + (1 - lam_m[2]) / 2 * cs.pi23)
    assert d == pytest.approx([expected1, 0.0, 0.0], abs=1e-12)

    lam_o = (0.4, 0.3, 0.45)
    d = fluid_drift(FluidState((0.0, 1.0, 0.0)), TrafficProfile(lam_o, 1.0), constants=cs)
    expected2 = lam_o[1] - (cs.pi0 + cs.pi13 / 2)
    assert d == pytest.approx([0.0, expected2, 0.0], abs=1e-12)


def test_drift_respects_mean_sizes():
    cs = explicit_constants()
    traffic = TrafficProfile((0.1, 0.05, 0.2), (2.0, 1.0, 0.5))
    mu3 = 1 / 0.5
    rho1 = 0.1 * 2.0
    d = fluid_drift(FluidState((0.0, 0.0, 1.0)), traffic, constants=cs)
    expected3 = 0.2 - mu3 * ((1 + rho1) / 2 + (1 - rho1) / 2 * cs.pi21)
    assert d[2] == pytest.approx(expected3, abs=1e-12)


def test_drift_side_condition_errors():
    cs = explicit_constants()
    with pytest.raises(ValueError, match="rho_2"):
        fluid_drift(FluidState((0.0, 0.0, 1.0)), TrafficProfile((0.4, 0.4, 0.3), 1.0), cs)
    with pytest.raises(ValueError, match="rho_1"):
        fluid_drift(FluidState((0.0, 0.0, 1.0)), TrafficProfile((1.1, 0.1, 0.3), 1.0), cs)
    with pytest.raises(ValueError, match="rho_1 < 1"):
        fluid_drift(FluidState((0.0, 0.5, 0.5)), TrafficProfile((1.2, 0.1, 0.3), 1.0), cs)
    with pytest.raises(ValueError, match="rho_3"):
        fluid_drift(FluidState((0.0, 1.0, 0.0)), TrafficProfile((0.3, 0.1, 1.4), 1.0), cs)


def test_trajectory_drains_inside_region():
    traffic = TrafficProfile((0.4, 0.4, 0.4), 1.0)
    for beta in simplex_grid(5):
        path = fluid_trajectory(FluidState(beta), traffic, horizon=500)
        assert path.drained_at is not None, beta
        assert path.diverging == ()
        t_final, y_final = path.breakpoints[-1]
        assert t_final == pytest.approx(path.drained_at)
        assert max(y_final) == 0.0


def test_trajectory_middle_link_grows_when_over_threshold():
    rho2_star, _, _ = symmetric_boundary(0.2, cap=100)
    traffic = TrafficProfile((0.2, rho2_star + 0.05, 0.2), 1.0)
    path = fluid_trajectory(FluidState((0.0, 1.0, 0.0)), traffic, horizon=100)
    assert path.drained_at is None
    assert path.diverging == (2,)


def test_trajectory_case4_outer_links_grow():
    traffic = TrafficProfile((1.3, 0.1, 1.3), 1.0)
    path = fluid_trajectory(FluidState((0.5, 0.0, 0.5)), traffic, horizon=100)
    assert path.drained_at is None
    assert 1 in path.diverging and 3 in path.diverging


def test_trajectory_matches_verdict_on_simplex():
    cases = [
        (0.5, 0.2, 0.5),  # branch-1 interior
        (0.3, 0.15, 0.8),  # branch-2 interior
        (0.45, 0.55, 0.45),  # middle link beyond the boundary
        (0.3, 0.15, 0.95),  # outer link beyond the boosted bound
        (1.3, 0.1, 1.3),  # doubly overloaded
    ]
    for rho in cases:
        traffic = TrafficProfile(rho, 1.0)
        verdict = region3_verdict(traffic, cap=100)
        stable = verdict.classification == "positive_recurrent"
        for beta in simplex_grid(3):
            path = fluid_trajectory(FluidState(beta), traffic, horizon=2000, cap=100)
            drained = path.drained_at is not None
            assert drained == stable, (rho, beta, verdict.classification)


def test_trajectory_horizon_cutoff():
    traffic = TrafficProfile((0.4, 0.4, 0.4), 1.0)
    path = fluid_trajectory(FluidState((1 / 3, 1 / 3, 1 / 3)), traffic, horizon=0.1)
    assert path.drained_at is None
    assert path.breakpoints[-1][0] == pytest.approx(0.1)
    with pytest.raises(ValueError):
        fluid_trajectory(FluidState((1.0, 0.0, 0.0)), traffic, horizon=-1.0)


def test_symmetric_boundary_monotone_sample():
    values = [symmetric_boundary(r, cap=100)[0] for r in (0.2, 0.5, 0.8)]
    assert values[0] > values[1] > values[2]
