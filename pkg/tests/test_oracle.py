import os

import numpy as np
import pytest

from flowcsma import (
    AccessParams,
    Discipline,
    TrafficProfile,
    saturation_constants,
    single_link_throughput,
    solve_stationary,
)
from flowcsma.oracle import (
    conditional_idle_probability,
    coupled_idle_probabilities,
    coupled_min_idle,
    read_constants_fixture,
)

FIXTURE = os.path.join(os.path.dirname(__file__), "fixtures", "saturation_constants.txt")


def test_single_link_processor_sharing_solve(single):
    graph, schedules = single
    traffic = TrafficProfile((0.5,), 1.0)
    dist = solve_stationary(graph, schedules, traffic, AccessParams.flow_aware(1.0), cap=200)
    # phi(n) = n/(1+n) makes pi(n) proportional to (n+1) rho^n
    rho = 0.5
    expected = np.array([(n + 1) * rho**n for n in range(201)])
    expected /= expected.sum()
    assert np.abs(dist.probs - expected).max() < 1e-10
    assert dist.mean_counts()[0] == pytest.approx(2 * rho / (1 - rho), abs=1e-8)
    assert dist.residual < 1e-10
    assert dist.leakage < 1e-30


def test_single_link_limit_solve_is_geometric(single):
    graph, schedules = single
    traffic = TrafficProfile((0.5,), 1.0)
    dist = solve_stationary(
        graph, schedules, traffic, AccessParams.limit(Discipline.FLOW_AWARE), cap=200
    )
    assert dist.mean_counts()[0] == pytest.approx(1.0, abs=1e-8)
    assert dist.prob((0,)) == pytest.approx(0.5, abs=1e-8)


def test_box_solver_matches_modes_and_residual(line3):
    graph, schedules = line3
    traffic = TrafficProfile((0.2, 0.2, 0.2), 1.0)
    for params in (
        AccessParams.standard(1.0),
        AccessParams.flow_aware(1.0),
        AccessParams.limit(Discipline.STANDARD),
        AccessParams.limit(Discipline.FLOW_AWARE),
    ):
        dist = solve_stationary(graph, schedules, traffic, params, cap=25)
        assert dist.residual < 1e-10
        assert dist.probs.sum() == pytest.approx(1.0, abs=1e-10)
        assert np.all(dist.probs >= 0)


def test_box_size_guard(line3):
    graph, schedules = line3
    traffic = TrafficProfile((0.2, 0.2, 0.2), 1.0)
    with pytest.raises(ValueError):
        solve_stationary(graph, schedules, traffic, AccessParams.flow_aware(1.0), cap=101)


def test_cap_doubling_at_low_load(line3):
    graph, schedules = line3
    traffic = TrafficProfile((0.3, 0.3, 0.3), 1.0)
    params = AccessParams.flow_aware(1.0)
    e40 = solve_stationary(graph, schedules, traffic, params, cap=40).mean_counts()
    e80 = solve_stationary(graph, schedules, traffic, params, cap=80).mean_counts()
    assert np.abs(e40 - e80).max() < 1e-6


def test_gamma_closed_form_alpha_one():
    for rho in np.arange(0.1, 0.95, 0.1):
        assert single_link_throughput(rho, 1.0) == pytest.approx((1 - rho) / 2, abs=1e-9)


def test_gamma_limit_and_low_load():
    for rho in (0.2, 0.5, 0.8):
        assert single_link_throughput(rho) == pytest.approx(1 - rho, abs=1e-9)
    assert single_link_throughput(1e-6, 0.1) == pytest.approx(0.1 / 1.1, abs=1e-4)


def test_gamma_matches_box_solver(single):
    graph, schedules = single
    for rho, alpha in ((0.3, 0.5), (0.6, 2.0)):
        dist = solve_stationary(
            graph, schedules, TrafficProfile((rho,), 1.0), AccessParams.flow_aware(alpha), cap=400
        )
        gamma_box = rho / dist.mean_counts()[0]
        assert single_link_throughput(rho, alpha) == pytest.approx(gamma_box, abs=1e-7)


def test_gamma_domain_errors():
    with pytest.raises(ValueError):
        single_link_throughput(1.0, 1.0)
    with pytest.raises(ValueError):
        single_link_throughput(0.5, -1.0)


def test_constants_match_rate_balance_identities():
    """Exact identities from per-queue flow balance in the saturated chains.

    Queue 1 of the pi21 chain is an autonomous M/M/1, so
    pi21 = 1 - 2 rho2/(1 - rho1); for the coupled pair, balance of each
    queue gives pi0 + (3/4) pi13 = 1 - (rho1+rho3)/2.
    """
    t = TrafficProfile((0.45, 0.15, 0.3), 1.0)
    pi21 = conditional_idle_probability(t, 1, cap=300)
    pi23 = conditional_idle_probability(t, 3, cap=300)
    assert pi21 == pytest.approx(1 - 2 * 0.15 / (1 - 0.45), abs=1e-6)
    assert pi23 == pytest.approx(1 - 2 * 0.15 / (1 - 0.3), abs=1e-6)
    pi0, pi13 = coupled_idle_probabilities(t, cap=300)
    assert pi0 + 0.75 * pi13 == pytest.approx(1 - (0.45 + 0.3) / 2, abs=1e-6)


def test_constants_symmetry_swap():
    t = TrafficProfile((0.3, 0.1, 0.6), 1.0)
    swapped = TrafficProfile((0.6, 0.1, 0.3), 1.0)
    a = saturation_constants(t, cap=80)
    b = saturation_constants(swapped, cap=80)
    assert a.pi0 == pytest.approx(b.pi0, abs=1e-8)
    assert a.pi13 == pytest.approx(b.pi13, abs=1e-8)
    assert a.pi21 == pytest.approx(b.pi23, abs=1e-8)
    assert a.pi23 == pytest.approx(b.pi21, abs=1e-8)


def test_pi0_plus_pi13_is_min_idle_probability():
    t = TrafficProfile((0.5, 0.2, 0.4), 1.0)
    pi0, pi13 = coupled_idle_probabilities(t, cap=120)
    assert pi0 + pi13 == pytest.approx(coupled_min_idle(t, cap=120), abs=1e-10)
    assert 0 <= pi0 <= 1 and 0 <= pi13 <= 1 and pi0 + pi13 <= 1


def test_constants_trivial_and_limit_cases():
    # outer links nearly idle: both are almost surely empty
    t = TrafficProfile((1e-4, 0.2, 1e-4), 1.0)
    pi0, pi13 = coupled_idle_probabilities(t, cap=40)
    assert pi0 == pytest.approx(1.0, abs=1e-3)
    assert pi13 == pytest.approx(0.0, abs=1e-3)
    # queue 1 almost always empty: queue 2 is M/M/1 at load 2 rho2
    t2 = TrafficProfile((1e-4, 0.2, 0.5), 1.0)
    pi21 = conditional_idle_probability(t2, 1, cap=200)
    assert pi21 == pytest.approx(1 - 2 * 0.2, abs=1e-3)


def test_constants_domain_errors_name_condition():
    unstable_coupled = TrafficProfile((1.4, 0.1, 0.5), 1.0)
    with pytest.raises(ValueError, match="rho_1"):
        coupled_idle_probabilities(unstable_coupled, cap=40)
    with pytest.raises(ValueError, match="rho_2"):
        conditional_idle_probability(TrafficProfile((0.5, 0.4, 0.5), 1.0), 1, cap=40)
    with pytest.raises(ValueError, match="rho_1 < 1"):
        conditional_idle_probability(TrafficProfile((1.2, 0.1, 0.5), 1.0), 1, cap=40)
    cs = saturation_constants(TrafficProfile((1.4, 0.1, 0.5), 1.0), cap=40)
    assert cs.pi0 is None and "rho_1" in cs.notes["pi0"]
    with pytest.raises(ValueError):
        cs.require("pi0")
    with pytest.raises(ValueError):
        saturation_constants(TrafficProfile((1.4, 0.1, 0.5), 1.0), cap=40, strict=True)


def test_golden_fixture_reproduced_and_converged():
    fixture = read_constants_fixture(FIXTURE)
    point = (0.5, 0.2, 0.5)
    traffic = TrafficProfile(point, 1.0)
    cs = saturation_constants(traffic, cap=100)
    for name in ("pi0", "pi13", "pi21", "pi23"):
        assert getattr(cs, name) == pytest.approx(fixture[(name, point, 100)], abs=1e-7)
        ladder = [fixture[(name, point, cap)] for cap in (100, 200, 400)]
        assert abs(ladder[1] - ladder[0]) < 1e-4
        assert abs(ladder[2] - ladder[1]) < 1e-4
