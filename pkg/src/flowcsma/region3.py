"""Stability region of the 3-link line under zero-backoff standard CSMA.

The region splits into three branches. With both outer links' saturated
coupled system stable, the middle link needs rho_2 below pi0 + pi13/2, the
average service share it can grab from idle neighbours. When one outer link
is overloaded relative to the coupled system (say rho_3 >= (1+rho_1)/2),
stability instead requires rho_2 < (1-rho_1)/2 and rho_3 below the boosted
level (1+rho_1)/2 + pi21 (1-rho_1)/2.

The fluid limit moves along piecewise-linear paths whose regime drifts are
built from the same constants; the traffic vector is stable exactly when
every path drains to the origin and stays there.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .capacity import TrafficProfile
from .errors import NumericalError
from .oracle import (
    SaturationConstants,
    conditional_idle_probability,
    coupled_idle_probabilities,
)

BOUNDARY_TOL = 1e-9
DEFAULT_CAP = 150


@dataclass(frozen=True)
class RegionVerdict:
    classification: str  # "positive_recurrent" | "transient" | "boundary"
    matched_case: str
    constants: SaturationConstants


@dataclass(frozen=True)
class FluidState:
    """Normalized initial fluid state; regime = pattern of zero components."""

    beta: tuple[float, float, float]

    def __post_init__(self):
        b = self.beta
        if len(b) != 3 or any(v < 0 for v in b):
            raise ValueError("beta must be 3 nonnegative components")
        if abs(sum(b) - 1.0) > 1e-9:
            raise ValueError("beta must sum to 1")

    @property
    def zero_set(self) -> frozenset[int]:
        return frozenset(k + 1 for k, v in enumerate(self.beta) if v == 0)


@dataclass(frozen=True)
class FluidTrajectory:
    """Breakpoints (t, state) of the piecewise-linear fluid path."""

    breakpoints: tuple[tuple[float, tuple[float, float, float]], ...]
    drained_at: float | None  # time the path is absorbed at the origin
    diverging: tuple[int, ...]  # 1-based components growing without bound


class _Constants:
    """Lazy saturation constants: compute only the subsystems a query needs."""

    def __init__(self, traffic, given: SaturationConstants | None, cap: int):
        self._traffic = traffic
        self._given = given
        self._cap = cap
        self._vals: dict[str, float] = {}
        self._notes: dict[str, str] = {}
        if given is not None:
            for name in ("pi0", "pi13", "pi21", "pi23"):
                v = getattr(given, name)
                if v is None:
                    self._notes[name] = given.notes.get(name, "unavailable")
                else:
                    self._vals[name] = v

    def get(self, name: str) -> float:
        if name in self._vals:
            return self._vals[name]
        if name in self._notes or self._given is not None:
            raise ValueError(self._notes.get(name, f"{name} missing from given constants"))
        try:
            if name in ("pi0", "pi13"):
                pi0, pi13 = coupled_idle_probabilities(self._traffic, self._cap)
                self._vals["pi0"], self._vals["pi13"] = pi0, pi13
            else:
                outer = 1 if name == "pi21" else 3
                self._vals[name] = conditional_idle_probability(self._traffic, outer, self._cap)
        except ValueError as exc:
            if name in ("pi0", "pi13"):
                self._notes["pi0"] = self._notes["pi13"] = str(exc)
            else:
                self._notes[name] = str(exc)
            raise
        return self._vals[name]

    def available(self, name: str) -> bool:
        try:
            self.get(name)
            return True
        except ValueError:
            return False

    def snapshot(self) -> SaturationConstants:
        if self._given is not None:
            return self._given
        return SaturationConstants(
            pi0=self._vals.get("pi0"),
            pi13=self._vals.get("pi13"),
            pi21=self._vals.get("pi21"),
            pi23=self._vals.get("pi23"),
            cap=self._cap,
            truncation_errors={},
            notes=dict(self._notes),
        )


def region3_verdict(
    traffic: TrafficProfile,
    constants: SaturationConstants | None = None,
    cap: int = DEFAULT_CAP,
    tol: float = BOUNDARY_TOL,
) -> RegionVerdict:
    """Classify a 3-link-line traffic vector under zero-backoff standard CSMA.

    Evaluates the three disjunctive branches of the stability region; a
    strict inequality landing within `tol` of equality demotes a match to
    "boundary". A branch whose saturation constants are unavailable is
    skipped (its remaining inequalities already fail strictly).
    """
    if traffic.num_links != 3:
        raise ValueError("this classification is specific to the 3-link line")
    rho = traffic.intensities
    cs = _Constants(traffic, constants, cap)

    # Doubly saturated corner (rho_1 = rho_3 = 1): the coupled idle
    # probabilities vanish, so only rho_2 = 0 remains on the boundary.
    seam1 = abs(rho[0] - (1 + rho[2]) / 2) <= tol
    seam3 = abs(rho[2] - (1 + rho[0]) / 2) <= tol
    if seam1 and seam3:
        cls = "boundary" if rho[1] <= tol else "transient"
        return RegionVerdict(cls, "case-5", cs.snapshot())

    def branch_margins(name):
        """Margins (value, strict) for one branch; None if the branch clearly
        fails or its saturation constants are unavailable."""
        if name == "branch-1":
            pre = [((1 + rho[2]) / 2 - rho[0], True), ((1 + rho[0]) / 2 - rho[2], True)]
            if any(m < -tol for m, _ in pre) or not cs.available("pi0"):
                return None
            return pre + [(cs.get("pi0") + cs.get("pi13") / 2 - rho[1], True)]
        outer, mirror, pi_name = (
            (0, 2, "pi21") if name == "branch-2" else (2, 0, "pi23")
        )
        pre = [
            ((1 + rho[mirror]) / 2 - rho[outer], True),
            (rho[mirror] - (1 + rho[outer]) / 2, False),  # non-strict lower bound
            ((1 - rho[outer]) / 2 - rho[1], True),
        ]
        if any(m < -tol for m, _ in pre) or not cs.available(pi_name):
            return None
        boosted = (1 + rho[outer]) / 2 + (1 - rho[outer]) / 2 * cs.get(pi_name)
        return pre + [(boosted - rho[mirror], True)]

    boundary_of = None
    for name in ("branch-1", "branch-2", "branch-3"):
        margins = branch_margins(name)
        if margins is None:
            continue
        if all(m > tol if strict else m >= -tol for m, strict in margins):
            return RegionVerdict("positive_recurrent", name, cs.snapshot())
        if all(m > -tol for m, _ in margins):
            boundary_of = boundary_of or name
    if boundary_of is not None:
        return RegionVerdict("boundary", f"boundary({boundary_of})", cs.snapshot())

    if rho[0] >= (1 + rho[2]) / 2 - tol and rho[2] >= (1 + rho[0]) / 2 - tol:
        case = "case-4"
    elif rho[0] < (1 + rho[2]) / 2 and rho[2] < (1 + rho[0]) / 2:
        case = "case-1"
    elif rho[2] > (1 + rho[0]) / 2:
        case = "case-2"
    else:
        case = "case-3"
    return RegionVerdict("transient", case, cs.snapshot())


def symmetric_boundary(
    rho_outer: float, cap: int = DEFAULT_CAP, mean_size: float = 1.0
) -> tuple[float, float, float]:
    """Critical rho_2 for rho_1 = rho_3 = rho_outer; returns (rho2*, pi0, pi13)."""
    if not 0 < rho_outer < 1:
        raise ValueError("the symmetric boundary needs 0 < rho_1 = rho_3 < 1")
    probe = TrafficProfile(
        (rho_outer / mean_size, 1e-9, rho_outer / mean_size), mean_size
    )
    pi0, pi13 = coupled_idle_probabilities(probe, cap)
    return pi0 + pi13 / 2, pi0, pi13


def fluid_drift(
    fluid: FluidState,
    traffic: TrafficProfile,
    constants: SaturationConstants | None = None,
    cap: int = DEFAULT_CAP,
) -> np.ndarray:
    """Drift vector of the fluid limit in the regime of the given state.

    Components at zero are pinned there (drift 0); the others drain at the
    regime's mean service rates. A regime whose side conditions fail (the
    pinned queues could not actually stay settled) raises with the violated
    condition named.
    """
    if traffic.num_links != 3:
        raise ValueError("fluid drifts are specific to the 3-link line")
    lam = traffic.arrival_rates
    mu = traffic.service_rates
    rho = traffic.intensities
    zero = fluid.zero_set
    cs = _Constants(traffic, constants, cap)

    def need(cond: bool, text: str):
        if not cond:
            raise ValueError(f"fluid regime with zeros {sorted(zero)} needs {text}")

    if zero in (frozenset(), frozenset({2})):
        return np.array([lam[0] - mu[0], lam[1], lam[2] - mu[2]])
    if zero == frozenset({1}):
        need(rho[0] < 1, "rho_1 < 1")
        return np.array(
            [0.0, lam[1] - mu[1] * (1 - rho[0]) / 2, lam[2] - mu[2] * (1 + rho[0]) / 2]
        )
    if zero == frozenset({3}):
        need(rho[2] < 1, "rho_3 < 1")
        return np.array(
            [lam[0] - mu[0] * (1 + rho[2]) / 2, lam[1] - mu[1] * (1 - rho[2]) / 2, 0.0]
        )
    if zero == frozenset({1, 2}):
        need(rho[0] < 1, "rho_1 < 1")
        need(rho[1] < (1 - rho[0]) / 2, "rho_2 < (1-rho_1)/2")
        service = (1 + rho[0]) / 2 + (1 - rho[0]) / 2 * cs.get("pi21")
        return np.array([0.0, 0.0, lam[2] - mu[2] * service])
    if zero == frozenset({2, 3}):
        need(rho[2] < 1, "rho_3 < 1")
        need(rho[1] < (1 - rho[2]) / 2, "rho_2 < (1-rho_3)/2")
        service = (1 + rho[2]) / 2 + (1 - rho[2]) / 2 * cs.get("pi23")
        return np.array([lam[0] - mu[0] * service, 0.0, 0.0])
    if zero == frozenset({1, 3}):
        need(rho[0] < (1 + rho[2]) / 2, "rho_1 < (1+rho_3)/2")
        need(rho[2] < (1 + rho[0]) / 2, "rho_3 < (1+rho_1)/2")
        service = cs.get("pi0") + cs.get("pi13") / 2
        return np.array([0.0, lam[1] - mu[1] * service, 0.0])
    raise ValueError("the all-zero fluid state has no transient regime")


def _settled_set(y, traffic, cs: _Constants) -> set[int]:
    """Largest self-consistent set of components that stay pinned at zero.

    A pinned queue must be stable in the environment the other pinned queues
    create; conditions only tighten as members leave, so greedy removal
    reaches the unique greatest fixed point.
    """
    rho = traffic.intensities
    settled = {k + 1 for k in range(3) if y[k] <= 0.0}

    def holds(k: int) -> bool:
        if k == 2:
            thresholds = []
            if (
                1 in settled
                and 3 in settled
                and rho[0] < (1 + rho[2]) / 2
                and rho[2] < (1 + rho[0]) / 2
            ):
                thresholds.append(cs.get("pi0") + cs.get("pi13") / 2)
            if 1 in settled and rho[0] < 1:
                thresholds.append((1 - rho[0]) / 2)
            if 3 in settled and rho[2] < 1:
                thresholds.append((1 - rho[2]) / 2)
            return bool(thresholds) and rho[1] < max(thresholds)
        other = 3 if k == 1 else 1
        rho_k = rho[k - 1]
        rho_o = rho[other - 1]
        if other not in settled:
            return rho_k < 1
        thresholds = [(1 + rho_o) / 2]
        if 2 in settled and rho_o < 1 and rho[1] < (1 - rho_o) / 2:
            pi = cs.get("pi21") if k == 3 else cs.get("pi23")
            thresholds.append((1 + rho_o) / 2 + (1 - rho_o) / 2 * pi)
        return rho_k < max(thresholds)

    changed = True
    while changed:
        changed = False
        for k in (2, 1, 3):
            if k in settled and not holds(k):
                settled.discard(k)
                changed = True
                break
    return settled


def _drift_for(settled: set[int], traffic, cs: _Constants) -> np.ndarray:
    lam = traffic.arrival_rates
    mu = traffic.service_rates
    rho = traffic.intensities
    d = np.zeros(3)
    for k in (1, 2, 3):
        if k in settled:
            continue
        i = k - 1
        if k == 2:
            if 1 in settled and 3 in settled:
                service = cs.get("pi0") + cs.get("pi13") / 2
            elif 1 in settled:
                service = (1 - rho[0]) / 2
            elif 3 in settled:
                service = (1 - rho[2]) / 2
            else:
                service = 0.0
        else:
            other = 3 if k == 1 else 1
            rho_o = rho[other - 1]
            if other in settled and 2 in settled:
                pi = cs.get("pi21") if k == 3 else cs.get("pi23")
                service = (1 + rho_o) / 2 + (1 - rho_o) / 2 * pi
            elif other in settled:
                service = (1 + rho_o) / 2
            else:
                service = 1.0
        d[i] = lam[i] - mu[i] * service
    return d


def fluid_trajectory(
    fluid: FluidState,
    traffic: TrafficProfile,
    constants: SaturationConstants | None = None,
    horizon: float = 1000.0,
    cap: int = DEFAULT_CAP,
    max_switches: int = 100,
) -> FluidTrajectory:
    """Integrate the piecewise-linear fluid path up to `horizon`.

    Regimes switch exactly when a component hits zero; pinned components
    whose regime cannot hold lift off along the relaxed regime's drift. The
    path is absorbed once every component is at zero and the origin is
    stable (full stability-region membership).
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    cs = _Constants(traffic, constants, cap)
    y = np.array(fluid.beta, dtype=float)
    t = 0.0
    points = [(0.0, tuple(y))]
    drained_at = None
    diverging: tuple[int, ...] = ()

    for _ in range(max_switches):
        if np.all(y <= 0.0):
            verdict = region3_verdict(traffic, constants=constants, cap=cap)
            if verdict.classification == "positive_recurrent":
                drained_at = t
                break
        settled = _settled_set(y, traffic, cs)
        d = _drift_for(settled, traffic, cs)

        hit_times = [(-y[i] / d[i], i) for i in range(3) if y[i] > 0.0 and d[i] < 0.0]
        if not hit_times:
            diverging = tuple(i + 1 for i in range(3) if d[i] > 0.0)
            if t < horizon:
                y = y + d * (horizon - t)
                t = horizon
                points.append((t, tuple(np.maximum(y, 0.0))))
            break
        dt, hit = min(hit_times)
        if t + dt >= horizon:
            y = y + d * (horizon - t)
            t = horizon
            points.append((t, tuple(np.maximum(y, 0.0))))
            diverging = tuple(i + 1 for i in range(3) if d[i] > 0.0)
            break
        y = y + d * dt
        y[hit] = 0.0
        y = np.maximum(y, 0.0)
        t += dt
        points.append((t, tuple(y)))
    else:
        raise NumericalError(f"fluid path kept switching regimes after {max_switches} events")

    return FluidTrajectory(
        breakpoints=tuple(points), drained_at=drained_at, diverging=diverging
    )
