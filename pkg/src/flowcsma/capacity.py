"""Capacity-region membership via a linear program over schedule shares.

The network can sustain traffic intensities rho iff some probability vector
q over the feasible schedules gives every link k a throughput
rate_k * sum_{i: k in S_i} q_i of at least rho_k. The load of a traffic
vector is 1/theta* where theta* is the largest uniform scaling of rho that
stays sustainable; load < 1 means interior of the capacity region.

The LP is solved by a small two-phase dense simplex with Bland's rule: the
problems are tiny (a handful of links, at most a few hundred schedules) and
a self-contained solver keeps results bit-for-bit deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import NumericalError
from .graph import ConflictGraph, ScheduleSet

BOUNDARY_TOL = 1e-9


@dataclass(frozen=True)
class TrafficProfile:
    """Per-link flow arrival rates (flows/s) and mean flow sizes (bits)."""

    arrival_rates: tuple[float, ...]
    mean_sizes: tuple[float, ...]

    def __init__(self, arrival_rates: Sequence[float], mean_sizes: Sequence[float] | float):
        lam = tuple(float(v) for v in arrival_rates)
        if np.isscalar(mean_sizes):
            sig = (float(mean_sizes),) * len(lam)
        else:
            sig = tuple(float(v) for v in mean_sizes)
        if len(sig) != len(lam):
            raise ValueError("arrival_rates and mean_sizes must have equal length")
        if any(v <= 0 for v in lam) or any(v <= 0 for v in sig):
            raise ValueError("arrival rates and mean sizes must be strictly positive")
        object.__setattr__(self, "arrival_rates", lam)
        object.__setattr__(self, "mean_sizes", sig)

    @property
    def num_links(self) -> int:
        return len(self.arrival_rates)

    @property
    def intensities(self) -> tuple[float, ...]:
        """rho_k = lambda_k * sigma_k in bit/s."""
        return tuple(l * s for l, s in zip(self.arrival_rates, self.mean_sizes))

    @property
    def service_rates(self) -> tuple[float, ...]:
        """mu_k = 1/sigma_k, the per-flow service rate at unit throughput."""
        return tuple(1.0 / s for s in self.mean_sizes)

    @classmethod
    def symmetric(cls, num_links: int, rho: float, mean_size: float = 1.0) -> "TrafficProfile":
        return cls((rho / mean_size,) * num_links, (mean_size,) * num_links)


@dataclass(frozen=True)
class CapacityVerdict:
    """Result of the capacity-region membership test."""

    load: float
    classification: str  # "interior" | "boundary" | "exterior"
    margin: float | None  # epsilon = (1 - load)/2 when interior, else None
    witness: np.ndarray  # optimal schedule shares q, aligned with the ScheduleSet


def capacity_verdict(
    graph: ConflictGraph, schedules: ScheduleSet, traffic: TrafficProfile
) -> CapacityVerdict:
    """Load of the traffic vector and its position relative to the region.

    Solves max theta s.t. theta * rho_k <= rate_k * sum_{i: k in S_i} q_i,
    sum q_i = 1, q >= 0 and reports load = 1/theta* together with the
    witness q.
    """
    rho = np.asarray(traffic.intensities, dtype=float)
    if rho.size != graph.num_links:
        raise ValueError("traffic profile does not match the graph size")
    if np.any(rho <= 0):
        raise ValueError("all traffic intensities must be positive")
    nsched = len(schedules)
    nlinks = graph.num_links
    rates = np.asarray(graph.physical_rates)

    # Link-schedule incidence: serve[k, i] = rate_k if k in S_i.
    serve = np.zeros((nlinks, nsched))
    for i, mask in enumerate(schedules.masks):
        for k in range(nlinks):
            if mask >> k & 1:
                serve[k, i] = rates[k]

    # Variables z = [theta, q_1..q_N]; rows: K inequalities + the simplex equality.
    a_ub = np.hstack([rho[:, None], -serve])
    b_ub = np.zeros(nlinks)
    a_eq = np.hstack([np.zeros((1, 1)), np.ones((1, nsched))])
    b_eq = np.array([1.0])
    c = np.zeros(1 + nsched)
    c[0] = 1.0

    z, status = _simplex_max(c, a_ub, b_ub, a_eq, b_eq)
    if status != 0:
        raise NumericalError(f"capacity LP failed: {status}")
    theta = z[0]
    if theta <= 0:
        raise NumericalError("capacity LP returned a nonpositive throughput scaling")
    q = np.clip(z[1:], 0.0, None)
    q /= q.sum()
    load = 1.0 / theta
    if abs(load - 1.0) <= BOUNDARY_TOL:
        classification = "boundary"
    elif load < 1.0:
        classification = "interior"
    else:
        classification = "exterior"
    margin = (1.0 - load) / 2.0 if classification == "interior" else None
    return CapacityVerdict(load=load, classification=classification, margin=margin, witness=q)


def scale_to_load(
    traffic: TrafficProfile, current_load: float, target_load: float
) -> TrafficProfile:
    """Scale all arrival rates so the verdict load becomes target_load."""
    if target_load <= 0:
        raise ValueError("target load must be positive")
    factor = target_load / current_load
    return replace(
        traffic,
        arrival_rates=tuple(l * factor for l in traffic.arrival_rates),
    )


def _simplex_max(c, a_ub, b_ub, a_eq, b_eq, tol: float = 1e-11):
    """Maximize c.z subject to a_ub.z <= b_ub, a_eq.z = b_eq, z >= 0.

    Two-phase tableau simplex with Bland's anti-cycling rule. Returns
    (solution, status) with status 0 on success, otherwise a short reason.
    """
    num_ub = a_ub.shape[0]
    num_eq = a_eq.shape[0]
    n = c.size
    m = num_ub + num_eq

    a = np.vstack([a_ub, a_eq]).astype(float)
    b = np.concatenate([b_ub, b_eq]).astype(float)
    # Normalize rows to b >= 0 so phase 1 can start from artificials.
    neg = b < 0
    a[neg] *= -1.0
    b[neg] *= -1.0

    # Columns: n structural, num_ub slacks, m artificials.
    slack = np.zeros((m, num_ub))
    for i in range(num_ub):
        sign = -1.0 if neg[i] else 1.0
        slack[i, i] = sign
    table = np.hstack([a, slack, np.eye(m), b[:, None]])
    total = n + num_ub + m
    basis = [n + num_ub + i for i in range(m)]

    # Use a slack as the initial basic variable where it enters positively.
    for i in range(num_ub):
        if slack[i, i] > 0:
            basis[i] = n + i
            table[i, n + num_ub + i] = 0.0

    def pivot(row, col):
        table[row] /= table[row, col]
        for r in range(m):
            if r != row and table[r, col] != 0.0:
                table[r] -= table[r, col] * table[row]
        basis[row] = col

    def run_phase(costs, allowed):
        for _ in range(50000):
            reduced = costs.copy()
            for r, bv in enumerate(basis):
                if costs[bv] != 0.0:
                    reduced -= costs[bv] * table[r, :total]
            entering = -1
            for j in range(total):  # Bland: lowest-index improving column
                if allowed[j] and basis.count(j) == 0 and reduced[j] < -tol:
                    entering = j
                    break
            if entering < 0:
                return 0
            ratios = [
                (table[r, total] / table[r, entering], basis[r], r)
                for r in range(m)
                if table[r, entering] > tol
            ]
            if not ratios:
                return "unbounded"
            _, _, row = min(ratios, key=lambda t: (t[0], t[1]))
            pivot(row, entering)
        return "iteration limit"

    art_start = n + num_ub
    phase1 = np.zeros(total)
    phase1[art_start:] = 1.0
    allowed = np.ones(total, dtype=bool)
    status = run_phase(phase1, allowed)
    if status != 0:
        return None, f"phase-1 {status}"
    art_value = sum(table[r, total] for r, bv in enumerate(basis) if bv >= art_start)
    if art_value > 1e-8:
        return None, "infeasible"
    # Drive leftover artificials out of the basis if possible.
    for r, bv in enumerate(basis):
        if bv >= art_start:
            for j in range(art_start):
                if abs(table[r, j]) > tol:
                    pivot(r, j)
                    break

    allowed[art_start:] = False
    phase2 = np.zeros(total)
    phase2[:n] = -c  # maximize c.z == minimize -c.z
    status = run_phase(phase2, allowed)
    if status != 0:
        return None, f"phase-2 {status}"

    z = np.zeros(total)
    for r, bv in enumerate(basis):
        z[bv] = table[r, total]
    return z[:n], 0
