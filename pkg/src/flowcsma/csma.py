"""Schedule weights, selection probabilities and per-link throughputs.

Two access disciplines are supported. Under standard CSMA each busy link
contributes a factor alpha_k to the weight of every schedule it belongs to;
under flow-aware CSMA each link contributes alpha_k * x_k, i.e. attempt
intensity grows with the number of active flows. The ratio alpha_k (mean
packet transmission time over mean backoff time) is the only access
parameter the formulas need.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .graph import ConflictGraph, ScheduleSet

# Above this largest per-link factor, schedule weights are combined in
# log-space to dodge overflow in states with huge flow counts.
LOG_SPACE_THRESHOLD = 1e6


class Discipline(enum.Enum):
    STANDARD = "standard"
    FLOW_AWARE = "flow-aware"


@dataclass(frozen=True)
class AccessParams:
    """Access discipline plus per-link backoff ratios alpha_k.

    Either `alpha` holds finite positive ratios (scalar broadcasts to all
    links) or `infinite_alpha` is set and the schedule distribution follows
    the zero-backoff limit; the two are mutually exclusive.
    """

    discipline: Discipline
    alpha: float | tuple[float, ...] | None = 1.0
    infinite_alpha: bool = False

    def __post_init__(self):
        if self.infinite_alpha:
            if self.alpha is not None:
                raise ValueError("finite alpha and the infinite-alpha flag are exclusive")
        else:
            alphas = (self.alpha,) if np.isscalar(self.alpha) else tuple(self.alpha)
            if any(a is None or a <= 0 for a in alphas):
                raise ValueError("alpha ratios must be strictly positive")

    def alphas(self, num_links: int) -> np.ndarray:
        if self.infinite_alpha:
            raise ValueError("no finite alpha in the infinite-alpha limit")
        return np.broadcast_to(np.asarray(self.alpha, dtype=float), num_links).copy()

    @classmethod
    def standard(cls, alpha: float | Sequence[float] = 1.0) -> "AccessParams":
        a = alpha if np.isscalar(alpha) else tuple(alpha)
        return cls(Discipline.STANDARD, a)

    @classmethod
    def flow_aware(cls, alpha: float | Sequence[float] = 1.0) -> "AccessParams":
        a = alpha if np.isscalar(alpha) else tuple(alpha)
        return cls(Discipline.FLOW_AWARE, a)

    @classmethod
    def limit(cls, discipline: Discipline) -> "AccessParams":
        return cls(discipline, alpha=None, infinite_alpha=True)


@dataclass(frozen=True)
class NetworkState:
    """Vector of active flow counts per link."""

    counts: tuple[int, ...]

    def __post_init__(self):
        if any(c < 0 for c in self.counts):
            raise ValueError("flow counts must be nonnegative")

    def bump(self, k: int) -> "NetworkState":
        """State with one more flow on 1-based link k."""
        c = list(self.counts)
        c[k - 1] += 1
        return NetworkState(tuple(c))

    def drop(self, k: int) -> "NetworkState":
        c = list(self.counts)
        c[k - 1] -= 1
        return NetworkState(tuple(c))


@dataclass(frozen=True)
class ScheduleDistribution:
    """Selection probabilities aligned with a ScheduleSet's order."""

    p: np.ndarray

    def __post_init__(self):
        if np.any(self.p < 0) or abs(float(self.p.sum()) - 1.0) > 1e-12:
            raise ValueError("probabilities must be nonnegative and sum to 1")


def _as_counts(state, num_links: int) -> np.ndarray:
    counts = state.counts if isinstance(state, NetworkState) else state
    x = np.asarray(counts, dtype=float)
    if x.shape != (num_links,):
        raise ValueError(f"state has length {x.size}, expected {num_links}")
    if np.any(x < 0):
        raise ValueError("flow counts must be nonnegative")
    return x


def _per_link_factors(x: np.ndarray, params: AccessParams) -> np.ndarray:
    a = params.alphas(x.size)
    if params.discipline is Discipline.STANDARD:
        return a * (x > 0)
    return a * x


def schedule_weights(schedules: ScheduleSet, state, params: AccessParams) -> np.ndarray:
    """Stationary-measure weight of every schedule in state x.

    w[0] = 1 for the all-idle schedule; w[i] is the product of the per-link
    factors over the links of schedule i (alpha_k for busy links under
    standard CSMA, alpha_k * x_k under flow-aware CSMA).
    """
    x = _as_counts(state, schedules.num_links)
    factors = _per_link_factors(x, params)
    w = np.empty(len(schedules))
    for i, mask in enumerate(schedules.masks):
        prod = 1.0
        m = mask
        while m:
            lsb = m & -m
            prod *= factors[lsb.bit_length() - 1]
            m -= lsb
        w[i] = prod
    return w


def schedule_distribution(
    schedules: ScheduleSet, state, params: AccessParams
) -> ScheduleDistribution:
    """Probability that each feasible schedule is the active one in state x.

    p_i = w_i / sum_j w_j. The all-idle weight is 1, so the normalizer never
    vanishes. Falls back to log-space accumulation when the per-link factors
    are large enough for the plain products to overflow.
    """
    if params.infinite_alpha:
        raise ValueError("use limit_distribution for the infinite-alpha limit")
    x = _as_counts(state, schedules.num_links)
    factors = _per_link_factors(x, params)
    if factors.size and factors.max() > LOG_SPACE_THRESHOLD:
        p = _log_space_distribution(schedules, factors)
    else:
        w = schedule_weights(schedules, state, params)
        p = w / w.sum()
    return ScheduleDistribution(p=p)


def _log_space_distribution(schedules: ScheduleSet, factors: np.ndarray) -> np.ndarray:
    logf = np.where(factors > 0, np.log(np.where(factors > 0, factors, 1.0)), -np.inf)
    logw = np.empty(len(schedules))
    for i, mask in enumerate(schedules.masks):
        s = 0.0
        m = mask
        while m:
            lsb = m & -m
            s += logf[lsb.bit_length() - 1]
            m -= lsb
        logw[i] = s
    logw -= logw.max()
    w = np.exp(logw)
    return w / w.sum()


def limit_distribution(
    schedules: ScheduleSet, state, discipline: Discipline
) -> ScheduleDistribution:
    """Schedule distribution in the zero-backoff (alpha -> infinity) limit.

    Only schedules contained in the busy set survive, and among those only
    the ones of maximum cardinality. Standard CSMA picks uniformly within
    that set; flow-aware CSMA weights each surviving schedule by the product
    of its links' flow counts (the leading-order term of the finite-alpha
    weights).
    """
    x = _as_counts(state, schedules.num_links)
    busy = 0
    for k in range(schedules.num_links):
        if x[k] > 0:
            busy |= 1 << k
    best_card = -1
    weights = np.zeros(len(schedules))
    for i, mask in enumerate(schedules.masks):
        if mask & ~busy:
            continue
        card = bin(mask).count("1")
        if card < best_card:
            continue
        if card > best_card:
            best_card = card
            weights[:] = 0.0
        if discipline is Discipline.STANDARD:
            weights[i] = 1.0
        else:
            prod = 1.0
            m = mask
            while m:
                lsb = m & -m
                prod *= x[lsb.bit_length() - 1]
                m -= lsb
            weights[i] = prod
    return ScheduleDistribution(p=weights / weights.sum())


def link_throughputs(
    schedules: ScheduleSet, state, params: AccessParams, graph: ConflictGraph
) -> np.ndarray:
    """Per-link throughput phi_k(x) in bit/s.

    phi_k(x) = physical_rate_k * P(some schedule containing k is active).
    Links with no active flow have zero weight in every schedule containing
    them, hence zero throughput.
    """
    if params.infinite_alpha:
        dist = limit_distribution(schedules, state, params.discipline)
    else:
        dist = schedule_distribution(schedules, state, params)
    return _throughputs_from_distribution(schedules, dist.p, graph)


def _throughputs_from_distribution(
    schedules: ScheduleSet, p: np.ndarray, graph: ConflictGraph
) -> np.ndarray:
    phi = np.zeros(graph.num_links)
    for i, mask in enumerate(schedules.masks):
        if p[i] == 0.0:
            continue
        m = mask
        while m:
            lsb = m & -m
            phi[lsb.bit_length() - 1] += p[i]
            m -= lsb
    return phi * np.asarray(graph.physical_rates)
