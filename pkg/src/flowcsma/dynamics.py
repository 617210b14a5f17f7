"""Flow-level Markov process: simulation, stability classification, drift.

The network state jumps with arrival rates lambda_k and departure rates
phi_k(x)/sigma_k. Time averages use expected-holding-time weighting of the
embedded chain by default (same expectation as sampling the exponential
holding times, lower variance); confidence intervals come from batch means.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from . import _kernel
from .capacity import TrafficProfile
from .csma import AccessParams, Discipline, link_throughputs
from .graph import ConflictGraph, ScheduleSet

_MASK_TABLE_MAX_LINKS = 12


@dataclass(frozen=True)
class SimConfig:
    """Simulation protocol: horizon, warm-up, seed, batching, optional cap."""

    total_jumps: int = 10_000_000
    warmup_jumps: int = 100_000
    rng_seed: int = 1
    num_batches: int = 20
    initial_state: tuple[int, ...] | None = None
    state_cap: int | None = None
    sample_holding_times: bool = False

    def __post_init__(self):
        if not 0 <= self.warmup_jumps < self.total_jumps:
            raise ValueError("need 0 <= warmup_jumps < total_jumps")
        if self.num_batches < 2:
            raise ValueError("need at least 2 batches for confidence intervals")
        if self.state_cap is not None and self.state_cap < 1:
            raise ValueError("state_cap must be at least 1")


@dataclass(frozen=True)
class SimEstimate:
    """Time-weighted estimates from one simulation run."""

    mean_counts: tuple[float, ...]
    throughputs: tuple[float, ...]  # gamma_k = rho_k / E[x_k]
    ci_half_widths: tuple[float, ...]  # 95% batch-means CI on E[x_k]
    sim_time: float  # post-warm-up simulated time
    jumps: int
    warmup_jumps: int
    capped_time_fraction: float
    empty_visits: int
    arrivals: tuple[int, ...]
    departures: tuple[int, ...]
    final_state: tuple[int, ...]
    seed: int


@dataclass(frozen=True)
class StabilityVerdict:
    """Empirical stability classification with its evidence."""

    classification: str  # "stable" | "unstable" | "inconclusive"
    slope: float
    t_stat: float
    growth_ratio: float
    window_means: tuple[float, ...]
    regenerations: tuple[int, ...]
    seed: int


def _kernel_inputs(graph: ConflictGraph, schedules: ScheduleSet, params: AccessParams):
    nlinks = graph.num_links
    offsets = [0]
    links: list[int] = []
    cards = []
    for mask in schedules.masks:
        members = [k for k in range(nlinks) if mask >> k & 1]
        links.extend(members)
        offsets.append(len(links))
        cards.append(len(members))
    sched_offsets = np.asarray(offsets, dtype=np.int64)
    sched_links = np.asarray(links, dtype=np.int64)
    sched_card = np.asarray(cards, dtype=np.int64)

    if params.infinite_alpha:
        mode = (
            _kernel.MODE_STANDARD_LIMIT
            if params.discipline is Discipline.STANDARD
            else _kernel.MODE_FLOW_AWARE_LIMIT
        )
        alpha = np.ones(nlinks)
    else:
        mode = (
            _kernel.MODE_STANDARD
            if params.discipline is Discipline.STANDARD
            else _kernel.MODE_FLOW_AWARE
        )
        alpha = params.alphas(nlinks)

    # Standard CSMA throughputs depend on the busy pattern only, so a
    # per-mask lookup table replaces the per-jump weight computation.
    standard = params.discipline is Discipline.STANDARD
    use_table = standard and nlinks <= _MASK_TABLE_MAX_LINKS
    if use_table:
        table = np.zeros((1 << nlinks, nlinks))
        for busy in range(1 << nlinks):
            probe = np.array([1 if busy >> k & 1 else 0 for k in range(nlinks)])
            table[busy] = link_throughputs(schedules, probe, params, graph)
    else:
        table = np.zeros((1, nlinks))
    return mode, alpha, sched_offsets, sched_links, sched_card, table, use_table


def _run_windows(
    graph: ConflictGraph,
    schedules: ScheduleSet,
    traffic: TrafficProfile,
    params: AccessParams,
    window_ends: np.ndarray,
    seed: int,
    initial_state,
    cap: int | None,
    sample_holding: bool,
):
    mode, alpha, offs, links, cards, table, use_table = _kernel_inputs(
        graph, schedules, params
    )
    lam = np.asarray(traffic.arrival_rates)
    inv_sigma = 1.0 / np.asarray(traffic.mean_sizes)
    rates = np.asarray(graph.physical_rates)
    x0 = np.zeros(graph.num_links, dtype=np.int64)
    if initial_state is not None:
        x0[:] = np.asarray(initial_state, dtype=np.int64)
        if np.any(x0 < 0):
            raise ValueError("initial state must be nonnegative")
    return _kernel.run_jump_chain(
        np.uint64(seed),
        window_ends.astype(np.int64),
        lam,
        inv_sigma,
        rates,
        alpha,
        mode,
        offs,
        links,
        cards,
        table,
        use_table,
        np.int64(-1 if cap is None else cap),
        sample_holding,
        x0,
    )


def simulate(
    graph: ConflictGraph,
    schedules: ScheduleSet,
    traffic: TrafficProfile,
    params: AccessParams,
    config: SimConfig,
) -> SimEstimate:
    """Run the jump chain and estimate mean flow counts and throughputs.

    Statistics start after the warm-up; E[x_k] is the time-weighted average,
    gamma_k follows by Little's law as rho_k / E[x_k], and the 95% CI uses
    batch means over num_batches equal-jump-count batches.
    """
    cfg = config
    post = cfg.total_jumps - cfg.warmup_jumps
    if post < cfg.num_batches:
        raise ValueError("fewer post-warm-up jumps than batches")
    ends = [cfg.warmup_jumps] if cfg.warmup_jumps > 0 else []
    ends += [
        cfg.warmup_jumps + ((b + 1) * post) // cfg.num_batches
        for b in range(cfg.num_batches)
    ]
    window_ends = np.asarray(ends, dtype=np.int64)

    t_sum, x_time, _, cap_time, arr, dep, empty, final = _run_windows(
        graph,
        schedules,
        traffic,
        params,
        window_ends,
        cfg.rng_seed,
        cfg.initial_state,
        cfg.state_cap,
        cfg.sample_holding_times,
    )

    first_batch = 1 if cfg.warmup_jumps > 0 else 0
    bt = t_sum[first_batch:]
    bx = x_time[first_batch:]
    total_time = bt.sum()
    mean_counts = bx.sum(axis=0) / total_time
    batch_means = bx / bt[:, None]
    nb = cfg.num_batches
    tcrit = stats.t.ppf(0.975, nb - 1)
    ci = tcrit * batch_means.std(axis=0, ddof=1) / math.sqrt(nb)

    rho = np.asarray(traffic.intensities)
    gammas = np.where(mean_counts > 0, rho / np.where(mean_counts > 0, mean_counts, 1.0), np.nan)

    return SimEstimate(
        mean_counts=tuple(mean_counts),
        throughputs=tuple(gammas),
        ci_half_widths=tuple(ci),
        sim_time=float(total_time),
        jumps=cfg.total_jumps,
        warmup_jumps=cfg.warmup_jumps,
        capped_time_fraction=float(cap_time[first_batch:].sum() / total_time),
        empty_visits=int(empty[first_batch:].sum()),
        arrivals=tuple(int(v) for v in arr[first_batch:].sum(axis=0)),
        departures=tuple(int(v) for v in dep[first_batch:].sum(axis=0)),
        final_state=tuple(int(v) for v in final),
        seed=cfg.rng_seed,
    )


def classify_stability(
    graph: ConflictGraph,
    schedules: ScheduleSet,
    traffic: TrafficProfile,
    params: AccessParams,
    config: SimConfig,
    window_jumps: int = 1_000_000,
    doublings: int = 6,
) -> StabilityVerdict:
    """Empirical positive-recurrence proxy over doubling windows.

    One trajectory is cut into windows of window_jumps * 2^i jumps. The
    verdict combines the trend of the per-window mean total flow count
    (growth ratio = final over middle window, where an unstable chain keeps
    doubling but a converged one has flattened) with regeneration evidence
    (visits to the all-empty state):

    - unstable: significantly growing (positive slope, t > 3, final window
      mean more than twice the middle one) and no regeneration in the final
      window;
    - stable: no significant growth, plus either a regeneration in the
      final window or a flat plateau (growth ratio below 1.5; heavily
      loaded stable networks hold thousands of flows and never empty on any
      practical horizon);
    - inconclusive otherwise.
    """
    if doublings < 2:
        raise ValueError("need at least 3 windows to fit a trend")
    if window_jumps < 1:
        raise ValueError("window_jumps must be positive")
    sizes = [window_jumps * (1 << i) for i in range(doublings + 1)]
    window_ends = np.cumsum(np.asarray(sizes, dtype=np.int64))

    t_sum, _, abs_x_time, _, _, _, empty, _ = _run_windows(
        graph,
        schedules,
        traffic,
        params,
        window_ends,
        config.rng_seed,
        config.initial_state,
        config.state_cap,
        config.sample_holding_times,
    )

    means = abs_x_time / t_sum
    idx = np.arange(means.size, dtype=float)
    slope, intercept = np.polyfit(idx, means, 1)
    resid = means - (slope * idx + intercept)
    dof = means.size - 2
    se = math.sqrt(float(resid @ resid) / dof / float(((idx - idx.mean()) ** 2).sum()))
    t_stat = slope / se if se > 0 else math.inf * np.sign(slope)
    mid = means[means.size // 2]
    growth = means[-1] / mid if mid > 0 else math.inf

    regen_final = int(empty[-1])
    growing = slope > 0 and t_stat > 3 and growth > 2
    if growing and regen_final == 0:
        classification = "unstable"
    elif not growing and (regen_final >= 1 or growth < 1.5):
        classification = "stable"
    else:
        classification = "inconclusive"

    return StabilityVerdict(
        classification=classification,
        slope=float(slope),
        t_stat=float(t_stat),
        growth_ratio=float(growth),
        window_means=tuple(float(v) for v in means),
        regenerations=tuple(int(v) for v in empty),
        seed=config.rng_seed,
    )


def merge_estimates(
    estimates: Sequence[SimEstimate], traffic: TrafficProfile
) -> SimEstimate:
    """Pool independent replicas (distinct seeds) into one estimate.

    Means are pooled with time weights; the confidence interval comes from
    the between-replica variance of the per-replica means. The merged seed
    is the first replica's, the final state the last one's.
    """
    if not estimates:
        raise ValueError("need at least one replica")
    if len({e.seed for e in estimates}) != len(estimates):
        raise ValueError("replicas must use distinct seeds")
    times = np.array([e.sim_time for e in estimates])
    counts = np.array([e.mean_counts for e in estimates])
    pooled = (times[:, None] * counts).sum(axis=0) / times.sum()
    n = len(estimates)
    if n > 1:
        tcrit = stats.t.ppf(0.975, n - 1)
        ci = tcrit * counts.std(axis=0, ddof=1) / math.sqrt(n)
    else:
        ci = np.asarray(estimates[0].ci_half_widths)
    rho = np.asarray(traffic.intensities)
    gammas = np.where(pooled > 0, rho / np.where(pooled > 0, pooled, 1.0), np.nan)
    return SimEstimate(
        mean_counts=tuple(pooled),
        throughputs=tuple(gammas),
        ci_half_widths=tuple(ci),
        sim_time=float(times.sum()),
        jumps=sum(e.jumps for e in estimates),
        warmup_jumps=sum(e.warmup_jumps for e in estimates),
        capped_time_fraction=float(
            sum(e.capped_time_fraction * e.sim_time for e in estimates) / times.sum()
        ),
        empty_visits=sum(e.empty_visits for e in estimates),
        arrivals=tuple(int(v) for v in np.sum([e.arrivals for e in estimates], axis=0)),
        departures=tuple(int(v) for v in np.sum([e.departures for e in estimates], axis=0)),
        final_state=estimates[-1].final_state,
        seed=estimates[0].seed,
    )


def lyapunov_value(state, traffic: TrafficProfile, graph: ConflictGraph, params: AccessParams) -> float:
    """Lyapunov function for flow-aware stability.

    F(x) = sum over busy links of (sigma_k / rate_k) * x_k * (log(alpha_k x_k) - 1),
    and F(0) = 0.
    """
    if params.discipline is not Discipline.FLOW_AWARE or params.infinite_alpha:
        raise ValueError("the Lyapunov function needs finite-alpha flow-aware parameters")
    counts = state.counts if hasattr(state, "counts") else state
    x = np.asarray(counts, dtype=float)
    a = params.alphas(graph.num_links)
    total = 0.0
    for k in range(graph.num_links):
        if x[k] > 0:
            total += (
                traffic.mean_sizes[k]
                / graph.physical_rates[k]
                * x[k]
                * (math.log(a[k] * x[k]) - 1.0)
            )
    return total


def lyapunov_drift(
    state,
    traffic: TrafficProfile,
    graph: ConflictGraph,
    schedules: ScheduleSet,
    params: AccessParams,
) -> float:
    """Generator drift of the Lyapunov function at state x.

    Sum of lambda_k * (F(x+e_k) - F(x)) over links plus
    phi_k(x)/sigma_k * (F(x-e_k) - F(x)) over busy links.
    """
    counts = state.counts if hasattr(state, "counts") else state
    x = np.asarray(counts, dtype=float)
    f0 = lyapunov_value(x, traffic, graph, params)
    phi = link_throughputs(schedules, x, params, graph)
    drift = 0.0
    for k in range(graph.num_links):
        up = x.copy()
        up[k] += 1
        drift += traffic.arrival_rates[k] * (lyapunov_value(up, traffic, graph, params) - f0)
        if x[k] > 0:
            down = x.copy()
            down[k] -= 1
            mu = phi[k] / traffic.mean_sizes[k]
            drift += mu * (lyapunov_value(down, traffic, graph, params) - f0)
    return drift
