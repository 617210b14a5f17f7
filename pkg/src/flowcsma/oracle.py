"""Exact numerical ground truth for the flow-level process.

Three tools: a stationary solver for the flow-count chain truncated to a
box (arrivals are suppressed at the cap, which keeps the chain irreducible
and biases toward smaller states; the bias is measured by cap-doubling), the
single-link processor-sharing series, and the saturated-subsystem idle
probabilities used by the 3-link-line stability region.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import sparse

from .capacity import TrafficProfile
from .csma import AccessParams, Discipline
from .errors import NumericalError
from .graph import ConflictGraph, ScheduleSet

MAX_BOX_STATES = 1_000_000


@njit(cache=True)
def _gs_sweeps(indptr, indices, data, outflow, pi, nsweeps):
    """In-place symmetric Gauss-Seidel sweeps on the incoming-rate matrix."""
    n = pi.size
    for _ in range(nsweeps):
        for i in range(n):
            acc = 0.0
            for p in range(indptr[i], indptr[i + 1]):
                acc += data[p] * pi[indices[p]]
            pi[i] = acc / outflow[i]
        for i in range(n - 1, -1, -1):
            acc = 0.0
            for p in range(indptr[i], indptr[i + 1]):
                acc += data[p] * pi[indices[p]]
            pi[i] = acc / outflow[i]


@dataclass(frozen=True)
class TruncatedDistribution:
    """Stationary distribution of the truncated chain on {0..cap}^K."""

    cap: int
    num_links: int
    probs: np.ndarray  # flat, C-order over (x_1, ..., x_K) with x_K fastest
    leakage: float  # stationary mass on states with some x_k == cap
    residual: float
    iterations: int

    def prob(self, state) -> float:
        idx = 0
        for v in state:
            idx = idx * (self.cap + 1) + int(v)
        return float(self.probs[idx])

    def mean_counts(self) -> np.ndarray:
        grid = np.indices((self.cap + 1,) * self.num_links).reshape(self.num_links, -1)
        return grid @ self.probs


def _stationary(rows, cols, rates, n, tol=1e-10, max_sweeps=200_000, check_every=10):
    """Stationary vector of the CTMC with the given off-diagonal rates.

    Symmetric Gauss-Seidel on the balance equations pi Q = 0 (each update
    solves one state's equation given the others, sweeping forward then
    backward), normalized per check and stopped once ||pi Q||_1 < tol.
    Between checks the dominant geometric error mode is extrapolated away;
    an extrapolation is kept only if it lowers the residual.
    """
    q = sparse.coo_matrix((rates, (rows, cols)), shape=(n, n)).tocsr()
    outflow = np.asarray(q.sum(axis=1)).ravel()
    qt = q.T.tocsr()

    def residual_of(vec):
        return float(np.abs(qt @ vec - outflow * vec).sum())

    pi = np.full(n, 1.0 / n)
    prev = None
    prev_delta_norm = 0.0
    residual = math.inf
    for sweep in range(check_every, max_sweeps + check_every, check_every):
        _gs_sweeps(qt.indptr, qt.indices, qt.data, outflow, pi, check_every)
        total = pi.sum()
        if not np.isfinite(total) or total <= 0:
            raise NumericalError("stationary solve diverged")
        pi /= total
        residual = residual_of(pi)
        if residual < tol:
            return pi, residual, sweep
        if prev is not None:
            delta = pi - prev
            delta_norm = float(np.abs(delta).sum())
            if 0 < delta_norm < prev_delta_norm:
                ratio = delta_norm / prev_delta_norm
                if ratio < 0.999:
                    guess = pi + delta * (ratio / (1.0 - ratio))
                    guess = np.clip(guess, 0.0, None)
                    total = guess.sum()
                    if total > 0:
                        guess /= total
                        r2 = residual_of(guess)
                        if r2 < residual:
                            pi, residual = guess, r2
                            if residual < tol:
                                return pi, residual, sweep
            prev_delta_norm = float(np.abs(pi - prev).sum())
        else:
            prev_delta_norm = math.inf
        prev = pi.copy()
    raise NumericalError(
        f"stationary solve did not reach residual {tol:g} in {max_sweeps} sweeps "
        f"(last residual {residual:.3e}, {n} states)"
    )


def _box_throughputs(
    graph: ConflictGraph, schedules: ScheduleSet, params: AccessParams, states: np.ndarray
) -> np.ndarray:
    """phi_k(x) for every row of `states`, shape (num_states, K)."""
    nlinks = graph.num_links
    nstates = states.shape[0]
    rates = np.asarray(graph.physical_rates)
    phi = np.zeros((nstates, nlinks))

    if params.infinite_alpha:
        busy = states > 0
        cards = np.array([bin(m).count("1") for m in schedules.masks])
        member = np.zeros((len(schedules), nlinks), dtype=bool)
        for i, mask in enumerate(schedules.masks):
            for k in range(nlinks):
                member[i, k] = bool(mask >> k & 1)
        fits = ~np.any(member[None, :, :] & ~busy[:, None, :], axis=2)  # (S, N)
        best = np.where(fits, cards[None, :], -1).max(axis=1)
        surviving = fits & (cards[None, :] == best[:, None])
        if params.discipline is Discipline.STANDARD:
            w = surviving.astype(float)
        else:
            prods = np.ones((nstates, len(schedules)))
            for i in range(len(schedules)):
                for k in range(nlinks):
                    if member[i, k]:
                        prods[:, i] *= states[:, k]
            w = np.where(surviving, prods, 0.0)
        p = w / w.sum(axis=1, keepdims=True)
        for i in range(len(schedules)):
            for k in range(nlinks):
                if member[i, k]:
                    phi[:, k] += p[:, i]
        return phi * rates

    alpha = params.alphas(nlinks)
    if params.discipline is Discipline.STANDARD:
        factors = alpha * (states > 0)
    else:
        factors = alpha * states
    w = np.ones((nstates, len(schedules)))
    for i, mask in enumerate(schedules.masks):
        for k in range(nlinks):
            if mask >> k & 1:
                w[:, i] *= factors[:, k]
    p = w / w.sum(axis=1, keepdims=True)
    for i, mask in enumerate(schedules.masks):
        for k in range(nlinks):
            if mask >> k & 1:
                phi[:, k] += p[:, i]
    return phi * rates


def solve_stationary(
    graph: ConflictGraph,
    schedules: ScheduleSet,
    traffic: TrafficProfile,
    params: AccessParams,
    cap: int,
    tol: float = 1e-10,
) -> TruncatedDistribution:
    """Stationary distribution of the flow-count chain on the box {0..cap}^K.

    Arrivals out of the cap are suppressed (reflecting truncation); all other
    rates are the exact lambda_k and phi_k(x)/sigma_k.
    """
    nlinks = graph.num_links
    side = cap + 1
    nstates = side**nlinks
    if nstates > MAX_BOX_STATES:
        raise ValueError(f"box of {nstates} states exceeds the {MAX_BOX_STATES} bound")

    states = np.indices((side,) * nlinks).reshape(nlinks, -1).T  # (S, K)
    phi = _box_throughputs(graph, schedules, params, states)
    lam = np.asarray(traffic.arrival_rates)
    inv_sigma = 1.0 / np.asarray(traffic.mean_sizes)

    strides = np.array([side ** (nlinks - 1 - k) for k in range(nlinks)])
    idx = np.arange(nstates)
    rows, cols, vals = [], [], []
    for k in range(nlinks):
        up = states[:, k] < cap
        rows.append(idx[up])
        cols.append(idx[up] + strides[k])
        vals.append(np.full(int(up.sum()), lam[k]))
        down = states[:, k] > 0
        rows.append(idx[down])
        cols.append(idx[down] - strides[k])
        vals.append(phi[down, k] * inv_sigma[k])

    pi, residual, iters = _stationary(
        np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), nstates, tol=tol
    )
    leakage = float(pi[(states == cap).any(axis=1)].sum())
    return TruncatedDistribution(
        cap=cap,
        num_links=nlinks,
        probs=pi,
        leakage=leakage,
        residual=residual,
        iterations=iters,
    )


def single_link_throughput(rho: float, alpha: float = math.inf, tail_tol: float = 1e-12) -> float:
    """Mean flow throughput of a single link, gamma = rho / E[x].

    The stationary distribution of the flow count is the processor-sharing
    series pi(n) proportional to prod_{m<=n} rho / phi(m) with
    phi(m) = alpha m / (1 + alpha m); alpha = inf gives the plain M/M/1
    geometric. The series is truncated adaptively with a geometric tail
    bound below tail_tol.
    """
    if not 0 < rho < 1:
        raise ValueError(f"single link is unstable unless 0 < rho < 1, got {rho}")
    if alpha != math.inf and alpha <= 0:
        raise ValueError("alpha must be positive")

    total = 1.0  # pi(0) terms, unnormalized
    weighted = 0.0
    term = 1.0
    n = 0
    while True:
        n += 1
        if math.isinf(alpha):
            ratio = rho
        else:
            ratio = rho * (1.0 + alpha * n) / (alpha * n)
        term *= ratio
        total += term
        weighted += n * term
        # Beyond this point ratios only shrink toward rho; once below rbar the
        # remaining mass and first moment are bounded by geometric sums.
        rbar = (1.0 + rho) / 2.0
        if ratio < rbar:
            tail = term * rbar / (1.0 - rbar)
            tail_weighted = tail * (n + 1.0 / (1.0 - rbar))
            if tail < tail_tol * total and tail_weighted < tail_tol * max(weighted, 1.0):
                break
        if n > 100_000_000:
            raise NumericalError("single-link series did not converge")
    mean = weighted / total
    return rho / mean


@dataclass(frozen=True)
class SaturationConstants:
    """Idle probabilities of the saturated 3-link-line subsystems.

    pi0 / pi13: both (resp. exactly one) of links 1,3 idle while link 2 is
    saturated. pi21: link 2 idle given link 1 idle while link 3 is
    saturated; pi23 the mirror image. Constants whose saturated subsystem is
    unstable are None, with the violated inequality recorded in `notes`.
    """

    pi0: float | None
    pi13: float | None
    pi21: float | None
    pi23: float | None
    cap: int
    truncation_errors: dict[str, float]
    notes: dict[str, str]

    def require(self, name: str) -> float:
        value = getattr(self, name)
        if value is None:
            raise ValueError(f"{name} unavailable: {self.notes.get(name, 'unknown reason')}")
        return value


def _coupled_idle(lam1, mu1, lam3, mu3, cap, tol):
    """Joint-idle probabilities of the two coupled saturated queues.

    Queue k in {1,3} is served at mu_k while the other is busy and at
    mu_k/2 while the other is idle (the saturated middle link takes the
    other half). Returns (pi0, pi13, p_min_zero).
    """
    side = cap + 1
    n = side * side
    i1, i3 = np.divmod(np.arange(n), side)
    rows, cols, vals = [], [], []

    up1 = i1 < cap
    rows.append(np.arange(n)[up1]); cols.append(np.arange(n)[up1] + side); vals.append(np.full(int(up1.sum()), lam1))
    up3 = i3 < cap
    rows.append(np.arange(n)[up3]); cols.append(np.arange(n)[up3] + 1); vals.append(np.full(int(up3.sum()), lam3))
    dn1 = i1 > 0
    rate1 = np.where(i3 > 0, mu1, mu1 / 2.0)
    rows.append(np.arange(n)[dn1]); cols.append(np.arange(n)[dn1] - side); vals.append(rate1[dn1])
    dn3 = i3 > 0
    rate3 = np.where(i1 > 0, mu3, mu3 / 2.0)
    rows.append(np.arange(n)[dn3]); cols.append(np.arange(n)[dn3] - 1); vals.append(rate3[dn3])

    pi, _, _ = _stationary(
        np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), n, tol=tol
    )
    both_zero = float(pi[(i1 == 0) & (i3 == 0)].sum())
    one_zero = float(pi[(i1 == 0) ^ (i3 == 0)].sum())
    min_zero = float(pi[(i1 == 0) | (i3 == 0)].sum())
    return both_zero, one_zero, min_zero


def _conditional_idle(lam_a, mu_a, lam2, mu2, cap, tol):
    """P(x2 = 0 | x_a = 0) when the third link is saturated.

    Queue a is M/M/1 at (lam_a, mu_a); queue 2 is served at mu2/2 only while
    queue a is idle.
    """
    side = cap + 1
    n = side * side
    ia, i2 = np.divmod(np.arange(n), side)
    rows, cols, vals = [], [], []

    upa = ia < cap
    rows.append(np.arange(n)[upa]); cols.append(np.arange(n)[upa] + side); vals.append(np.full(int(upa.sum()), lam_a))
    up2 = i2 < cap
    rows.append(np.arange(n)[up2]); cols.append(np.arange(n)[up2] + 1); vals.append(np.full(int(up2.sum()), lam2))
    dna = ia > 0
    rows.append(np.arange(n)[dna]); cols.append(np.arange(n)[dna] - side); vals.append(np.full(int(dna.sum()), mu_a))
    dn2 = (i2 > 0) & (ia == 0)
    rows.append(np.arange(n)[dn2]); cols.append(np.arange(n)[dn2] - 1); vals.append(np.full(int(dn2.sum()), mu2 / 2.0))

    pi, _, _ = _stationary(
        np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), n, tol=tol
    )
    pa0 = float(pi[ia == 0].sum())
    pa0_b0 = float(pi[(ia == 0) & (i2 == 0)].sum())
    return pa0_b0 / pa0


def coupled_idle_probabilities(
    traffic: TrafficProfile, cap: int = 150, tol: float = 1e-10
) -> tuple[float, float]:
    """(pi0, pi13) of the saturated coupled pair of outer links.

    Raises ValueError naming the violated inequality when the coupled
    system is unstable.
    """
    rho = traffic.intensities
    if rho[0] >= (1 + rho[2]) / 2:
        raise ValueError("coupled queues 1,3 unstable: rho_1 < (1+rho_3)/2 violated")
    if rho[2] >= (1 + rho[0]) / 2:
        raise ValueError("coupled queues 1,3 unstable: rho_3 < (1+rho_1)/2 violated")
    lam = traffic.arrival_rates
    mu = traffic.service_rates
    pi0, pi13, _ = _coupled_idle(lam[0], mu[0], lam[2], mu[2], cap, tol)
    return pi0, pi13


def conditional_idle_probability(
    traffic: TrafficProfile, outer_link: int, cap: int = 150, tol: float = 1e-10
) -> float:
    """pi2k = P(link 2 idle | link `outer_link` idle), other outer saturated.

    outer_link=1 gives pi21 (link 3 saturated), outer_link=3 gives pi23.
    Raises ValueError naming the violated inequality when the subsystem is
    unstable.
    """
    if outer_link not in (1, 3):
        raise ValueError("outer_link must be 1 or 3")
    a = outer_link - 1
    rho = traffic.intensities
    if rho[a] >= 1:
        raise ValueError(
            f"saturated subsystem for pi2{outer_link} unstable: rho_{outer_link} < 1 violated"
        )
    if rho[1] >= (1 - rho[a]) / 2:
        raise ValueError(
            f"saturated subsystem for pi2{outer_link} unstable: "
            f"rho_2 < (1-rho_{outer_link})/2 violated"
        )
    lam = traffic.arrival_rates
    mu = traffic.service_rates
    return _conditional_idle(lam[a], mu[a], lam[1], mu[1], cap, tol)


def saturation_constants(
    traffic: TrafficProfile,
    cap: int = 150,
    strict: bool = False,
    tol: float = 1e-10,
) -> SaturationConstants:
    """Saturated-subsystem idle probabilities for a 3-link line.

    Each constant is computed on a (cap x cap) box and again at cap/2; the
    difference is reported as its truncation error. With strict=True an
    unstable saturated subsystem raises instead of leaving the constant None.
    """
    if traffic.num_links != 3:
        raise ValueError("saturation constants are defined for the 3-link line")

    values: dict[str, float | None] = {}
    errors: dict[str, float] = {}
    notes: dict[str, str] = {}

    try:
        pi0, pi13 = coupled_idle_probabilities(traffic, cap, tol)
        pi0_half, pi13_half = coupled_idle_probabilities(traffic, cap // 2, tol)
        values["pi0"], values["pi13"] = pi0, pi13
        errors["pi0"] = abs(pi0 - pi0_half)
        errors["pi13"] = abs(pi13 - pi13_half)
    except ValueError as exc:
        if strict:
            raise
        values["pi0"] = values["pi13"] = None
        notes["pi0"] = notes["pi13"] = str(exc)

    for name, outer in (("pi21", 1), ("pi23", 3)):
        try:
            full = conditional_idle_probability(traffic, outer, cap, tol)
            half = conditional_idle_probability(traffic, outer, cap // 2, tol)
            values[name] = full
            errors[name] = abs(full - half)
        except ValueError as exc:
            if strict:
                raise
            values[name] = None
            notes[name] = str(exc)

    return SaturationConstants(
        pi0=values["pi0"],
        pi13=values["pi13"],
        pi21=values["pi21"],
        pi23=values["pi23"],
        cap=cap,
        truncation_errors=errors,
        notes=notes,
    )


def coupled_min_idle(traffic: TrafficProfile, cap: int = 150, tol: float = 1e-10) -> float:
    """P(min(x1, x3) = 0) in the saturated coupled chain, for cross-checks."""
    lam = traffic.arrival_rates
    mu = traffic.service_rates
    _, _, min_zero = _coupled_idle(lam[0], mu[0], lam[2], mu[2], cap, tol)
    return min_zero


def write_constants_fixture(path, traffic_points, caps=(100, 200, 400)) -> None:
    """Write golden saturation constants with their cap ladder to a text file.

    One line per (constant, traffic point, cap):
        name rho1 rho2 rho3 cap value
    Unit mean flow sizes are assumed for the recorded rho values.
    """
    lines = [
        "# flowcsma saturation-constant fixtures",
        "# regenerate: python -c \"from flowcsma.oracle import write_constants_fixture;"
        " write_constants_fixture('<path>', [(rho1, rho2, rho3), ...])\"",
        "# fields: name rho1 rho2 rho3 cap value",
    ]
    for rho in traffic_points:
        traffic = TrafficProfile(rho, 1.0)
        for cap in caps:
            cs = saturation_constants(traffic, cap=cap, strict=False)
            for name in ("pi0", "pi13", "pi21", "pi23"):
                value = getattr(cs, name)
                if value is None:
                    continue
                lines.append(
                    f"{name} {rho[0]:.6f} {rho[1]:.6f} {rho[2]:.6f} {cap} {value:.12g}"
                )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_constants_fixture(path) -> dict[tuple[str, tuple[float, float, float], int], float]:
    """Parse a fixture written by write_constants_fixture."""
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            name, r1, r2, r3, cap, value = line.split()
            out[(name, (float(r1), float(r2), float(r3)), int(cap))] = float(value)
    return out
