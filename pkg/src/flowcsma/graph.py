"""Conflict graphs and enumeration of feasible schedules.

Links are identified by 1-based ids in the public API. Internally a schedule
is a bitmask over 0-based bit positions, so feasibility tests are O(1) and
the enumeration order (ascending mask value, empty schedule first) is
deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import ConfigurationError

MAX_LINKS = 32


@dataclass(frozen=True)
class ConflictGraph:
    """A set of wireless links plus the pairwise conflict relation.

    num_links: number of links K (1-based ids 1..K).
    conflicts: unordered pairs (k, l) of links that cannot be active together.
    physical_rates: per-link rate in bit/s when the link is scheduled.
    """

    num_links: int
    conflicts: frozenset[tuple[int, int]]
    physical_rates: tuple[float, ...]

    def __init__(
        self,
        num_links: int,
        conflicts: Iterable[tuple[int, int]] = (),
        physical_rates: Sequence[float] | float = 1.0,
    ):
        if num_links < 1:
            raise ConfigurationError(f"need at least one link, got {num_links}")
        if num_links > MAX_LINKS:
            raise ConfigurationError(
                f"num_links={num_links} exceeds the bitmask bound of {MAX_LINKS}"
            )
        norm = set()
        for pair in conflicts:
            k, l = pair
            if not (1 <= k <= num_links and 1 <= l <= num_links):
                raise ConfigurationError(f"conflict {pair!r} references an unknown link")
            if k == l:
                raise ConfigurationError(f"link {k} cannot conflict with itself")
            norm.add((min(k, l), max(k, l)))
        if isinstance(physical_rates, (int, float)):
            rates = (float(physical_rates),) * num_links
        else:
            rates = tuple(float(r) for r in physical_rates)
            if len(rates) != num_links:
                raise ConfigurationError(
                    f"got {len(rates)} physical rates for {num_links} links"
                )
        if any(r <= 0 for r in rates):
            raise ConfigurationError("physical rates must be strictly positive")
        object.__setattr__(self, "num_links", num_links)
        object.__setattr__(self, "conflicts", frozenset(norm))
        object.__setattr__(self, "physical_rates", rates)

    @property
    def conflict_masks(self) -> tuple[int, ...]:
        """Per link (0-based position) the bitmask of links it conflicts with."""
        masks = [0] * self.num_links
        for k, l in self.conflicts:
            masks[k - 1] |= 1 << (l - 1)
            masks[l - 1] |= 1 << (k - 1)
        return tuple(masks)


@dataclass(frozen=True)
class ScheduleSet:
    """All feasible schedules of a conflict graph, as sorted bitmasks.

    masks[0] == 0 is always the all-idle schedule.
    """

    num_links: int
    masks: tuple[int, ...]

    size: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "size", len(self.masks))

    def links(self, i: int) -> tuple[int, ...]:
        """1-based link ids active in schedule i."""
        m = self.masks[i]
        return tuple(k + 1 for k in range(self.num_links) if m >> k & 1)

    def __len__(self) -> int:
        return self.size

    def __iter__(self):
        return iter(self.masks)


def is_feasible(graph: ConflictGraph, subset: Iterable[int]) -> bool:
    """True iff no two links in `subset` (1-based ids) conflict."""
    mask = 0
    for k in subset:
        if not 1 <= k <= graph.num_links:
            raise ValueError(f"link id {k} out of range 1..{graph.num_links}")
        mask |= 1 << (k - 1)
    return _mask_feasible(mask, graph.conflict_masks)


def _mask_feasible(mask: int, conflict_masks: Sequence[int]) -> bool:
    m = mask
    while m:
        lsb = m & -m
        k = lsb.bit_length() - 1
        if conflict_masks[k] & mask:
            return False
        m -= lsb
    return True


def enumerate_schedules(graph: ConflictGraph) -> ScheduleSet:
    """Enumerate every independent set of the conflict graph.

    Backtracks over link indices, pruning with the conflict masks, then sorts
    by mask value so the empty schedule comes first and the order is
    reproducible.
    """
    conflict_masks = graph.conflict_masks
    n = graph.num_links
    out: list[int] = []

    def extend(start: int, mask: int, blocked: int) -> None:
        out.append(mask)
        for k in range(start, n):
            bit = 1 << k
            if blocked & bit:
                continue
            extend(k + 1, mask | bit, blocked | conflict_masks[k])

    extend(0, 0, 0)
    out.sort()
    return ScheduleSet(num_links=n, masks=tuple(out))
