"""Domain types and selection evaluation for quality-constrained procurement.

A planner buys units from agents. Each agent has a per-unit success
probability (its quality), a per-unit cost, and a production capacity.
Selecting units earns ``revenue_scale * quality - cost`` per unit, and the
selected units' expected average quality must stay at or above a threshold.

Everything here is an immutable value object; solvers and simulations in
the other modules share these types freely across worker processes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

# Slack absorbed by every average-quality comparison, so that float summation
# noise never flips a feasibility verdict. All solvers use this same constant.
FEASIBILITY_TOL = 1e-12


def meets_threshold(avg_quality: float, threshold: float) -> bool:
    """Quality-constraint comparison shared by all solvers: avg >= threshold,
    with ``FEASIBILITY_TOL`` of slack for float error."""
    return avg_quality >= threshold - FEASIBILITY_TOL


@dataclass(frozen=True)
class Agent:
    """One seller: Bernoulli success rate ``quality``, per-unit ``cost``,
    and integer production ``capacity``.

    ``quality`` is normally a probability in [0, 1]; values above 1 are
    accepted because the bandit layer feeds unclamped optimistic estimates
    through the same type. Generators and file parsers enforce [0, 1] at
    the boundary.
    """

    quality: float
    cost: float
    capacity: int = 1

    def __post_init__(self) -> None:
        if not (self.quality >= 0.0 and math.isfinite(self.quality)):
            raise ValueError(f"quality must be finite and >= 0, got {self.quality}")
        if not (self.cost >= 0.0 and math.isfinite(self.cost)):
            raise ValueError(f"cost must be finite and >= 0, got {self.cost}")
        if not (isinstance(self.capacity, int) and self.capacity >= 1):
            raise ValueError(f"capacity must be an integer >= 1, got {self.capacity}")


@dataclass(frozen=True)
class Instance:
    """An offline selection problem: agents, quality threshold ``alpha``,
    and the revenue proportionality constant ``revenue_scale``.

    ``alpha`` is normally in [0, 1]; values above 1 are accepted because the
    bandit layer solves synthetic instances at an inflated threshold.
    """

    agents: tuple[Agent, ...]
    alpha: float
    revenue_scale: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "agents", tuple(self.agents))
        if len(self.agents) < 1:
            raise ValueError("instance needs at least one agent")
        if not (self.alpha >= 0.0 and math.isfinite(self.alpha)):
            raise ValueError(f"alpha must be finite and >= 0, got {self.alpha}")
        if not (self.revenue_scale > 0.0 and math.isfinite(self.revenue_scale)):
            raise ValueError(f"revenue_scale must be finite and > 0, got {self.revenue_scale}")

    @property
    def n(self) -> int:
        return len(self.agents)

    def qualities(self) -> tuple[float, ...]:
        return tuple(a.quality for a in self.agents)

    def costs(self) -> tuple[float, ...]:
        return tuple(a.cost for a in self.agents)

    def unit_utility(self, i: int) -> float:
        """Per-unit utility of agent ``i``: revenue_scale * quality - cost."""
        a = self.agents[i]
        return self.revenue_scale * a.quality - a.cost

    def unit_utilities(self) -> tuple[float, ...]:
        return tuple(self.unit_utility(i) for i in range(self.n))

    def is_unit_capacity(self) -> bool:
        return all(a.capacity == 1 for a in self.agents)


@dataclass(frozen=True)
class Selection:
    """Units procured per agent, aligned with ``Instance.agents``.

    After :func:`split_units` preprocessing every entry is 0 or 1.
    """

    counts: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "counts", tuple(self.counts))
        for x in self.counts:
            if not (isinstance(x, int) and x >= 0):
                raise ValueError(f"counts must be integers >= 0, got {x}")

    @classmethod
    def empty(cls, n: int) -> "Selection":
        return cls((0,) * n)

    @classmethod
    def from_indices(cls, n: int, indices: Sequence[int]) -> "Selection":
        counts = [0] * n
        for i in indices:
            counts[i] = 1
        return cls(tuple(counts))

    @property
    def total_units(self) -> int:
        return sum(self.counts)

    @property
    def selected_indices(self) -> tuple[int, ...]:
        return tuple(i for i, x in enumerate(self.counts) if x > 0)


@dataclass(frozen=True)
class Evaluation:
    """Utility and quality verdict of a selection.

    ``expected_avg_quality`` is None for the empty selection, which is
    feasible by convention (procuring nothing never violates the quality
    constraint, and it keeps "select nothing" a legal fallback).
    """

    utility: float
    expected_avg_quality: float | None
    feasible: bool


def split_units(instance: Instance) -> tuple[Instance, tuple[int, ...]]:
    """Expand capacities into unit-capacity agents.

    An agent with capacity m becomes m consecutive identical agents of
    capacity 1, preserving order. Returns the expanded instance together
    with a map from each unit agent back to its original index, so callers
    can re-aggregate solver output.
    """
    agents: list[Agent] = []
    origin: list[int] = []
    for i, a in enumerate(instance.agents):
        unit = a if a.capacity == 1 else Agent(a.quality, a.cost, 1)
        for _ in range(a.capacity):
            agents.append(unit)
            origin.append(i)
    return (
        Instance(tuple(agents), instance.alpha, instance.revenue_scale),
        tuple(origin),
    )


def merge_unit_counts(origin: Sequence[int], unit_selection: Selection, n: int) -> Selection:
    """Aggregate a unit-capacity selection back onto the original agents."""
    counts = [0] * n
    for unit_idx, x in enumerate(unit_selection.counts):
        counts[origin[unit_idx]] += x
    return Selection(tuple(counts))


def evaluate_selection(instance: Instance, sel: Selection) -> Evaluation:
    """Score a selection: total utility, expected average quality, feasibility.

    Raises ValueError on a length mismatch or a capacity violation.
    """
    if len(sel.counts) != instance.n:
        raise ValueError(
            f"selection has {len(sel.counts)} entries for {instance.n} agents"
        )
    total = 0
    utility = 0.0
    quality_sum = 0.0
    for i, x in enumerate(sel.counts):
        a = instance.agents[i]
        if x > a.capacity:
            raise ValueError(f"agent {i}: count {x} exceeds capacity {a.capacity}")
        if x:
            total += x
            utility += x * (instance.revenue_scale * a.quality - a.cost)
            quality_sum += x * a.quality
    if total == 0:
        return Evaluation(utility=0.0, expected_avg_quality=None, feasible=True)
    avg = quality_sum / total
    return Evaluation(
        utility=utility,
        expected_avg_quality=avg,
        feasible=meets_threshold(avg, instance.alpha),
    )


def hoeffding_bound(epsilon: float, m: int) -> float:
    """Tail bound exp(-2 * epsilon**2 * m) on the probability that the
    realized average quality of m procured units falls below
    ``threshold - epsilon`` when the expected average meets the threshold.
    """
    if not epsilon > 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    if not (isinstance(m, int) and m >= 1):
        raise ValueError(f"m must be an integer >= 1, got {m}")
    return math.exp(-2.0 * epsilon * epsilon * m)


def realized_avg_quality(outcomes: Sequence[int]) -> float:
    """Arithmetic mean of observed 0/1 unit outcomes."""
    if len(outcomes) == 0:
        raise ValueError("need at least one outcome")
    return sum(outcomes) / len(outcomes)
