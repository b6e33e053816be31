"""Offline subset selection with known qualities.

All solvers expect unit-capacity instances (run :func:`qcss.core.split_units`
first) and share the same structure: agents are split into four groups by
(quality vs threshold) x (utility sign),

* s1: quality >= alpha and utility >= 0  -- always selected,
* s2: quality <  alpha and utility >= 0  -- worth buying if quality headroom allows,
* s3: quality >= alpha and utility <  0  -- only useful to fund s2 purchases,
* s4: quality <  alpha and utility <  0  -- never selected,

and the interesting work happens on s2 and s3. ``dpss_solve`` searches that
subproblem exhaustively and is exact; ``gss_solve`` is a rate-greedy
approximation that runs in O(n log n); ``brute_force_solve`` enumerates all
2**n selections and serves as the independent oracle in tests.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .core import (
    FEASIBILITY_TOL,
    Evaluation,
    Instance,
    Selection,
    evaluate_selection,
    meets_threshold,
)

# 2**n enumeration guard for the oracle.
BRUTE_FORCE_MAX_AGENTS = 25

_CHUNK_BITS = 18  # enumerate at most 2**18 selections per numpy block

# Snap-to-one tolerance for the greedy's fractional bookkeeping: a unit is
# exhausted when accumulated fractions reach 1 up to float noise. Kept below
# FEASIBILITY_TOL so snapping can never hide a real quality shortfall.
_UNIT_SNAP = 1e-13


@dataclass(frozen=True)
class Partition:
    """The four-way agent split plus the quality bookkeeping the solvers use:
    ``surplus`` is the total quality headroom contributed by s1, and
    ``deficits`` maps each s2/s3 agent to quality - alpha (negative for s2).
    """

    s1: tuple[int, ...]
    s2: tuple[int, ...]
    s3: tuple[int, ...]
    s4: tuple[int, ...]
    surplus: float
    deficits: Mapping[int, float]


@dataclass(frozen=True)
class SolveResult:
    selection: Selection
    evaluation: Evaluation
    elapsed: float  # seconds, solve call only
    solver_name: str

    @property
    def utility(self) -> float:
        return self.evaluation.utility


def _require_unit_capacity(instance: Instance, solver: str) -> None:
    if not instance.is_unit_capacity():
        raise ValueError(f"{solver} requires a unit-capacity instance; apply split_units first")


def partition_agents(instance: Instance) -> Partition:
    """Classify agents into s1..s4 and compute surplus and per-agent deficits."""
    _require_unit_capacity(instance, "partition_agents")
    alpha = instance.alpha
    scale = instance.revenue_scale
    s1: list[int] = []
    s2: list[int] = []
    s3: list[int] = []
    s4: list[int] = []
    surplus = 0.0
    deficits: dict[int, float] = {}
    for i, a in enumerate(instance.agents):
        high_quality = a.quality >= alpha
        utility = scale * a.quality - a.cost
        if high_quality and utility >= 0.0:
            s1.append(i)
            surplus += a.quality - alpha
        elif not high_quality and utility >= 0.0:
            s2.append(i)
            deficits[i] = a.quality - alpha
        elif high_quality:
            s3.append(i)
            deficits[i] = a.quality - alpha
        else:
            s4.append(i)
    return Partition(tuple(s1), tuple(s2), tuple(s3), tuple(s4), surplus, deficits)


def _finish(instance: Instance, indices: list[int], started: float, name: str) -> SolveResult:
    selection = Selection.from_indices(instance.n, indices)
    elapsed = time.perf_counter() - started
    return SolveResult(selection, evaluate_selection(instance, selection), elapsed, name)


def dpss_solve(instance: Instance) -> SolveResult:
    """Exact solver: take all of s1, none of s4, and search every
    include/exclude assignment over s2 and s3 depth-first, keeping the best
    utility whose accumulated quality headroom stays nonnegative at the leaf.

    Branches are pruned when the remaining positive-utility mass cannot beat
    the incumbent; this never changes the returned assignment because ties
    keep the first (exclude-heavy) assignment found.
    """
    _require_unit_capacity(instance, "dpss_solve")
    started = time.perf_counter()
    part = partition_agents(instance)
    group = list(part.s2) + list(part.s3)
    g = len(group)
    deficits = [part.deficits[i] for i in group]
    utilities = [instance.unit_utility(i) for i in group]

    # Best achievable utility from position i onward: sum of remaining
    # positive utilities. Used for incumbent pruning.
    positive_suffix = [0.0] * (g + 1)
    for i in range(g - 1, -1, -1):
        positive_suffix[i] = positive_suffix[i + 1] + max(utilities[i], 0.0)

    best_take = [False] * g  # incumbent; empty assignment is always feasible
    best_utility = 0.0
    take = [False] * g

    def search(i: int, headroom: float, utility: float) -> None:
        nonlocal best_utility, best_take
        if utility + positive_suffix[i] <= best_utility:
            return
        if i == g:
            if headroom >= -FEASIBILITY_TOL and utility > best_utility:
                best_utility = utility
                best_take = take.copy()
            return
        search(i + 1, headroom, utility)
        take[i] = True
        search(i + 1, headroom + deficits[i], utility + utilities[i])
        take[i] = False

    search(0, part.surplus, 0.0)

    chosen = list(part.s1) + [idx for idx, used in zip(group, best_take) if used]
    return _finish(instance, chosen, started, "dpss")


def gss_solve(instance: Instance) -> SolveResult:
    """Greedy solver trading quality headroom for revenue at the best rate.

    s2 agents are ranked by revenue gained per unit of quality given up,
    s3 agents by revenue lost per unit of quality contributed. The s1
    surplus is spent on the best s2 units (fractionally at the margin),
    then s2 remainders are paired against s3 units while the gain rate
    exceeds the loss rate. A final fractional s3 unit is rounded up to keep
    the quality constraint; every other fraction is dropped. If rounding up
    leaves the whole selection at negative utility, fall back to s1 alone.
    """
    _require_unit_capacity(instance, "gss_solve")
    started = time.perf_counter()
    part = partition_agents(instance)
    alpha = instance.alpha

    # rate = utility per unit of quality distance from the threshold;
    # s3 agents sitting exactly at the threshold have no headroom to sell
    # and negative utility, so they are never worth selecting.
    def rate(i: int) -> float:
        return instance.unit_utility(i) / (alpha - instance.agents[i].quality)

    ranked_s2 = sorted(part.s2, key=lambda i: (-rate(i), i))
    ranked_s3 = sorted(
        (j for j in part.s3 if alpha - instance.agents[j].quality != 0.0),
        key=lambda j: (rate(j), j),
    )

    fraction: dict[int, float] = {}
    surplus = part.surplus
    p = 0
    while surplus > 0.0 and p < len(ranked_s2):
        i = ranked_s2[p]
        need = alpha - instance.agents[i].quality
        if need <= surplus:
            fraction[i] = 1.0
            surplus -= need
            p += 1
        else:
            fraction[i] = surplus / need
            surplus = 0.0

    q = 0
    while p < len(ranked_s2) and q < len(ranked_s3):
        i = ranked_s2[p]
        j = ranked_s3[q]
        gain_rate = rate(i)
        loss_rate = rate(j)
        if gain_rate <= loss_rate:
            break
        need_i = alpha - instance.agents[i].quality
        room_j = instance.agents[j].quality - alpha
        transfer = min(
            (1.0 - fraction.get(i, 0.0)) * need_i,
            (1.0 - fraction.get(j, 0.0)) * room_j,
        )
        fraction[i] = fraction.get(i, 0.0) + transfer / need_i
        fraction[j] = fraction.get(j, 0.0) + transfer / room_j
        if fraction[i] >= 1.0 - _UNIT_SNAP:
            fraction[i] = 1.0
            p += 1
        if fraction[j] >= 1.0 - _UNIT_SNAP:
            fraction[j] = 1.0
            q += 1

    # Integrality: a leftover fractional s3 unit is rounded up (its quality
    # is above the threshold, so this cannot break feasibility); fractional
    # s2 units are dropped, which only returns unused headroom.
    chosen = list(part.s1)
    for i in ranked_s2:
        if fraction.get(i, 0.0) >= 1.0:
            chosen.append(i)
    for j in ranked_s3:
        if fraction.get(j, 0.0) > 0.0:
            chosen.append(j)

    total = sum(instance.unit_utility(i) for i in chosen)
    if total < 0.0:
        chosen = list(part.s1)

    return _finish(instance, sorted(chosen), started, "gss")


def _selection_bits(n: int, start: int, stop: int) -> np.ndarray:
    """Selection vectors for mask values [start, stop), one row per mask.

    Masks are ordered so that ascending mask value is ascending lexicographic
    order of the selection vector (agent 0 is the most significant bit),
    which makes "first argmax" the lexicographically smallest tie-break.
    """
    masks = np.arange(start, stop, dtype=np.int64)
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    return ((masks[:, None] >> shifts[None, :]) & 1).astype(np.float64)


def enumerate_selections(instance: Instance):
    """Yield (start_mask, bits, utilities, feasible) blocks covering all 2**n
    selections of a unit-capacity instance. Shared by the brute-force oracle
    and the bandit module's exhaustive computations.
    """
    n = instance.n
    if n > BRUTE_FORCE_MAX_AGENTS:
        raise ValueError(
            f"exhaustive enumeration is limited to {BRUTE_FORCE_MAX_AGENTS} agents "
            f"(got {n}); use dpss_solve instead"
        )
    q = np.array(instance.qualities())
    r = np.array(instance.unit_utilities())
    total = 1 << n
    step = min(total, 1 << _CHUNK_BITS)
    for start in range(0, total, step):
        bits = _selection_bits(n, start, min(start + step, total))
        counts = bits.sum(axis=1)
        utilities = bits @ r
        quality_sums = bits @ q
        with np.errstate(invalid="ignore", divide="ignore"):
            averages = quality_sums / counts
        feasible = (counts == 0) | (averages >= instance.alpha - FEASIBILITY_TOL)
        yield start, bits, utilities, feasible


def brute_force_solve(instance: Instance) -> SolveResult:
    """Exhaustive oracle: the utility-maximal feasible selection over all
    2**n subsets, tie-broken to the lexicographically smallest selection
    vector. Guarded to n <= BRUTE_FORCE_MAX_AGENTS.
    """
    _require_unit_capacity(instance, "brute_force_solve")
    started = time.perf_counter()
    best_utility = -np.inf
    best_mask = 0
    for start, _, utilities, feasible in enumerate_selections(instance):
        masked = np.where(feasible, utilities, -np.inf)
        local = int(np.argmax(masked))
        if masked[local] > best_utility:
            best_utility = masked[local]
            best_mask = start + local
    n = instance.n
    chosen = [i for i in range(n) if (best_mask >> (n - 1 - i)) & 1]
    return _finish(instance, chosen, started, "oracle")
