"""Online subset selection when agent qualities must be learned.

The learner runs for ``horizon`` rounds against a hidden Bernoulli quality
vector. It first plays every agent for ``tau`` exploration rounds, then each
round builds optimistic quality estimates (empirical mean plus a confidence
bonus), hands them to an offline solver at an inflated threshold
``alpha + eps2``, and plays whatever that solver selects, observing one 0/1
quality draw per selected agent.

Accounting is quality-constraint aware: a round that meets the (tolerance-
relaxed) constraint pays the utility gap to the best truly-feasible subset;
a round that violates it pays the worst-case feasible gap ``penalty``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import Agent, Instance, Selection, meets_threshold
from .solvers import (
    BRUTE_FORCE_MAX_AGENTS,
    SolveResult,
    _selection_bits,
    enumerate_selections,
)

# Absorbs float rounding in the transcendental exploration-length formula so
# that mathematically-integer values do not ceil one round too high.
_CEIL_SLACK = 1e-9


def compute_tau(horizon: int, eps2: float) -> int:
    """Number of full-set exploration rounds: ceil(3 ln T / (2 eps2^2)).

    Rejects configurations whose exploration would consume the whole horizon.
    """
    if not (isinstance(horizon, int) and horizon >= 2):
        raise ValueError(f"horizon must be an integer >= 2, got {horizon}")
    if not eps2 > 0:
        raise ValueError(f"eps2 must be > 0, got {eps2}")
    tau = math.ceil(3.0 * math.log(horizon) / (2.0 * eps2 * eps2) - _CEIL_SLACK)
    tau = max(tau, 1)
    if tau >= horizon:
        raise ValueError(
            f"exploration needs {tau} rounds but the horizon is only {horizon}; "
            f"increase the horizon or eps2"
        )
    return tau


@dataclass
class Environment:
    """Hidden Bernoulli qualities plus the random stream that realizes them.

    Draws are consumed in agent-index order within a round, one uniform per
    selected agent, so runs are replayable from the seed.
    """

    true_qualities: tuple[float, ...]
    rng: np.random.Generator

    def __post_init__(self) -> None:
        self.true_qualities = tuple(float(q) for q in self.true_qualities)
        for q in self.true_qualities:
            if not 0.0 <= q <= 1.0:
                raise ValueError(f"true quality must be in [0, 1], got {q}")

    @classmethod
    def from_seed(cls, true_qualities: Sequence[float], seed) -> "Environment":
        return cls(tuple(true_qualities), np.random.default_rng(seed))

    @property
    def n(self) -> int:
        return len(self.true_qualities)

    def draw(self, selected: Sequence[int]) -> list[int]:
        """One 0/1 quality realization per selected agent, in index order."""
        if len(selected) == 0:
            return []
        u = self.rng.random(len(selected))
        return [1 if u[k] < self.true_qualities[i] else 0 for k, i in enumerate(selected)]


@dataclass
class BanditState:
    """Per-agent pull counts and success totals at round ``round``."""

    pulls: list[int]
    successes: list[int]
    round: int = 0

    @classmethod
    def fresh(cls, n: int) -> "BanditState":
        return cls(pulls=[0] * n, successes=[0] * n)

    def emp_mean(self, i: int) -> float:
        """Exact average of the realizations observed for agent ``i``."""
        if self.pulls[i] == 0:
            raise ValueError(f"agent {i} has no observations yet")
        return self.successes[i] / self.pulls[i]

    def update(self, selected: Sequence[int], outcomes: Sequence[int], t: int) -> None:
        for i, x in zip(selected, outcomes):
            self.pulls[i] += 1
            self.successes[i] += x
        self.round = t


def ucb_estimate(state: BanditState, agent: int, t: int) -> float:
    """Optimistic quality estimate: empirical mean plus sqrt(3 ln t / (2 w)).

    Deliberately not clamped to [0, 1]; the offline solvers accept estimates
    above 1 and clamping would weaken exploration.
    """
    if t < 1:
        raise ValueError(f"round must be >= 1, got {t}")
    w = state.pulls[agent]
    if w < 1:
        raise ValueError(f"agent {agent} has not been pulled yet")
    return state.emp_mean(agent) + math.sqrt(3.0 * math.log(t) / (2.0 * w))


@dataclass(frozen=True)
class SSUCBConfig:
    """Run parameters for the explore/exploit loop.

    eps1 is the planner's tolerance: a round counts as satisfying the quality
    constraint when the selected set's true expected average quality is at
    least alpha - eps1. eps2 is the conservatism margin added to the threshold
    when invoking the offline solver on optimistic estimates; it also sets the
    exploration length.
    """

    alpha: float
    eps1: float
    eps2: float
    horizon: int
    revenue_scale: float
    costs: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "costs", tuple(float(c) for c in self.costs))
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if not self.eps1 > 0:
            raise ValueError(f"eps1 must be > 0, got {self.eps1}")
        for c in self.costs:
            if not (c >= 0 and math.isfinite(c)):
                raise ValueError(f"costs must be finite and >= 0, got {c}")
        if not self.revenue_scale > 0:
            raise ValueError(f"revenue_scale must be > 0, got {self.revenue_scale}")
        compute_tau(self.horizon, self.eps2)  # validates horizon/eps2 jointly

    @property
    def n(self) -> int:
        return len(self.costs)

    @property
    def tau(self) -> int:
        return compute_tau(self.horizon, self.eps2)


@dataclass(frozen=True)
class RoundRecord:
    round: int
    phase: str  # "explore" or "exploit"
    selected: tuple[int, ...]
    qc_satisfied: bool
    expected_avg_quality: float | None
    realized_avg_quality: float | None
    ucb_bonus_mean: float | None  # exploit rounds with a nonempty selection
    regret_increment: float
    cum_regret: float


@dataclass
class RegretLedger:
    """Per-round log of one run plus the true-instance reference quantities."""

    records: list[RoundRecord]
    tau: int
    optimal_selection: Selection
    opt_utility: float
    penalty: float
    eps1_separated: bool
    config: "SSUCBConfig | None" = field(repr=False, default=None)

    def cumulative_regret(self) -> float:
        return self.records[-1].cum_regret if self.records else 0.0


def optimal_feasible(instance: Instance) -> tuple[Selection, float, float]:
    """Best truly-feasible subset, its utility, and the worst-case feasible
    utility gap used as the violation penalty.

    The empty set is feasible with utility 0, so the optimum is >= 0 and the
    penalty is >= the optimum. Exhaustive; guarded by the enumeration limit.
    """
    best_utility = -np.inf
    best_mask = 0
    worst_utility = np.inf
    for start, _, utilities, feasible in enumerate_selections(instance):
        masked = np.where(feasible, utilities, -np.inf)
        local = int(np.argmax(masked))
        if masked[local] > best_utility:
            best_utility = masked[local]
            best_mask = start + local
        worst_here = np.where(feasible, utilities, np.inf).min()
        worst_utility = min(worst_utility, worst_here)
    n = instance.n
    chosen = Selection.from_indices(
        n, [i for i in range(n) if (best_mask >> (n - 1 - i)) & 1]
    )
    return chosen, float(best_utility), float(best_utility - worst_utility)


def eps_separated(qualities: Sequence[float], alpha: float, eps: float) -> bool:
    """True when no nonempty subset's mean quality lands in [alpha - eps,
    alpha): the band where a tolerance-relaxed constraint check would accept
    a set that actually violates the constraint.
    """
    q = [float(v) for v in qualities]
    n = len(q)
    if n > BRUTE_FORCE_MAX_AGENTS:
        raise ValueError(
            f"separatedness check is limited to {BRUTE_FORCE_MAX_AGENTS} agents (got {n})"
        )
    arr = np.array(q)
    total = 1 << n
    step = min(total, 1 << 18)
    for start in range(0, total, step):
        bits = _selection_bits(n, start, min(start + step, total))
        counts = bits.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            means = (bits @ arr) / counts
        in_band = (counts > 0) & (means >= alpha - eps) & (means < alpha)
        if bool(in_band.any()):
            return False
    return True


def _true_utility(qualities: Sequence[float], config: SSUCBConfig, selected: Sequence[int]) -> float:
    return sum(
        config.revenue_scale * qualities[i] - config.costs[i] for i in selected
    )


def regret_round(
    selected: Sequence[int],
    true_qualities: Sequence[float],
    alpha: float,
    eps1: float,
    opt_utility: float,
    penalty: float,
    revenue_scale: float = 1.0,
    costs: Sequence[float] | None = None,
) -> float:
    """Regret charged for one round: the gap to the feasible optimum when the
    played set meets the relaxed constraint (threshold alpha - eps1 against
    true qualities), the flat penalty otherwise. The empty set is vacuously
    satisfying and pays the full gap to the optimum.
    """
    if len(selected) == 0:
        return opt_utility
    avg = sum(true_qualities[i] for i in selected) / len(selected)
    if not meets_threshold(avg, alpha - eps1):
        return penalty
    if costs is None:
        raise ValueError("costs are required to score a nonempty selection")
    played = sum(revenue_scale * true_qualities[i] - costs[i] for i in selected)
    return opt_utility - played


def ssucb_run(
    env: Environment,
    config: SSUCBConfig,
    ssa: Callable[[Instance], SolveResult],
) -> RegretLedger:
    """Run the explore/exploit loop for ``config.horizon`` rounds.

    Rounds 1..tau play the full agent set. Every later round feeds optimistic
    estimates and the inflated threshold alpha + eps2 to ``ssa`` (dpss_solve
    or gss_solve) and plays its selection, observing draws only for selected
    agents. Identical seed and config reproduce the ledger bit for bit.
    """
    n = env.n
    if n != config.n:
        raise ValueError(f"environment has {n} agents but config has {config.n} costs")
    tau = config.tau
    horizon = config.horizon
    alpha = config.alpha
    scale = config.revenue_scale
    costs = config.costs
    truth = env.true_qualities

    true_instance = Instance(
        tuple(Agent(q, c) for q, c in zip(truth, costs)), alpha, scale
    )
    opt_selection, opt_utility, penalty = optimal_feasible(true_instance)
    separated = eps_separated(truth, alpha, config.eps1)

    state = BanditState.fresh(n)
    all_agents = tuple(range(n))
    relaxed = alpha - config.eps1
    target = alpha + config.eps2
    records: list[RoundRecord] = []
    cum = 0.0

    for t in range(1, horizon + 1):
        if t <= tau:
            phase = "explore"
            selected = all_agents
            bonus_mean = None
        else:
            phase = "exploit"
            log_term = 1.5 * math.log(t)
            bonus_total = 0.0
            agents = []
            for i in range(n):
                bonus = math.sqrt(log_term / state.pulls[i])
                agents.append(Agent(state.successes[i] / state.pulls[i] + bonus, costs[i]))
            synthetic = Instance(tuple(agents), target, scale)
            selected = ssa(synthetic).selection.selected_indices
            if selected:
                bonus_total = sum(
                    math.sqrt(log_term / state.pulls[i]) for i in selected
                )
                bonus_mean = bonus_total / len(selected)
            else:
                bonus_mean = None

        outcomes = env.draw(selected)
        state.update(selected, outcomes, t)

        if selected:
            expected = sum(truth[i] for i in selected) / len(selected)
            realized = sum(outcomes) / len(outcomes)
            qc = meets_threshold(expected, relaxed)
            if qc:
                increment = opt_utility - _true_utility(truth, config, selected)
            else:
                increment = penalty
        else:
            expected = None
            realized = None
            qc = True
            increment = opt_utility

        cum += increment
        records.append(
            RoundRecord(
                round=t,
                phase=phase,
                selected=tuple(selected),
                qc_satisfied=qc,
                expected_avg_quality=expected,
                realized_avg_quality=realized,
                ucb_bonus_mean=bonus_mean,
                regret_increment=increment,
                cum_regret=cum,
            )
        )

    return RegretLedger(
        records=records,
        tau=tau,
        optimal_selection=opt_selection,
        opt_utility=opt_utility,
        penalty=penalty,
        eps1_separated=separated,
        config=config,
    )
