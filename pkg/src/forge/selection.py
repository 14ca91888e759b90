"""Budget-constrained ensemble selection.

The scalarized greedy minimizes, over selections ``a`` drawn from the library,

    score(a) = (1 - w) * E(a) + w * (sum of selected costs / B) + penalty

where E is the validation error of the averaged ensemble (cross-entropy by
default), the middle term is the budget-normalized cost rate, and the penalty
is 0 inside the budget and ``rho1 + rho2 * |B - C|**rho3`` outside. The empty
selection scores +inf and is never evaluated through the formula.

The greedy never accepts a step that leaves the feasible region: the penalty
already makes over-budget candidates score at least rho1 worse, and the hard
guard turns that steering into a guarantee, so every returned solution
satisfies cost <= B (with 1e-9 slack on the float sum).

Ensemble predictions are always averaged in sorted-id order so that the
greedy, the multi-w driver, and the brute-force oracle produce bit-identical
floats for identical selections.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .combiners import MetricValue, cross_entropy, error_value
from .errors import BadK, EmptyLibrary, InfeasibleBudget, TooLarge, UnknownModelId
from .library import ModelLibrary

COST_SLACK = 1e-9
BRUTE_FORCE_MAX_MODELS = 20


@dataclass(frozen=True)
class BudgetSpec:
    """Cost budget B (same units as ModelRecord.cost) and the w schedule."""

    budget: float
    weights_w: tuple[float, ...] = (0.1, 0.01, 0.001)

    def __post_init__(self):
        if not self.budget > 0:
            raise ValueError(f"budget must be > 0, got {self.budget}")
        for w in self.weights_w:
            if not (0.0 < w < 1.0):
                raise ValueError(f"each w must lie in (0,1), got {w}")


@dataclass(frozen=True)
class PenaltyParams:
    rho1: float = 10.0
    rho2: float = 1.0
    rho3: float = 2.0

    def __post_init__(self):
        if not self.rho1 > 0:
            raise ValueError("rho1 must be > 0")
        if self.rho2 < 0:
            raise ValueError("rho2 must be >= 0")
        if self.rho3 < 1:
            raise ValueError("rho3 must be >= 1")


@dataclass
class EnsembleSolution:
    """A selection with its evaluation; ``selection`` keeps greedy pick order."""

    selection: tuple[str, ...]
    error: MetricValue
    cost: float
    normalized_cost: float
    score: float
    combined: np.ndarray = field(repr=False)
    feasible: bool = True
    step_scores: tuple[float, ...] = ()

    @property
    def size(self) -> int:
        return len(self.selection)


@dataclass(frozen=True)
class ReplacementSelection:
    """With-replacement pick: unique ids (first-pick order), multiplicities,
    and the normalized weights they induce."""

    ids: tuple[str, ...]
    multiplicity: dict[str, int]
    weights: tuple[float, ...]


class _Candidates:
    """Prestacked library view: selections are index tuples into sorted ids."""

    def __init__(self, lib: ModelLibrary):
        order = sorted(range(len(lib.models)), key=lambda i: lib.models[i].id)
        self.ids = [lib.models[i].id for i in order]
        self.preds = np.stack([lib.models[i].predictions for i in order])
        self.costs = np.array([lib.models[i].cost for i in order], dtype=np.float64)
        self.labels = lib.labels
        self.index = {mid: k for k, mid in enumerate(self.ids)}

    def resolve(self, selection) -> tuple[int, ...]:
        out = []
        for mid in selection:
            if mid not in self.index:
                raise UnknownModelId(f"model id not in library: {mid!r}")
            out.append(self.index[mid])
        if len(set(out)) != len(out):
            raise ValueError("selection contains duplicate model ids")
        return tuple(out)

    def combined(self, indices) -> np.ndarray:
        return self.preds[sorted(indices)].mean(axis=0)

    def cost(self, indices) -> float:
        return float(self.costs[sorted(indices)].sum())

    def error(self, indices, metric: str) -> float:
        return error_value(metric, self.combined(indices), self.labels)


def selection_cost(selection, lib: ModelLibrary) -> float:
    cand = _Candidates(lib)
    return cand.cost(cand.resolve(selection))


def normalized_cost(selection, lib: ModelLibrary, budget: BudgetSpec) -> float:
    """Rate between the summed cost of the selection and the budget."""
    return selection_cost(selection, lib) / budget.budget


def penalty(cost: float, budget: BudgetSpec, params: PenaltyParams | None = None) -> float:
    """0 inside the budget, rho1 + rho2 * |B - C|**rho3 beyond it.

    The violation magnitude |B - C| keeps the power real for non-integer
    rho3; for the default rho3 = 2 it matches (B - C)**2 exactly.
    """
    params = params or PenaltyParams()
    if cost <= budget.budget:
        return 0.0
    return params.rho1 + params.rho2 * abs(budget.budget - cost) ** params.rho3


def _score(cand: _Candidates, indices, w: float, budget: BudgetSpec,
           params: PenaltyParams, metric: str) -> float:
    if not indices:
        return math.inf
    raw_cost = cand.cost(indices)
    err = cand.error(indices, metric)
    return (1.0 - w) * err + w * (raw_cost / budget.budget) + penalty(raw_cost, budget, params)


def scalarized_score(selection, lib: ModelLibrary, w: float, budget: BudgetSpec,
                     params: PenaltyParams | None = None,
                     error_metric: str = "cross_entropy") -> float:
    """Score of an arbitrary selection; the empty selection is +inf."""
    cand = _Candidates(lib)
    return _score(cand, cand.resolve(selection), w, budget, params or PenaltyParams(), error_metric)


def _solution(cand: _Candidates, picks: list[int], w: float, budget: BudgetSpec,
              params: PenaltyParams, metric: str,
              step_scores: tuple[float, ...]) -> EnsembleSolution:
    combined = cand.combined(picks)
    raw_cost = cand.cost(picks)
    return EnsembleSolution(
        selection=tuple(cand.ids[i] for i in picks),
        error=MetricValue(metric, cand.error(picks, metric)),
        cost=raw_cost,
        normalized_cost=raw_cost / budget.budget,
        score=_score(cand, picks, w, budget, params, metric),
        combined=combined,
        feasible=raw_cost <= budget.budget + COST_SLACK,
        step_scores=step_scores,
    )


def smobf_greedy(lib: ModelLibrary, budget: BudgetSpec, w: float,
                 params: PenaltyParams | None = None,
                 error_metric: str = "cross_entropy") -> EnsembleSolution:
    """Forward greedy on the scalarized score.

    Starts from the empty ensemble (+inf) and repeatedly adds the unselected
    model whose addition yields the lowest score (ties -> lowest id),
    accepting only strict improvements that stay within budget; stops when no
    addition qualifies. Raises InfeasibleBudget when no single model fits.
    """
    if not lib.models:
        raise EmptyLibrary("cannot select from an empty library")
    params = params or PenaltyParams()
    cand = _Candidates(lib)
    limit = budget.budget + COST_SLACK

    picks: list[int] = []
    remaining = list(range(len(cand.ids)))
    current_score = math.inf
    current_cost = 0.0
    trace: list[float] = []
    while remaining:
        best_idx = -1
        best_score = math.inf
        for j in remaining:  # ascending index == ascending id: ties -> lowest id
            if current_cost + cand.costs[j] > limit:
                continue
            s = _score(cand, picks + [j], w, budget, params, error_metric)
            if s < best_score:
                best_score = s
                best_idx = j
        if best_idx < 0:
            if not picks:
                raise InfeasibleBudget(
                    f"no single model fits budget {budget.budget}"
                )
            break
        if not best_score < current_score:
            break
        picks.append(best_idx)
        remaining.remove(best_idx)
        current_score = best_score
        current_cost = cand.cost(picks)
        trace.append(best_score)

    return _solution(cand, picks, w, budget, params, error_metric, tuple(trace))


def smobf_multi_w(lib: ModelLibrary, budget: BudgetSpec,
                  params: PenaltyParams | None = None) -> EnsembleSolution:
    """Run the greedy once per w and keep the lowest-cross-entropy solution.

    Ties break toward smaller cost, then lexicographically smaller id set.
    """
    best: EnsembleSolution | None = None
    best_key = None
    for w in budget.weights_w:
        sol = smobf_greedy(lib, budget, w, params, error_metric="cross_entropy")
        key = (cross_entropy(sol.combined, lib.labels), sol.cost, tuple(sorted(sol.selection)))
        if best_key is None or key < best_key:
            best, best_key = sol, key
    assert best is not None
    return best


def forward_greedy_fixed_size(lib: ModelLibrary, k: int,
                              error_metric: str = "cross_entropy") -> EnsembleSolution:
    """Cost-blind baseline: add the error-minimizing model for exactly k steps."""
    if not lib.models:
        raise EmptyLibrary("cannot select from an empty library")
    if not (1 <= k <= len(lib.models)):
        raise BadK(f"k must be in [1, {len(lib.models)}], got {k}")
    cand = _Candidates(lib)
    picks: list[int] = []
    remaining = list(range(len(cand.ids)))
    for _ in range(k):
        best_idx = min(remaining, key=lambda j: (cand.error(picks + [j], error_metric), j))
        picks.append(best_idx)
        remaining.remove(best_idx)
    err = cand.error(picks, error_metric)
    return EnsembleSolution(
        selection=tuple(cand.ids[i] for i in picks),
        error=MetricValue(error_metric, err),
        cost=cand.cost(picks),
        normalized_cost=0.0,  # no budget in play
        score=err,
        combined=cand.combined(picks),
        feasible=True,
    )


def forward_greedy_with_replacement(lib: ModelLibrary, k: int,
                                    error_metric: str = "cross_entropy") -> ReplacementSelection:
    """Greedy where a model may be re-added; multiplicities become weights."""
    if not lib.models:
        raise EmptyLibrary("cannot select from an empty library")
    if k < 1:
        raise BadK(f"k must be >= 1, got {k}")
    cand = _Candidates(lib)
    n = len(cand.ids)
    counts = np.zeros(n, dtype=np.int64)

    def multiset_error(counts_vec) -> float:
        combined = np.tensordot(counts_vec / counts_vec.sum(), cand.preds, axes=1)
        return error_value(error_metric, combined, cand.labels)

    order: list[int] = []
    for _ in range(k):
        best_j = -1
        best_err = math.inf
        for j in range(n):
            trial = counts.copy()
            trial[j] += 1
            e = multiset_error(trial.astype(np.float64))
            if e < best_err:
                best_err = e
                best_j = j
        counts[best_j] += 1
        if best_j not in order:
            order.append(best_j)

    total = int(counts.sum())
    ids = tuple(cand.ids[j] for j in order)
    multiplicity = {cand.ids[j]: int(counts[j]) for j in order}
    weights = tuple(counts[j] / total for j in order)
    return ReplacementSelection(ids=ids, multiplicity=multiplicity, weights=weights)


def brute_force_best(lib: ModelLibrary, budget: BudgetSpec,
                     error_metric: str = "cross_entropy") -> EnsembleSolution:
    """Exact minimizer of E over all non-empty subsets with cost <= B.

    Ties break toward smaller cost, then lexicographically smaller id set.
    Guarded to |L| <= 20.
    """
    if not lib.models:
        raise EmptyLibrary("cannot select from an empty library")
    n = len(lib.models)
    if n > BRUTE_FORCE_MAX_MODELS:
        raise TooLarge(f"brute force limited to {BRUTE_FORCE_MAX_MODELS} models, got {n}")
    cand = _Candidates(lib)
    limit = budget.budget + COST_SLACK

    best_key = None
    best_subset: tuple[int, ...] | None = None
    for r in range(1, n + 1):
        for subset in combinations(range(n), r):
            cost = float(cand.costs[list(subset)].sum())
            if cost > limit:
                continue
            err = cand.error(subset, error_metric)
            key = (err, cost, tuple(cand.ids[i] for i in subset))
            if best_key is None or key < best_key:
                best_key = key
                best_subset = subset
    if best_subset is None:
        raise InfeasibleBudget(f"no subset fits budget {budget.budget}")
    err, cost, ids = best_key
    return EnsembleSolution(
        selection=ids,
        error=MetricValue(error_metric, err),
        cost=cost,
        normalized_cost=cost / budget.budget,
        score=err,
        combined=cand.combined(best_subset),
        feasible=True,
    )


@dataclass(frozen=True)
class SweepRow:
    budget: float | None  # None for budget-free baseline rows
    error: float | None
    cost: float | None
    n_models: int
    ids: tuple[str, ...]
    feasible: bool
    algo: str = "smobf"


def budget_sweep(lib: ModelLibrary, budgets, params: PenaltyParams | None = None,
                 weights_w: tuple[float, ...] | None = None) -> list[SweepRow]:
    """One smobf_multi_w solution per ascending budget; infeasible rows are flagged."""
    budgets = list(budgets)
    if budgets != sorted(budgets):
        raise ValueError("budgets must be sorted ascending")
    rows: list[SweepRow] = []
    for b in budgets:
        spec = BudgetSpec(b) if weights_w is None else BudgetSpec(b, weights_w)
        try:
            sol = smobf_multi_w(lib, spec, params)
        except InfeasibleBudget:
            rows.append(SweepRow(b, None, None, 0, (), False))
            continue
        rows.append(
            SweepRow(b, sol.error.value, sol.cost, sol.size, tuple(sorted(sol.selection)), True)
        )
    return rows
