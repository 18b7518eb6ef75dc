"""Budgeted configuration selection.

Sizes are quantized to integer units by ceiling (conservative: a plan
feasible in units is feasible in real megabytes), candidate configs that
cannot coexist with every other object's minimum-size config are filtered
out, and the remaining multiple-choice knapsack is solved exactly by a
staged dynamic program. Fairness and greedy baselines plus a brute-force
oracle share the same quantized inputs and tie-breaking, so their plans
and values are directly comparable.

Canonical item order within a group is (weight, g, p) ascending, and all
solvers break value ties toward the lowest item index. Candidate totals
are accumulated left-to-right in object order everywhere, so equal optima
compare bitwise-equal across solvers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import AllocationPlan, ConfigPair, ConfigSpace, NerfplanError, PlanEntry
from .profiler import ProfileModel, eval_quality, eval_size


class GloballyInfeasible(NerfplanError):
    """Even the minimum-size config of every object exceeds the budget."""


class Infeasible(NerfplanError):
    """No admissible combination fits the capacity."""


class TooLarge(NerfplanError):
    """Brute-force enumeration guard exceeded."""


ORACLE_GUARD = 10 ** 7


@dataclass(frozen=True)
class Candidate:
    """One admissible config with its predicted cost and value."""

    config: ConfigPair
    size_mb: float
    quality: float


@dataclass(frozen=True)
class QuantizedItem:
    object_index: int
    config: ConfigPair
    weight_units: int
    value: float
    size_mb: float


@dataclass(frozen=True)
class CandidateGroup:
    object_id: str
    items: tuple[QuantizedItem, ...]


def capacity_units(budget_mb: float, unit_mb: float) -> int:
    if unit_mb <= 0:
        raise ValueError(f"unit_mb must be positive, got {unit_mb}")
    return int(math.floor(budget_mb / unit_mb))


def quantize_groups(
    named_candidates: "list[tuple[str, list[Candidate]]]", unit_mb: float = 1.0
) -> list[CandidateGroup]:
    """Ceiling-quantize sizes and order each group canonically."""
    if unit_mb <= 0:
        raise ValueError(f"unit_mb must be positive, got {unit_mb}")
    groups = []
    for index, (object_id, candidates) in enumerate(named_candidates):
        items = []
        for cand in candidates:
            w = math.ceil(cand.size_mb / unit_mb)
            while w * unit_mb < cand.size_mb:  # guard against a low float quotient
                w += 1
            items.append(
                QuantizedItem(
                    object_index=index,
                    config=cand.config,
                    weight_units=w,
                    value=cand.quality,
                    size_mb=cand.size_mb,
                )
            )
        items.sort(key=lambda it: (it.weight_units, it.config.g, it.config.p))
        groups.append(CandidateGroup(object_id=object_id, items=tuple(items)))
    return groups


def feasibility_filter(
    groups: "list[CandidateGroup]", capacity: int, strict: bool = False
) -> tuple[list[CandidateGroup], dict[str, int]]:
    """Drop configs that cannot fit alongside every other object's minimum.

    For object i the headroom is r_i = capacity - sum of the other
    objects' minimum weights; configs with weight > r_i are removed
    (weight == r_i is kept unless ``strict``). Returns the filtered
    groups and the per-object removal counts.
    """
    _require_nonempty(groups)
    mins = [min(it.weight_units for it in grp.items) for grp in groups]
    total_min = sum(mins)
    if total_min > capacity:
        raise GloballyInfeasible(
            f"sum of minimum sizes ({total_min} units) exceeds capacity ({capacity} units)"
        )
    filtered = []
    removed: dict[str, int] = {}
    for i, grp in enumerate(groups):
        headroom = capacity - (total_min - mins[i])
        if strict:
            kept = tuple(it for it in grp.items if it.weight_units < headroom)
        else:
            kept = tuple(it for it in grp.items if it.weight_units <= headroom)
        if not kept:
            raise GloballyInfeasible(
                f"strict filtering removed every config of object {grp.object_id!r}"
            )
        removed[grp.object_id] = len(grp.items) - len(kept)
        filtered.append(CandidateGroup(object_id=grp.object_id, items=kept))
    return filtered, removed


def _require_nonempty(groups: "list[CandidateGroup]") -> None:
    if not groups:
        raise ValueError("at least one object required")
    for grp in groups:
        if not grp.items:
            raise ValueError(f"object {grp.object_id!r} has no candidate configs")


def _build_plan(
    groups: "list[CandidateGroup]",
    chosen: "list[QuantizedItem]",
    solver: str,
    h: int,
    budget_mb: "float | None",
    unit_mb: float,
) -> AllocationPlan:
    entries = [
        PlanEntry(
            object_id=grp.object_id,
            config=item.config,
            predicted_size_mb=item.size_mb,
            predicted_quality=item.value,
        )
        for grp, item in zip(groups, chosen)
    ]
    budget = float(budget_mb) if budget_mb is not None else h * unit_mb
    return AllocationPlan.from_entries(entries, budget_mb=budget, solver=solver)


def solve_dp(
    groups: "list[CandidateGroup]",
    h: int,
    budget_mb: "float | None" = None,
    unit_mb: float = 1.0,
) -> AllocationPlan:
    """Exact optimum via the staged exactly-one-per-group recurrence.

    q_i[j] = best total value over the first i objects within capacity j;
    unreachable states carry -inf so no object can be silently skipped.
    O(n*h*c) time, O(n*h) memory for backtracking.
    """
    _require_nonempty(groups)
    if h < 0:
        raise ValueError(f"capacity must be >= 0, got {h}")
    n = len(groups)
    q = np.zeros(h + 1)
    choices = np.empty((n, h + 1), dtype=np.int32)
    for i, grp in enumerate(groups):
        cand = np.full((len(grp.items), h + 1), -np.inf)
        for t, item in enumerate(grp.items):
            w = item.weight_units
            if w <= h:
                cand[t, w:] = q[: h + 1 - w] + item.value
        q = cand.max(axis=0)
        choices[i] = cand.argmax(axis=0)  # first max = lowest item index
    if not np.isfinite(q[h]):
        raise Infeasible(f"no combination of configs fits {h} units")

    j = h
    chosen: list[QuantizedItem] = []
    for i in range(n - 1, -1, -1):
        item = groups[i].items[int(choices[i, j])]
        chosen.append(item)
        j -= item.weight_units
    chosen.reverse()
    return _build_plan(groups, chosen, "dp", h, budget_mb, unit_mb)


def solve_fairness(
    groups: "list[CandidateGroup]",
    h: int,
    budget_mb: "float | None" = None,
    unit_mb: float = 1.0,
) -> AllocationPlan:
    """Equal division baseline: each object gets capacity h/n.

    Every object independently takes its highest-quality config that fits
    its share.
    """
    _require_nonempty(groups)
    share = h / len(groups)
    chosen = []
    for grp in groups:
        best = None
        for item in grp.items:
            if item.weight_units <= share and (best is None or item.value > best.value):
                best = item
        if best is None:
            raise Infeasible(
                f"object {grp.object_id!r}: minimum size exceeds fair share of {share:g} units"
            )
        chosen.append(best)
    return _build_plan(groups, chosen, "fairness", h, budget_mb, unit_mb)


def solve_greedy(
    groups: "list[CandidateGroup]",
    h: int,
    budget_mb: "float | None" = None,
    unit_mb: float = 1.0,
) -> AllocationPlan:
    """Marginal-utility baseline.

    Starts every object at its minimum-weight config, then repeatedly
    applies the single config upgrade with the best value-per-unit gain
    that still fits, preferring lower object then config index on ties.
    """
    _require_nonempty(groups)
    current = [0] * len(groups)
    total_w = sum(grp.items[0].weight_units for grp in groups)
    if total_w > h:
        raise Infeasible(f"minimum-weight configs need {total_w} units > capacity {h}")

    while True:
        best = None  # (ratio, object index, item index)
        for i, grp in enumerate(groups):
            cur = grp.items[current[i]]
            for t, item in enumerate(grp.items):
                dv = item.value - cur.value
                if t == current[i] or dv <= 0:
                    continue
                dw = item.weight_units - cur.weight_units
                if total_w + dw > h:
                    continue
                ratio = math.inf if dw <= 0 else dv / dw
                if best is None or ratio > best[0]:
                    best = (ratio, i, t)
        if best is None:
            break
        _, i, t = best
        total_w += groups[i].items[t].weight_units - groups[i].items[current[i]].weight_units
        current[i] = t

    chosen = [grp.items[current[i]] for i, grp in enumerate(groups)]
    return _build_plan(groups, chosen, "greedy", h, budget_mb, unit_mb)


def solve_oracle(
    groups: "list[CandidateGroup]",
    h: int,
    budget_mb: "float | None" = None,
    unit_mb: float = 1.0,
) -> AllocationPlan:
    """Exhaustive enumeration over the Cartesian product of all groups.

    Guarded at 10^7 combinations. Among equal-value feasible plans the
    lexicographically smallest item-index vector wins, matching the DP's
    per-stage preference for low indices.
    """
    _require_nonempty(groups)
    combos = 1
    for grp in groups:
        combos *= len(grp.items)
        if combos > ORACLE_GUARD:
            raise TooLarge(f"{combos}+ combinations exceed the {ORACLE_GUARD} enumeration guard")

    values = np.zeros(1)
    weights = np.zeros(1, dtype=np.int64)
    for grp in groups:
        v = np.array([it.value for it in grp.items])
        w = np.array([it.weight_units for it in grp.items], dtype=np.int64)
        values = (values[:, None] + v[None, :]).ravel()
        weights = (weights[:, None] + w[None, :]).ravel()

    feasible = weights <= h
    if not feasible.any():
        raise Infeasible(f"no combination of configs fits {h} units")
    best = int(np.argmax(np.where(feasible, values, -np.inf)))
    idx = np.unravel_index(best, tuple(len(grp.items) for grp in groups))
    chosen = [grp.items[t] for grp, t in zip(groups, idx)]
    return _build_plan(groups, chosen, "oracle", h, budget_mb, unit_mb)


SOLVERS = {
    "dp": solve_dp,
    "fairness": solve_fairness,
    "greedy": solve_greedy,
    "oracle": solve_oracle,
}


# ---------------------------------------------------------------------------
# Planning straight from fitted profiles
# ---------------------------------------------------------------------------

def candidates_from_profiles(
    profiles: "list[tuple[ProfileModel, ConfigSpace]]",
) -> "list[tuple[str, list[Candidate]]]":
    """Evaluate each object's fitted surfaces over its whole config space."""
    named = []
    for model, space in profiles:
        cands = [
            Candidate(config=c, size_mb=eval_size(model.size, c), quality=eval_quality(model.quality, c))
            for c in space.pairs
        ]
        named.append((model.object_id, cands))
    return named


def plan_with_solver(
    profiles: "list[tuple[ProfileModel, ConfigSpace]]",
    budget_mb: float,
    unit_mb: float = 1.0,
    solver: str = "dp",
    apply_filter: bool = True,
) -> tuple[AllocationPlan, dict[str, int]]:
    """Full planning pipeline: evaluate, quantize, filter, solve."""
    if solver not in SOLVERS:
        raise ValueError(f"unknown solver {solver!r}; known: {sorted(SOLVERS)}")
    groups = quantize_groups(candidates_from_profiles(profiles), unit_mb)
    h = capacity_units(budget_mb, unit_mb)
    removed: dict[str, int] = {}
    if apply_filter:
        groups, removed = feasibility_filter(groups, h)
    plan = SOLVERS[solver](groups, h, budget_mb=budget_mb, unit_mb=unit_mb)
    return plan, removed
