"""Clearing orchestration.

Heuristic mode: alternately maximize welfare and test for supporting
prices, cutting off the currently loss-making bid set until none remains.
Exact mode: the same loop, but each failed candidate is excluded by a cut
that removes only that single selection, so the final candidate is the
welfare optimum among price-supportable selections.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

from .core import BidSelection, Instance, PriceVector, PrimalSolution
from .cuts import (
    CutPool,
    bid_cut,
    curtailment_cut,
    curtailment_violations,
    loss_sets,
    no_good_cut,
)
from .errors import InfeasibleSelection, IterationLimit, PriceInfeasible
from .master import solve_master
from .pricing import clamp_prices, solve_fixflow, solve_qpprice


@dataclass(frozen=True)
class IterationRecord:
    master_objective: float
    loss_blocks: tuple[str, ...]
    loss_flex: tuple[tuple[str, int], ...]
    curtailment_areas: tuple[tuple[str, int], ...]
    cuts_added: int


@dataclass(frozen=True)
class ClearingResult:
    status: str  # optimal | feasible | infeasible | limit
    mode: str  # heuristic | exact | oracle
    solution: Optional[PrimalSolution]
    prices: Optional[PriceVector]
    welfare: float
    bound: float
    gap: float
    iterations: tuple[IterationRecord, ...]
    prbs: tuple = ()
    warnings: tuple[str, ...] = ()
    frontier: Optional[tuple] = None
    curtailment_cuts_fired: bool = False


@dataclass(frozen=True)
class ClearOptions:
    abs_gap: float = 1e-9
    time_limit: Optional[float] = None
    max_iterations: Optional[int] = None
    presolve: bool = True


def _relative_gap(bound: float, welfare: float) -> float:
    return max(0.0, bound - welfare) / max(1.0, abs(bound))


def _finish(instance, mode, solution, bound, iterations, curt_fired):
    from .core import welfare_of
    from .verify import list_prbs

    pricing = solve_qpprice(instance, solution, relax_losses=False)
    prices, warnings = clamp_prices(pricing.prices, instance)
    w = welfare_of(instance, solution)
    return ClearingResult(
        status="optimal" if mode == "exact" else "feasible",
        mode=mode,
        solution=solution,
        prices=prices,
        welfare=w,
        bound=bound,
        gap=_relative_gap(bound, w),
        iterations=tuple(iterations),
        prbs=tuple(list_prbs(instance, solution.selection, prices)),
        warnings=tuple(warnings),
        curtailment_cuts_fired=curt_fired,
    )


def clear_heuristic(instance: Instance, options: ClearOptions = ClearOptions()) -> ClearingResult:
    deadline = (
        time.monotonic() + options.time_limit
        if options.time_limit is not None
        else None
    )
    max_iter = options.max_iterations
    if max_iter is None:
        max_iter = max(1, 10 * (len(instance.blocks) + len(instance.flex_bids)))
    cuts = CutPool()
    iterations = []
    bound = None
    curt_fired = False
    best = None

    for _ in range(max_iter):
        remaining = None if deadline is None else max(0.0, deadline - time.monotonic())
        master = solve_master(
            instance, cuts, abs_gap=options.abs_gap, time_limit=remaining,
            presolve=options.presolve,
        )
        if master.status == "infeasible":
            return ClearingResult(
                status="infeasible", mode="heuristic", solution=None, prices=None,
                welfare=float("-inf"), bound=bound if bound is not None else float("inf"),
                gap=float("inf"), iterations=tuple(iterations),
            )
        if bound is None:
            bound = master.bound
        if master.status == "limit" and master.solution is None:
            raise IterationLimit("time limit hit before any candidate", best=best)
        solution = solve_fixflow(instance, master.solution)
        pricing = solve_qpprice(instance, solution, relax_losses=True)
        sets = loss_sets(instance, solution, pricing.prices)
        curt = curtailment_violations(instance, solution)
        new_cuts = 0
        if not sets.empty and cuts.add(bid_cut(sets)):
            new_cuts += 1
        for bad in curt.values():
            if cuts.add(curtailment_cut(bad)):
                new_cuts += 1
                curt_fired = True
        iterations.append(
            IterationRecord(
                master_objective=master.objective,
                loss_blocks=sets.blocks,
                loss_flex=sets.flex,
                curtailment_areas=tuple(sorted(curt)),
                cuts_added=new_cuts,
            )
        )
        if new_cuts == 0:
            return _finish(instance, "heuristic", solution, bound, iterations, curt_fired)
        best = solution
    raise IterationLimit(
        f"no loss-free selection found within {max_iter} iterations", best=best
    )


def clear_exact(instance: Instance, options: ClearOptions = ClearOptions()) -> ClearingResult:
    deadline = (
        time.monotonic() + options.time_limit
        if options.time_limit is not None
        else None
    )
    warm: Optional[BidSelection] = None
    try:
        heuristic = clear_heuristic(instance, options)
        if heuristic.solution is not None:
            warm = heuristic.solution.selection
    except IterationLimit:
        heuristic = None

    cuts = CutPool()
    iterations = []
    bound = None
    curt_fired = False

    while True:
        remaining = None if deadline is None else max(0.0, deadline - time.monotonic())
        master = solve_master(
            instance, cuts, abs_gap=options.abs_gap, time_limit=remaining,
            incumbent=warm, presolve=options.presolve,
        )
        if master.status == "infeasible":
            return ClearingResult(
                status="infeasible", mode="exact", solution=None, prices=None,
                welfare=float("-inf"), bound=bound if bound is not None else float("inf"),
                gap=float("inf"), iterations=tuple(iterations),
            )
        if bound is None:
            bound = master.bound
        if master.status == "limit":
            result = heuristic
            return ClearingResult(
                status="limit", mode="exact",
                solution=result.solution if result else None,
                prices=result.prices if result else None,
                welfare=result.welfare if result else float("-inf"),
                bound=master.bound,
                gap=_relative_gap(master.bound, result.welfare) if result else float("inf"),
                iterations=tuple(iterations),
                curtailment_cuts_fired=curt_fired,
            )
        solution = solve_fixflow(instance, master.solution)
        feasible = True
        loss_blocks: tuple = ()
        loss_flex: tuple = ()
        try:
            solve_qpprice(instance, solution, relax_losses=False)
        except PriceInfeasible:
            feasible = False
            relaxed = solve_qpprice(instance, solution, relax_losses=True)
            sets = loss_sets(instance, solution, relaxed.prices)
            loss_blocks, loss_flex = sets.blocks, sets.flex
        curt = curtailment_violations(instance, solution)
        if curt:
            feasible = False
            curt_fired = True
        iterations.append(
            IterationRecord(
                master_objective=master.objective,
                loss_blocks=loss_blocks,
                loss_flex=loss_flex,
                curtailment_areas=tuple(sorted(curt)),
                cuts_added=0 if feasible else 1,
            )
        )
        if feasible:
            # every excluded selection was price-infeasible, so the final
            # master objective is also the tight dual bound
            return _finish(
                instance, "exact", solution, master.objective, iterations, curt_fired
            )
        cuts.add(no_good_cut(instance, solution.selection))
        warm = None
