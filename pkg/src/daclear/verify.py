"""Independent equilibrium checkers and a brute-force clearing oracle.

The checkers re-derive every price condition from the primal values alone,
without trusting any multiplier produced by the solvers.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .core import BidSelection, Instance, PriceVector, PrimalSolution
from .cuts import curtailment_violations
from .errors import InfeasibleSelection, PriceInfeasible, TooLarge
from .pricing import TIGHT_TOL, solve_fixflow, solve_qpprice
from .qp import QpProblem, solve_qp
from .relaxation import solve_relaxation

DEFAULT_TOL = 1e-6


@dataclass(frozen=True)
class Violation:
    location: tuple
    amount: float
    condition: str


@dataclass(frozen=True)
class ConditionReport:
    passed: bool
    violations: tuple[Violation, ...] = ()

    @staticmethod
    def from_violations(violations) -> "ConditionReport":
        v = tuple(violations)
        return ConditionReport(passed=not v, violations=v)


def check_filling(
    instance: Instance,
    delta: Mapping[int, float],
    prices: PriceVector,
    tol: float = DEFAULT_TOL,
    mode: str = "case",
) -> ConditionReport:
    """Price/fill consistency of every quantity-carrying segment.

    mode "case": the three-way rule (full fill allows lower prices, no
    fill allows higher prices, interior fill pins the price).
    mode "gamma": construct the binary stacking chain over ascending-price
    segments (a partially filled segment forces every higher-priced one to
    full fill) and then apply the price rule to the stacked profile.
    """
    if mode == "case":
        return _check_filling_case(instance, delta, prices, tol)
    if mode == "gamma":
        return _check_filling_gamma(instance, delta, prices, tol)
    raise ValueError(f"unknown filling check mode {mode!r}")


def _case_violation(seg, dlt, pi, tol):
    v = pi - seg.price_at(dlt)
    if abs(v) <= tol:
        return None
    if dlt >= 1.0 - tol and v <= tol:
        return None
    if dlt <= tol and v >= -tol:
        return None
    return v


def _check_filling_case(instance, delta, prices, tol):
    violations = []
    for seg in instance.segments:
        if seg.quantity_span == 0.0:
            continue
        a, t = instance.segment_location[seg.id]
        dlt = float(delta.get(seg.id, 0.0))
        v = _case_violation(seg, dlt, prices[a, t], tol)
        if v is not None:
            violations.append(Violation((a, t, seg.id), abs(v), "filling"))
    return ConditionReport.from_violations(violations)


def _check_filling_gamma(instance, delta, prices, tol):
    violations = []
    for a in instance.areas:
        for t in range(instance.hours):
            segs = [
                s
                for s in instance.curves[a, t].ascending_segments()
                if s.quantity_span != 0.0
            ]
            for lo, hi in zip(segs, segs[1:]):
                d_lo = float(delta.get(lo.id, 0.0))
                d_hi = float(delta.get(hi.id, 0.0))
                # gamma between the pair must be >= d_lo and <= d_hi
                if d_lo > tol and d_hi < 1.0 - tol:
                    violations.append(
                        Violation((a, t, lo.id, hi.id), d_lo - d_hi, "stacking")
                    )
            pi = prices[a, t]
            for seg in segs:
                v = _case_violation(seg, float(delta.get(seg.id, 0.0)), pi, tol)
                if v is not None:
                    violations.append(Violation((a, t, seg.id), abs(v), "price-rule"))
    return ConditionReport.from_violations(violations)


def check_flow_price(
    instance: Instance,
    flows: Mapping[tuple[str, int], float],
    prices: PriceVector,
    tol: float = DEFAULT_TOL,
) -> ConditionReport:
    """Existence of nonnegative congestion/ramp multipliers explaining
    every cross-border price difference at the fixed flows."""
    violations = []
    for c in instance.interconnectors:
        ramp = c.ramp_rate if c.ramp_rate is not None else np.inf
        if not np.isfinite(ramp):
            violations.extend(_flow_fast_path(instance, c, flows, prices, tol))
        else:
            violations.extend(_flow_general(instance, c, flows, prices, tol))
    return ConditionReport.from_violations(violations)


def _flow_fast_path(instance, c, flows, prices, tol):
    """No ramping: a price rise toward the sink requires a tight upper
    bound, a price drop a tight lower bound."""
    out = []
    for t in range(instance.hours):
        tau = flows.get((c.id, t), 0.0)
        diff = prices[c.sink, t] - prices[c.source, t]
        if diff > tol and c.upper[t] - tau > TIGHT_TOL:
            out.append(Violation((c.id, t), diff, "flow-price"))
        elif diff < -tol and tau - c.lower[t] > TIGHT_TOL:
            out.append(Violation((c.id, t), -diff, "flow-price"))
    return out


def _flow_general(instance, c, flows, prices, tol):
    """Multiplier-existence test: minimize slack in the per-hour
    stationarity rows over the multipliers of tight constraints."""
    T = instance.hours
    ramp = c.ramp_rate if c.ramp_rate is not None else np.inf
    cols = []  # (hour, kind)
    for t in range(T):
        tau = flows.get((c.id, t), 0.0)
        prev = c.initial_flow if t == 0 else flows.get((c.id, t - 1), 0.0)
        if c.upper[t] - tau <= TIGHT_TOL:
            cols.append((t, "mu_upper"))
        if tau - c.lower[t] <= TIGHT_TOL:
            cols.append((t, "mu_lower"))
        if tau - prev >= ramp - TIGHT_TOL:
            cols.append((t, "rho_fwd"))
        if prev - tau >= ramp - TIGHT_TOL:
            cols.append((t, "rho_bwd"))
    n = len(cols) + 2 * T  # multipliers plus +/- slack per hour
    A_eq = np.zeros((T, n))
    b_eq = np.zeros(T)
    for t in range(T):
        b_eq[t] = prices[c.sink, t] - prices[c.source, t]
        for j, (tt, kind) in enumerate(cols):
            coef = 0.0
            if kind == "mu_upper" and tt == t:
                coef = 1.0
            elif kind == "mu_lower" and tt == t:
                coef = -1.0
            elif kind == "rho_fwd":
                coef = 1.0 if tt == t else (-1.0 if tt == t + 1 else 0.0)
            elif kind == "rho_bwd":
                coef = -1.0 if tt == t else (1.0 if tt == t + 1 else 0.0)
            A_eq[t, j] = coef
        A_eq[t, len(cols) + 2 * t] = 1.0
        A_eq[t, len(cols) + 2 * t + 1] = -1.0
    obj = np.zeros(n)
    obj[len(cols):] = -1.0
    prob = QpProblem(
        c=obj, d=np.zeros(n), A_eq=A_eq, b_eq=b_eq,
        A_in=np.zeros((0, n)), b_in=np.zeros(0),
        lb=np.zeros(n), ub=np.full(n, np.inf),
    )
    sol = solve_qp(prob)
    out = []
    if sol.status != "optimal":
        return [Violation((c.id,), float("inf"), "flow-price")]
    resid = b_eq - A_eq[:, : len(cols)] @ sol.x[: len(cols)]
    for t in range(T):
        if abs(resid[t]) > tol:
            out.append(Violation((c.id, t), abs(float(resid[t])), "flow-price"))
    return out


def check_bid_prices(
    instance: Instance,
    selection: BidSelection,
    prices: PriceVector,
    tol: float = DEFAULT_TOL,
) -> ConditionReport:
    """No executed fill-or-kill bid may lose money at the prices."""
    violations = []
    for bid in selection.executed_blocks():
        b = instance.block_by_id[bid]
        surplus = sum(
            (b.limit_price - prices[b.area, t]) * q for t, q in enumerate(b.quantities)
        )
        if surplus < -tol:
            violations.append(Violation(("block", bid), -surplus, "no-loss"))
    for fid, t in selection.executed_flex():
        f = instance.flex_by_id[fid]
        surplus = (f.limit_price - prices[f.area, t]) * f.quantity
        if surplus < -tol:
            violations.append(Violation(("flex", fid, t), -surplus, "no-loss"))
    return ConditionReport.from_violations(violations)


def list_prbs(instance: Instance, selection: BidSelection, prices: PriceVector,
              tol: float = 1e-9) -> list:
    """Rejected combinatorial bids that would profit at the final prices."""
    prbs = []
    for b in instance.blocks:
        if selection.blocks.get(b.id, 0):
            continue
        surplus = sum(
            (b.limit_price - prices[b.area, t]) * q for t, q in enumerate(b.quantities)
        )
        if surplus > tol:
            prbs.append(("block", b.id))
    for f in instance.flex_bids:
        if selection.flex.get(f.id) is not None:
            continue
        for t in range(instance.hours):
            if (f.limit_price - prices[f.area, t]) * f.quantity > tol:
                prbs.append(("flex", f.id, t))
                break
    return prbs


def _all_selections(instance: Instance):
    """Link-consistent selections in lexicographic order (rejected first)."""
    block_ids = [b.id for b in instance.blocks]
    flex_ids = [f.id for f in instance.flex_bids]
    hour_choices = [None] + list(range(instance.hours))
    for bits in itertools.product((0, 1), repeat=len(block_ids)):
        blocks = dict(zip(block_ids, bits))
        if any(blocks[ch] > blocks[pa] for ch, pa in instance.links):
            continue
        for assign in itertools.product(hour_choices, repeat=len(flex_ids)):
            yield BidSelection(blocks=blocks, flex=dict(zip(flex_ids, assign)))


def oracle_clear(instance: Instance, cap: int = 12):
    """Ground-truth clearing by enumeration of all bid selections.

    Candidates are ranked by relaxed welfare and tested for supporting
    prices from the top down; the first price-feasible one is optimal.
    """
    from .driver import ClearingResult

    decisions = len(instance.blocks) + len(instance.flex_bids) * instance.hours
    if decisions > cap:
        raise TooLarge(
            f"{decisions} binary decisions exceed the enumeration cap {cap}"
        )
    candidates = []
    for idx, selection in enumerate(_all_selections(instance)):
        try:
            outcome = solve_relaxation(instance, selection)
        except InfeasibleSelection:
            continue
        candidates.append((outcome.objective, idx, outcome))
    candidates.sort(key=lambda rec: (-rec[0], rec[1]))

    frontier = []
    for objective, _, outcome in candidates:
        fixed = solve_fixflow(instance, outcome.primal)
        try:
            pricing = solve_qpprice(instance, fixed, relax_losses=False)
        except PriceInfeasible:
            frontier.append((objective, outcome.selection, False))
            continue
        if curtailment_violations(instance, fixed):
            frontier.append((objective, outcome.selection, False))
            continue
        frontier.append((objective, outcome.selection, True))
        return ClearingResult(
            status="optimal",
            mode="oracle",
            solution=fixed,
            prices=pricing.prices,
            welfare=objective,
            bound=objective,
            gap=0.0,
            iterations=(),
            prbs=tuple(list_prbs(instance, fixed.selection, pricing.prices)),
            frontier=tuple(frontier),
        )
    raise PriceInfeasible("no selection admits supporting prices")
