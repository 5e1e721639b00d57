"""Cut generation over the binary execution variables.

Three families: a cut forbidding joint execution of the currently
loss-making bids, a cut excluding exactly one full selection, and the
analogous cuts for hourly-curtailment priority violations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional

from .core import BidSelection, Instance, PriceVector, PrimalSolution
from .errors import EmptyLossSets

LOSS_TOL = 1e-9

# variable keys inside a cut: ("block", id) or ("flex", id, hour)
BlockKey = tuple
FlexKey = tuple


@dataclass(frozen=True)
class Cut:
    coeffs: tuple[tuple[tuple, float], ...]  # (variable key, coefficient)
    rhs: float
    sense: str = "<="
    kind: str = "bid-cut"  # bid-cut | no-good | curtailment

    def value(self, selection: BidSelection) -> float:
        total = 0.0
        for key, coef in self.coeffs:
            if key[0] == "block":
                total += coef * selection.blocks.get(key[1], 0)
            else:
                total += coef * (1 if selection.flex.get(key[1]) == key[2] else 0)
        return total

    def satisfied(self, selection: BidSelection, tol: float = 1e-6) -> bool:
        return self.value(selection) <= self.rhs + tol


@dataclass
class CutPool:
    cuts: list[Cut] = field(default_factory=list)

    def add(self, cut: Cut) -> bool:
        key = (cut.coeffs, cut.rhs, cut.sense)
        if any((c.coeffs, c.rhs, c.sense) == key for c in self.cuts):
            return False
        self.cuts.append(cut)
        return True

    def __len__(self) -> int:
        return len(self.cuts)

    def __iter__(self):
        return iter(self.cuts)


@dataclass(frozen=True)
class LossSets:
    blocks: tuple[str, ...]
    flex: tuple[tuple[str, int], ...]

    @property
    def empty(self) -> bool:
        return not self.blocks and not self.flex


def loss_sets(
    instance: Instance,
    solution: PrimalSolution,
    prices: PriceVector,
    tol: float = LOSS_TOL,
) -> LossSets:
    """Executed bids that strictly lose money at the given prices."""
    bad_blocks = []
    for bid in solution.selection.executed_blocks():
        b = instance.block_by_id[bid]
        surplus = sum(
            (b.limit_price - prices[b.area, t]) * q for t, q in enumerate(b.quantities)
        )
        if surplus < -tol:
            bad_blocks.append(bid)
    bad_flex = []
    for fid, t in solution.selection.executed_flex():
        f = instance.flex_by_id[fid]
        if (f.limit_price - prices[f.area, t]) * f.quantity < -tol:
            bad_flex.append((fid, t))
    return LossSets(blocks=tuple(bad_blocks), flex=tuple(bad_flex))


def bid_cut(sets: LossSets) -> Cut:
    """Forbid simultaneous execution of every loss-making bid."""
    if sets.empty:
        raise EmptyLossSets("no loss-making bids to cut")
    coeffs = [(("block", b), 1.0) for b in sets.blocks]
    coeffs += [(("flex", f, t), 1.0) for f, t in sets.flex]
    return Cut(
        coeffs=tuple(coeffs),
        rhs=float(len(coeffs) - 1),
        kind="bid-cut",
    )


def no_good_cut(instance: Instance, selection: BidSelection, kind: str = "no-good") -> Cut:
    """Exclude exactly the given selection.

    The complement form sum_{executed}(1 - x) + sum_{rejected} x >= 1 is
    stored as  sum_{executed} x - sum_{rejected} x <= n_executed - 1.
    """
    coeffs = []
    n_exec = 0
    for b in instance.blocks:
        if selection.blocks.get(b.id, 0):
            coeffs.append((("block", b.id), 1.0))
            n_exec += 1
        else:
            coeffs.append((("block", b.id), -1.0))
    for f in instance.flex_bids:
        chosen = selection.flex.get(f.id)
        for t in range(instance.hours):
            if chosen == t:
                coeffs.append((("flex", f.id, t), 1.0))
                n_exec += 1
            else:
                coeffs.append((("flex", f.id, t), -1.0))
    return Cut(coeffs=tuple(coeffs), rhs=float(n_exec - 1), kind=kind)


def curtailment_violations(
    instance: Instance, solution: PrimalSolution, tol: float = 1e-6
) -> dict[tuple[str, int], LossSets]:
    """Executed combinatorial bids that outrank active hourly curtailment.

    When hourly demand is being curtailed in an area and hour, executed
    demand blocks and flex bids there violate the hourly-priority rule;
    symmetrically for curtailed supply.
    """
    out = {}
    for seg in instance.segments:
        if not seg.is_curtailment:
            continue
        a, t = instance.segment_location[seg.id]
        dlt = solution.delta.get(seg.id, 0.0)
        demand_side = seg.node_quantity > 0
        if demand_side and dlt >= 1.0 - tol:
            continue
        if not demand_side and dlt <= tol:
            continue
        bad_blocks = []
        for bid in solution.selection.executed_blocks():
            b = instance.block_by_id[bid]
            q = b.quantities[t]
            if b.area == a and ((demand_side and q > 0) or (not demand_side and q < 0)):
                bad_blocks.append(bid)
        bad_flex = []
        for fid, ft in solution.selection.executed_flex():
            f = instance.flex_by_id[fid]
            q = f.quantity
            if f.area == a and ft == t and (
                (demand_side and q > 0) or (not demand_side and q < 0)
            ):
                bad_flex.append((fid, ft))
        if bad_blocks or bad_flex:
            out[a, t] = LossSets(blocks=tuple(bad_blocks), flex=tuple(bad_flex))
    return out


def curtailment_cut(sets: LossSets) -> Cut:
    cut = bid_cut(sets)
    return Cut(coeffs=cut.coeffs, rhs=cut.rhs, kind="curtailment")
