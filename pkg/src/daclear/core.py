"""Domain model: order books, net curves, welfare and presolve bounds.

Quantities are MW with demand positive and supply negative; prices are
currency per MW.  A net curve is stored as segments sorted by descending
price, so a segment's execution fraction runs from the high-price end
(fraction 0) to the low-price end (fraction 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Optional, Sequence

from .errors import (
    ClearingViolated,
    EmptyCurve,
    NonMonotoneCurve,
    UnknownId,
    ValidationError,
)

ABS_TOL = 1e-9


@dataclass(frozen=True)
class PriceInterval:
    lower: float
    upper: float

    def __post_init__(self):
        if self.lower > self.upper:
            raise ValidationError(f"price interval [{self.lower}, {self.upper}] is empty")

    def contains(self, price: float, tol: float = ABS_TOL) -> bool:
        return self.lower - tol <= price <= self.upper + tol

    def clamp(self, price: float) -> float:
        return min(max(price, self.lower), self.upper)


@dataclass(frozen=True)
class NetCurveSegment:
    """One piecewise-linear stretch of a net demand curve.

    ``base_price`` is the low-price end; filling the segment by a fraction z
    moves along prices ``price_at(z) = base_price + (1 - z) * price_span``
    and adds ``quantity_span * z`` of net demand.
    """

    id: int
    base_price: float
    price_span: float
    node_quantity: float
    quantity_span: float
    is_curtailment: bool = False

    def price_at(self, z: float) -> float:
        return self.base_price + (1.0 - z) * self.price_span

    @property
    def lower_quantity(self) -> float:
        # case rule for the segment-relative quantity anchor
        if self.node_quantity > 0:
            return min(0.0, self.node_quantity - self.quantity_span)
        return -self.quantity_span

    @property
    def is_vertical(self) -> bool:
        return self.price_span == 0.0 and self.quantity_span > 0.0

    @property
    def is_horizontal(self) -> bool:
        return self.quantity_span == 0.0


@dataclass(frozen=True)
class NetCurve:
    area: str
    hour: int
    min_net_demand: float
    segments: tuple[NetCurveSegment, ...]

    @property
    def max_net_demand(self) -> float:
        return self.min_net_demand + sum(s.quantity_span for s in self.segments)

    def ascending_segments(self) -> list[NetCurveSegment]:
        return sorted(self.segments, key=lambda s: (s.base_price, s.price_span))

    def nodes(self) -> list[tuple[float, float]]:
        """Reconstruct the ascending (price, quantity) polyline."""
        pts = []
        q = self.max_net_demand
        for seg in self.ascending_segments():
            pts.append((seg.base_price, q))
            q -= seg.quantity_span
            pts.append((seg.base_price + seg.price_span, q))
        return pts

    def quantity_bounds_at(self, price: float) -> tuple[float, float]:
        """Range of executed net demand consistent with the filling rule at ``price``."""
        lo = hi = self.min_net_demand
        for seg in self.segments:
            top = seg.base_price + seg.price_span
            if seg.price_span > 0:
                z = min(max((top - price) / seg.price_span, 0.0), 1.0)
                lo += seg.quantity_span * z
                hi += seg.quantity_span * z
            else:
                if price < seg.base_price:
                    lo += seg.quantity_span
                    hi += seg.quantity_span
                elif price == seg.base_price:
                    hi += seg.quantity_span
        return lo, hi


@dataclass(frozen=True)
class BlockBid:
    id: str
    area: str
    limit_price: float
    quantities: tuple[float, ...]

    def __post_init__(self):
        if not any(q != 0.0 for q in self.quantities):
            raise ValidationError(f"block bid {self.id!r} has no nonzero quantity")


@dataclass(frozen=True)
class FlexBid:
    id: str
    area: str
    limit_price: float
    quantity: float

    def __post_init__(self):
        if self.quantity == 0.0:
            raise ValidationError(f"flex bid {self.id!r} has zero quantity")


@dataclass(frozen=True)
class Interconnector:
    id: str
    source: str
    sink: str
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    ramp_rate: Optional[float]
    initial_flow: float = 0.0

    def __post_init__(self):
        if self.source == self.sink:
            raise ValidationError(f"interconnector {self.id!r} connects an area to itself")
        if any(lo > hi for lo, hi in zip(self.lower, self.upper)):
            raise ValidationError(f"interconnector {self.id!r} has crossing flow bounds")
        if self.ramp_rate is not None and self.ramp_rate < 0:
            raise ValidationError(f"interconnector {self.id!r} has negative ramp rate")


@dataclass(frozen=True)
class BidSelection:
    """Execution decisions for the combinatorial bids.

    ``flex`` maps a flex bid id to its execution hour or ``None`` when
    rejected, which makes the at-most-once rule structural.
    """

    blocks: Mapping[str, int] = field(default_factory=dict)
    flex: Mapping[str, Optional[int]] = field(default_factory=dict)

    def executed_blocks(self) -> list[str]:
        return sorted(b for b, v in self.blocks.items() if v)

    def executed_flex(self) -> list[tuple[str, int]]:
        return sorted((f, t) for f, t in self.flex.items() if t is not None)

    def link_consistent(self, links: Sequence[tuple[str, str]]) -> bool:
        return all(
            self.blocks.get(child, 0) <= self.blocks.get(parent, 0)
            for child, parent in links
        )


@dataclass(frozen=True)
class PrimalSolution:
    selection: BidSelection
    delta: Mapping[int, float]
    flows: Mapping[tuple[str, int], float]


@dataclass(frozen=True)
class PriceVector:
    pi: Mapping[tuple[str, int], float]

    def __getitem__(self, key: tuple[str, int]) -> float:
        return self.pi[key]


@dataclass(frozen=True)
class DualCertificate:
    """KKT multipliers backing a price vector (all nonnegative)."""

    mu_upper: Mapping[tuple[str, int], float]
    mu_lower: Mapping[tuple[str, int], float]
    rho_fwd: Mapping[tuple[str, int], float]
    rho_bwd: Mapping[tuple[str, int], float]
    v_upper: Mapping[int, float]
    v_lower: Mapping[int, float]


@dataclass(frozen=True)
class FixedSelectionTerms:
    """Objective constant and per-(area, hour) volume of a fixed selection."""

    constant: float
    volume: Mapping[tuple[str, int], float]


@dataclass(frozen=True)
class Instance:
    interval: PriceInterval
    hours: int
    areas: tuple[str, ...]
    area_intervals: Mapping[str, PriceInterval]
    curves: Mapping[tuple[str, int], NetCurve]
    blocks: tuple[BlockBid, ...]
    links: tuple[tuple[str, str], ...]
    flex_bids: tuple[FlexBid, ...]
    interconnectors: tuple[Interconnector, ...]
    # raw curve nodes as given by the source document, kept for round-trips
    raw_nodes: Optional[Mapping[tuple[str, int], tuple]] = None

    @cached_property
    def segments(self) -> tuple[NetCurveSegment, ...]:
        segs = []
        for a in self.areas:
            for t in range(self.hours):
                segs.extend(self.curves[a, t].segments)
        return tuple(sorted(segs, key=lambda s: s.id))

    @cached_property
    def segment_location(self) -> dict[int, tuple[str, int]]:
        return {
            s.id: (a, t)
            for a in self.areas
            for t in range(self.hours)
            for s in self.curves[a, t].segments
        }

    @cached_property
    def block_by_id(self) -> dict[str, BlockBid]:
        return {b.id: b for b in self.blocks}

    @cached_property
    def flex_by_id(self) -> dict[str, FlexBid]:
        return {f.id: f for f in self.flex_bids}

    def curve(self, area: str, hour: int) -> NetCurve:
        return self.curves[area, hour]

    def area_interval(self, area: str) -> PriceInterval:
        return self.area_intervals.get(area, self.interval)

    def empty_selection(self) -> BidSelection:
        return BidSelection(
            blocks={b.id: 0 for b in self.blocks},
            flex={f.id: None for f in self.flex_bids},
        )

    def validate(self) -> None:
        if self.hours <= 0:
            raise ValidationError("instance needs at least one hour")
        if len(set(self.areas)) != len(self.areas):
            raise ValidationError("duplicate area ids")
        for a in self.areas:
            for t in range(self.hours):
                if (a, t) not in self.curves:
                    raise ValidationError(f"missing net curve for area {a!r} hour {t}")
        ids: set[str] = set()
        for b in self.blocks:
            if b.id in ids:
                raise ValidationError(f"duplicate bid id {b.id!r}")
            ids.add(b.id)
            if b.area not in self.areas:
                raise ValidationError(f"block {b.id!r} references unknown area {b.area!r}")
            if len(b.quantities) != self.hours:
                raise ValidationError(f"block {b.id!r} quantity vector length mismatch")
            if not self.interval.contains(b.limit_price):
                raise ValidationError(f"block {b.id!r} limit price outside the price interval")
        for f in self.flex_bids:
            if f.id in ids:
                raise ValidationError(f"duplicate bid id {f.id!r}")
            ids.add(f.id)
            if f.area not in self.areas:
                raise ValidationError(f"flex {f.id!r} references unknown area {f.area!r}")
            if not self.interval.contains(f.limit_price):
                raise ValidationError(f"flex {f.id!r} limit price outside the price interval")
        block_ids = {b.id for b in self.blocks}
        for child, parent in self.links:
            if child not in block_ids or parent not in block_ids:
                raise ValidationError(f"link ({child!r}, {parent!r}) references unknown block")
        seen_c: set[str] = set()
        for c in self.interconnectors:
            if c.id in seen_c:
                raise ValidationError(f"duplicate interconnector id {c.id!r}")
            seen_c.add(c.id)
            if c.source not in self.areas or c.sink not in self.areas:
                raise ValidationError(f"interconnector {c.id!r} references unknown area")
            if len(c.lower) != self.hours or len(c.upper) != self.hours:
                raise ValidationError(f"interconnector {c.id!r} bound vector length mismatch")


def _collapse_nodes(nodes: list[tuple[float, float]]) -> list[tuple[float, float]]:
    """Drop duplicate points and middle nodes of constant-price or
    constant-quantity triples."""
    out: list[tuple[float, float]] = []
    for p, q in nodes:
        if out and out[-1] == (p, q):
            continue
        out.append((p, q))
    changed = True
    while changed:
        changed = False
        for i in range(1, len(out) - 1):
            (p0, q0), (p1, q1), (p2, q2) = out[i - 1], out[i], out[i + 1]
            if (p0 == p1 == p2) or (q0 == q1 == q2):
                del out[i]
                changed = True
                break
    return out


def build_net_curve(
    nodes: Sequence[tuple[float, float]],
    area_interval: PriceInterval,
    global_interval: PriceInterval,
    *,
    area: str = "",
    hour: int = 0,
    first_segment_id: int = 0,
) -> NetCurve:
    """Build a net curve from raw (price, quantity) nodes.

    The raw curve is first connected to the quantity axis with a vertical
    curtailment segment when it does not cross zero, then extended
    horizontally so it is defined on the whole global price interval.
    """
    if not nodes:
        raise EmptyCurve(f"net curve for area {area!r} hour {hour} has no nodes")
    pts = [(float(p), float(q)) for p, q in nodes]
    for (p0, q0), (p1, q1) in zip(pts, pts[1:]):
        if p1 < p0 or q1 > q0:
            raise NonMonotoneCurve(
                f"curve nodes for area {area!r} hour {hour} are not monotone "
                f"at ({p0}, {q0}) -> ({p1}, {q1})"
            )
    for p, _ in pts:
        if not area_interval.contains(p):
            raise ValidationError(
                f"curve node price {p} outside area interval "
                f"[{area_interval.lower}, {area_interval.upper}]"
            )
    pts = _collapse_nodes(pts)

    curtail: Optional[tuple[float, float]] = None  # (price, juncture quantity)
    if pts[-1][1] > 0:
        # pure demand: curtail at the top price down to the axis
        curtail = (pts[-1][0], pts[-1][1])
        pts.append((pts[-1][0], 0.0))
    elif pts[0][1] < 0:
        # pure supply: curtail at the bottom price up to the axis
        curtail = (pts[0][0], pts[0][1])
        pts.insert(0, (pts[0][0], 0.0))

    if pts[0][0] > global_interval.lower:
        pts.insert(0, (global_interval.lower, pts[0][1]))
    if pts[-1][0] < global_interval.upper:
        pts.append((global_interval.upper, pts[-1][1]))
    pts = _collapse_nodes(pts)

    raw_segments = []
    for (p0, q0), (p1, q1) in zip(pts, pts[1:]):
        dp = p1 - p0
        dq = q0 - q1
        if dp == 0.0 and dq == 0.0:
            continue
        is_curt = curtail is not None and dp == 0.0 and p0 == curtail[0] and (
            (curtail[1] > 0 and q0 > 0 >= q1) or (curtail[1] < 0 and q0 >= 0 > q1)
        )
        raw_segments.append((p0, dp, q0, dq, is_curt))

    raw_segments.sort(key=lambda s: (-s[0], -s[1]))
    segments = tuple(
        NetCurveSegment(
            id=first_segment_id + i,
            base_price=p0,
            price_span=dp,
            node_quantity=q0,
            quantity_span=dq,
            is_curtailment=is_curt,
        )
        for i, (p0, dp, q0, dq, is_curt) in enumerate(raw_segments)
    )
    return NetCurve(area=area, hour=hour, min_net_demand=pts[-1][1], segments=segments)


def selection_terms(instance: Instance, selection: BidSelection) -> FixedSelectionTerms:
    """Welfare constant and per-(area, hour) combinatorial volume of a selection."""
    constant = 0.0
    volume = {(a, t): 0.0 for a in instance.areas for t in range(instance.hours)}
    for bid in selection.executed_blocks():
        if bid not in instance.block_by_id:
            raise UnknownId(f"unknown block id {bid!r}")
        b = instance.block_by_id[bid]
        for t, q in enumerate(b.quantities):
            constant += b.limit_price * q
            volume[b.area, t] += q
    for fid, t in selection.executed_flex():
        if fid not in instance.flex_by_id:
            raise UnknownId(f"unknown flex id {fid!r}")
        if not 0 <= t < instance.hours:
            raise UnknownId(f"flex {fid!r} executed in unknown hour {t}")
        f = instance.flex_by_id[fid]
        constant += f.limit_price * f.quantity
        volume[f.area, t] += f.quantity
    return FixedSelectionTerms(constant=constant, volume=volume)


def segment_fill_value(seg: NetCurveSegment, delta: float) -> float:
    """Welfare contribution of filling ``seg`` to fraction ``delta``."""
    return (
        (seg.base_price + seg.price_span) * seg.quantity_span * delta
        - 0.5 * seg.price_span * seg.quantity_span * delta * delta
    )


def welfare(
    instance: Instance,
    delta: Mapping[int, float],
    blocks: Mapping[str, int],
    flex: Mapping[str, Optional[int]],
) -> float:
    """Economic surplus of an execution (price- and flow-free form)."""
    seg_ids = {s.id for s in instance.segments}
    for sid in delta:
        if sid not in seg_ids:
            raise UnknownId(f"unknown segment id {sid}")
    total = 0.0
    for seg in instance.segments:
        d = delta.get(seg.id, 0.0)
        total += segment_fill_value(seg, d)
    terms = selection_terms(instance, BidSelection(blocks=blocks, flex=flex))
    return total + terms.constant


def welfare_of(instance: Instance, solution: PrimalSolution) -> float:
    return welfare(
        instance, solution.delta, solution.selection.blocks, solution.selection.flex
    )


def clearing_residuals(
    instance: Instance, solution: PrimalSolution
) -> dict[tuple[str, int], float]:
    """Executed net demand minus net import, per (area, hour)."""
    terms = selection_terms(instance, solution.selection)
    res = {}
    for a in instance.areas:
        for t in range(instance.hours):
            curve = instance.curves[a, t]
            vol = curve.min_net_demand + sum(
                s.quantity_span * solution.delta.get(s.id, 0.0) for s in curve.segments
            )
            vol += terms.volume[a, t]
            net_import = 0.0
            for c in instance.interconnectors:
                flow = solution.flows.get((c.id, t), 0.0)
                if c.sink == a:
                    net_import += flow
                if c.source == a:
                    net_import -= flow
            res[a, t] = vol - net_import
    return res


@dataclass(frozen=True)
class SurplusReport:
    segments: Mapping[int, float]
    blocks: Mapping[str, float]
    flex: Mapping[str, float]
    congestion: Mapping[tuple[str, int], float]
    total: float


def surplus_report(
    instance: Instance,
    solution: PrimalSolution,
    prices: PriceVector,
    tol: float = 1e-6,
) -> SurplusReport:
    """Per-participant surpluses at the given prices.

    Requires the clearing balance to hold: only then does the sum of the
    price-dependent surpluses reduce to the price-free welfare.
    """
    residuals = clearing_residuals(instance, solution)
    worst = max(abs(r) for r in residuals.values())
    if worst > tol:
        raise ClearingViolated(f"clearing residual {worst:.3e} exceeds tolerance {tol}")

    seg_surplus = {}
    for seg in instance.segments:
        a, t = instance.segment_location[seg.id]
        d = solution.delta.get(seg.id, 0.0)
        pi = prices[a, t]
        executed = seg.lower_quantity + seg.quantity_span * d
        seg_surplus[seg.id] = segment_fill_value(seg, d) - pi * executed

    block_surplus = {}
    for b in instance.blocks:
        beta = solution.selection.blocks.get(b.id, 0)
        block_surplus[b.id] = beta * sum(
            (b.limit_price - prices[b.area, t]) * q for t, q in enumerate(b.quantities)
        )
    flex_surplus = {}
    for f in instance.flex_bids:
        t = solution.selection.flex.get(f.id)
        flex_surplus[f.id] = (
            0.0 if t is None else (f.limit_price - prices[f.area, t]) * f.quantity
        )
    congestion = {}
    for c in instance.interconnectors:
        for t in range(instance.hours):
            flow = solution.flows.get((c.id, t), 0.0)
            congestion[c.id, t] = (prices[c.sink, t] - prices[c.source, t]) * flow

    total = (
        sum(seg_surplus.values())
        + sum(block_surplus.values())
        + sum(flex_surplus.values())
        + sum(congestion.values())
    )
    return SurplusReport(
        segments=seg_surplus,
        blocks=block_surplus,
        flex=flex_surplus,
        congestion=congestion,
        total=total,
    )


def big_m(block: BlockBid, interval: PriceInterval) -> float:
    """Worst-case loss of a block over the price interval (nonpositive)."""
    total = 0.0
    for q in block.quantities:
        total += min(
            (block.limit_price - interval.lower) * q,
            (block.limit_price - interval.upper) * q,
        )
    return total


def _price_where_quantity_below(nodes, target, interval, eps=1e-9):
    """Smallest price at which the polyline quantity is <= target."""
    target = target + eps
    if nodes[0][1] <= target:
        return interval.lower
    for (p0, q0), (p1, q1) in zip(nodes, nodes[1:]):
        if q1 <= target:
            if p1 == p0 or q0 == q1:
                return p1
            return p0 + (q0 - target) / (q0 - q1) * (p1 - p0)
    return interval.upper


def _price_where_quantity_above(nodes, target, interval, eps=1e-9):
    """Largest price at which the polyline quantity is >= target."""
    target = target - eps
    if nodes[-1][1] >= target:
        return interval.upper
    for (p0, q0), (p1, q1) in zip(reversed(nodes), list(reversed(nodes))[1:]):
        # walking down: p0 >= p1, q0 <= q1
        if q1 >= target:
            if p1 == p0 or q0 == q1:
                return p1
            return p1 + (q1 - target) / (q1 - q0) * (p0 - p1)
    return interval.lower


def presolve_price_bounds(instance: Instance) -> dict[tuple[str, int], PriceInterval]:
    """Per-(area, hour) price bounds containing every feasible clearing price.

    The worst-case combinatorial volume plus flow extremes bound the hourly
    curve volume; walking the curve converts the quantity band to prices,
    taking the widest consistent interval on flat stretches.
    """
    bounds = {}
    for a in instance.areas:
        for t in range(instance.hours):
            hi_q = 0.0
            lo_q = 0.0
            for b in instance.blocks:
                if b.area == a:
                    hi_q -= min(0.0, b.quantities[t])
                    lo_q -= max(0.0, b.quantities[t])
            for f in instance.flex_bids:
                if f.area == a:
                    hi_q -= min(0.0, f.quantity)
                    lo_q -= max(0.0, f.quantity)
            for c in instance.interconnectors:
                if c.sink == a:
                    hi_q += c.upper[t]
                    lo_q += c.lower[t]
                if c.source == a:
                    hi_q -= c.lower[t]
                    lo_q -= c.upper[t]
            nodes = instance.curves[a, t].nodes()
            lo_p = _price_where_quantity_below(nodes, hi_q, instance.interval)
            hi_p = _price_where_quantity_above(nodes, lo_q, instance.interval)
            lo_p = instance.interval.clamp(lo_p)
            hi_p = instance.interval.clamp(max(hi_p, lo_p))
            bounds[a, t] = PriceInterval(lo_p, hi_p)
    return bounds
