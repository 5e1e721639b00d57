"""JSON documents for instances and clearing solutions.

Serialization is canonical (sorted keys, shortest round-trip floats), so
identical inputs always produce byte-identical output.
"""

from __future__ import annotations

import json
import math
from typing import Any, Optional

from .core import (
    BidSelection,
    BlockBid,
    FlexBid,
    Instance,
    Interconnector,
    PriceInterval,
    PriceVector,
    PrimalSolution,
    build_net_curve,
)
from .errors import FlexMultiplicity, SchemaError


_SENTINEL = object()


def _get(obj, key, kind, path, default=_SENTINEL):
    if not isinstance(obj, dict):
        raise SchemaError(path, f"expected an object, got {type(obj).__name__}")
    if key not in obj:
        if default is not _SENTINEL:
            return default
        raise SchemaError(f"{path}.{key}", "missing required field")
    val = obj[key]
    if kind is float:
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise SchemaError(f"{path}.{key}", "expected a number")
        return float(val)
    if kind is int:
        if isinstance(val, bool) or not isinstance(val, int):
            raise SchemaError(f"{path}.{key}", "expected an integer")
        return val
    if not isinstance(val, kind):
        raise SchemaError(f"{path}.{key}", f"expected {kind.__name__}")
    return val


def _interval(obj, path) -> PriceInterval:
    return PriceInterval(
        lower=_get(obj, "lower", float, path), upper=_get(obj, "upper", float, path)
    )


def _nodes(raw, path):
    if not isinstance(raw, list):
        raise SchemaError(path, "expected a list of [price, quantity] pairs")
    out = []
    for i, pair in enumerate(raw):
        if (
            not isinstance(pair, list)
            or len(pair) != 2
            or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in pair)
        ):
            raise SchemaError(f"{path}[{i}]", "expected a [price, quantity] pair")
        out.append((float(pair[0]), float(pair[1])))
    return tuple(out)


def parse_instance(text: str) -> Instance:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError("$", f"not valid JSON: {exc}") from None
    interval = _interval(_get(doc, "price_interval", dict, "$"), "$.price_interval")
    hours = _get(doc, "hours", int, "$")
    if hours <= 0:
        raise SchemaError("$.hours", "must be positive")

    areas = []
    area_intervals = {}
    for i, entry in enumerate(_get(doc, "areas", list, "$")):
        path = f"$.areas[{i}]"
        aid = _get(entry, "id", str, path)
        areas.append(aid)
        sub = _get(entry, "price_interval", dict, path, default=None)
        if sub is not None:
            area_intervals[aid] = _interval(sub, f"{path}.price_interval")

    curves = {}
    raw_nodes = {}
    next_seg = 0
    entries = _get(doc, "curves", list, "$")
    by_key = {}
    for i, entry in enumerate(entries):
        path = f"$.curves[{i}]"
        a = _get(entry, "area", str, path)
        t = _get(entry, "hour", int, path)
        by_key[a, t] = (_nodes(_get(entry, "nodes", list, path), f"{path}.nodes"), path)
    for a in areas:
        for t in range(hours):
            if (a, t) not in by_key:
                raise SchemaError("$.curves", f"missing curve for area {a!r} hour {t}")
            nodes, path = by_key[a, t]
            curve = build_net_curve(
                nodes,
                area_intervals.get(a, interval),
                interval,
                area=a,
                hour=t,
                first_segment_id=next_seg,
            )
            next_seg += len(curve.segments)
            curves[a, t] = curve
            raw_nodes[a, t] = nodes

    blocks = []
    for i, entry in enumerate(_get(doc, "blocks", list, "$", default=[])):
        path = f"$.blocks[{i}]"
        qty = _get(entry, "quantities", list, path)
        blocks.append(
            BlockBid(
                id=_get(entry, "id", str, path),
                area=_get(entry, "area", str, path),
                limit_price=_get(entry, "limit_price", float, path),
                quantities=tuple(
                    _get({"q": q}, "q", float, f"{path}.quantities[{j}]")
                    for j, q in enumerate(qty)
                ),
            )
        )
    links = []
    for i, entry in enumerate(_get(doc, "links", list, "$", default=[])):
        path = f"$.links[{i}]"
        if not isinstance(entry, list) or len(entry) != 2:
            raise SchemaError(path, "expected a [child, parent] pair")
        links.append((str(entry[0]), str(entry[1])))
    flex = []
    for i, entry in enumerate(_get(doc, "flex", list, "$", default=[])):
        path = f"$.flex[{i}]"
        flex.append(
            FlexBid(
                id=_get(entry, "id", str, path),
                area=_get(entry, "area", str, path),
                limit_price=_get(entry, "limit_price", float, path),
                quantity=_get(entry, "quantity", float, path),
            )
        )
    conns = []
    for i, entry in enumerate(_get(doc, "interconnectors", list, "$", default=[])):
        path = f"$.interconnectors[{i}]"
        ramp = entry.get("ramp_rate") if isinstance(entry, dict) else None
        if ramp is not None:
            ramp = _get(entry, "ramp_rate", float, path)
        conns.append(
            Interconnector(
                id=_get(entry, "id", str, path),
                source=_get(entry, "source", str, path),
                sink=_get(entry, "sink", str, path),
                lower=tuple(
                    float(v) for v in _get(entry, "lower", list, path)
                ),
                upper=tuple(
                    float(v) for v in _get(entry, "upper", list, path)
                ),
                ramp_rate=ramp,
                initial_flow=_get(entry, "initial_flow", float, path, default=0.0),
            )
        )

    instance = Instance(
        interval=interval,
        hours=hours,
        areas=tuple(areas),
        area_intervals=area_intervals,
        curves=curves,
        blocks=tuple(blocks),
        links=tuple(links),
        flex_bids=tuple(flex),
        interconnectors=tuple(conns),
        raw_nodes=raw_nodes,
    )
    instance.validate()
    return instance


def _dump(doc: Any) -> str:
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def serialize_instance(instance: Instance) -> str:
    doc = {
        "price_interval": {
            "lower": instance.interval.lower,
            "upper": instance.interval.upper,
        },
        "hours": instance.hours,
        "areas": [
            {
                "id": a,
                **(
                    {
                        "price_interval": {
                            "lower": instance.area_intervals[a].lower,
                            "upper": instance.area_intervals[a].upper,
                        }
                    }
                    if a in instance.area_intervals
                    else {}
                ),
            }
            for a in instance.areas
        ],
        "curves": [
            {
                "area": a,
                "hour": t,
                "nodes": [
                    list(pq)
                    for pq in (
                        instance.raw_nodes[a, t]
                        if instance.raw_nodes is not None
                        else instance.curves[a, t].nodes()
                    )
                ],
            }
            for a in instance.areas
            for t in range(instance.hours)
        ],
        "blocks": [
            {
                "id": b.id,
                "area": b.area,
                "limit_price": b.limit_price,
                "quantities": list(b.quantities),
            }
            for b in instance.blocks
        ],
        "links": [list(pair) for pair in instance.links],
        "flex": [
            {
                "id": f.id,
                "area": f.area,
                "limit_price": f.limit_price,
                "quantity": f.quantity,
            }
            for f in instance.flex_bids
        ],
        "interconnectors": [
            {
                "id": c.id,
                "source": c.source,
                "sink": c.sink,
                "lower": list(c.lower),
                "upper": list(c.upper),
                "ramp_rate": c.ramp_rate,
                "initial_flow": c.initial_flow,
            }
            for c in instance.interconnectors
        ],
    }
    return _dump(doc)


def selection_from_doc(doc, path="$.selection") -> BidSelection:
    blocks_doc = _get(doc, "blocks", dict, path, default={})
    flex_doc = _get(doc, "flex", dict, path, default={})
    blocks = {}
    for bid, val in blocks_doc.items():
        if val not in (0, 1):
            raise SchemaError(f"{path}.blocks.{bid}", "expected 0 or 1")
        blocks[bid] = int(val)
    flex = {}
    for fid, hour in flex_doc.items():
        if fid in flex:
            raise FlexMultiplicity(f"flex bid {fid!r} listed twice")
        if hour is not None and (isinstance(hour, bool) or not isinstance(hour, int)):
            raise SchemaError(f"{path}.flex.{fid}", "expected an hour index or null")
        flex[fid] = hour
    return BidSelection(blocks=blocks, flex=flex)


def solution_to_doc(
    instance: Instance,
    solution: PrimalSolution,
    prices: Optional[PriceVector],
    **extra,
) -> dict:
    doc = {
        "selection": {
            "blocks": {b: int(v) for b, v in sorted(solution.selection.blocks.items())},
            "flex": {f: v for f, v in sorted(solution.selection.flex.items())},
        },
        "delta": {str(sid): val for sid, val in sorted(solution.delta.items())},
        "flows": [
            {"interconnector": cid, "hour": t, "flow": val}
            for (cid, t), val in sorted(solution.flows.items())
        ],
        "prices": (
            [
                {"area": a, "hour": t, "price": val}
                for (a, t), val in sorted(prices.pi.items())
            ]
            if prices is not None
            else None
        ),
    }
    doc.update(extra)
    return doc


def parse_solution(text: str) -> tuple[BidSelection, dict, dict, Optional[dict]]:
    """Returns (selection, delta by segment id, flows, prices or None)."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError("$", f"not valid JSON: {exc}") from None
    selection = selection_from_doc(_get(doc, "selection", dict, "$"))
    delta_doc = _get(doc, "delta", dict, "$", default={})
    delta = {}
    for key, val in delta_doc.items():
        try:
            sid = int(key)
        except ValueError:
            raise SchemaError(f"$.delta.{key}", "expected an integer segment id")
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise SchemaError(f"$.delta.{key}", "expected a number")
        delta[sid] = float(val)
    flows = {}
    for i, entry in enumerate(_get(doc, "flows", list, "$", default=[])):
        path = f"$.flows[{i}]"
        flows[
            _get(entry, "interconnector", str, path), _get(entry, "hour", int, path)
        ] = _get(entry, "flow", float, path)
    prices_doc = doc.get("prices")
    prices = None
    if prices_doc is not None:
        prices = {}
        for i, entry in enumerate(prices_doc):
            path = f"$.prices[{i}]"
            prices[
                _get(entry, "area", str, path), _get(entry, "hour", int, path)
            ] = _get(entry, "price", float, path)
    return selection, delta, flows, prices


def dump_document(doc: dict) -> str:
    return _dump(doc)
