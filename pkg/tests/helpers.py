"""Shared fixture builders and the random small-instance generator."""

import json

import numpy as np

from daclear.io import parse_instance


def make_instance(curves, conns=(), P=(0.0, 100.0), hours=1, areas=None,
                  blocks=(), links=(), flex=(), area_intervals=None):
    if areas is None:
        areas = sorted({a for a, _ in curves})
    area_intervals = area_intervals or {}
    doc = {
        "price_interval": {"lower": P[0], "upper": P[1]},
        "hours": hours,
        "areas": [
            {"id": a, **({"price_interval": area_intervals[a]} if a in area_intervals else {})}
            for a in areas
        ],
        "curves": [
            {"area": a, "hour": t, "nodes": [list(n) for n in nodes]}
            for (a, t), nodes in curves.items()
        ],
        "blocks": list(blocks),
        "links": [list(l) for l in links],
        "flex": list(flex),
        "interconnectors": list(conns),
    }
    return parse_instance(json.dumps(doc))


def block(bid, area, limit, quantities):
    return {"id": bid, "area": area, "limit_price": float(limit),
            "quantities": [float(q) for q in quantities]}


def flexbid(fid, area, limit, quantity):
    return {"id": fid, "area": area, "limit_price": float(limit),
            "quantity": float(quantity)}


def connector(cid, source, sink, lower, upper, ramp=None, initial=0.0):
    return {"id": cid, "source": source, "sink": sink,
            "lower": [float(v) for v in lower], "upper": [float(v) for v in upper],
            "ramp_rate": None if ramp is None else float(ramp),
            "initial_flow": float(initial)}


def appendix_a():
    return make_instance(
        {("X", 0): [[0, 0], [5, 0]]},
        P=(0.0, 5.0),
        blocks=[
            block("a", "X", 1, [-1]),
            block("b", "X", 2, [1]),
            block("c", "X", 3, [-2]),
            block("d", "X", 4, [2]),
        ],
    )


def two_area(atc):
    """Supply step of 50 MW at price 10 in R, demand step of 30 MW at 40 in S."""
    return make_instance(
        {("R", 0): [[0, 0], [10, 0], [10, -50], [100, -50]],
         ("S", 0): [[0, 30], [40, 30], [40, 0], [100, 0]]},
        [connector("c1", "R", "S", [-atc], [atc])],
    )


def f2():
    return two_area(100.0)


def f3():
    return two_area(20.0)


def ramp_fixture():
    """Two hours, elastic curves, free ATC, ramp rate 6 starting from flow 18."""
    return make_instance(
        {("R", 0): [[-100, 0], [0, 0], [100, -200]],
         ("R", 1): [[-100, 0], [0, 0], [100, -200]],
         ("S", 0): [[-100, 65], [100, -35]],
         ("S", 1): [[-100, 95], [100, -5]]},
        [connector("c1", "R", "S", [-1000, -1000], [1000, 1000], ramp=6.0, initial=18.0)],
        P=(-100.0, 100.0), hours=2,
    )


def diamond():
    """Two symmetric routes R->A->S and R->B->S moving 100 MW in total."""
    return make_instance(
        {("R", 0): [[0, 0], [10, 0], [10, -150], [100, -150]],
         ("A", 0): [[0, 0], [100, 0]],
         ("B", 0): [[0, 0], [100, 0]],
         ("S", 0): [[0, 100], [40, 100], [40, 0], [100, 0]]},
        [connector("RA", "R", "A", [-200], [200]),
         connector("AS", "A", "S", [-200], [200]),
         connector("RB", "R", "B", [-200], [200]),
         connector("BS", "B", "S", [-200], [200])],
        areas=["R", "A", "B", "S"],
    )


def price_indifferent():
    return make_instance(
        {("X", 0): [[-10, 20], [-5, 0], [7, 0], [10, -20]]},
        P=(-10.0, 10.0),
    )


def _random_curve(rng, demand_only=False):
    """Monotone node list on [0, 100] with jittered prices."""
    k = int(rng.integers(2, 5))
    prices = np.sort(rng.uniform(1.0, 99.0, size=k)) + rng.uniform(0, 1e-3, size=k)
    prices = np.unique(np.round(prices, 6))
    if demand_only:
        qty = np.sort(rng.uniform(1.0, 40.0, size=len(prices)))[::-1]
    else:
        hi = rng.uniform(5.0, 40.0)
        lo = -rng.uniform(5.0, 40.0)
        qty = np.sort(rng.uniform(lo, hi, size=len(prices)))[::-1]
        qty[0] = hi
        qty[-1] = lo
    return [[float(p), float(q)] for p, q in zip(prices, qty)]


def random_instance(seed):
    """Small jittered instance within the enumeration-oracle caps."""
    rng = np.random.default_rng(seed)
    n_areas = int(rng.integers(1, 3))
    hours = int(rng.integers(1, 4))
    areas = ["A0", "A1"][:n_areas]
    curves = {}
    for a in areas:
        for t in range(hours):
            curves[a, t] = _random_curve(rng, demand_only=rng.random() < 0.15)

    n_blocks = int(rng.choice([1, 2, 2, 3, 3, 4], p=[0.15, 0.25, 0.25, 0.15, 0.1, 0.1]))
    blocks = []
    for i in range(n_blocks):
        q = rng.uniform(-15.0, 15.0, size=hours)
        q[rng.random(hours) < 0.3] = 0.0
        if not np.any(q):
            q[0] = float(rng.uniform(3.0, 12.0)) * (1 if rng.random() < 0.5 else -1)
        blocks.append(block(
            f"b{i}", str(rng.choice(areas)),
            float(rng.uniform(5.0, 95.0) + rng.uniform(0, 1e-3)),
            [float(v) for v in q],
        ))
    links = []
    if n_blocks >= 2 and rng.random() < 0.2:
        links.append((blocks[1]["id"], blocks[0]["id"]))

    n_flex = int(rng.choice([0, 0, 1, 1, 2], p=[0.35, 0.25, 0.2, 0.1, 0.1]))
    if n_blocks + n_flex * hours > 12:
        n_flex = 0
    flex = [
        flexbid(f"f{i}", str(rng.choice(areas)),
                float(rng.uniform(5.0, 95.0) + rng.uniform(0, 1e-3)),
                float(rng.uniform(2.0, 12.0)) * (1 if rng.random() < 0.5 else -1))
        for i in range(n_flex)
    ]

    conns = []
    if n_areas == 2:
        atc = float(rng.uniform(5.0, 40.0))
        ramp = float(rng.uniform(2.0, 15.0)) if rng.random() < 0.5 else None
        initial = float(rng.uniform(-5.0, 5.0)) if ramp is not None else 0.0
        conns.append(connector(
            "c1", "A0", "A1", [-atc] * hours, [atc] * hours,
            ramp=ramp, initial=initial,
        ))
    return make_instance(curves, conns, hours=hours, areas=areas,
                         blocks=blocks, links=links, flex=flex)
