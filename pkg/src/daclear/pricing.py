"""Uniqueness post-processing: canonical flows and canonical prices.

A fixed selection usually admits many optimal flow patterns and many
supporting price vectors.  FixFlow picks the minimum-squared-norm flows
among the welfare-preserving ones; the price solve picks prices that first
minimize total executed-bid losses, then minimize the squared price norm.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .core import (
    DualCertificate,
    Instance,
    PriceInterval,
    PriceVector,
    PrimalSolution,
    big_m,
)
from .errors import PriceInfeasible
from .qp import QpProblem, solve_qp

TIGHT_TOL = 1e-7


def solve_fixflow(instance: Instance, solution: PrimalSolution) -> PrimalSolution:
    """Minimum squared-norm flows among welfare-preserving alternatives.

    Slope-carrying segment fills are unique and stay fixed; vertical
    segment fills may redistribute as long as total welfare and clearing
    balance are preserved.
    """
    if not instance.interconnectors:
        return solution
    free = [s for s in instance.segments if s.is_vertical]
    free_col = {s.id: j for j, s in enumerate(free)}
    flow_keys = [
        (c.id, t) for c in instance.interconnectors for t in range(instance.hours)
    ]
    n_free = len(free)
    n = n_free + len(flow_keys)
    conn = {c.id: c for c in instance.interconnectors}

    c_obj = np.zeros(n)
    d_obj = np.zeros(n)
    lb = np.zeros(n)
    ub = np.ones(n)
    for k, (cid, t) in enumerate(flow_keys):
        d_obj[n_free + k] = -2.0
        lb[n_free + k] = conn[cid].lower[t]
        ub[n_free + k] = conn[cid].upper[t]

    # clearing rows with the pinned (sloped) fills moved to the rhs,
    # plus one welfare-preservation row over the free fills
    eq_keys = [(a, t) for a in instance.areas for t in range(instance.hours)]
    A_eq = np.zeros((len(eq_keys) + 1, n))
    b_eq = np.zeros(len(eq_keys) + 1)
    from .core import selection_terms

    terms = selection_terms(instance, solution.selection)
    for r, (a, t) in enumerate(eq_keys):
        curve = instance.curves[a, t]
        rhs = -curve.min_net_demand - terms.volume[a, t]
        for seg in curve.segments:
            if seg.id in free_col:
                A_eq[r, free_col[seg.id]] = seg.quantity_span
            else:
                rhs -= seg.quantity_span * solution.delta.get(seg.id, 0.0)
        for k, (cid, tt) in enumerate(flow_keys):
            if tt != t:
                continue
            if conn[cid].sink == a:
                A_eq[r, n_free + k] -= 1.0
            if conn[cid].source == a:
                A_eq[r, n_free + k] += 1.0
        b_eq[r] = rhs
    w_row = len(eq_keys)
    for seg in free:
        A_eq[w_row, free_col[seg.id]] = seg.base_price * seg.quantity_span
        b_eq[w_row] += (
            seg.base_price * seg.quantity_span * solution.delta.get(seg.id, 0.0)
        )

    m_ramp = []
    for cc in instance.interconnectors:
        if cc.ramp_rate is None or not np.isfinite(cc.ramp_rate):
            continue
        for t in range(instance.hours):
            m_ramp.append((cc.id, t, 1.0))
            m_ramp.append((cc.id, t, -1.0))
    A_in = np.zeros((len(m_ramp), n))
    b_in = np.zeros(len(m_ramp))
    col = {key: n_free + k for k, key in enumerate(flow_keys)}
    for r, (cid, t, sgn) in enumerate(m_ramp):
        A_in[r, col[cid, t]] = sgn
        b_in[r] = conn[cid].ramp_rate
        if t == 0:
            b_in[r] += sgn * conn[cid].initial_flow
        else:
            A_in[r, col[cid, t - 1]] = -sgn

    prob = QpProblem(
        c=c_obj, d=d_obj, A_eq=A_eq, b_eq=b_eq, A_in=A_in, b_in=b_in, lb=lb, ub=ub
    )
    x0 = np.zeros(n)
    for seg in free:
        x0[free_col[seg.id]] = solution.delta.get(seg.id, 0.0)
    for k, key in enumerate(flow_keys):
        x0[n_free + k] = solution.flows.get(key, 0.0)
    sol = solve_qp(prob, x0=x0)
    if sol.status != "optimal":
        raise RuntimeError(f"flow canonicalization failed: {sol.status}")

    delta = dict(solution.delta)
    for seg in free:
        delta[seg.id] = float(sol.x[free_col[seg.id]])
    flows = {key: float(sol.x[n_free + k]) for k, key in enumerate(flow_keys)}
    return PrimalSolution(selection=solution.selection, delta=delta, flows=flows)


@dataclass(frozen=True)
class PricingOutcome:
    prices: PriceVector
    losses: Mapping[str, float]
    certificate: DualCertificate
    total_loss: float


def _tight_flow_multiplier_vars(instance: Instance, flows):
    """Which flow-side multipliers may be nonzero at the fixed flows."""
    keys = []
    for c in instance.interconnectors:
        ramp = c.ramp_rate if c.ramp_rate is not None else np.inf
        for t in range(instance.hours):
            tau = flows.get((c.id, t), 0.0)
            if c.upper[t] - tau <= TIGHT_TOL:
                keys.append((c.id, t, "mu_upper"))
            if tau - c.lower[t] <= TIGHT_TOL:
                keys.append((c.id, t, "mu_lower"))
            if np.isfinite(ramp):
                prev = c.initial_flow if t == 0 else flows.get((c.id, t - 1), 0.0)
                if (tau - prev) >= ramp - TIGHT_TOL:
                    keys.append((c.id, t, "rho_fwd"))
                if (prev - tau) >= ramp - TIGHT_TOL:
                    keys.append((c.id, t, "rho_bwd"))
    return keys


def solve_qpprice(
    instance: Instance, solution: PrimalSolution, relax_losses: bool = False
) -> PricingOutcome:
    areas = instance.areas
    T = instance.hours
    pi_keys = [(a, t) for a in areas for t in range(T)]
    pi_col = {key: j for j, key in enumerate(pi_keys)}
    exec_blocks = solution.selection.executed_blocks()
    exec_flex = solution.selection.executed_flex()
    lam_keys = (exec_blocks + [f for f, _ in exec_flex]) if relax_losses else []
    lam_col = {bid: len(pi_keys) + j for j, bid in enumerate(lam_keys)}
    mult_keys = _tight_flow_multiplier_vars(instance, solution.flows)
    mult_col = {key: len(pi_keys) + len(lam_keys) + j for j, key in enumerate(mult_keys)}
    n = len(pi_keys) + len(lam_keys) + len(mult_keys)

    lb = np.full(n, 0.0)
    ub = np.full(n, np.inf)
    for key, j in pi_col.items():
        lb[j] = instance.interval.lower
        ub[j] = instance.interval.upper
    for bid, j in lam_col.items():
        if bid in instance.block_by_id:
            cap = -big_m(instance.block_by_id[bid], instance.interval)
        else:
            f = instance.flex_by_id[bid]
            cap = max(
                (f.limit_price - instance.interval.lower) * -f.quantity,
                (f.limit_price - instance.interval.upper) * -f.quantity,
            )
        ub[j] = max(cap, 0.0)

    eq_rows = []
    eq_rhs = []
    in_rows = []
    in_rhs = []

    # execution-fraction price rule per quantity-carrying segment
    for seg in instance.segments:
        if seg.quantity_span == 0.0:
            continue
        a, t = instance.segment_location[seg.id]
        dlt = solution.delta.get(seg.id, 0.0)
        row = np.zeros(n)
        row[pi_col[a, t]] = 1.0
        if dlt >= 1.0 - TIGHT_TOL:
            in_rows.append(row)
            in_rhs.append(seg.price_at(1.0))
        elif dlt <= TIGHT_TOL:
            in_rows.append(-row)
            in_rhs.append(-seg.price_at(0.0))
        else:
            eq_rows.append(row)
            eq_rhs.append(seg.price_at(dlt))

    # price-difference stationarity per interconnector and hour
    for c in instance.interconnectors:
        for t in range(T):
            row = np.zeros(n)
            row[pi_col[c.sink, t]] += 1.0
            row[pi_col[c.source, t]] -= 1.0
            for name, sgn, tt in (
                ("mu_upper", -1.0, t),
                ("mu_lower", 1.0, t),
                ("rho_fwd", -1.0, t),
                ("rho_bwd", 1.0, t),
                ("rho_fwd", 1.0, t + 1),
                ("rho_bwd", -1.0, t + 1),
            ):
                key = (c.id, tt, name)
                if key in mult_col:
                    row[mult_col[key]] += sgn
            eq_rows.append(row)
            eq_rhs.append(0.0)

    # no-loss rows for executed fill-or-kill bids (slack lam when relaxed)
    def loss_row(area, hours_qty, limit, bid):
        row = np.zeros(n)
        rhs = 0.0
        for t, q in hours_qty:
            row[pi_col[area, t]] += q
            rhs += limit * q
        if relax_losses:
            row[lam_col[bid]] = -1.0
        in_rows.append(row)
        in_rhs.append(rhs)

    for bid in exec_blocks:
        b = instance.block_by_id[bid]
        loss_row(b.area, list(enumerate(b.quantities)), b.limit_price, bid)
    for fid, t in exec_flex:
        f = instance.flex_by_id[fid]
        loss_row(f.area, [(t, f.quantity)], f.limit_price, fid)

    A_eq = np.array(eq_rows).reshape(-1, n)
    b_eq = np.array(eq_rhs)
    A_in = np.array(in_rows).reshape(-1, n)
    b_in = np.array(in_rhs)

    x1 = None
    if relax_losses and lam_keys:
        c1 = np.zeros(n)
        for j in lam_col.values():
            c1[j] = -1.0
        p1 = QpProblem(
            c=c1, d=np.zeros(n), A_eq=A_eq, b_eq=b_eq, A_in=A_in, b_in=b_in,
            lb=lb, ub=ub,
        )
        s1 = solve_qp(p1)
        if s1.status != "optimal":
            raise PriceInfeasible(
                f"no supporting price even with loss slacks ({s1.status})"
            )
        total = float(np.sum(s1.x[len(pi_keys) : len(pi_keys) + len(lam_keys)]))
        row = np.zeros(n)
        for j in lam_col.values():
            row[j] = 1.0
        A_in = np.vstack([A_in, row])
        b_in = np.append(b_in, total + 1e-9)
        x1 = s1.x

    c2 = np.zeros(n)
    d2 = np.zeros(n)
    for j in pi_col.values():
        d2[j] = -2.0
    p2 = QpProblem(
        c=c2, d=d2, A_eq=A_eq, b_eq=b_eq, A_in=A_in, b_in=b_in, lb=lb, ub=ub
    )
    s2 = solve_qp(p2, x0=x1)
    if s2.status != "optimal":
        raise PriceInfeasible(
            "no loss-free supporting price exists for this execution"
            if not relax_losses
            else f"price selection failed ({s2.status})"
        )

    prices = PriceVector(pi={key: float(s2.x[pi_col[key]]) for key in pi_keys})

    losses = {}
    for bid in exec_blocks:
        b = instance.block_by_id[bid]
        surplus = sum(
            (b.limit_price - prices[b.area, t]) * q for t, q in enumerate(b.quantities)
        )
        losses[bid] = max(0.0, -surplus)
    for fid, t in exec_flex:
        f = instance.flex_by_id[fid]
        losses[fid] = max(0.0, -(f.limit_price - prices[f.area, t]) * f.quantity)

    mu_upper, mu_lower, rho_fwd, rho_bwd = {}, {}, {}, {}
    for c in instance.interconnectors:
        for t in range(T):
            mu_upper[c.id, t] = 0.0
            mu_lower[c.id, t] = 0.0
            rho_fwd[c.id, t] = 0.0
            rho_bwd[c.id, t] = 0.0
    for (cid, t, name), j in mult_col.items():
        {"mu_upper": mu_upper, "mu_lower": mu_lower,
         "rho_fwd": rho_fwd, "rho_bwd": rho_bwd}[name][cid, t] = float(s2.x[j])
    v_upper, v_lower = {}, {}
    for seg in instance.segments:
        a, t = instance.segment_location[seg.id]
        diff = seg.quantity_span * (
            seg.price_at(solution.delta.get(seg.id, 0.0)) - prices[a, t]
        )
        v_upper[seg.id] = max(diff, 0.0)
        v_lower[seg.id] = max(-diff, 0.0)
    cert = DualCertificate(
        mu_upper=mu_upper, mu_lower=mu_lower, rho_fwd=rho_fwd, rho_bwd=rho_bwd,
        v_upper=v_upper, v_lower=v_lower,
    )
    return PricingOutcome(
        prices=prices,
        losses=losses,
        certificate=cert,
        total_loss=float(sum(losses.values())),
    )


def clamp_prices(
    prices: PriceVector, instance: Instance
) -> tuple[PriceVector, list[str]]:
    """Project each price onto its area interval; clamping can break the
    cross-border price-difference conditions, so each move is reported."""
    out = {}
    warnings = []
    for (a, t), pi in prices.pi.items():
        interval = instance.area_interval(a)
        clamped = interval.clamp(pi)
        out[a, t] = clamped
        if clamped != pi:
            warnings.append(
                f"price for area {a!r} hour {t} moved from {pi} to {clamped}; "
                f"cross-border price conditions may no longer hold"
            )
    return PriceVector(pi=out), warnings
