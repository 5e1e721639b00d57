"""Dense active-set solver for concave quadratic programs.

Solves

    maximize    c'x + 1/2 sum_i d_i x_i^2        (d_i <= 0)
    subject to  A_eq x  = b_eq
                A_in x <= b_in
                lb <= x <= ub

with a primal active-set method on the null space of the working
constraints.  A phase-1 pass with artificial slacks produces a feasible
start or an infeasibility verdict.  All tie-breaks pick the lowest
constraint index, so results are deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

FEAS_TOL = 1e-9
DUAL_TOL = 1e-9
STEP_TOL = 1e-11
CURV_TOL = 1e-10
RANK_TOL = 1e-11


@dataclass
class QpProblem:
    c: np.ndarray
    d: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray
    A_in: np.ndarray
    b_in: np.ndarray
    lb: np.ndarray
    ub: np.ndarray

    def __post_init__(self):
        n = len(self.c)
        self.c = np.asarray(self.c, dtype=float)
        self.d = np.asarray(self.d, dtype=float)
        self.A_eq = np.asarray(self.A_eq, dtype=float).reshape(-1, n)
        self.b_eq = np.asarray(self.b_eq, dtype=float)
        self.A_in = np.asarray(self.A_in, dtype=float).reshape(-1, n)
        self.b_in = np.asarray(self.b_in, dtype=float)
        self.lb = np.asarray(self.lb, dtype=float)
        self.ub = np.asarray(self.ub, dtype=float)
        if np.any(self.d > 1e-12):
            raise ValueError("quadratic diagonal must be nonpositive")

    @property
    def n(self) -> int:
        return len(self.c)

    def objective(self, x: np.ndarray) -> float:
        return float(self.c @ x + 0.5 * np.sum(self.d * x * x))


@dataclass
class QpSolution:
    status: str  # optimal | infeasible | unbounded
    x: Optional[np.ndarray] = None
    objective: float = float("nan")
    y_eq: Optional[np.ndarray] = None
    mu_in: Optional[np.ndarray] = None
    nu_lower: Optional[np.ndarray] = None
    nu_upper: Optional[np.ndarray] = None
    ray: Optional[np.ndarray] = None
    certificate: Optional[dict] = None
    kkt_residual: float = float("nan")
    iterations: int = 0


@dataclass
class KktReport:
    stationarity: float
    primal: float
    dual: float
    complementarity: float
    tol: float

    @property
    def max_residual(self) -> float:
        return max(self.stationarity, self.primal, self.dual, self.complementarity)

    @property
    def passed(self) -> bool:
        return self.max_residual <= self.tol


def _null_space(K: np.ndarray, n: int) -> np.ndarray:
    if K.shape[0] == 0:
        return np.eye(n)
    _, s, vt = np.linalg.svd(K, full_matrices=True)
    tol = max(K.shape) * (s[0] if len(s) else 0.0) * RANK_TOL + RANK_TOL
    rank = int(np.sum(s > tol))
    return vt[rank:].T


class _ActiveSet:
    """Active-set iteration on  max c'x + 1/2 x'Dx,  Ax=b,  Gx<=h."""

    def __init__(self, c, d, A, b, G, h):
        self.c = c
        self.d = d
        self.A = A
        self.b = b
        self.G = G
        self.h = h
        self.n = len(c)

    def run(self, x, work):
        c, d, A, G, h = self.c, self.d, self.A, self.G, self.h
        work = sorted(work)
        max_iter = 200 * (self.n + len(h) + 5)
        for it in range(max_iter):
            g = c + d * x
            K = np.vstack([A, G[work]]) if (len(A) or work) else np.zeros((0, self.n))
            Z = _null_space(K, self.n)
            if Z.shape[1] == 0:
                p = np.zeros(self.n)
                flat_ray = None
            else:
                gz = Z.T @ g
                H = Z.T @ (d[:, None] * Z)
                w, V = np.linalg.eigh(H)
                scale = max(1.0, float(np.max(np.abs(w))) if len(w) else 0.0)
                curved = w < -CURV_TOL * scale
                gv = V.T @ gz
                flat_g = gv.copy()
                flat_g[curved] = 0.0
                if np.linalg.norm(flat_g) > DUAL_TOL:
                    flat_ray = Z @ (V @ flat_g)
                    flat_ray /= np.linalg.norm(flat_ray)
                else:
                    flat_ray = None
                q = np.zeros_like(gv)
                q[curved] = -gv[curved] / w[curved]
                p = Z @ (V @ q)

            if flat_ray is not None:
                # objective ascends linearly and forever along this ray
                alpha, block = self._ratio(x, flat_ray, work, np.inf)
                if block is None:
                    return "unbounded", x, work, flat_ray, it
                x = x + alpha * flat_ray
                work = sorted(work + [block])
                continue

            if np.linalg.norm(p) <= STEP_TOL * max(1.0, np.linalg.norm(x)):
                y, mu_w = self._multipliers(g, work)
                if len(mu_w) == 0 or np.min(mu_w) >= -DUAL_TOL:
                    return "optimal", x, work, None, it
                drop = next(
                    i for i, m in zip(work, mu_w) if m < -DUAL_TOL
                )
                work = [i for i in work if i != drop]
                continue

            alpha, block = self._ratio(x, p, work, 1.0)
            x = x + alpha * p
            if block is not None:
                work = sorted(work + [block])
        raise RuntimeError("active-set iteration limit reached")

    def _ratio(self, x, p, work, alpha_max):
        G, h = self.G, self.h
        alpha = alpha_max
        block = None
        inactive = [i for i in range(len(h)) if i not in set(work)]
        for i in inactive:
            gp = float(G[i] @ p)
            if gp > 1e-12:
                slack = max(float(h[i] - G[i] @ x), 0.0)
                a = slack / gp
                if a < alpha - 1e-14:
                    alpha = a
                    block = i
        return alpha, block

    def _multipliers(self, g, work):
        A, G = self.A, self.G
        K = np.vstack([A, G[work]]) if (len(A) or work) else np.zeros((0, self.n))
        if K.shape[0] == 0:
            return np.zeros(0), np.zeros(0)
        lam, *_ = np.linalg.lstsq(K.T, g, rcond=None)
        return lam[: len(A)], lam[len(A):]


def _phase1(c_len, A, b, G, h):
    """Feasible point for Ax=b, Gx<=h, or (None, certificate) when none exists."""
    n = c_len
    x0 = np.zeros(n)
    r_eq = b - A @ x0 if len(b) else np.zeros(0)
    viol = [i for i in range(len(h)) if float(G[i] @ x0 - h[i]) > FEAS_TOL]
    n_art = len(b) + len(viol)
    if n_art == 0 and (len(b) == 0 or np.max(np.abs(r_eq)) <= FEAS_TOL):
        return x0, None
    # z = [x, s_eq, s_in], all artificials nonnegative, maximize -sum(s)
    sigma = np.where(r_eq >= 0, 1.0, -1.0)
    A1 = np.zeros((len(b), n + n_art))
    A1[:, :n] = A
    for j in range(len(b)):
        A1[j, n + j] = sigma[j]
    G1 = np.zeros((len(h) + n_art, n + n_art))
    h1 = np.zeros(len(h) + n_art)
    G1[: len(h), :n] = G
    h1[: len(h)] = h
    for k, i in enumerate(viol):
        G1[i, n + len(b) + k] = -1.0
    for j in range(n_art):
        G1[len(h) + j, n + j] = -1.0
    c1 = np.zeros(n + n_art)
    c1[n:] = -1.0
    z0 = np.zeros(n + n_art)
    z0[n : n + len(b)] = np.abs(r_eq)
    for k, i in enumerate(viol):
        z0[n + len(b) + k] = float(G[i] @ x0 - h[i])
    work0 = [
        i
        for i in range(len(h1))
        if abs(float(G1[i] @ z0 - h1[i])) <= FEAS_TOL
    ]
    solver = _ActiveSet(c1, np.zeros(n + n_art), A1, b, G1, h1)
    status, z, work, _, _ = solver.run(z0, work0)
    if status != "optimal":
        raise RuntimeError("phase-1 subproblem did not converge")
    if float(np.sum(z[n:])) > 1e-7:
        # unsatisfiable subset: original rows carrying nonzero phase-1 weight
        g1 = c1
        y1, mu_w = solver._multipliers(g1, work)
        cert_eq = [j for j in range(len(b)) if abs(float(y1[j])) > 1e-7]
        cert_in = sorted(
            i for i, m in zip(work, mu_w) if i < len(h) and m > 1e-7
        )
        return None, {"eq": cert_eq, "in": cert_in}
    return z[:n], None


def _stack_inequalities(prob: QpProblem):
    n = prob.n
    rows = [prob.A_in]
    rhs = [prob.b_in]
    ub_idx = [i for i in range(n) if np.isfinite(prob.ub[i])]
    lb_idx = [i for i in range(n) if np.isfinite(prob.lb[i])]
    if ub_idx:
        E = np.zeros((len(ub_idx), n))
        for k, i in enumerate(ub_idx):
            E[k, i] = 1.0
        rows.append(E)
        rhs.append(prob.ub[ub_idx])
    if lb_idx:
        E = np.zeros((len(lb_idx), n))
        for k, i in enumerate(lb_idx):
            E[k, i] = -1.0
        rows.append(E)
        rhs.append(-prob.lb[lb_idx])
    G = np.vstack(rows) if rows else np.zeros((0, n))
    h = np.concatenate(rhs) if rhs else np.zeros(0)
    return G, h, ub_idx, lb_idx


def solve_qp(
    prob: QpProblem, tol: float = 1e-8, x0: Optional[np.ndarray] = None
) -> QpSolution:
    n = prob.n
    G, h, ub_idx, lb_idx = _stack_inequalities(prob)

    x = None
    if x0 is not None:
        cand = np.asarray(x0, dtype=float)
        eq_ok = len(prob.b_eq) == 0 or np.max(
            np.abs(prob.A_eq @ cand - prob.b_eq)
        ) <= FEAS_TOL
        in_ok = len(h) == 0 or np.max(G @ cand - h) <= FEAS_TOL
        if eq_ok and in_ok:
            x = cand
    if x is None:
        x, cert = _phase1(n, prob.A_eq, prob.b_eq, G, h)
        if x is None:
            # map stacked inequality rows back onto their public names
            m_in = len(prob.b_in)
            named = {"eq": cert["eq"], "in": [], "upper": [], "lower": []}
            for i in cert["in"]:
                if i < m_in:
                    named["in"].append(i)
                elif i < m_in + len(ub_idx):
                    named["upper"].append(ub_idx[i - m_in])
                else:
                    named["lower"].append(lb_idx[i - m_in - len(ub_idx)])
            return QpSolution(status="infeasible", certificate=named)

    work0 = [i for i in range(len(h)) if abs(float(G[i] @ x - h[i])) <= FEAS_TOL]
    solver = _ActiveSet(prob.c, prob.d, prob.A_eq, prob.b_eq, G, h)
    status, x, work, ray, iters = solver.run(x, work0)
    if status == "unbounded":
        return QpSolution(status="unbounded", x=x, ray=ray, iterations=iters)

    g = prob.c + prob.d * x
    y, mu_w = solver._multipliers(g, work)
    mu_full = np.zeros(len(h))
    for i, m in zip(work, mu_w):
        mu_full[i] = max(m, 0.0)
    m_in = len(prob.b_in)
    mu_in = mu_full[:m_in]
    nu_upper = np.zeros(n)
    nu_lower = np.zeros(n)
    for k, i in enumerate(ub_idx):
        nu_upper[i] = mu_full[m_in + k]
    for k, i in enumerate(lb_idx):
        nu_lower[i] = mu_full[m_in + len(ub_idx) + k]

    sol = QpSolution(
        status="optimal",
        x=x,
        objective=prob.objective(x),
        y_eq=y,
        mu_in=mu_in,
        nu_lower=nu_lower,
        nu_upper=nu_upper,
        iterations=iters,
    )
    sol.kkt_residual = check_kkt(prob, sol, tol).max_residual
    return sol


def check_kkt(prob: QpProblem, sol: QpSolution, tol: float = 1e-8) -> KktReport:
    """Residuals of stationarity, primal feasibility, dual sign and
    complementarity for a candidate solution."""
    x = sol.x
    primal = 0.0
    dual = 0.0
    comp = 0.0
    if len(prob.b_eq):
        primal = max(primal, float(np.max(np.abs(prob.A_eq @ x - prob.b_eq))))
    if len(prob.b_in):
        slack = prob.b_in - prob.A_in @ x
        primal = max(primal, float(np.max(-slack)))
        comp = max(comp, float(np.max(np.abs(sol.mu_in * slack))))
        dual = max(dual, float(np.max(-sol.mu_in)))
    lo_ok = np.isfinite(prob.lb)
    hi_ok = np.isfinite(prob.ub)
    if np.any(lo_ok):
        s = (x - prob.lb)[lo_ok]
        primal = max(primal, float(np.max(-s)))
        comp = max(comp, float(np.max(np.abs(sol.nu_lower[lo_ok] * s))))
    if np.any(hi_ok):
        s = (prob.ub - x)[hi_ok]
        primal = max(primal, float(np.max(-s)))
        comp = max(comp, float(np.max(np.abs(sol.nu_upper[hi_ok] * s))))
    dual = max(
        dual,
        float(np.max(-sol.nu_lower)) if len(sol.nu_lower) else 0.0,
        float(np.max(-sol.nu_upper)) if len(sol.nu_upper) else 0.0,
    )
    grad = prob.c + prob.d * x
    stat = grad - sol.nu_upper + sol.nu_lower
    if len(prob.b_eq):
        stat = stat - prob.A_eq.T @ sol.y_eq
    if len(prob.b_in):
        stat = stat - prob.A_in.T @ sol.mu_in
    stationarity = float(np.max(np.abs(stat))) if len(stat) else 0.0
    return KktReport(
        stationarity=stationarity, primal=primal, dual=dual,
        complementarity=comp, tol=tol,
    )
