"""Exact and entropic solvers for the discrete multi-marginal transport LP.

The exact path is a revised simplex method on the flattened product tensor::

    min  sum_x c(x) pi(x)
    s.t. sum_{x : x_a = j} pi(x) = mu_a(j)   for every axis a and atom j
         pi >= 0

The marginal rows carry ``n - 1`` redundancies (every marginal has total 1).
The row of atom 0 is dropped on axes ``2..n``; its potential is reported as 0.
The multipliers of the remaining rows are the Kantorovich potentials.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .cost import CostOracle
from .errors import (
    CertificateInvalidError,
    InstanceTooLargeError,
    ShapeError,
    SolverFailureError,
)
from .measure import DiscreteMeasure, TransportPlan

SIZE_CAP = 10 ** 6
BLAND_AFTER = 50
REFACTOR_EVERY = 64
PIVOT_TOL = 1e-11
RATIO_TIE = 1e-14
# basic values at or below this are roundoff on degenerate vertices
ZERO_MASS = 1e-14


def feastol(cost_tensor) -> float:
    return 1e-9 * (1.0 + float(np.max(np.abs(cost_tensor))))


def eqtol(cost_tensor) -> float:
    return 1e-8 * (1.0 + float(np.max(np.abs(cost_tensor))))


@dataclass(frozen=True, eq=False)
class PotentialTuple:
    """One potential vector per marginal, ``values[a][j] = u_a(atom j)``."""

    values: tuple

    def __post_init__(self):
        vals = []
        for v in self.values:
            v = np.array(v, dtype=float).ravel()
            v.setflags(write=False)
            vals.append(v)
        object.__setattr__(self, "values", tuple(vals))

    @property
    def n(self) -> int:
        return len(self.values)

    @property
    def shape(self) -> tuple:
        return tuple(v.size for v in self.values)

    def tensor(self) -> np.ndarray:
        """``sum_a u_a(x_a)`` over the full product grid."""
        n = self.n
        out = np.zeros(self.shape)
        for a, v in enumerate(self.values):
            out = out + v.reshape((1,) * a + (-1,) + (1,) * (n - a - 1))
        return out

    def at(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.int64).reshape(-1, self.n)
        return sum(v[pts[:, a]] for a, v in enumerate(self.values))

    def dual_value(self, marginals: Sequence[DiscreteMeasure]) -> float:
        return float(sum(np.dot(v, m.weights) for v, m in zip(self.values, marginals)))

    def shifted(self, axis: int, delta: float) -> "PotentialTuple":
        vals = list(self.values)
        vals[axis] = vals[axis] + delta
        return PotentialTuple(tuple(vals))

    def to_list(self) -> list:
        return [v.tolist() for v in self.values]


@dataclass(frozen=True)
class SolveCertificate:
    primal_value: float
    dual_value: float
    gap: float
    iterations: int
    vertex: bool = True

    def to_dict(self) -> dict:
        return {"primal": self.primal_value, "dual": self.dual_value, "gap": self.gap,
                "iterations": self.iterations, "vertex": self.vertex}


def _check_instance(cost: CostOracle, marginals, cap):
    marginals = tuple(marginals)
    if len(marginals) < 2:
        raise ShapeError("need at least two marginals")
    total = int(np.prod([m.size for m in marginals], dtype=object))
    if total > cap:
        raise InstanceTooLargeError(f"product support {total} exceeds cap {cap}")
    return marginals, cost.tensor(marginals)


class _RowMap:
    """Row numbering of the reduced constraint system."""

    def __init__(self, sizes):
        self.sizes = sizes
        self.rows = []
        r = 0
        for a, s in enumerate(sizes):
            row = np.full(s, -1, dtype=np.int64)
            start = 0 if a == 0 else 1
            row[start:] = np.arange(r, r + s - start)
            r += s - start
            self.rows.append(row)
        self.m = r

    def column(self, multi):
        return [int(self.rows[a][j]) for a, j in enumerate(multi) if self.rows[a][j] >= 0]

    def rhs(self, marginals):
        b = np.empty(self.m)
        for a, mu in enumerate(marginals):
            ok = self.rows[a] >= 0
            b[self.rows[a][ok]] = mu.weights[ok]
        return b

    def potentials(self, y):
        return tuple(np.where(row >= 0, y[np.maximum(row, 0)], 0.0) for row in self.rows)


def greedy_initial_plan(marginals: Sequence[DiscreteMeasure]):
    """North-west-corner filling generalized to ``n`` axes.

    Walks a monotone staircase through the product grid. Each step places the
    smallest residual mass among the current atoms, then advances exactly one
    axis (the exhausted one with the least residual, lowest axis on ties) so the
    staircase has ``sum_a |supp mu_a| - n + 1`` cells and forms a basis.

    Returns the staircase cells (``(m, n)`` ints) and the masses placed there.
    """
    sizes = [m.size for m in marginals]
    n = len(sizes)
    resid = [np.array(m.weights, dtype=float) for m in marginals]
    ptr = [0] * n
    cells, masses = [], []
    while True:
        cur = [resid[a][ptr[a]] for a in range(n)]
        q = max(min(cur), 0.0)
        cells.append(tuple(ptr))
        masses.append(q)
        for a in range(n):
            resid[a][ptr[a]] -= q
        movable = [a for a in range(n) if ptr[a] < sizes[a] - 1]
        if not movable:
            break
        adv = min(movable, key=lambda a: (resid[a][ptr[a]], a))
        ptr[adv] += 1
    return np.array(cells, dtype=np.int64), np.array(masses)


def solve_exact(cost: CostOracle, marginals: Sequence[DiscreteMeasure], *,
                max_iter: int = 200_000, cap: int = SIZE_CAP,
                bland_after: int = BLAND_AFTER):
    """Optimal vertex plan, optimal potentials and a duality certificate.

    Pricing is Dantzig's rule (most negative reduced cost, lowest index on
    ties); after ``bland_after`` consecutive degenerate pivots it switches to
    Bland's rule until the objective moves again. Ties in the ratio test go to
    the basic variable with the smallest flat index.

    Raises
    ------
    InstanceTooLargeError
        The product support exceeds ``cap``.
    SolverFailureError
        ``max_iter`` pivots without reaching optimality (cycling guard).
    """
    marginals, C = _check_instance(cost, marginals, cap)
    sizes = C.shape
    c_flat = C.ravel()
    rows = _RowMap(sizes)
    m = rows.m
    b = rows.rhs(marginals)
    opt_tol = 1e-11 * (1.0 + float(np.max(np.abs(C))))

    cells, _ = greedy_initial_plan(marginals)
    basis = np.ravel_multi_index(tuple(cells.T), sizes).astype(np.int64)

    def column(j):
        return rows.column(np.unravel_index(int(j), sizes))

    def factor():
        B = np.zeros((m, m))
        for k, j in enumerate(basis):
            B[column(j), k] = 1.0
        return np.linalg.inv(B)

    Binv = factor()
    x = Binv @ b
    degenerate_run = 0
    it = 0
    while True:
        y = c_flat[basis] @ Binv
        pots = rows.potentials(y)
        reduced = (C - PotentialTuple(pots).tensor()).ravel()
        if degenerate_run >= bland_after:
            cand = np.flatnonzero(reduced < -opt_tol)
            q = int(cand[0]) if cand.size else -1
        else:
            q = int(np.argmin(reduced))
            if reduced[q] >= -opt_tol:
                q = -1
        if q < 0:
            break
        if it >= max_iter:
            raise SolverFailureError(
                f"no optimal basis after {it} pivots",
                dump={"basis": basis.tolist(), "x": x.tolist(),
                      "objective": float(c_flat[basis] @ x),
                      "entering": q, "reduced": float(reduced[q])})
        w = Binv[:, column(q)].sum(axis=1)
        pos = w > PIVOT_TOL
        if not pos.any():
            raise SolverFailureError(
                "unbounded direction on a bounded polytope (numerical breakdown)",
                dump={"basis": basis.tolist(), "x": x.tolist(), "entering": q})
        ratios = np.full(m, np.inf)
        ratios[pos] = np.maximum(x[pos], 0.0) / w[pos]
        theta = ratios.min()
        ties = np.flatnonzero(ratios <= theta + RATIO_TIE)
        r = int(ties[np.argmin(basis[ties])])
        theta = ratios[r]

        x = x - theta * w
        x[r] = theta
        piv = Binv[r] / w[r]
        Binv = Binv - np.outer(w, piv)
        Binv[r] = piv
        basis[r] = q
        it += 1
        degenerate_run = degenerate_run + 1 if theta <= RATIO_TIE else 0
        if it % REFACTOR_EVERY == 0:
            Binv = factor()
            x = Binv @ b

    Binv = factor()
    x = Binv @ b
    y = c_flat[basis] @ Binv
    potentials = PotentialTuple(rows.potentials(y))

    keep = x > ZERO_MASS
    index = np.column_stack(np.unravel_index(basis[keep], sizes))
    plan = TransportPlan(index, x[keep], marginals)
    primal = plan.cost(C)
    dual = potentials.dual_value(marginals)
    cert = SolveCertificate(primal_value=primal, dual_value=dual, gap=primal - dual,
                            iterations=it, vertex=True)
    return plan, potentials, cert


def duality_gap(plan: TransportPlan, potentials: PotentialTuple, cost: CostOracle) -> float:
    """``I_c(plan) - sum_a <u_a, mu_a>`` after checking the potentials are feasible.

    Raises
    ------
    CertificateInvalidError
        ``sum_a u_a(x_a) > c(x) + feastol`` somewhere; the worst point is named.
    """
    C = cost.tensor(plan.marginals)
    if potentials.shape != C.shape:
        raise ShapeError(f"potentials {potentials.shape} vs cost {C.shape}")
    excess = potentials.tensor() - C
    worst = np.unravel_index(int(np.argmax(excess)), C.shape)
    if excess[worst] > feastol(C):
        point = tuple(int(v) for v in worst)
        raise CertificateInvalidError(
            f"potentials exceed cost by {float(excess[worst])!r} at {point}",
            point=point, violation=float(excess[worst]))
    return plan.cost(C) - potentials.dual_value(plan.marginals)


@dataclass(frozen=True)
class EntropicResult:
    """Output of :func:`solve_entropic`.

    ``plan`` is exactly feasible after rounding. ``converged`` is False when the
    scaling loop hit ``max_iter`` first; a warning is emitted in that case too.
    ``marginal_error`` is the largest total-variation error before rounding.
    """

    plan: TransportPlan
    objective: float
    converged: bool
    iterations: int
    marginal_error: float

    def to_dict(self) -> dict:
        return {"objective": self.objective, "converged": self.converged,
                "iterations": self.iterations, "marginal_error": self.marginal_error}


def _axis_marginal(P, a):
    other = tuple(b for b in range(P.ndim) if b != a)
    return P.sum(axis=other)


def _expand(v, a, n):
    return v.reshape((1,) * a + (-1,) + (1,) * (n - a - 1))


def round_to_feasible(P: np.ndarray, marginals: Sequence[DiscreteMeasure]) -> np.ndarray:
    """Project a nonnegative tensor onto the transport polytope.

    Scale every axis down so no marginal exceeds its target, then add the
    product of the per-axis deficits normalized by the missing mass.
    """
    P = np.array(P, dtype=float)
    n = P.ndim
    for a, mu in enumerate(marginals):
        r = _axis_marginal(P, a)
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(r > 0, np.minimum(1.0, mu.weights / r), 1.0)
        P *= _expand(s, a, n)
    deficits = [np.maximum(mu.weights - _axis_marginal(P, a), 0.0)
                for a, mu in enumerate(marginals)]
    missing = 1.0 - P.sum()
    if missing > 0:
        corr = np.ones(())
        for a, e in enumerate(deficits):
            corr = corr * _expand(e, a, n)
        P += corr / missing ** (n - 1)
    return P


def solve_entropic(cost: CostOracle, marginals: Sequence[DiscreteMeasure],
                   epsilon: float, max_iter: int = 10_000, tol: float = 1e-10,
                   cap: int = SIZE_CAP) -> EntropicResult:
    """Entropy-regularized plan via log-domain multi-marginal Sinkhorn scaling."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    marginals, C = _check_instance(cost, marginals, cap)
    n = C.ndim
    logK = -C / epsilon
    logmu = [np.log(mu.weights) for mu in marginals]
    f = [np.zeros(s) for s in C.shape]

    def log_plan():
        out = logK
        for a in range(n):
            out = out + _expand(f[a], a, n)
        return out

    converged = False
    it = 0
    err = np.inf
    while it < max_iter:
        for a in range(n):
            f[a] = np.zeros_like(f[a])
            other = tuple(b for b in range(n) if b != a)
            f[a] = logmu[a] - logsumexp(log_plan(), axis=other)
        it += 1
        P = np.exp(log_plan())
        err = max(0.5 * np.abs(_axis_marginal(P, a) - mu.weights).sum()
                  for a, mu in enumerate(marginals))
        if err <= tol:
            converged = True
            break
    if not converged:
        warnings.warn(f"entropic scaling did not converge in {max_iter} sweeps "
                      f"(marginal error {err:.3g})", RuntimeWarning, stacklevel=2)
    P = round_to_feasible(np.exp(log_plan()), marginals)
    plan = TransportPlan.from_dense(P, marginals)
    return EntropicResult(plan=plan, objective=plan.cost(C), converged=converged,
                          iterations=it, marginal_error=float(err))
