"""c-splitting sets: tuples with ``sum_a u_a <= c`` and the points where equality holds."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial.distance import pdist

from .cost import CostOracle
from .errors import CertificateInvalidError, ShapeError
from .measure import DiscreteMeasure, TransportPlan
from .solver import PotentialTuple, eqtol, feastol, _check_instance, SIZE_CAP


@dataclass(frozen=True)
class TupleCheck:
    feasible: bool
    violation: float
    point: tuple
    feastol: float

    def __bool__(self):
        return self.feasible


@dataclass(frozen=True, eq=False)
class SplittingSet:
    """Product points where a feasible tuple meets the cost.

    ``slack[k] = sum_a u_a(points[k]_a) - c(points[k])``, which is ``<= 0`` up to
    ``feastol`` and within ``eqtol`` of zero for every listed point.
    """

    points: np.ndarray
    tuple: PotentialTuple
    slack: np.ndarray
    eqtol: float
    feastol: float
    marginals: tuple = ()

    def __len__(self):
        return self.points.shape[0]

    def to_dict(self) -> dict:
        return {
            "points": [{"point": [int(v) for v in p], "slack": float(s)}
                       for p, s in zip(self.points, self.slack)],
            "tuple": self.tuple.to_list(),
            "eqtol": self.eqtol,
            "feastol": self.feastol,
        }


@dataclass(frozen=True, eq=False)
class FiberReport:
    x1_index: int
    members: np.ndarray
    gradient_spread: float

    def to_dict(self) -> dict:
        return {"x1": self.x1_index, "members": self.members.tolist(),
                "gradient_spread": self.gradient_spread}


def verify_tuple(tuple_: PotentialTuple, cost: CostOracle,
                 marginals: Sequence[DiscreteMeasure], *, tol: float | None = None,
                 cap: int = SIZE_CAP) -> TupleCheck:
    """Check ``sum_a u_a(x_a) <= c(x) + feastol`` over the whole product support."""
    marginals, C = _check_instance(cost, marginals, cap)
    if tuple_.shape != C.shape:
        raise ShapeError(f"tuple shape {tuple_.shape} vs marginal sizes {C.shape}")
    tol = feastol(C) if tol is None else tol
    excess = tuple_.tensor() - C
    flat = int(np.argmax(excess))
    worst = float(excess.flat[flat])
    point = tuple(int(v) for v in np.unravel_index(flat, C.shape))
    return TupleCheck(feasible=worst <= tol, violation=worst, point=point, feastol=tol)


def extract_splitting_set(plan: TransportPlan, tuple_: PotentialTuple, cost: CostOracle,
                          mode: str = "support", *, eq_tol: float | None = None,
                          cap: int = SIZE_CAP) -> SplittingSet:
    """Equality points of a feasible tuple.

    ``mode="support"`` keeps the plan-support points that meet equality;
    ``mode="full"`` scans the whole product support and returns the splitting
    set itself, which may be larger than the support.

    Raises
    ------
    CertificateInvalidError
        The tuple violates the inequality somewhere beyond ``feastol``.
    """
    if mode not in ("support", "full"):
        raise ValueError(f"unknown mode {mode!r}")
    marginals = plan.marginals
    check = verify_tuple(tuple_, cost, marginals, cap=cap)
    if not check.feasible:
        raise CertificateInvalidError(
            f"tuple exceeds cost by {check.violation!r} at {check.point}",
            point=check.point, violation=check.violation)
    C = cost.tensor(marginals)
    tol = eqtol(C) if eq_tol is None else eq_tol
    slack_all = tuple_.tensor() - C
    if mode == "support":
        pts = plan.index
        slack = slack_all[tuple(pts.T)]
        keep = np.abs(slack) <= tol
        pts, slack = pts[keep], slack[keep]
    else:
        pts = np.argwhere(np.abs(slack_all) <= tol)
        slack = slack_all[tuple(pts.T)]
    return SplittingSet(points=np.array(pts, dtype=np.int64), tuple=tuple_,
                        slack=np.asarray(slack, dtype=float), eqtol=tol,
                        feastol=check.feastol, marginals=tuple(marginals))


def group_by_x1(points: np.ndarray) -> dict:
    """Row indices of ``points`` keyed by their first component, keys ascending."""
    groups: dict = {}
    for r, a in enumerate(points[:, 0]):
        groups.setdefault(int(a), []).append(r)
    return dict(sorted(groups.items()))


def fiber_reports(sset: SplittingSet, cost: CostOracle,
                  marginals: Sequence[DiscreteMeasure]) -> list:
    """One report per ``x_1`` atom of the set with the spread of ``D_1 c`` over its fiber."""
    if not len(sset):
        return []
    grad, ok = cost.gradients(sset.points, marginals)
    reports = []
    for a, rows in group_by_x1(sset.points).items():
        g = grad[rows][ok[rows]]
        spread = float(pdist(g).max()) if g.shape[0] > 1 else 0.0
        reports.append(FiberReport(x1_index=a, members=sset.points[rows],
                                   gradient_spread=spread))
    return reports
