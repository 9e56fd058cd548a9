"""Twist cardinality of a cost on a splitting set.

Two points of a splitting set are gradient-equivalent when they share the same
``x_1`` atom and their first-variable gradients lie within ``grouping_radius``
of each other. Proximity is not transitive, so classes are the connected
components of that relation. The largest class size is the observed twist
cardinality ``m``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .cost import CostOracle
from .measure import DiscreteMeasure
from .splitting import SplittingSet, group_by_x1


class UnionFind:
    """Disjoint sets over ``0..n-1`` with path halving and union by size."""

    def __init__(self, n):
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, x):
        parent = self.parent
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]

    def labels(self):
        return [self.find(i) for i in range(len(self.parent))]


@dataclass(frozen=True, eq=False)
class TwistReport:
    """Gradient-equivalence classes of a splitting set.

    ``points`` are the set points where ``D_1 c`` exists, ``per_point[k]`` is the
    size of the class of ``points[k]``, and ``classes`` lists each class as
    ``(x1, members)`` with members sorted lexicographically. Points without a
    gradient are left out of the classing and listed in ``excluded``.
    """

    points: np.ndarray
    per_point: np.ndarray
    classes: tuple
    m_observed: int
    grouping_radius: float
    x1_radius: float = 0.0
    excluded: np.ndarray = field(default_factory=lambda: np.empty((0, 0), dtype=np.int64))

    def class_signature(self):
        """Order-free description of the classes, for comparisons."""
        return sorted((x1, tuple(map(tuple, m.tolist()))) for x1, m in self.classes)

    def to_dict(self) -> dict:
        return {
            "m_observed": self.m_observed,
            "grouping_radius": self.grouping_radius,
            "x1_radius": self.x1_radius,
            "classes": [{"x1": x1, "members": m.tolist()} for x1, m in self.classes],
            "excluded_nondifferentiable": self.excluded.tolist(),
        }


def default_grouping_radius(grad: np.ndarray) -> float:
    norms = np.linalg.norm(grad, axis=1) if grad.size else np.zeros(1)
    return 1e-6 * (1.0 + float(norms.max()))


def _prepare(sset: SplittingSet, cost: CostOracle, marginals, grouping_radius):
    pts = np.asarray(sset.points, dtype=np.int64)
    if pts.shape[0] == 0:
        n = len(marginals)
        return pts.reshape(0, n), np.zeros((0, marginals[0].dim)), pts.reshape(0, n), \
            (1e-6 if grouping_radius is None else grouping_radius)
    # canonical order makes the report independent of input order
    order = np.lexsort(pts.T[::-1])
    pts = pts[order]
    grad, ok = cost.gradients(pts, marginals)
    excluded = pts[~ok]
    pts, grad = pts[ok], grad[ok]
    if grouping_radius is None:
        grouping_radius = default_grouping_radius(grad)
    return pts, grad, excluded, float(grouping_radius)


def _report(pts, labels, excluded, radius):
    labels = np.asarray(labels)
    classes = []
    per_point = np.zeros(pts.shape[0], dtype=np.int64)
    for lab in dict.fromkeys(labels.tolist()):
        rows = np.flatnonzero(labels == lab)
        per_point[rows] = rows.size
        classes.append((int(pts[rows[0], 0]), pts[rows]))
    classes.sort(key=lambda c: (c[0], tuple(c[1][0])))
    m = int(per_point.max()) if per_point.size else 0
    return TwistReport(points=pts, per_point=per_point, classes=tuple(classes),
                       m_observed=m, grouping_radius=radius, excluded=excluded)


def twist_cardinality(sset: SplittingSet, cost: CostOracle,
                      marginals: Sequence[DiscreteMeasure],
                      grouping_radius: float | None = None) -> TwistReport:
    """Gradient-equivalence classes, grouped per ``x_1`` fiber.

    Inside a fiber the points are swept in order of the first gradient
    coordinate, so only pairs whose first coordinates are within the radius
    are compared.
    """
    pts, grad, excluded, radius = _prepare(sset, cost, marginals, grouping_radius)
    uf = UnionFind(pts.shape[0])
    for rows in group_by_x1(pts).values():
        rows = np.asarray(rows)
        g = grad[rows]
        order = np.argsort(g[:, 0], kind="stable")
        g, rows = g[order], rows[order]
        for i in range(rows.size):
            j = i + 1
            while j < rows.size and g[j, 0] - g[i, 0] <= radius:
                if np.linalg.norm(g[j] - g[i]) <= radius:
                    uf.union(int(rows[i]), int(rows[j]))
                j += 1
    return _report(pts, uf.labels(), excluded, radius)


def twist_cardinality_bruteforce(sset: SplittingSet, cost: CostOracle,
                                 marginals: Sequence[DiscreteMeasure],
                                 grouping_radius: float | None = None) -> TwistReport:
    """Reference classing by the full pairwise scan over all ``|S|^2`` pairs."""
    pts, grad, excluded, radius = _prepare(sset, cost, marginals, grouping_radius)
    k = pts.shape[0]
    if k == 0:
        return _report(pts, [], excluded, radius)
    src, dst = [], []
    for lo in range(0, k, 512):
        blk = slice(lo, min(lo + 512, k))
        same_x1 = pts[blk, 0][:, None] == pts[:, 0][None, :]
        dist = np.linalg.norm(grad[blk, None, :] - grad[None, :, :], axis=-1)
        i, j = np.nonzero(same_x1 & (dist <= radius))
        src.append(i + lo)
        dst.append(j)
    i, j = np.concatenate(src), np.concatenate(dst)
    graph = coo_matrix((np.ones(i.size), (i, j)), shape=(k, k))
    _, comp = connected_components(graph, directed=False)
    # relabel by first occurrence so labels do not depend on scipy's numbering
    first = {}
    labels = [first.setdefault(c, len(first)) for c in comp.tolist()]
    return _report(pts, labels, excluded, radius)


def check_generalized_twist(report: TwistReport) -> bool:
    """Every class of a finite set is finite; always True for a discrete report.

    Use :func:`refinement_trend` across resolutions for the informative signal.
    """
    return all(len(m) < np.inf for _, m in report.classes)


def refinement_trend(m_values: Sequence[int]) -> str:
    """``"stable"`` if ``m`` is constant across refinements, ``"increasing"`` if strictly growing."""
    m = list(m_values)
    if all(a == m[0] for a in m):
        return "stable"
    if all(a < b for a, b in zip(m, m[1:])):
        return "increasing"
    return "mixed"


@dataclass(frozen=True, eq=False)
class AccumulationReport:
    """Clusters of same-``x_1`` points with equal gradients and nearby tails."""

    clusters: tuple
    verdict: str
    witness: tuple | None
    proximity_radius: float
    grouping_radius: float

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "witness": None if self.witness is None else [list(p) for p in self.witness],
            "clusters": [c.tolist() for c in self.clusters],
            "proximity_radius": self.proximity_radius,
            "grouping_radius": self.grouping_radius,
        }


def accumulation_scan(sset: SplittingSet, cost: CostOracle,
                      marginals: Sequence[DiscreteMeasure], proximity_radius: float,
                      grouping_radius: float | None = None) -> AccumulationReport:
    """Look for pairs that break local 1-twistedness at scale ``proximity_radius``.

    A witness is two distinct points with the same ``x_1``, gradients within
    ``grouping_radius`` and tail coordinates closer than ``proximity_radius``.
    """
    pts, grad, _, radius = _prepare(sset, cost, marginals, grouping_radius)
    tails = (np.hstack([marginals[a].coords[pts[:, a]] for a in range(1, len(marginals))])
             if pts.shape[0] else np.zeros((0, 1)))
    uf = UnionFind(pts.shape[0])
    witness = None
    for rows in group_by_x1(pts).values():
        for p, i in enumerate(rows):
            for j in rows[p + 1:]:
                if (np.linalg.norm(grad[i] - grad[j]) <= radius
                        and np.linalg.norm(tails[i] - tails[j]) < proximity_radius):
                    uf.union(i, j)
                    if witness is None:
                        witness = (tuple(int(v) for v in pts[i]),
                                   tuple(int(v) for v in pts[j]))
    labels = np.asarray(uf.labels())
    clusters = []
    for lab in dict.fromkeys(labels.tolist()):
        rows = np.flatnonzero(labels == lab)
        if rows.size > 1:
            clusters.append(pts[rows])
    verdict = "locally-1-twisted" if witness is None else "violation"
    return AccumulationReport(clusters=tuple(clusters), verdict=verdict, witness=witness,
                              proximity_radius=float(proximity_radius),
                              grouping_radius=radius)
