"""Cost oracles on product supports and their first-variable gradient.

Builtin costs carry closed-form gradients in ``x_1``. Tabulated costs are a
dense table over product indices; their gradient is a finite difference taken
on the grid formed by the ``X_1`` atoms, with the grid spacing as step.
"""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from .errors import (
    EvaluationError,
    GradientUnavailableError,
    ShapeError,
)
from .measure import DiscreteMeasure

GRID_TOL = 1e-12


def _pairwise_quadratic(xs):
    val = 0.0
    for i in range(len(xs)):
        for j in range(i + 1, len(xs)):
            val = val + np.sum((xs[i] - xs[j]) ** 2, axis=-1)
    grad = sum(2.0 * (xs[0] - xs[j]) for j in range(1, len(xs)))
    return val, grad


def _product(xs):
    fac = np.stack([x[:, 0] for x in xs])
    tail = np.prod(fac[1:], axis=0)
    return -fac[0] * tail, -tail[:, None]


def _two_level(xs):
    x, y = xs[0][:, 0], xs[1][:, 0]
    r = y ** 2 - x
    return r ** 2, (-2.0 * r)[:, None]


def _cosine(xs):
    t = 2.0 * np.pi * (xs[0] - xs[1])
    return np.sum(np.cos(t), axis=-1), -2.0 * np.pi * np.sin(t)


def _zero(xs):
    k = xs[0].shape[0]
    return np.zeros(k), np.zeros((k, xs[0].shape[1]))


# id -> (function, required n or None, requires 1-d factors)
BUILTINS = {
    "quadratic": (_pairwise_quadratic, None, False),
    "product": (_product, None, True),
    "two_level": (_two_level, 2, True),
    "cosine": (_cosine, 2, False),
    "zero": (_zero, None, False),
}


def _grid_layout(coords: np.ndarray):
    """Axis-aligned grid structure of a point cloud, or None.

    Returns the sorted axis values per coordinate and the integer grid position
    of every atom. The atoms must fill the full Cartesian product exactly once.
    """
    axes, pos = [], np.empty(coords.shape, dtype=np.int64)
    for k in range(coords.shape[1]):
        col = coords[:, k]
        vals = np.sort(col)
        merged = [vals[0]]
        for v in vals[1:]:
            if v - merged[-1] > GRID_TOL:
                merged.append(v)
        merged = np.array(merged)
        p = np.searchsorted(merged, col - GRID_TOL)
        p = np.minimum(p, merged.size - 1)
        if np.any(np.abs(merged[p] - col) > GRID_TOL):
            return None
        axes.append(merged)
        pos[:, k] = p
    if np.prod([a.size for a in axes]) != coords.shape[0]:
        return None
    lookup = np.full(tuple(a.size for a in axes), -1, dtype=np.int64)
    lookup[tuple(pos.T)] = np.arange(coords.shape[0])
    if np.any(lookup < 0):
        return None
    return axes, pos, lookup


def _stencil(axis_vals: np.ndarray, p: int, edge_order: int):
    """Offsets and weights of a finite-difference first derivative at grid slot ``p``."""
    L = axis_vals.size
    if L == 1:
        return None
    x = axis_vals
    if 0 < p < L - 1:
        h1, h2 = x[p] - x[p - 1], x[p + 1] - x[p]
        return ((-1, -h2 / (h1 * (h1 + h2))),
                (0, (h2 - h1) / (h1 * h2)),
                (1, h1 / (h2 * (h1 + h2))))
    sign = 1 if p == 0 else -1
    if L == 2 or edge_order == 1:
        h = x[p + sign] - x[p]
        return ((0, -1.0 / h), (sign, 1.0 / h))
    h1 = x[p + sign] - x[p]
    h2 = x[p + 2 * sign] - x[p + sign]
    return ((0, -(2 * h1 + h2) / (h1 * (h1 + h2))),
            (sign, (h1 + h2) / (h1 * h2)),
            (2 * sign, -h1 / (h2 * (h1 + h2))))


class CostOracle:
    """Cost ``c(x_1, ..., x_n)`` evaluated at product indices of given marginals.

    Build one with :meth:`builtin` or :meth:`tabulated`. Instances are immutable.
    """

    __slots__ = ("kind", "builtin_id", "params", "table", "n", "edge_order")

    def __init__(self, kind, builtin_id=None, params=None, table=None, n=None,
                 edge_order=2):
        if kind == "builtin":
            if builtin_id not in BUILTINS:
                raise ValueError(f"unknown builtin cost {builtin_id!r}")
            required = BUILTINS[builtin_id][1]
            if n is not None and required is not None and n != required:
                raise ShapeError(f"{builtin_id} cost needs n={required}")
            n = n if n is not None else required
            table = None
        elif kind == "tabulated":
            table = np.array(table, dtype=float)
            table.setflags(write=False)
            if table.ndim < 2:
                raise ShapeError("tabulated cost needs at least two axes")
            if not np.all(np.isfinite(table)):
                raise EvaluationError("tabulated cost has non-finite entries")
            n = table.ndim
        else:
            raise ValueError(f"unknown cost kind {kind!r}")
        if edge_order not in (1, 2):
            raise ValueError("edge_order must be 1 or 2")
        params = dict(params or {})
        for name, val in (
            ("kind", kind), ("builtin_id", builtin_id), ("params", params),
            ("table", table), ("n", n), ("edge_order", edge_order),
        ):
            object.__setattr__(self, name, val)

    def __setattr__(self, name, value):
        raise AttributeError("CostOracle is immutable")

    @classmethod
    def builtin(cls, builtin_id: str, n: int | None = None, **params):
        return cls("builtin", builtin_id=builtin_id, params=params, n=n)

    @classmethod
    def tabulated(cls, table, edge_order: int = 2):
        return cls("tabulated", table=table, edge_order=edge_order)

    @property
    def scale(self) -> float:
        return float(self.params.get("scale", 1.0))

    def __repr__(self):
        if self.kind == "builtin":
            return f"CostOracle(builtin={self.builtin_id!r}, params={self.params})"
        return f"CostOracle(tabulated, shape={self.table.shape})"

    # -- validation ---------------------------------------------------------

    def _check_spaces(self, spaces: Sequence[DiscreteMeasure]):
        n = len(spaces)
        if n < 2:
            raise ShapeError("a cost needs at least two marginals")
        if self.n is not None and n != self.n:
            raise ShapeError(f"cost expects {self.n} marginals, got {n}")
        if self.kind == "tabulated":
            sizes = tuple(m.size for m in spaces)
            if sizes != self.table.shape:
                raise ShapeError(f"table shape {self.table.shape} != marginal sizes {sizes}")
        elif BUILTINS[self.builtin_id][2] and any(m.dim != 1 for m in spaces):
            raise ShapeError(f"{self.builtin_id} cost needs one-dimensional factors")
        elif self.builtin_id in ("quadratic", "cosine"):
            if len({m.dim for m in spaces}) != 1:
                raise ShapeError("all factors must share a dimension")

    @staticmethod
    def _points(points, spaces) -> np.ndarray:
        pts = np.asarray(points, dtype=np.int64)
        if pts.ndim == 1:
            pts = pts[None, :]
        if pts.shape[1] != len(spaces):
            raise ShapeError(f"points have {pts.shape[1]} components, expected {len(spaces)}")
        sizes = np.array([m.size for m in spaces])
        if pts.size and (np.any(pts < 0) or np.any(pts >= sizes)):
            bad = pts[np.any((pts < 0) | (pts >= sizes), axis=1)][0]
            raise IndexError(f"product index {tuple(int(v) for v in bad)} out of range")
        return pts

    # -- evaluation ---------------------------------------------------------

    def _builtin(self, pts, spaces):
        func = BUILTINS[self.builtin_id][0]
        xs = [spaces[a].coords[pts[:, a]] for a in range(len(spaces))]
        with np.errstate(all="ignore"):
            val, grad = func(xs)
            val = self.scale * np.asarray(val, dtype=float)
            grad = self.scale * np.asarray(grad, dtype=float)
        if not (np.all(np.isfinite(val)) and np.all(np.isfinite(grad))):
            raise EvaluationError(f"{self.builtin_id} cost is not finite on the support")
        return val, grad

    def values(self, points, spaces) -> np.ndarray:
        """Cost at an ``(K, n)`` array of product indices."""
        self._check_spaces(spaces)
        pts = self._points(points, spaces)
        if self.kind == "tabulated":
            return self.table[tuple(pts.T)].astype(float)
        return self._builtin(pts, spaces)[0]

    def tensor(self, spaces) -> np.ndarray:
        """Dense cost tensor over the full product support."""
        self._check_spaces(spaces)
        if self.kind == "tabulated":
            return np.array(self.table)
        shape = tuple(m.size for m in spaces)
        pts = np.indices(shape).reshape(len(shape), -1).T
        return self._builtin(pts, spaces)[0].reshape(shape)

    def gradients(self, points, spaces):
        """First-variable gradients at product indices.

        Returns
        -------
        grad : ndarray, shape (K, dim X_1)
            Gradient rows; rows where ``available`` is False are NaN.
        available : ndarray of bool, shape (K,)
        """
        self._check_spaces(spaces)
        pts = self._points(points, spaces)
        if self.kind == "builtin":
            return self._builtin(pts, spaces)[1], np.ones(pts.shape[0], dtype=bool)
        return self._fd_gradients(pts, spaces)

    def _fd_gradients(self, pts, spaces):
        layout = _grid_layout(spaces[0].coords)
        if layout is None:
            raise GradientUnavailableError(
                "X_1 atoms do not form an axis-aligned grid; tabulated gradient unavailable")
        axes, pos, lookup = layout
        d = spaces[0].dim
        grad = np.full((pts.shape[0], d), np.nan)
        available = np.ones(pts.shape[0], dtype=bool)
        for r, pt in enumerate(pts):
            a, tail = pt[0], tuple(pt[1:])
            g = np.empty(d)
            for k in range(d):
                st = _stencil(axes[k], int(pos[a, k]), self.edge_order)
                if st is None:
                    available[r] = False
                    break
                acc = 0.0
                for off, w in st:
                    nb = pos[a].copy()
                    nb[k] += off
                    acc += w * self.table[(lookup[tuple(nb)],) + tail]
                g[k] = acc
            if available[r]:
                grad[r] = g
        return grad, available

    def gradient_d1(self, point, spaces) -> np.ndarray:
        grad, ok = self.gradients(np.asarray(point)[None, :], spaces)
        if not ok[0]:
            raise GradientUnavailableError(
                f"no finite-difference neighbours for x_1 at {tuple(point)}")
        return grad[0]

    def evaluate(self, point, spaces) -> float:
        return float(self.values(np.asarray(point)[None, :], spaces)[0])

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        if self.kind == "builtin":
            out = {"kind": "builtin", "id": self.builtin_id, "params": dict(self.params)}
            if self.n is not None:
                out["n"] = self.n
            return out
        return {"kind": "tabulated", "shape": list(self.table.shape),
                "values": self.table.ravel().tolist()}

    @classmethod
    def from_dict(cls, data: Mapping) -> "CostOracle":
        kind = data.get("kind")
        if kind == "builtin":
            return cls("builtin", builtin_id=data.get("id"), params=data.get("params"),
                       n=data.get("n"))
        if kind == "tabulated":
            shape = tuple(int(s) for s in data["shape"])
            values = np.asarray(data["values"], dtype=float)
            if values.size != int(np.prod(shape)):
                raise ShapeError(f"{values.size} values cannot fill shape {shape}")
            return cls("tabulated", table=values.reshape(shape),
                       edge_order=int(data.get("edge_order", 2)))
        raise ValueError(f"unknown cost kind {kind!r}")


def evaluate(oracle: CostOracle, point, spaces) -> float:
    return oracle.evaluate(point, spaces)


def gradient_d1(oracle: CostOracle, point, spaces) -> np.ndarray:
    return oracle.gradient_d1(point, spaces)


def tabulate(oracle: CostOracle, spaces) -> CostOracle:
    """Freeze ``oracle`` into a table over the product of ``spaces``."""
    return CostOracle.tabulated(oracle.tensor(spaces), edge_order=oracle.edge_order)
