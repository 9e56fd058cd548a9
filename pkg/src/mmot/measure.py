"""Discrete marginals, transport plans on product supports, projection and pushforward.

Atoms are addressed by position. A product point is a tuple of atom indices, one
per marginal, and every map or plan in the toolkit refers to atoms that way.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    EmptyMeasureError,
    MeasureError,
    MissingAssignmentError,
    ShapeError,
)

WEIGHT_CULL = 1e-15
SUM_TOL = 1e-12
LOAD_SUM_TOL = 1e-9
DISTINCT_TOL = 1e-12


def _frozen(a):
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Finitely supported probability measure.

    Parameters
    ----------
    coords : array-like, shape (N, d) or (N,)
        Atom locations. A 1-d array is read as N points in dimension 1.
    weights : array-like, shape (N,)
        Nonnegative masses summing to 1 within ``tol``. Atoms whose normalized
        weight falls below 1e-15 are dropped and the rest renormalized.
    tol : float
        Accepted deviation of the raw weight total from 1.
    """

    coords: np.ndarray
    weights: np.ndarray
    tol: float = field(default=LOAD_SUM_TOL, repr=False)

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float)
        if coords.ndim == 1:
            coords = coords[:, None]
        weights = np.asarray(self.weights, dtype=float).ravel()
        if coords.ndim != 2 or coords.shape[0] != weights.shape[0]:
            raise ShapeError(
                f"coords {coords.shape} do not match weights {weights.shape}")
        if weights.size == 0:
            raise EmptyMeasureError("measure has no atoms")
        if not (np.all(np.isfinite(weights)) and np.all(np.isfinite(coords))):
            raise MeasureError("non-finite coordinates or weights")
        if np.any(weights < 0):
            raise MeasureError("negative weight")
        total = weights.sum()
        if abs(total - 1.0) > self.tol:
            raise MeasureError(f"weights sum to {total!r}, expected 1")
        keep = weights / total >= WEIGHT_CULL
        if not keep.any():
            raise EmptyMeasureError("all atoms culled")
        coords, weights = coords[keep], weights[keep]
        # weights already normalized within SUM_TOL are kept bit-for-bit
        if not keep.all() or abs(weights.sum() - 1.0) > SUM_TOL:
            weights = weights / weights.sum()
        if weights.size > 1:
            pairs = cKDTree(coords).query_pairs(DISTINCT_TOL, p=np.inf)
            if pairs:
                i, j = min(pairs)
                raise MeasureError(f"atoms {i} and {j} coincide")
        object.__setattr__(self, "coords", _frozen(coords))
        object.__setattr__(self, "weights", _frozen(weights))

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.coords.shape[1]

    def __len__(self):
        return self.size

    def __eq__(self, other):
        if not isinstance(other, DiscreteMeasure):
            return NotImplemented
        return (self.coords.shape == other.coords.shape
                and np.array_equal(self.coords, other.coords)
                and np.array_equal(self.weights, other.weights))

    __hash__ = object.__hash__

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "atoms": [{"coords": c.tolist(), "weight": float(w)}
                      for c, w in zip(self.coords, self.weights)],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "DiscreteMeasure":
        try:
            dim = int(data["dim"])
            atoms = data["atoms"]
            coords = [list(map(float, a["coords"])) for a in atoms]
            weights = [float(a["weight"]) for a in atoms]
        except (KeyError, TypeError, ValueError) as exc:
            raise MeasureError(f"malformed measure record: {exc}") from exc
        if not atoms:
            raise EmptyMeasureError("measure has no atoms")
        if any(len(c) != dim for c in coords):
            raise ShapeError(f"atom coordinates must have length {dim}")
        return cls(np.array(coords).reshape(len(atoms), dim), weights,
                   tol=LOAD_SUM_TOL)


def dirac(coords) -> DiscreteMeasure:
    return DiscreteMeasure(np.atleast_2d(np.asarray(coords, dtype=float)), [1.0])


def _weights(rng, size, kind):
    if kind == "uniform":
        return np.full(size, 1.0 / size)
    if kind == "random":
        # bounded ratio keeps every atom well above the cull threshold
        w = rng.uniform(0.5, 1.5, size)
        return w / w.sum()
    raise ValueError(f"unknown weight mode {kind!r}")


def random_measure(size: int, dim: int = 1, seed: int = 0,
                   weights: str = "uniform") -> DiscreteMeasure:
    """Sample ``size`` atoms uniformly in the unit box ``[0, 1]^dim``.

    ``weights="random"`` draws weights in [0.5, 1.5] before normalizing, which
    breaks ties between atoms. Same seed, same measure.
    """
    if size < 1:
        raise EmptyMeasureError("size must be at least 1")
    rng = np.random.default_rng(seed)
    coords = rng.random((size, dim))
    return DiscreteMeasure(coords, _weights(rng, size, weights))


def grid_measure(size: int, seed: int = 0, weights: str = "uniform",
                 lo: float = 0.0, hi: float = 1.0) -> DiscreteMeasure:
    """Midpoint grid of ``size`` atoms on ``[lo, hi]`` (1-d)."""
    if size < 1:
        raise EmptyMeasureError("size must be at least 1")
    rng = np.random.default_rng(seed)
    coords = lo + (hi - lo) * (np.arange(size) + 0.5) / size
    return DiscreteMeasure(coords[:, None], _weights(rng, size, weights))


def total_variation(p, q) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


class TransportPlan:
    """Sparse nonnegative mass on the product of the marginals' supports.

    Entries are stored as an ``(K, n)`` integer index array and a ``(K,)`` mass
    array, sorted lexicographically by index with duplicates summed and
    nonpositive masses removed. ``marginals`` supplies the atom coordinates of
    every axis and the nominal marginals the plan is meant to respect.
    """

    __slots__ = ("index", "mass", "marginals")

    def __init__(self, index, mass, marginals: Sequence[DiscreteMeasure]):
        marginals = tuple(marginals)
        n = len(marginals)
        index = np.asarray(index, dtype=np.int64).reshape(-1, n) if n else None
        mass = np.asarray(mass, dtype=float).ravel()
        if n < 1:
            raise ShapeError("a plan needs at least one axis")
        if index.shape[0] != mass.shape[0]:
            raise ShapeError("index and mass lengths differ")
        sizes = np.array([m.size for m in marginals])
        if index.size and (np.any(index < 0) or np.any(index >= sizes)):
            bad = index[np.any((index < 0) | (index >= sizes), axis=1)][0]
            raise IndexError(f"product index {tuple(bad)} out of range {tuple(sizes)}")
        if not np.all(np.isfinite(mass)):
            raise ShapeError("non-finite mass")
        if index.shape[0]:
            order = np.lexsort(index.T[::-1])
            index, mass = index[order], mass[order]
            new = np.ones(index.shape[0], dtype=bool)
            new[1:] = np.any(index[1:] != index[:-1], axis=1)
            starts = np.flatnonzero(new)
            mass = np.add.reduceat(mass, starts)
            index = index[starts]
            keep = mass > 0
            index, mass = index[keep], mass[keep]
        object.__setattr__(self, "index", _frozen(index))
        object.__setattr__(self, "mass", _frozen(mass))
        object.__setattr__(self, "marginals", marginals)

    def __setattr__(self, name, value):
        raise AttributeError("TransportPlan is immutable")

    @classmethod
    def from_dense(cls, tensor, marginals, threshold: float = 0.0):
        tensor = np.asarray(tensor, dtype=float)
        idx = np.argwhere(tensor > threshold)
        return cls(idx, tensor[tuple(idx.T)], marginals)

    @classmethod
    def from_entries(cls, entries: Mapping, marginals):
        keys = list(entries)
        return cls(np.array(keys, dtype=np.int64).reshape(len(keys), len(marginals)),
                   [entries[k] for k in keys], marginals)

    @property
    def n(self) -> int:
        return len(self.marginals)

    @property
    def shape(self) -> tuple:
        return tuple(m.size for m in self.marginals)

    @property
    def nnz(self) -> int:
        return self.mass.shape[0]

    def entries(self) -> dict:
        return {tuple(int(v) for v in i): float(m) for i, m in zip(self.index, self.mass)}

    def todense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        np.add.at(out, tuple(self.index.T), self.mass)
        return out

    def marginal_weights(self, axis: int) -> np.ndarray:
        """Dense axis-marginal aligned with the atoms of ``marginals[axis]`` (0-based)."""
        return np.bincount(self.index[:, axis], weights=self.mass,
                           minlength=self.shape[axis])

    def marginal_error(self) -> float:
        """Largest total-variation gap between a projection and its nominal marginal."""
        return max(total_variation(self.marginal_weights(a), m.weights)
                   for a, m in enumerate(self.marginals))

    def is_feasible(self, tol: float = 1e-9) -> bool:
        return self.marginal_error() <= tol

    def cost(self, table: np.ndarray) -> float:
        """Integral of a dense cost tensor against the plan."""
        return float(np.dot(table[tuple(self.index.T)], self.mass))

    def __eq__(self, other):
        if not isinstance(other, TransportPlan):
            return NotImplemented
        return (np.array_equal(self.index, other.index)
                and np.array_equal(self.mass, other.mass))

    __hash__ = object.__hash__

    def __repr__(self):
        return f"TransportPlan(shape={self.shape}, nnz={self.nnz})"

    def to_csv(self) -> str:
        head = ",".join(f"i{a + 1}" for a in range(self.n)) + ",mass"
        rows = [",".join(str(int(v)) for v in i) + f",{float(m)!r}"
                for i, m in zip(self.index, self.mass)]
        return "\n".join([head, *rows]) + "\n"


def project(plan: TransportPlan, axis: int) -> DiscreteMeasure:
    """Marginal of ``plan`` on ``axis`` (1-based, as in ``x_1, ..., x_n``).

    Atoms carrying no mass are dropped from the returned measure, so its
    positions follow the surviving atoms of the axis space in order.
    """
    if not 1 <= axis <= plan.n:
        raise IndexError(f"axis {axis} outside 1..{plan.n}")
    w = plan.marginal_weights(axis - 1)
    space = plan.marginals[axis - 1]
    keep = w > 0
    return DiscreteMeasure(space.coords[keep], w[keep])


def _tail_table(mapping, size: int, width: int) -> np.ndarray:
    table = np.empty((size, width), dtype=np.int64)
    for j in range(size):
        try:
            tail = mapping[j]
        except (KeyError, IndexError):
            tail = None
        if tail is None:
            raise MissingAssignmentError(f"map undefined on atom {j}")
        tail = np.atleast_1d(np.asarray(tail, dtype=np.int64))
        if tail.shape != (width,):
            raise ShapeError(f"tail for atom {j} has length {tail.size}, expected {width}")
        table[j] = tail
    return table


def pushforward(measure: DiscreteMeasure, mapping,
                spaces: Sequence[DiscreteMeasure]) -> TransportPlan:
    """The plan ``(Id x G)# measure``: atom ``j`` sends all its mass to ``(j, G(j))``.

    ``mapping`` is a dict or sequence taking each atom index of ``measure`` to a
    tail of ``len(spaces)`` atom indices, one into each space in ``spaces``.
    """
    spaces = tuple(spaces)
    table = _tail_table(mapping, measure.size, len(spaces))
    index = np.column_stack([np.arange(measure.size), table])
    return TransportPlan(index, measure.weights, (measure, *spaces))
