"""Peeling a plan into a weighted union of graphs of maps.

For each ``x_1`` atom the fiber of the plan is listed by decreasing mass, ties
broken by the lexicographic order of the tail. Map ``G_i`` takes every atom to
its ``i``-th fiber tail and ``alpha_i`` is that tail's share of the fiber mass.
Atoms with fewer than ``i`` tails are padded with ``G_i = G_1`` and
``alpha_i = 0``. The atoms that still have an ``i``-th tail form ``B_i``, giving
``B_1 ⊇ B_2 ⊇ ...``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InfeasiblePlanError, KCapExceededError, ShapeError
from .measure import DiscreteMeasure, TransportPlan
from .twist import TwistReport

K_CAP = 64


@dataclass(frozen=True, eq=False)
class MongeDecomposition:
    """``k`` maps with weights; ``maps[i, x]`` is the tail of ``G_{i+1}(x)``."""

    k: int
    maps: np.ndarray  # (k, |X_1|, n - 1)
    alphas: np.ndarray  # (k, |X_1|)
    tail_spaces: tuple = ()

    def to_dict(self) -> dict:
        return {"k": self.k, "maps": self.maps.tolist(), "alphas": self.alphas.tolist()}


@dataclass(frozen=True, eq=False)
class PeelingTrace:
    B_sets: tuple
    masses: np.ndarray

    def to_dict(self) -> dict:
        return {"B": [b.tolist() for b in self.B_sets], "masses": self.masses.tolist()}


@dataclass(frozen=True)
class KBoundVerdict:
    verdict: str
    k: int
    m_observed: int
    witness: dict | None = None

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "k": self.k, "m_observed": self.m_observed,
                "witness": self.witness}


def peel(plan: TransportPlan, k_cap: int = K_CAP):
    """Decompose ``plan`` as ``sum_i alpha_i (Id x G_i)# mu_1``.

    ``mu_1`` is the nominal first marginal of the plan. Works for any
    feasible plan, optimal or not.

    Raises
    ------
    InfeasiblePlanError
        An atom of ``mu_1`` carries no plan mass.
    KCapExceededError
        Some fiber has more than ``k_cap`` tails.
    """
    mu1 = plan.marginals[0]
    N = mu1.size
    idx, mass = plan.index, plan.mass
    # fiber order: atom asc, mass desc, tail lexicographic asc
    keys = [idx[:, a] for a in range(plan.n - 1, 0, -1)] + [-mass, idx[:, 0]]
    order = np.lexsort(keys)
    idx, mass = idx[order], mass[order]
    counts = np.bincount(idx[:, 0], minlength=N)
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        raise InfeasiblePlanError(f"atom {int(empty[0])} of mu_1 has no plan mass")
    k = int(counts.max())
    if k > k_cap:
        raise KCapExceededError(f"fiber with {k} tails exceeds cap {k_cap}")
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    rank = np.arange(idx.shape[0]) - np.repeat(starts, counts)
    fiber_total = np.add.reduceat(mass, starts)

    maps = np.empty((k, N, plan.n - 1), dtype=np.int64)
    alphas = np.zeros((k, N))
    maps[:] = idx[starts, 1:][None, :, :]
    maps[rank, idx[:, 0]] = idx[:, 1:]
    alphas[rank, idx[:, 0]] = mass / fiber_total[idx[:, 0]]

    B_sets = tuple(np.flatnonzero(counts > i) for i in range(k))
    masses = np.array([float(mu1.weights[b].sum()) for b in B_sets])
    dec = MongeDecomposition(k=k, maps=maps, alphas=alphas,
                             tail_spaces=tuple(plan.marginals[1:]))
    return dec, PeelingTrace(B_sets=B_sets, masses=masses)


def reconstruct(dec: MongeDecomposition, mu1: DiscreteMeasure) -> TransportPlan:
    """The plan ``sum_i alpha_i(x) mu_1(x)`` placed at ``(x, G_i(x))``.

    Entries landing on the same product index are summed; padded terms carry
    ``alpha_i = 0`` and add nothing.
    """
    k, N = dec.alphas.shape
    tail_n = dec.maps.shape[2]
    if dec.maps.shape[:2] != (k, N) or N != mu1.size:
        raise ShapeError("decomposition does not match mu_1")
    if len(dec.tail_spaces) != tail_n:
        raise ShapeError(f"need {tail_n} tail spaces, got {len(dec.tail_spaces)}")
    atoms = np.tile(np.arange(N), k)
    index = np.column_stack([atoms, dec.maps.reshape(k * N, tail_n)])
    mass = (dec.alphas * mu1.weights[None, :]).ravel()
    return TransportPlan(index, mass, (mu1, *dec.tail_spaces))


def verify_k_bound(dec: MongeDecomposition, twist: TwistReport) -> KBoundVerdict:
    """``consistent`` when ``k <= m_observed``, otherwise name an offending atom."""
    if dec.k <= twist.m_observed:
        return KBoundVerdict("consistent", dec.k, twist.m_observed)
    fiber_counts = (dec.alphas > 0).sum(axis=0)
    best_class = {}
    for x1, members in twist.classes:
        best_class[x1] = max(best_class.get(x1, 0), len(members))
    witness = None
    for atom in np.argsort(-fiber_counts, kind="stable"):
        atom = int(atom)
        if fiber_counts[atom] > best_class.get(atom, 0):
            witness = {
                "x1": atom,
                "fiber_count": int(fiber_counts[atom]),
                "max_class_size": best_class.get(atom, 0),
                "tails": dec.maps[:int(fiber_counts[atom]), atom].tolist(),
                "alphas": dec.alphas[:int(fiber_counts[atom]), atom].tolist(),
            }
            break
    return KBoundVerdict("inconsistent", dec.k, twist.m_observed, witness)
