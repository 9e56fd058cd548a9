"""Seeded instance families with known structure."""

from __future__ import annotations

import numpy as np

from .errors import EmptyMeasureError
from .measure import DiscreteMeasure, TransportPlan


def _stratified(rng, size, lo=0.0, hi=1.0, jitter=(0.1, 0.9)):
    u = rng.uniform(*jitter, size)
    return lo + (hi - lo) * (np.arange(size) + u) / size


def _random_weights(rng, size):
    w = rng.uniform(0.5, 1.5, size)
    return w / w.sum()


def monotone_pushforward(size: int, seed: int = 0, target_size: int | None = None):
    """``(mu_1, mu_2)`` on the line with ``mu_2`` a monotone image of ``mu_1``.

    ``mu_1`` has ``size`` atoms with random weights. Its sorted atoms are cut
    into ``target_size`` consecutive blocks (default ``size // 2``) and each
    block lands on one atom of ``mu_2``. Under a strictly convex cost of
    ``x - y`` the unique optimal plan is that block map, so every fiber has a
    single tail.
    """
    if size < 1:
        raise EmptyMeasureError("size must be at least 1")
    rng = np.random.default_rng(seed)
    m = target_size if target_size is not None else max(1, size // 2)
    m = min(m, size)
    x = _stratified(rng, size)
    w = _random_weights(rng, size)
    cuts = np.sort(rng.choice(np.arange(1, size), m - 1, replace=False)) if m > 1 else []
    block_mass = np.add.reduceat(w, np.concatenate([[0], cuts]).astype(np.int64))
    y = _stratified(rng, m)
    return DiscreteMeasure(x[:, None], w), DiscreteMeasure(y[:, None], block_mass)


def two_level_symmetric(size: int, seed: int = 0):
    """``(mu_1, mu_2)`` built for the cost ``(x_2^2 - x_1)^2``.

    ``mu_2`` sits on ``size`` symmetric pairs ``+-y_k`` with random weights and
    ``mu_1`` on ``x_k = y_k^2`` carrying the mass of both ``+-y_k``. The zero-cost
    plan is forced to send ``x_k`` to both ``+y_k`` and ``-y_k``.
    """
    if size < 1:
        raise EmptyMeasureError("size must be at least 1")
    rng = np.random.default_rng(seed)
    y = _stratified(rng, size, lo=0.1, hi=1.0, jitter=(0.25, 0.75))
    w = _random_weights(rng, 2 * size)
    w_neg, w_pos = w[:size], w[size:]  # masses of -y_k and +y_k
    coords2 = np.concatenate([-y[::-1], y])
    mu2 = DiscreteMeasure(coords2[:, None], np.concatenate([w_neg[::-1], w_pos]))
    mu1 = DiscreteMeasure((y ** 2)[:, None], w_neg + w_pos)
    return mu1, mu2


FAMILIES = {
    "monotone_pushforward": monotone_pushforward,
    "two_level_symmetric": two_level_symmetric,
}


def random_feasible_plan(sizes, seed: int = 0, density: float = 0.4) -> TransportPlan:
    """A random sparse plan together with the marginals it induces.

    Every atom of every axis receives mass, so the marginals are fully supported.
    """
    rng = np.random.default_rng(seed)
    sizes = tuple(int(s) for s in sizes)
    mask = rng.random(sizes) < density
    for t in range(max(sizes)):
        mask[tuple(t % s for s in sizes)] = True
    index = np.argwhere(mask)
    mass = rng.uniform(0.1, 1.0, index.shape[0])
    mass /= mass.sum()
    marginals = []
    for a, s in enumerate(sizes):
        w = np.bincount(index[:, a], weights=mass, minlength=s)
        marginals.append(DiscreteMeasure(rng.random((s, 1)), w))
    return TransportPlan(index, mass, marginals)
