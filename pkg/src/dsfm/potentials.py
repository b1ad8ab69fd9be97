"""Image-segmentation potentials and their specialized quadratic oracles.

Every oracle solves ``min_{y in B(f)} ||y + w||^2`` for a weight vector ``w``
on the potential's support.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .core import InputError, SubmodularPotential

# local edges of a 2x2 square with ids ordered (top-left, top-right, bottom-left, bottom-right)
SQUARE_EDGES = ((0, 1), (2, 3), (0, 2), (1, 3))


class UnaryPotential(SubmodularPotential):
    """Labeling cost of one pixel: ``cost1`` if selected, ``cost0`` otherwise."""

    kind = "unary"
    has_quad_oracle = True

    def __init__(self, element: int, cost0: float = 0.0, cost1: float = 0.0):
        self.cost0 = float(cost0)
        self.cost1 = float(cost1)
        super().__init__([element])

    @property
    def delta(self) -> float:
        return self.cost1 - self.cost0

    def _raw(self, masks):
        return np.where(masks[:, 0], self.cost1, self.cost0)

    def quad_oracle(self, w):
        return np.array([self.delta])


oracle_unary = UnaryPotential.quad_oracle


class EdgeCutPotential(SubmodularPotential):
    """Cut function of a single edge of weight ``a``."""

    kind = "edge-cut"
    has_quad_oracle = True

    def __init__(self, u: int, v: int, weight: float):
        if weight < 0:
            raise InputError("edge weight must be non-negative")
        self.weight = float(weight)
        super().__init__([u, v])

    def _raw(self, masks):
        return self.weight * (masks[:, 0] != masks[:, 1])

    def quad_oracle(self, w):
        a = self.weight
        t = min(max((w[1] - w[0]) / 2.0, -a), a)
        return np.array([t, -t])


oracle_edge_cut = EdgeCutPotential.quad_oracle


class SquarePotential(SubmodularPotential):
    """``scale * sqrt(#square edges whose endpoints get different labels)``."""

    kind = "square"
    has_quad_oracle = True

    def __init__(self, ids: Sequence[int], scale: float = 1.0):
        if len(ids) != 4:
            raise InputError("square potential needs exactly 4 pixels")
        if scale < 0:
            raise InputError("square scale must be non-negative")
        self.scale = float(scale)
        super().__init__(ids)

    def _raw(self, masks):
        cut = sum((masks[:, a] != masks[:, b]).astype(float) for a, b in SQUARE_EDGES)
        return self.scale * np.sqrt(cut)

    def quad_oracle(self, w):
        from .level0 import quad_oracle_from_sfm

        return quad_oracle_from_sfm(self, w)


oracle_square = SquarePotential.quad_oracle


def pool_adjacent_violators(y: np.ndarray) -> np.ndarray:
    """Least-squares fit of a non-increasing sequence to ``y``."""
    y = np.asarray(y, dtype=float)
    means: list[float] = []
    counts: list[int] = []
    for value in y:
        m, c = float(value), 1
        while means and means[-1] < m:
            pm, pc = means.pop(), counts.pop()
            m = (pm * pc + m * c) / (pc + c)
            c += pc
        means.append(m)
        counts.append(c)
    return np.repeat(means, counts)


def cardinality_oracle(increments: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Quadratic oracle for ``f(S) = g(|S|)`` with ``g`` concave.

    ``increments[k] = g(k+1) - g(k)`` (non-increasing).  With the target ``-w``
    sorted in decreasing order, the sorted optimum is
    ``target - pav(target - increments)``.
    """
    target = -np.asarray(w, dtype=float)
    order = np.lexsort((np.arange(target.size), -target))
    t = target[order]
    y = np.empty_like(target)
    y[order] = t - pool_adjacent_violators(t - increments)
    return y


class RegionPotential(SubmodularPotential):
    """Count-based region potential ``f(S) = |S| * |C - S|``."""

    kind = "region"
    has_quad_oracle = True

    def __init__(self, region: Sequence[int]):
        super().__init__(region)
        k = self.size
        steps = np.arange(1, k + 1)
        self.increments = (k - 2 * steps + 1).astype(float)

    def _raw(self, masks):
        s = masks.sum(axis=1).astype(float)
        return s * (self.size - s)

    def prefix_values(self, order):
        s = np.arange(self.size + 1, dtype=float)
        return s * (self.size - s)

    def quad_oracle(self, w):
        return cardinality_oracle(self.increments, w)


oracle_region = RegionPotential.quad_oracle


class MatchingCutPotential(SubmodularPotential):
    """Cut function of a set of vertex-disjoint edges.

    Its base polytope is a product of segments, so the oracle is a per-edge clamp.
    """

    kind = "matching-cut"
    has_quad_oracle = True

    def __init__(self, edges: Sequence[tuple[int, int]], weights: Sequence[float] | float = 1.0):
        edges = [(int(u), int(v)) for u, v in edges]
        ids = [e for pair in edges for e in pair]
        weights = np.broadcast_to(np.asarray(weights, dtype=float), (len(edges),)).copy()
        if np.any(weights < 0):
            raise InputError("edge weights must be non-negative")
        self.weights = weights
        super().__init__(ids)  # duplicate ids rejected, so edges are disjoint

    def _raw(self, masks):
        return (masks[:, 0::2] != masks[:, 1::2]).astype(float) @ self.weights

    def quad_oracle(self, w):
        t = np.clip((w[1::2] - w[0::2]) / 2.0, -self.weights, self.weights)
        y = np.empty(self.size)
        y[0::2] = t
        y[1::2] = -t
        return y
