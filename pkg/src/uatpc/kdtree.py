"""Implicit median-split k-d tree with exact radius queries.

Points are permuted so that the node covering ``[lo, hi)`` stores its
splitting point at ``(lo + hi) // 2`` and splits on axis ``depth % k``;
no node objects exist. Traversal runs in the compiled kernel when built.
"""
from __future__ import annotations

import numpy as np

from . import kernels
from .core import ValidationError


def build_order(points: np.ndarray) -> np.ndarray:
    """Permutation placing every subtree's median at its midpoint."""
    n, k = points.shape
    order = np.arange(n)
    stack = [(0, n, 0)]
    while stack:
        lo, hi, depth = stack.pop()
        if hi - lo <= 1:
            continue
        mid = (lo + hi) // 2
        seg = order[lo:hi]
        part = np.argpartition(points[seg, depth % k], mid - lo, kind="introselect")
        order[lo:hi] = seg[part]
        stack.append((lo, mid, depth + 1))
        stack.append((mid + 1, hi, depth + 1))
    return order


class KDTree:
    def __init__(self, points):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] == 0:
            raise ValidationError("points must be an N x k array with k >= 1")
        if not np.all(np.isfinite(pts)):
            raise ValidationError("points must be finite")
        self.points = pts
        self.order = build_order(pts)
        self._tree = np.ascontiguousarray(pts[self.order])

    def __len__(self):
        return len(self.points)

    def query_radius(self, q, r: float) -> np.ndarray:
        """Sorted indices of points with Euclidean distance <= r from ``q``."""
        if r < 0:
            raise ValidationError("radius must be non-negative")
        q = np.asarray(q, dtype=float).reshape(-1)
        pos = kernels.ball_query(self._tree, q, r)
        return np.sort(self.order[pos])

    def count_radius(self, queries, r: float) -> np.ndarray:
        """Per query, the number of points within distance r (a query point counts itself)."""
        if r < 0:
            raise ValidationError("radius must be non-negative")
        qs = np.atleast_2d(np.asarray(queries, dtype=float))
        return kernels.ball_count_many(self._tree, qs, r)


def brute_radius(points, q, r: float) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    d2 = ((pts - np.asarray(q, dtype=float)) ** 2).sum(axis=1)
    return np.flatnonzero(d2 <= r * r)


def brute_neighbor_counts(points, r: float) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
    return (d2 <= r * r).sum(axis=1) - 1
