"""Euclidean nearest/near queries over a growing point set."""
from __future__ import annotations

from typing import List, Sequence

import numpy as np
from scipy.spatial import cKDTree


class SpatialIndex:
    """cKDTree over the bulk of the points plus a brute-force tail.

    The tree is rebuilt once ``rebuild_every`` points have accumulated in the
    tail, so an insertion costs amortized O(log n) and a query O(log n +
    rebuild_every).
    """

    def __init__(self, rebuild_every: int = 64, capacity: int = 1024) -> None:
        self.rebuild_every = max(1, int(rebuild_every))
        self._points = np.empty((max(capacity, 1), 2), dtype=np.float64)
        self._n = 0
        self._indexed = 0
        self._tree = None

    def __len__(self) -> int:
        return self._n

    @property
    def points(self) -> np.ndarray:
        return self._points[:self._n]

    def add(self, point: Sequence[float]) -> int:
        if self._n == self._points.shape[0]:
            grown = np.empty((2 * self._n, 2), dtype=np.float64)
            grown[:self._n] = self._points[:self._n]
            self._points = grown
        self._points[self._n] = point
        self._n += 1
        if self._n - self._indexed >= self.rebuild_every:
            self._tree = cKDTree(self._points[:self._n])
            self._indexed = self._n
        return self._n - 1

    def _tail(self) -> np.ndarray:
        return np.arange(self._indexed, self._n)

    def knn(self, p: Sequence[float], k: int) -> List[int]:
        """Ids of the k Euclidean-nearest points, ordered by (distance, id)."""
        p = np.asarray(p, dtype=np.float64)
        ids = self._tail()
        if self._tree is not None:
            _, found = self._tree.query(p, k=min(k, self._indexed))
            ids = np.concatenate([np.atleast_1d(found), ids])
        if ids.size == 0:
            return []
        d = np.hypot(*(self._points[ids] - p).T)
        order = np.lexsort((ids, d))[:k]
        return [int(i) for i in ids[order]]

    def within(self, p: Sequence[float], radius: float) -> List[int]:
        """Ids of points with Euclidean distance <= radius, ascending."""
        p = np.asarray(p, dtype=np.float64)
        found: List[int] = []
        if self._tree is not None:
            found = list(self._tree.query_ball_point(p, radius))
        tail = self._tail()
        if tail.size:
            d = np.hypot(*(self._points[tail] - p).T)
            found.extend(int(i) for i in tail[d <= radius])
        return sorted(int(i) for i in found)
