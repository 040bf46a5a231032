"""Nearest-neighbour queries with a deterministic tie-break.

A kd-tree (``scipy.spatial.cKDTree``) proposes candidates; distances are then
recomputed with one canonical formula so that results match the exhaustive
reference bit for bit, and equal distances resolve to the lowest target index.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

# Relative gap under which the two best kd-tree candidates count as a near-tie
# and are re-checked exhaustively within the search ball.
_TIE_RTOL = 1e-9


def _sq_dist(targets: np.ndarray, q: np.ndarray) -> np.ndarray:
    d = targets - q
    return np.einsum("ij,ij->i", d, d)


def brute_force_nearest(targets, queries) -> tuple[np.ndarray, np.ndarray]:
    """Exhaustive search; ``argmin`` picks the first (lowest) index on ties."""
    targets = np.asarray(targets, dtype=float)
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    idx = np.empty(len(queries), dtype=np.intp)
    dist = np.empty(len(queries))
    for i, q in enumerate(queries):
        d2 = _sq_dist(targets, q)
        j = int(np.argmin(d2))
        idx[i] = j
        dist[i] = np.sqrt(d2[j])
    return dist, idx


class NearestNeighborIndex:
    def __init__(self, points):
        self.points = np.asarray(points, dtype=float)
        if self.points.ndim != 2 or self.points.shape[1] != 3 or len(self.points) == 0:
            raise ValueError("index needs a non-empty (N, 3) point array")
        self._tree = cKDTree(self.points)

    def __len__(self) -> int:
        return len(self.points)

    def query(self, queries) -> tuple[np.ndarray, np.ndarray]:
        """Distance to and index of the nearest indexed point for each query."""
        queries = np.atleast_2d(np.asarray(queries, dtype=float))
        if len(self.points) == 1:
            idx = np.zeros(len(queries), dtype=np.intp)
        else:
            d, idx = self._tree.query(queries, k=2)
            idx = idx[:, 0].astype(np.intp)
            near_tie = d[:, 1] - d[:, 0] <= _TIE_RTOL * (1.0 + d[:, 0])
            for i in np.flatnonzero(near_tie):
                radius = d[i, 1] * (1.0 + 2 * _TIE_RTOL) + 1e-12
                cand = np.sort(np.asarray(self._tree.query_ball_point(queries[i], radius), dtype=np.intp))
                d2 = _sq_dist(self.points[cand], queries[i])
                idx[i] = cand[int(np.argmin(d2))]
        diff = self.points[idx] - queries
        dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        return dist, idx
