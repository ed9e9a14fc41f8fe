"""
Exact nearest-neighbour search on shadow manifolds.

Distances are accumulated coordinate by coordinate as
``sqrt((a0-b0)**2 + (a1-b1)**2 + ...)`` in a fixed order, so a naive
per-pair loop reproduces them bit-for-bit. Ties are broken by the smaller
row index.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .embedding import ShadowManifold
from .errors import IndexOutOfRange, NotEnoughPoints

__all__ = ["NeighborSet", "knn", "knn_library", "knn_batch", "default_exclusion"]

BLOCK_ROWS = 256


@dataclass(frozen=True)
class NeighborSet:
    query_index: int
    indices: np.ndarray
    distances: np.ndarray


def default_exclusion(manifold: ShadowManifold) -> int:
    """Theiler window covering the temporal footprint of one delay vector."""
    return manifold.params.span


def _resolve_exclusion(manifold, exclusion_radius, allow_self_neighbor) -> int:
    if allow_self_neighbor:
        return -1
    if exclusion_radius is None:
        return default_exclusion(manifold)
    if exclusion_radius < 0:
        raise ValueError("exclusion_radius must be >= 0")
    return int(exclusion_radius)


def _squared_block(points: np.ndarray, rows: np.ndarray, cand: np.ndarray) -> np.ndarray:
    d2 = np.zeros((rows.size, cand.size))
    for k in range(points.shape[1]):
        diff = points[rows, k][:, None] - points[cand, k][None, :]
        d2 += diff * diff
    return d2


def _smallest_k(d2: np.ndarray, cand: np.ndarray, k: int):
    """Per row, the k smallest entries ordered by (distance, candidate index).

    ``cand`` must be sorted ascending so column order equals index order.
    """
    m = d2.shape[1]
    if k < m:
        part = np.argpartition(d2, k - 1, axis=1)[:, :k]
    else:
        part = np.broadcast_to(np.arange(m), (d2.shape[0], m)).copy()
    kth = np.take_along_axis(d2, part, axis=1).max(axis=1)
    n_le = np.count_nonzero(d2 <= kth[:, None], axis=1)
    # rows with a tie straddling the k-th place need a full stable sort
    for r in np.nonzero(n_le > k)[0]:
        part[r] = np.argsort(d2[r], kind="stable")[:k]
    part.sort(axis=1)
    order = np.argsort(np.take_along_axis(d2, part, axis=1), axis=1, kind="stable")
    cols = np.take_along_axis(part, order, axis=1)
    return cand[cols], np.sqrt(np.take_along_axis(d2, cols, axis=1))


def knn_batch(manifold: ShadowManifold, queries=None, library=None,
              exclusion_radius: Optional[int] = None, k: Optional[int] = None,
              allow_self_neighbor: bool = False):
    """Neighbours for many query rows at once.

    Parameters
    ----------
    manifold : ShadowManifold
    queries : array_like of int, optional
        Query rows; all rows by default.
    library : array_like of int, optional
        Candidate rows; all rows by default.
    exclusion_radius : int, optional
        Candidates ``j`` with ``|j - q| <= exclusion_radius`` are skipped.
        Defaults to ``(E-1)*tau``.
    k : int, optional
        Neighbours per query, ``E+1`` by default.
    allow_self_neighbor : bool
        Disable all exclusion so a query may be its own neighbour.

    Returns
    -------
    indices, distances : ndarray, shape (n_queries, k)
    """
    pts = manifold.points
    n = pts.shape[0]
    k = manifold.E + 1 if k is None else int(k)
    radius = _resolve_exclusion(manifold, exclusion_radius, allow_self_neighbor)
    q = np.arange(n) if queries is None else np.asarray(queries, dtype=np.int64).reshape(-1)
    cand = np.arange(n) if library is None else np.unique(np.asarray(library, dtype=np.int64))
    if q.size and (q.min() < 0 or q.max() >= n):
        raise IndexOutOfRange("query row outside the manifold")
    if cand.size and (cand.min() < 0 or cand.max() >= n):
        raise IndexOutOfRange("library row outside the manifold")
    out_idx = np.empty((q.size, k), dtype=np.int64)
    out_dist = np.empty((q.size, k))
    for start in range(0, q.size, BLOCK_ROWS):
        rows = q[start:start + BLOCK_ROWS]
        d2 = _squared_block(pts, rows, cand)
        if radius >= 0:
            near = np.abs(rows[:, None] - cand[None, :]) <= radius
            d2[near] = np.inf
            admissible = cand.size - near.sum(axis=1)
        else:
            admissible = np.full(rows.size, cand.size)
        short = np.nonzero(admissible < k)[0]
        if short.size:
            bad = int(rows[short[0]])
            raise NotEnoughPoints(
                f"query row {bad} has {int(admissible[short[0]])} admissible "
                f"candidates, needs {k}")
        idx, dist = _smallest_k(d2, cand, k)
        out_idx[start:start + rows.size] = idx
        out_dist[start:start + rows.size] = dist
    return out_idx, out_dist


def knn(manifold: ShadowManifold, query_index: int, exclusion_radius: Optional[int] = None,
        allow_self_neighbor: bool = False) -> NeighborSet:
    """The E+1 nearest rows to ``query_index`` outside its exclusion window."""
    idx, dist = knn_batch(manifold, [query_index], None, exclusion_radius,
                          allow_self_neighbor=allow_self_neighbor)
    return NeighborSet(int(query_index), idx[0], dist[0])


def knn_library(manifold: ShadowManifold, library_rows, query_index: int,
                exclusion_radius: Optional[int] = None,
                allow_self_neighbor: bool = False) -> NeighborSet:
    """As :func:`knn`, with candidates restricted to ``library_rows``."""
    idx, dist = knn_batch(manifold, [query_index], library_rows, exclusion_radius,
                          allow_self_neighbor=allow_self_neighbor)
    return NeighborSet(int(query_index), idx[0], dist[0])
