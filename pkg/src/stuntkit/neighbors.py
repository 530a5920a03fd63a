"""Exact brute-force nearest-neighbor search.

Euclidean distance over all columns in natural units. Ties in distance are
broken by the lower row index, so every query has exactly one answer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class NeighborList:
    indices: np.ndarray
    distances: np.ndarray

    def __len__(self) -> int:
        return len(self.indices)


def _as_matrix(data) -> np.ndarray:
    X = getattr(data, "features", data)
    return np.asarray(X, dtype=float)


def distances_to(query, data) -> np.ndarray:
    X = _as_matrix(data)
    q = np.asarray(query, dtype=float).reshape(-1)
    if X.ndim != 2 or q.shape[0] != X.shape[1]:
        raise ValueError(f"query has {q.shape[0]} dimensions, data has {X.shape[-1]}")
    return np.sqrt(((X - q) ** 2).sum(axis=1))


def _k_smallest(dist: np.ndarray, k: int) -> np.ndarray:
    # lexsort is stable on the secondary key, giving lower index on equal distance
    return np.lexsort((np.arange(dist.shape[0]), dist))[:k]


def knn(query, data, k: int, exclude_self: bool | int = False) -> NeighborList:
    """Return the `k` nearest rows of `data` to `query`.

    `exclude_self` may be True (drop every row at distance zero that is the
    query itself, identified by index when an int is given) or a row index.
    """
    if k < 1:
        raise ValueError("k must be positive")
    dist = distances_to(query, data)
    eligible = np.ones(dist.shape[0], dtype=bool)
    if exclude_self is not False and exclude_self is not None:
        if isinstance(exclude_self, bool):
            eligible &= dist > 0
        else:
            eligible[int(exclude_self)] = False
    candidates = np.flatnonzero(eligible)
    if k > candidates.shape[0]:
        raise ValueError(f"k={k} exceeds the {candidates.shape[0]} eligible rows")
    order = _k_smallest(dist[candidates], k)
    idx = candidates[order]
    return NeighborList(idx, dist[idx])


def pairwise_distances(X, Y=None) -> np.ndarray:
    """All-pairs Euclidean distance matrix."""
    X = _as_matrix(X)
    Y = X if Y is None else _as_matrix(Y)
    diff = X[:, None, :] - Y[None, :, :]
    return np.sqrt((diff * diff).sum(axis=2))


def knn_table(data, k: int, rows=None) -> np.ndarray:
    """Batched self-excluding k-NN: an (m, k) array of neighbor indices.

    Neighbors of each row in `rows` (default: all rows) are searched among
    all rows of `data` other than itself.
    """
    X = _as_matrix(data)
    n = X.shape[0]
    if k < 1 or k > n - 1:
        raise ValueError(f"k={k} needs at least {k + 1} rows, dataset has {n}")
    rows = np.arange(n) if rows is None else np.asarray(rows, dtype=np.intp)
    out = np.empty((rows.shape[0], k), dtype=np.intp)
    block = max(1, 500_000 // max(n, 1))
    ids = np.arange(n)
    for start in range(0, rows.shape[0], block):
        chunk = rows[start:start + block]
        dist = pairwise_distances(X[chunk], X)
        dist[np.arange(chunk.shape[0]), chunk] = np.inf
        # argpartition then an exact (distance, index) sort over a widened shortlist
        width = min(n, k + 1)
        part = np.argpartition(dist, width - 1, axis=1)[:, :width]
        for j, r in enumerate(chunk):
            cut = dist[j, part[j]].max()
            cand = ids[dist[j] <= cut]
            cand = cand[cand != r]
            order = np.lexsort((cand, dist[j, cand]))[:k]
            out[start + j] = cand[order]
    return out


def nearest_enemy_distance(index: int, data, labels=None) -> float:
    """Distance from row `index` to the closest row carrying a different label."""
    X = _as_matrix(data)
    y = np.asarray(getattr(data, "labels", labels))
    enemies = y != y[index]
    if not enemies.any():
        raise ValueError("dataset has a single class; no differently-labeled row exists")
    return float(distances_to(X[index], X[enemies]).min())


def nearest_enemy_distances(data, rows=None, labels=None) -> np.ndarray:
    """Vectorized `nearest_enemy_distance` for many rows."""
    X = _as_matrix(data)
    y = np.asarray(getattr(data, "labels", labels))
    rows = np.arange(X.shape[0]) if rows is None else np.asarray(rows, dtype=np.intp)
    if np.unique(y).shape[0] < 2:
        raise ValueError("dataset has a single class; no differently-labeled row exists")
    dist = pairwise_distances(X[rows], X)
    dist[y[rows][:, None] == y[None, :]] = np.inf
    return dist.min(axis=1)
