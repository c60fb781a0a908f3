"""Density-based clustering of attention particles.

Neighbourhoods include the point itself and every point at distance
``<= eps``; duplicates count with multiplicity. Clusters are grown from core
points in index order, so a border point reachable from several clusters
joins the one discovered first (the lowest cluster id).
"""
from __future__ import annotations

from collections import deque

import numpy as np
from scipy.spatial import cKDTree

NOISE = -1


def scale_particles(particles, w_t: float) -> np.ndarray:
    """``(x, y, t)`` -> ``(x, y, w_t * t)`` as floats."""
    p = np.asarray(particles, dtype=np.float64)
    return np.column_stack([p[:, 0], p[:, 1], w_t * p[:, 2]])


def dbscan(points, eps: float, min_pts: int) -> np.ndarray:
    """Cluster labels ``0..k-1`` per point, or ``-1`` for noise."""
    if eps <= 0 or min_pts < 1:
        raise ValueError(f"need eps > 0 and min_pts >= 1, got {eps}, {min_pts}")
    pts = np.asarray(points, dtype=np.float64)
    n = len(pts)
    labels = np.full(n, NOISE, dtype=np.int64)
    if n == 0:
        return labels
    neighbours = cKDTree(pts).query_ball_point(pts, r=eps)
    core = np.fromiter((len(nb) >= min_pts for nb in neighbours), dtype=bool, count=n)
    cluster = 0
    for i in range(n):
        if labels[i] != NOISE or not core[i]:
            continue
        labels[i] = cluster
        queue = deque([i])
        while queue:
            j = queue.popleft()
            for k in neighbours[j]:
                if labels[k] == NOISE:
                    labels[k] = cluster
                    if core[k]:
                        queue.append(k)
        cluster += 1
    return labels


def core_mask(points, eps: float, min_pts: int) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    counts = cKDTree(pts).query_ball_point(pts, r=eps, return_length=True)
    return np.asarray(counts) >= min_pts
