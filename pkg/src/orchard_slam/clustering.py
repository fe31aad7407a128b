"""Density-based spatial clustering over 2D points.

A deterministic DBSCAN: clusters are seeded at the first unvisited core
point in input order and expanded breadth-first, so identical inputs always
produce identical labels, and a border point reachable from several
clusters is claimed by the cluster discovered first.
"""

from __future__ import annotations

from collections import deque
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

NOISE = -1
_UNVISITED = -2


def dbscan(points: Sequence[tuple[float, float]] | np.ndarray,
           eps: float,
           min_pts: int) -> np.ndarray:
    """Label each point with a cluster id, or NOISE (-1).

    The eps-neighborhood is a closed ball and counts the point itself, so a
    point is core when at least min_pts points (including itself) lie within
    eps of it.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if min_pts < 1:
        raise ValueError(f"min_pts must be >= 1, got {min_pts}")
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    n = len(pts)
    labels = np.full(n, _UNVISITED, dtype=int)
    if n == 0:
        return labels

    tree = cKDTree(pts)
    neighborhoods = [np.sort(np.asarray(nb, dtype=int))
                     for nb in tree.query_ball_point(pts, eps)]

    cluster = 0
    for i in range(n):
        if labels[i] != _UNVISITED:
            continue
        if len(neighborhoods[i]) < min_pts:
            labels[i] = NOISE
            continue
        labels[i] = cluster
        queue = deque(neighborhoods[i])
        while queue:
            j = queue.popleft()
            if labels[j] == NOISE:
                labels[j] = cluster  # border point claimed by this cluster
            if labels[j] != _UNVISITED:
                continue
            labels[j] = cluster
            if len(neighborhoods[j]) >= min_pts:
                queue.extend(neighborhoods[j])
        cluster += 1
    return labels
