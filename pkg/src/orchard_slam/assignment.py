"""Minimum-cost bipartite assignment."""

from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment


def hungarian(cost: np.ndarray) -> list[tuple[int, int]]:
    """Optimal min-cost assignment of size min(m, n) on an m x n cost matrix.

    Returns (row, col) pairs sorted by row. Costs must be finite. The result
    is deterministic for identical inputs; among equal-cost optima the choice
    follows scipy's linear_sum_assignment.
    """
    c = np.asarray(cost, dtype=float)
    if c.ndim != 2:
        raise ValueError(f"cost must be 2D, got shape {c.shape}")
    if c.size == 0:
        return []
    if not np.all(np.isfinite(c)):
        raise ValueError("cost matrix must be finite")
    rows, cols = linear_sum_assignment(c)
    return sorted(zip(rows.tolist(), cols.tolist()))


def assignment_cost(cost: np.ndarray, pairs: list[tuple[int, int]]) -> float:
    """Total cost of an assignment."""
    c = np.asarray(cost, dtype=float)
    return float(sum(c[r, k] for r, k in pairs))
