"""Minimum-cost bipartite assignment (Hungarian method, shortest augmenting paths).

Infeasible pairs are marked with ``inf`` (or ``nan``). The solver first
maximizes the number of feasible pairs, then minimizes their total cost;
rows or columns with no feasible partner stay unassigned.
"""

from __future__ import annotations

import numpy as np


def _solve_wide(c: np.ndarray) -> np.ndarray:
    """Assign every row of an ``n x m`` (n <= m) finite matrix; returns col per row."""
    n, m = c.shape
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    p = np.zeros(m + 1, dtype=np.int64)  # p[j]: 1-based row matched to column j
    way = np.zeros(m + 1, dtype=np.int64)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(m + 1, np.inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            cur = c[i0 - 1] - u[i0] - v[1:]
            free = ~used[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            cand = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
            u[p[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    col_of_row = np.full(n, -1, dtype=np.int64)
    for j in range(1, m + 1):
        if p[j]:
            col_of_row[p[j] - 1] = j - 1
    return col_of_row


def hungarian(cost) -> list[tuple[int, int]]:
    """Optimal partial assignment as ``(row, col)`` pairs sorted by row.

    Deterministic: rows are inserted in ascending order and ties on the
    augmenting path go to the lowest column index.
    """
    c = np.array(cost, dtype=np.float64)
    if c.ndim != 2:
        raise ValueError("cost must be a 2-D matrix")
    n, m = c.shape
    if n == 0 or m == 0:
        return []
    feasible = np.isfinite(c)
    if not feasible.any():
        return []
    k = min(n, m)
    big = 2.0 * (k + 1) * (np.abs(c[feasible]).max() + 1.0)
    work = np.where(feasible, c, big)
    transposed = n > m
    if transposed:
        work = work.T
    col_of_row = _solve_wide(work)
    pairs = [(r, int(cc)) for r, cc in enumerate(col_of_row) if cc >= 0]
    if transposed:
        pairs = [(cc, r) for r, cc in pairs]
    pairs = sorted((r, cc) for r, cc in pairs if feasible[r, cc])
    return pairs


def assignment_cost(cost, pairs) -> float:
    c = np.asarray(cost, dtype=np.float64)
    total = 0.0
    for r, cc in sorted(pairs):
        total += c[r, cc]
    return total
