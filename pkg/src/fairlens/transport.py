"""Exact min-cost transport between two discrete distributions.

This is a network simplex specialized to the bipartite transportation
polytope: the basis is always a spanning tree of the supply/demand bipartite
graph with m + n - 1 basic cells, so pivots reduce to finding the unique
tree cycle closed by the entering cell.

Pivoting uses Dantzig's rule (most negative reduced cost, vectorized with
numpy) and falls back to Bland's rule (first negative, smallest-index leaving
cell) after a pivot budget, which rules out cycling on degenerate bases.
"""

from __future__ import annotations

import numpy as np

from .errors import AuditError


class TransportError(AuditError):
    pass


def min_cost_transport(supply, demand, cost) -> tuple[float, dict[tuple[int, int], float]]:
    """Solve min sum f_ij * cost_ij subject to the transportation constraints.

    ``supply`` and ``demand`` must be non-negative with (approximately) equal
    totals; ``cost`` is an (m, n) matrix. Returns the optimal cost and the
    basic flow as a sparse {(i, j): mass} dict.
    """
    a = np.asarray(supply, dtype=float).copy()
    b = np.asarray(demand, dtype=float).copy()
    cost_matrix = np.asarray(cost, dtype=float)
    if a.ndim != 1 or b.ndim != 1 or cost_matrix.shape != (a.size, b.size):
        raise TransportError("shape mismatch between supplies, demands and costs")
    if a.size == 0 or b.size == 0:
        raise TransportError("empty transport problem")
    if (a < 0).any() or (b < 0).any():
        raise TransportError("negative mass")
    total_a, total_b = float(a.sum()), float(b.sum())
    if total_a <= 0 or total_b <= 0:
        raise TransportError("zero total mass")
    if abs(total_a - total_b) > 1e-6 * max(total_a, total_b):
        raise TransportError(f"unbalanced masses: {total_a} vs {total_b}")
    b *= total_a / total_b

    m, n = a.size, b.size
    tol = 1e-12 * max(1.0, float(np.abs(cost_matrix).max()))

    # --- initial basic feasible solution: northwest corner ----------------
    flow: dict[tuple[int, int], float] = {}
    adjacency: list[set[int]] = [set() for _ in range(m + n)]  # cols are m + j

    def add_basic(i: int, j: int, value: float) -> None:
        flow[(i, j)] = value
        adjacency[i].add(m + j)
        adjacency[m + j].add(i)

    def drop_basic(i: int, j: int) -> None:
        del flow[(i, j)]
        adjacency[i].discard(m + j)
        adjacency[m + j].discard(i)

    ra, rb = a.copy(), b.copy()
    i = j = 0
    while True:
        moved = min(ra[i], rb[j])
        add_basic(i, j, max(moved, 0.0))
        ra[i] -= moved
        rb[j] -= moved
        if i == m - 1 and j == n - 1:
            break
        # Advance exactly one index per step so the basis stays a tree with
        # m + n - 1 cells even when supply and demand exhaust together.
        if i < m - 1 and (ra[i] <= rb[j] or j == n - 1):
            i += 1
        else:
            j += 1

    # --- pivot loop --------------------------------------------------------
    u = np.zeros(m)
    v = np.zeros(n)

    def recompute_duals() -> None:
        seen = bytearray(m + n)
        stack = [0]
        seen[0] = 1
        u[0] = 0.0
        while stack:
            node = stack.pop()
            for peer in adjacency[node]:
                if seen[peer]:
                    continue
                seen[peer] = 1
                if node < m:  # row -> col: v_j = c_ij - u_i
                    v[peer - m] = cost_matrix[node, peer - m] - u[node]
                else:  # col -> row: u_i = c_ij - v_j
                    u[peer] = cost_matrix[peer, node - m] - v[node - m]
                stack.append(peer)

    def tree_path(start: int, goal: int) -> list[int]:
        parent = {start: -1}
        stack = [start]
        while stack:
            node = stack.pop()
            if node == goal:
                break
            for peer in adjacency[node]:
                if peer not in parent:
                    parent[peer] = node
                    stack.append(peer)
        path = [goal]
        while path[-1] != start:
            path.append(parent[path[-1]])
        path.reverse()
        return path

    max_pivots = 200 * (m + n) ** 2 + 10_000
    bland_after = 20 * (m + n) ** 2 + 1_000
    pivot = 0
    while True:
        pivot += 1
        if pivot > max_pivots:
            raise TransportError("pivot budget exhausted")
        recompute_duals()
        reduced = cost_matrix - u[:, None] - v[None, :]
        if pivot <= bland_after:
            enter_flat = int(np.argmin(reduced))
            ei, ej = divmod(enter_flat, n)
            if reduced[ei, ej] >= -tol:
                break
        else:
            negatives = np.argwhere(reduced < -tol)
            if negatives.size == 0:
                break
            ei, ej = (int(x) for x in negatives[0])

        # Unique cycle: entering cell plus the tree path col(ej) -> row(ei).
        path = tree_path(m + ej, ei)
        cells = []  # (i, j, sign) alternating -,+,-,... along the path
        sign = -1
        for node, peer in zip(path, path[1:]):
            if node >= m:
                cells.append((peer, node - m, sign))
            else:
                cells.append((node, peer - m, sign))
            sign = -sign

        theta = None
        leaving = None
        for ci, cj, csign in cells:
            if csign < 0:
                value = flow[(ci, cj)]
                if theta is None or value < theta - 1e-15 or (
                    abs(value - theta) <= 1e-15
                    and pivot > bland_after
                    and (ci, cj) < leaving
                ):
                    theta, leaving = value, (ci, cj)

        for ci, cj, csign in cells:
            flow[(ci, cj)] = max(flow[(ci, cj)] + csign * theta, 0.0)
        drop_basic(*leaving)
        add_basic(ei, ej, theta)

    total = float(sum(cost_matrix[i, j] * f for (i, j), f in flow.items()))
    return total, {k: f for k, f in flow.items() if f > 0.0}
