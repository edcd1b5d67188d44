"""Transportation simplex (network simplex on the complete bipartite graph).

A basis is a spanning tree of ``m + n`` nodes (rows first, then columns)
given as a list of ``m + n - 1`` cells ``(i, j)``. Entering cells follow
Dantzig's rule (most negative reduced cost, lowest flat index on ties);
after a run of degenerate pivots the rule switches to Bland's
(lowest-index improving cell) until a pivot makes progress, which rules out
cycling. Leaving ties go to the lowest flat index.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ValidationError

Cell = tuple[int, int]


@dataclass(frozen=True)
class SimplexResult:
    flow: np.ndarray
    basis: tuple[Cell, ...]
    u: np.ndarray
    v: np.ndarray
    iterations: int


def northwest_corner(a: np.ndarray, b: np.ndarray) -> list[Cell]:
    m, n = a.size, b.size
    ra, rb = a.astype(float).copy(), b.astype(float).copy()
    cells = []
    i = j = 0
    while True:
        cells.append((i, j))
        if i == m - 1 and j == n - 1:
            break
        x = min(ra[i], rb[j])
        ra[i] -= x
        rb[j] -= x
        if j == n - 1 or (i < m - 1 and ra[i] <= rb[j]):
            i += 1
        else:
            j += 1
    return cells


def tree_flows(cells: list[Cell], a: np.ndarray, b: np.ndarray) -> list[float] | None:
    """Flows of the basic solution for a spanning-tree basis, by leaf peeling.

    Returns None if ``cells`` is not a spanning tree or the solution is
    infeasible (a flow below ``-1e-12``).
    """
    m, n = a.size, b.size
    N = m + n
    if len(cells) != N - 1:
        return None
    adj: list[list[tuple[int, int]]] = [[] for _ in range(N)]
    for idx, (i, j) in enumerate(cells):
        if not (0 <= i < m and 0 <= j < n):
            return None
        adj[i].append((m + j, idx))
        adj[m + j].append((i, idx))
    deg = [len(x) for x in adj]
    rem = [float(x) for x in a] + [float(x) for x in b]
    used = [False] * len(cells)
    flows = [0.0] * len(cells)
    stack = [node for node in range(N - 1, -1, -1) if deg[node] == 1]
    done = 0
    while stack:
        node = stack.pop()
        if deg[node] != 1:
            continue
        for other, idx in adj[node]:
            if not used[idx]:
                break
        used[idx] = True
        f = rem[node]
        if f < -1e-12:
            return None
        f = max(f, 0.0)
        flows[idx] = f
        rem[other] -= f
        deg[node] = 0
        deg[other] -= 1
        done += 1
        if deg[other] == 1:
            stack.append(other)
    if done != N - 1:
        return None
    return flows


def _potentials(cells, C, m, n):
    N = m + n
    adj: list[list[tuple[int, int]]] = [[] for _ in range(N)]
    for idx, (i, j) in enumerate(cells):
        adj[i].append((m + j, idx))
        adj[m + j].append((i, idx))
    pot = [0.0] * N
    parent = [-1] * N
    pedge = [-1] * N
    depth = [0] * N
    seen = [False] * N
    seen[0] = True
    queue = deque([0])
    while queue:
        node = queue.popleft()
        for other, idx in adj[node]:
            if seen[other]:
                continue
            i, j = cells[idx]
            seen[other] = True
            pot[other] = C[i, j] - pot[node]
            parent[other] = node
            pedge[other] = idx
            depth[other] = depth[node] + 1
            queue.append(other)
    if not all(seen):
        raise NumericalError("basis is not a spanning tree")
    return np.array(pot), parent, pedge, depth


def transport_simplex(
    cost,
    a,
    b,
    basis: list[Cell] | tuple[Cell, ...] | None = None,
    max_iter: int | None = None,
) -> SimplexResult:
    """Minimize ``sum(q * cost)`` over couplings of ``a`` and ``b``.

    ``basis`` warm-starts from a previous optimal tree for the same
    marginals; an unusable basis silently falls back to the northwest
    corner rule.
    """
    C = np.asarray(cost, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = a.size, b.size
    if C.shape != (m, n):
        raise ValidationError(f"cost shape {C.shape} does not match marginals ({m}, {n})")
    if np.any(np.isnan(C)):
        raise ValidationError("cost contains NaN")
    if not np.all(np.isfinite(C)):
        raise ValidationError("cost must be finite")

    cells = list(basis) if basis is not None else None
    flows = tree_flows(cells, a, b) if cells is not None else None
    if flows is None:
        cells = northwest_corner(a, b)
        flows = tree_flows(cells, a, b)
        if flows is None:
            raise NumericalError("marginals admit no feasible northwest-corner basis")

    eps = 1e-12 * max(1.0, float(np.max(np.abs(C))))
    max_iter = max_iter or 100 * m * n + 1000
    N = m + n
    degenerate_run = 0
    iterations = 0
    while True:
        pot, parent, pedge, depth = _potentials(cells, C, m, n)
        reduced = (C - pot[:m, None] - pot[None, m:]).ravel()
        if degenerate_run > N:
            improving = np.flatnonzero(reduced < -eps)
            if improving.size == 0:
                break
            k = int(improving[0])
        else:
            k = int(np.argmin(reduced))
            if reduced[k] >= -eps:
                break
        if iterations >= max_iter:
            raise NumericalError(f"transport simplex did not converge in {max_iter} pivots")
        iterations += 1
        i, j = divmod(k, n)

        # tree path from column j to row i, via the lowest common ancestor
        x, y = m + j, i
        up_x, up_y = [], []
        while x != y:
            if depth[x] >= depth[y]:
                up_x.append(pedge[x])
                x = parent[x]
            else:
                up_y.append(pedge[y])
                y = parent[y]
        cycle = up_x + up_y[::-1]
        minus, plus = cycle[0::2], cycle[1::2]

        theta = min(flows[e] for e in minus)
        leave = min(
            (e for e in minus if flows[e] == theta),
            key=lambda e: cells[e][0] * n + cells[e][1],
        )
        for e in minus:
            flows[e] -= theta
        for e in plus:
            flows[e] += theta
        cells[leave] = (i, j)
        flows[leave] = theta
        degenerate_run = degenerate_run + 1 if theta == 0 else 0

    q = np.zeros((m, n))
    for (i, j), f in zip(cells, flows):
        q[i, j] = f
    return SimplexResult(
        flow=q, basis=tuple(cells), u=pot[:m].copy(), v=pot[m:].copy(), iterations=iterations
    )


def certificate(result: SimplexResult, cost, a, b) -> float:
    """Optimality certificate: max of dual infeasibility and duality gap."""
    C = np.asarray(cost, dtype=float)
    reduced = C - result.u[:, None] - result.v[None, :]
    infeasible = max(0.0, -float(np.min(reduced)))
    primal = math.fsum((result.flow * C).ravel())
    dual = math.fsum(np.concatenate((result.u * a, result.v * b)))
    return max(infeasible, abs(primal - dual))
