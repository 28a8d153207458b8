"""Brute-force reference implementations used only by the test-suite.

Everything here is deliberately naive (explicit path enumeration, plain
Python sets) so that it shares no code with the package under test.
"""

from __future__ import annotations

import itertools
from collections import deque
from functools import lru_cache

import numpy as np

from percolab.graph import Graph


def adjacency_sets(g: Graph) -> list[set[int]]:
    return [set(int(w) for w in g.neighbors(v)) for v in range(g.n)]


def random_connected_graph(rng: np.random.Generator, n: int, extra: float) -> Graph:
    """Random spanning tree plus each remaining pair with probability ``extra``."""
    edges = set()
    perm = rng.permutation(n)
    for i in range(1, n):
        j = int(rng.integers(i))
        a, b = int(perm[i]), int(perm[j])
        edges.add((min(a, b), max(a, b)))
    for a, b in itertools.combinations(range(n), 2):
        if (a, b) not in edges and rng.random() < extra:
            edges.add((a, b))
    return Graph.from_edges(n, sorted(edges))


def bfs_dist(adj, sources, allowed=None) -> dict[int, int]:
    dist = {s: 0 for s in sources if allowed is None or s in allowed}
    queue = deque(dist)
    while queue:
        u = queue.popleft()
        for w in adj[u]:
            if w not in dist and (allowed is None or w in allowed):
                dist[w] = dist[u] + 1
                queue.append(w)
    return dist


def simple_paths(adj, allowed, starts, ends):
    """All simple paths inside ``allowed`` whose only start-vertex is the first
    and only end-vertex is the last."""
    out = []

    def walk(path, seen):
        u = path[-1]
        if u in ends:
            out.append(tuple(path))
            return
        for w in adj[u]:
            if w in allowed and w not in seen and w not in starts:
                seen.add(w)
                path.append(w)
                walk(path, seen)
                path.pop()
                seen.discard(w)

    for s in starts:
        if s in allowed:
            walk([s], {s})
    return out


def _max_packing(items: list[int]) -> int:
    """Largest family of pairwise disjoint bitmasks."""
    items = sorted(set(items))

    @lru_cache(maxsize=None)
    def best(forbidden: int) -> int:
        live = [m for m in items if not m & forbidden]
        if not live:
            return 0
        # branch on the element shared by the fewest live items
        counts: dict[int, int] = {}
        for m in live:
            while m:
                bit = m & -m
                counts[bit] = counts.get(bit, 0) + 1
                m ^= bit
        pivot = min(counts, key=lambda b: (counts[b], b))
        through = [m for m in live if m & pivot]
        res = best(forbidden | pivot)
        for m in through:
            res = max(res, 1 + best(forbidden | m))
        return res

    return best(0)


def brute_vertex_disjoint(g: Graph, ambient, A, A2) -> tuple[int, list[tuple]]:
    adj = adjacency_sets(g)
    amb = set(int(v) for v in ambient)
    S = {w for a in A for w in adj[int(a)] | {int(a)}} & amb
    T = {w for a in A2 for w in adj[int(a)] | {int(a)}} & amb
    paths = simple_paths(adj, amb, S, T)
    masks = [sum(1 << v for v in p) for p in paths]
    return _max_packing(masks), paths


def brute_edge_disjoint(g: Graph, ambient, A, A2) -> tuple[int, list[tuple]]:
    adj = adjacency_sets(g)
    amb = set(int(v) for v in ambient)
    paths = simple_paths(adj, amb, {int(a) for a in A}, {int(a) for a in A2})
    index = {}
    masks = []
    for p in paths:
        m = 0
        for u, v in zip(p, p[1:]):
            key = (min(u, v), max(u, v))
            m |= 1 << index.setdefault(key, len(index))
        masks.append(m)
    return _max_packing(masks), paths


def brute_min_ratio(g: Graph, ball_vertices, d_i) -> float:
    """Isoperimetric ratio minimum by explicit subset enumeration (tiny balls)."""
    B = [int(v) for v in ball_vertices]
    inside = set(B)
    adj = adjacency_sets(g)
    best = float("inf")
    for k in range(1, len(B) // 2 + 1):
        for A in itertools.combinations(B, k):
            sa = set(A)
            bd = sum(1 for a in A for w in adj[a] if w in inside and w not in sa)
            best = min(best, bd / k ** ((d_i - 1) / d_i))
    return best


def scipy_edge_flow(g: Graph, ambient, A, A2) -> int:
    """Edge-disjoint path count via scipy's max-flow (an independent implementation)."""
    from scipy import sparse
    from scipy.sparse.csgraph import maximum_flow

    amb = sorted(int(v) for v in ambient)
    pos = {v: i for i, v in enumerate(amb)}
    n = len(amb)
    src, snk = n, n + 1
    big = 10 * (g.num_edges + 1)
    rows, cols, caps = [], [], []
    for u, v in g.edges():
        if int(u) in pos and int(v) in pos:
            rows += [pos[int(u)], pos[int(v)]]
            cols += [pos[int(v)], pos[int(u)]]
            caps += [1, 1]
    for a in A:
        rows.append(src); cols.append(pos[int(a)]); caps.append(big)
    for b in A2:
        rows.append(pos[int(b)]); cols.append(snk); caps.append(big)
    mat = sparse.csr_matrix((np.array(caps, dtype=np.int32), (rows, cols)), shape=(n + 2, n + 2))
    return int(maximum_flow(mat, src, snk).flow_value)


def long_range_pair_covariance(g: Graph, x: int, y: int, tau: float, rmax: int, lam: float):
    """Exact ``(P[x open], P[y open], Cov)`` for the Poisson-ball field.

    Independent derivation: the number of centres closing ``x`` (resp. both)
    is Poisson with mean ``lam * sum_z P[R >= d(z, .)]``.
    """
    adj = adjacency_sets(g)
    dx, dy = bfs_dist(adj, [x]), bfs_dist(adj, [y])

    def tail(j):
        return 1.0 if j == 0 else (float(j) ** -tau if j <= rmax else 0.0)

    sx = sum(tail(d) for d in dx.values())
    sy = sum(tail(d) for d in dy.values())
    w = sum(tail(max(dx[z], dy[z])) for z in dx if z in dy)
    px, py = np.exp(-lam * sx), np.exp(-lam * sy)
    return px, py, px * py * (np.exp(lam * w) - 1.0)


def _connected(adj, S: set) -> bool:
    if not S:
        return False
    start = next(iter(S))
    return len(bfs_dist(adj, [start], S)) == len(S)


def brute_is_witness(g: Graph, mask, x: int, L: int, A, B, t: int,
                     inner_r: int | None = None) -> bool:
    """Separation-witness check straight from the definition, with the
    no-open-path condition decided by a search over open vertices."""
    adj = adjacency_sets(g)
    inner_r = 3 * L // 6 if inner_r is None else inner_r
    dx = bfs_dist(adj, [x])
    inner = {v for v, d in dx.items() if d <= inner_r}
    outer = {v for v, d in dx.items() if d <= L}
    A, B = set(int(a) for a in A), set(int(b) for b in B)
    if not (A and B and A <= inner and B <= inner):
        return False
    if not (_connected(adj, A) and _connected(adj, B)):
        return False
    if any(w in B for a in A for w in adj[a] | {a}):
        return False
    for S in (A, B):
        dists = [bfs_dist(adj, [s]) for s in S]
        if t > 0 and max(d[v] for d in dists for v in S) < t:
            return False
    return not open_path_joins(adj, mask, outer, A, B)


def open_path_joins(adj, mask, outer: set, A: set, B: set) -> bool:
    """Is there an open path inside ``outer`` from ``B(A,1)`` to ``B(B,1)``?"""
    near_a = {w for a in A for w in adj[a] | {a}} & outer
    near_b = {w for b in B for w in adj[b] | {b}} & outer
    open_outer = {v for v in outer if mask[v]}
    reached = bfs_dist(adj, [v for v in near_a if mask[v]], open_outer)
    return any(v in reached for v in near_b)


def brute_separation(g: Graph, mask, x: int, L: int, t: int) -> bool:
    """Separation event by enumerating every pair of vertex subsets of the
    inner ball (outer loop over ``B`` from the top, inner loop over ``A``)."""
    adj = adjacency_sets(g)
    dx = bfs_dist(adj, [x])
    inner = sorted(v for v, d in dx.items() if d <= 3 * L // 6)
    outer = {v for v, d in dx.items() if d <= L}
    dist = {v: bfs_dist(adj, [v]) for v in inner}
    subsets = []
    for bits in range(1, 1 << len(inner)):
        S = {inner[i] for i in range(len(inner)) if bits >> i & 1}
        if not _connected(adj, S):
            continue
        if t > 0 and max(dist[u][v] for u in S for v in S) < t:
            continue
        subsets.append(S)
    for B in reversed(subsets):
        near_b = {w for b in B for w in adj[b] | {b}}
        for A in subsets:
            if A & near_b:
                continue
            if not open_path_joins(adj, mask, outer, A, B):
                return True
    return False
