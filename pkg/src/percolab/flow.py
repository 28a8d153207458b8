"""Unit-capacity max-flow with path decomposition and min-cut extraction."""

from __future__ import annotations

from collections import deque

INF = 1 << 30


class FlowNetwork:
    """Directed network stored as parallel arc lists (arc ``e ^ 1`` is the reverse of ``e``)."""

    def __init__(self, n_nodes: int):
        self.n = n_nodes
        self.head: list[list[int]] = [[] for _ in range(n_nodes)]
        self.to: list[int] = []
        self.cap: list[int] = []
        self.orig: list[int] = []

    def add_arc(self, u: int, v: int, cap: int) -> int:
        e = len(self.to)
        self.to += [v, u]
        self.cap += [cap, 0]
        self.orig += [cap, 0]
        self.head[u].append(e)
        self.head[v].append(e + 1)
        return e

    def max_flow(self, s: int, t: int) -> int:
        """Edmonds-Karp; every augmenting path carries one unit here."""
        flow = 0
        while True:
            parent = [-1] * self.n
            parent[s] = -2
            queue = deque([s])
            while queue and parent[t] == -1:
                u = queue.popleft()
                for e in self.head[u]:
                    v = self.to[e]
                    if self.cap[e] > 0 and parent[v] == -1:
                        parent[v] = e
                        queue.append(v)
            if parent[t] == -1:
                return flow
            push = INF
            v = t
            while v != s:
                e = parent[v]
                push = min(push, self.cap[e])
                v = self.to[e ^ 1]
            v = t
            while v != s:
                e = parent[v]
                self.cap[e] -= push
                self.cap[e ^ 1] += push
                v = self.to[e ^ 1]
            flow += push

    def flow_on(self, e: int) -> int:
        return self.orig[e] - self.cap[e]

    def residual_reachable(self, s: int) -> list[bool]:
        seen = [False] * self.n
        seen[s] = True
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for e in self.head[u]:
                v = self.to[e]
                if self.cap[e] > 0 and not seen[v]:
                    seen[v] = True
                    queue.append(v)
        return seen

    def decompose(self, s: int, t: int) -> list[list[int]]:
        """Split the current flow into ``s``-``t`` node sequences (cycles dropped)."""
        remaining = {}
        for u in range(self.n):
            for e in self.head[u]:
                if e % 2 == 0 and self.flow_on(e) > 0:
                    remaining[e] = self.flow_on(e)
        out_arcs: dict[int, list[int]] = {}
        for e in remaining:
            out_arcs.setdefault(self.to[e ^ 1], []).append(e)
        paths = []
        while True:
            walk = [s]
            arcs: list[int] = []
            pos = {s: 0}
            while walk[-1] != t:
                u = walk[-1]
                live = [e for e in out_arcs.get(u, ()) if remaining[e] > 0]
                if not live:
                    break
                e = live[0]
                v = self.to[e]
                if v in pos:
                    # cancel the cycle we just closed
                    cut = pos[v]
                    for a in arcs[cut:] + [e]:
                        remaining[a] -= 1
                    for w in walk[cut + 1:]:
                        del pos[w]
                    walk = walk[:cut + 1]
                    arcs = arcs[:cut]
                    continue
                arcs.append(e)
                pos[v] = len(walk)
                walk.append(v)
            if walk[-1] != t:
                return paths
            for e in arcs:
                remaining[e] -= 1
            paths.append(walk)
