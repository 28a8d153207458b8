"""Local isoperimetry, volume growth, disjoint paths and covering sets.

Ratios are ``|boundary_B(A)| / |A|^((d_i - 1) / d_i)`` where the boundary is
taken inside the subgraph induced by the ball ``B`` and ``|A| <= |B| / 2``.
"""

from __future__ import annotations

import heapq
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .errors import CapExceededError, DomainError, OutOfRangeError, PercolabError
from .flow import INF, FlowNetwork
from .graph import (Graph, PathSeq, as_vertex_set, ball, bfs_distances, eccentricity,
                    set_ball)
from .rng import generator

DEFAULT_ENUM_CAP = 24
EXPONENTIAL_THRESHOLD = 6.0


@dataclass
class IsoProfile:
    d_i: float
    c_i: float
    mode: str
    worst_set: np.ndarray | None
    worst_ratio: float
    examined: int = 0

    def as_record(self) -> dict:
        return {"d_i": self.d_i, "c_i": self.c_i, "mode": self.mode,
                "worst_ratio": self.worst_ratio, "examined": self.examined,
                "worst_set": None if self.worst_set is None else self.worst_set.tolist()}


@dataclass
class VolumeFit:
    d_u: float
    c_u: float
    d_l: float
    c_l: float
    anchors: list[int]
    r_max: int
    growth: str = "polynomial"
    sizes: np.ndarray = field(default=None, repr=False)  # (anchors, r_max) ball sizes

    def holds(self, sizes=None) -> bool:
        sizes = self.sizes if sizes is None else sizes
        r = np.arange(1, self.r_max + 1, dtype=float)
        return bool(np.all(sizes <= self.c_u * r**self.d_u * (1 + 1e-12))
                    and np.all(sizes >= self.c_l * r**self.d_l * (1 - 1e-12)))


@dataclass
class CoveringSet:
    K: np.ndarray
    x: int
    r: int
    s: int
    d: float
    c5: float
    d_u: float
    attempts: int
    method: str  # "random" or "greedy"

    @property
    def size_bound(self) -> float:
        return self.c5 * self.r**self.d_u / self.s**self.d


@dataclass
class DisjointPaths:
    count: int
    paths: list[PathSeq]
    cut: np.ndarray  # vertex ids (vertex mode) or (k, 2) edges (edge mode)
    mode: str


def _local_ball(g: Graph, x, r):
    B = ball(g, x, r)
    pos = np.full(g.n, -1, dtype=np.int64)
    pos[B] = np.arange(B.size)
    e = g.edges()
    e = e[(pos[e[:, 0]] >= 0) & (pos[e[:, 1]] >= 0)]
    return B, pos[e]


def _ratio(bd, size, d_i):
    return bd / size ** ((d_i - 1.0) / d_i)


def _check_d_i(d_i):
    if not d_i > 1:
        raise DomainError(f"d_i must exceed 1, got {d_i}")


# --------------------------------------------------------------------------
# isoperimetric profiles

def verify_local_iso_exhaustive(g: Graph, x, r, d_i, cap: int = DEFAULT_ENUM_CAP) -> IsoProfile:
    """Minimal isoperimetric ratio over every nonempty ``A`` with ``|A| <= |B(x,r)|/2``."""
    _check_d_i(d_i)
    B, e = _local_ball(g, x, r)
    n = B.size
    if n > cap:
        raise CapExceededError(f"ball B({x},{r}) too large for exhaustive enumeration; "
                               "use the sampled mode", n, cap)
    half = n // 2
    if half == 0:
        raise DomainError("ball has a single vertex; no admissible subset")
    expo = (d_i - 1.0) / d_i
    ea = e[:, 0].astype(np.uint64)
    eb = e[:, 1].astype(np.uint64)
    bits = np.uint64(1) << np.arange(n, dtype=np.uint64)
    best, best_mask, examined = math.inf, 0, 0
    total = 1 << n
    chunk = 1 << 18
    for start in range(1, total, chunk):
        m = np.arange(start, min(start + chunk, total), dtype=np.uint64)
        size = np.zeros(m.size, dtype=np.int64)
        for b in bits:
            size += (m & b) != 0
        keep = size <= half
        m, size = m[keep], size[keep]
        if m.size == 0:
            continue
        bd = np.zeros(m.size, dtype=np.int64)
        for a, b in zip(ea, eb):
            bd += ((m >> a) ^ (m >> b)) & np.uint64(1) == 1
        ratio = bd / size.astype(float) ** expo
        i = int(np.argmin(ratio))
        examined += m.size
        if ratio[i] < best:
            best, best_mask = float(ratio[i]), int(m[i])
    worst = B[[i for i in range(n) if best_mask >> i & 1]]
    return IsoProfile(d_i, best, "exhaustive", worst, best, examined)


def _grow_min(indptr, indices, n, start, target, rng, expo):
    """Random frontier growth; returns best (ratio, size) over every prefix."""
    in_a = np.zeros(n, dtype=bool)
    frontier: list[int] = []
    where: dict[int, int] = {}
    deg = np.diff(indptr)
    order = [start]
    in_a[start] = True
    bd = int(deg[start])
    best = (bd / 1.0, 1)
    for w in indices[indptr[start]:indptr[start + 1]]:
        w = int(w)
        if w not in where:
            where[w] = len(frontier)
            frontier.append(w)
    while len(order) < target and frontier:
        j = int(rng.integers(len(frontier)))
        v = frontier[j]
        last = frontier.pop()
        if j < len(frontier):
            frontier[j] = last
            where[last] = j
        del where[v]
        nb = indices[indptr[v]:indptr[v + 1]]
        inside = int(in_a[nb].sum())
        bd += len(nb) - 2 * inside
        in_a[v] = True
        order.append(v)
        ratio = bd / len(order) ** expo
        if ratio < best[0]:
            best = (ratio, len(order))
        for w in nb:
            w = int(w)
            if not in_a[w] and w not in where:
                where[w] = len(frontier)
                frontier.append(w)
    return best, order


def _bottleneck_cuts(indptr, indices, n):
    """Components hanging off cut vertices, as ``(members, boundary)`` pairs.

    Iterative DFS with low-points; a child subtree whose low-point does not
    climb above its parent is separated from the rest by the parent alone.
    """
    tin = np.full(n, -1, dtype=np.int64)
    low = np.zeros(n, dtype=np.int64)
    parent = np.full(n, -1, dtype=np.int64)
    order: list[int] = []
    end = np.zeros(n, dtype=np.int64)
    for root in range(n):
        if tin[root] >= 0:
            continue
        tin[root] = low[root] = len(order)
        order.append(root)
        stack = [(root, indptr[root])]
        while stack:
            v, i = stack[-1]
            if i < indptr[v + 1]:
                stack[-1] = (v, i + 1)
                w = indices[i]
                if tin[w] < 0:
                    parent[w] = v
                    tin[w] = low[w] = len(order)
                    order.append(int(w))
                    stack.append((int(w), indptr[w]))
                elif w != parent[v]:
                    low[v] = min(low[v], tin[w])
            else:
                stack.pop()
                end[v] = len(order)
                p = parent[v]
                if p >= 0:
                    low[p] = min(low[p], low[v])
    order = np.asarray(order, dtype=np.int64)
    for c in range(n):
        p = parent[c]
        if p >= 0 and low[c] >= tin[p]:
            members = order[tin[c]:end[c]]
            nb = indices[indptr[p]:indptr[p + 1]]
            bd = int(np.isin(nb, members).sum())
            yield members, bd


def estimate_iso_profile_sampled(g: Graph, x, r, d_i, trials: int, seed: int,
                                 start=None, max_size=None) -> IsoProfile:
    """Minimal ratio over randomly sampled subsets of ``B(x, r)``.

    Candidates come from seeded random frontier growth (every prefix of a
    growth sequence is a connected set), from metric half-spaces
    ``{v : d(v,a) - d(v,b) <= t}`` and from the pieces cut off by single
    cut vertices.  The result bounds the true constant
    from above; it is not a certificate.  ``start`` forces the growth seed
    vertex and disables half-space candidates; ``max_size`` caps growth.
    """
    _check_d_i(d_i)
    if trials < 1:
        raise DomainError("trials must be >= 1")
    B, e = _local_ball(g, x, r)
    n = B.size
    half = n // 2
    if half == 0:
        raise DomainError("ball has a single vertex; no admissible subset")
    expo = (d_i - 1.0) / d_i
    local = Graph.from_edges(n, e)
    indptr, indices = local.indptr, local.indices
    cap = half if max_size is None else max(1, min(half, int(max_size)))
    forced = None
    if start is not None:
        forced = int(np.searchsorted(B, g.check_vertex(start)))
        if forced >= n or B[forced] != start:
            raise DomainError("forced start vertex lies outside the ball")
    best, best_set, examined = math.inf, None, 0
    if forced is None:
        for members, bd in _bottleneck_cuts(indptr, indices, n):
            size = min(members.size, n - members.size)
            if 1 <= size <= cap:
                examined += 1
                ratio = bd / size**expo
                if ratio < best:
                    mask = np.zeros(n, dtype=bool)
                    mask[members] = True
                    best, best_set = ratio, B[mask if members.size <= n - members.size else ~mask]
    for t in range(trials):
        rng = generator(seed, t)
        if forced is None and n >= 4 and rng.random() < 0.5:
            a, b = rng.choice(n, size=2, replace=False)
            f = (bfs_distances(local, [a]) - bfs_distances(local, [b])).astype(np.int64)
            levels = np.unique(f)
            # boundary count of every sublevel set {f <= t} in one pass
            lo = np.minimum(f[e[:, 0]], f[e[:, 1]])
            hi = np.maximum(f[e[:, 0]], f[e[:, 1]])
            idx_lo = np.searchsorted(levels, lo)
            idx_hi = np.searchsorted(levels, hi)
            delta = np.zeros(levels.size + 1, dtype=np.int64)
            np.add.at(delta, idx_lo, 1)
            np.add.at(delta, idx_hi, -1)
            bd = np.cumsum(delta)[:-1]
            counts = np.cumsum(np.bincount(np.searchsorted(levels, f), minlength=levels.size))
            sizes = np.minimum(counts, n - counts)
            ok = (sizes >= 1) & (sizes <= cap)
            examined += int(ok.sum())
            if ok.any():
                ratio = np.where(ok, bd / np.maximum(sizes, 1) ** expo, np.inf)
                i = int(np.argmin(ratio))
                if ratio[i] < best:
                    best = float(ratio[i])
                    below = f <= levels[i]
                    best_set = B[below if counts[i] <= n - counts[i] else ~below]
            continue
        s0 = forced if forced is not None else int(rng.integers(n))
        target = cap if max_size is not None else int(round(math.exp(rng.uniform(0, math.log(cap)))))
        (ratio, size), order = _grow_min(indptr, indices, n, s0, max(1, target), rng, expo)
        examined += len(order)
        if ratio < best:
            best, best_set = ratio, np.sort(B[order[:size]])
    return IsoProfile(d_i, best, "sampled", best_set, best, examined)


# --------------------------------------------------------------------------
# disjoint paths

def max_disjoint_paths(g: Graph, ambient, A, A2, mode: str = "vertex_disjoint") -> DisjointPaths:
    """Maximum number of pairwise disjoint paths inside ``ambient`` joining two sets.

    ``vertex_disjoint``: paths start in ``B(A,1)`` and end in ``B(A2,1)``
    (intersected with ``ambient``), share no vertex, and the dual object is
    a vertex cut.  ``edge_disjoint``: paths run from ``A`` to ``A2`` sharing
    no edge; the dual object is an edge cut.  The returned count is checked
    against the extracted cut before returning.
    """
    amb = as_vertex_set(g, ambient)
    A, A2 = as_vertex_set(g, A), as_vertex_set(g, A2)
    if A.size == 0 or A2.size == 0:
        raise DomainError("endpoint sets must be nonempty")
    if np.intersect1d(A, A2).size:
        raise DomainError("A and A' must be disjoint")
    in_amb = np.zeros(g.n, dtype=bool)
    in_amb[amb] = True
    if not (in_amb[A].all() and in_amb[A2].all()):
        raise DomainError("A and A' must lie inside the ambient set")
    pos = np.full(g.n, -1, dtype=np.int64)
    pos[amb] = np.arange(amb.size)
    e = g.edges()
    e = e[in_amb[e[:, 0]] & in_amb[e[:, 1]]]
    m = amb.size
    if mode == "vertex_disjoint":
        S = set_ball(g, A, 1)
        T = set_ball(g, A2, 1)
        S, T = S[in_amb[S]], T[in_amb[T]]
        net = FlowNetwork(2 * m + 2)
        src, snk = 2 * m, 2 * m + 1
        for i in range(m):
            net.add_arc(2 * i, 2 * i + 1, 1)
        for u, v in pos[e]:
            net.add_arc(2 * u + 1, 2 * v, INF)
            net.add_arc(2 * v + 1, 2 * u, INF)
        for v in pos[S]:
            net.add_arc(src, 2 * v, INF)
        for v in pos[T]:
            net.add_arc(2 * v + 1, snk, INF)
        count = net.max_flow(src, snk)
        seen = net.residual_reachable(src)
        cut = amb[[i for i in range(m) if seen[2 * i] and not seen[2 * i + 1]]]
        paths = [PathSeq(tuple(int(amb[node // 2]) for node in walk[1:-1:2]))
                 for walk in net.decompose(src, snk)]
        blocked = in_amb.copy()
        blocked[cut] = False
        reach = bfs_distances(g, S, allowed=blocked)
        leaks = bool(np.any(reach[T] >= 0))
    elif mode == "edge_disjoint":
        net = FlowNetwork(m + 2)
        src, snk = m, m + 1
        pairs = []
        for u, v in pos[e]:
            pairs.append((net.add_arc(u, v, 1), net.add_arc(v, u, 1)))
        for v in pos[A]:
            net.add_arc(src, v, INF)
        for v in pos[A2]:
            net.add_arc(v, snk, INF)
        count = net.max_flow(src, snk)
        seen = net.residual_reachable(src)
        cut_edges = [(int(amb[u]), int(amb[v])) for u, v in pos[e] if seen[u] != seen[v]]
        cut = np.array(sorted(cut_edges), dtype=np.int64).reshape(-1, 2)
        # an edge used in both directions carries no net flow
        for f, b in pairs:
            if net.flow_on(f) > 0 and net.flow_on(b) > 0:
                for arc in (f, b):
                    net.cap[arc] += 1
                    net.cap[arc ^ 1] -= 1
        paths = [PathSeq(tuple(int(amb[node]) for node in walk[1:-1]))
                 for walk in net.decompose(src, snk)]
        leaks = _edge_cut_leaks(g, amb, A, A2, cut)
    else:
        raise DomainError(f"unknown mode {mode!r}")
    if len(paths) != count or len(cut) != count or leaks:
        raise PercolabError("max-flow/min-cut self-check failed")
    return DisjointPaths(count, paths, cut, mode)


def _edge_cut_leaks(g, amb, A, A2, cut) -> bool:
    """True when ``A`` still reaches ``A2`` inside ``amb`` after removing ``cut``."""
    removed = {(int(u), int(v)) for u, v in cut} | {(int(v), int(u)) for u, v in cut}
    in_amb = np.zeros(g.n, dtype=bool)
    in_amb[amb] = True
    seen = np.zeros(g.n, dtype=bool)
    seen[A] = True
    stack = [int(a) for a in A]
    while stack:
        u = stack.pop()
        for w in g.neighbors(u):
            w = int(w)
            if in_amb[w] and not seen[w] and (u, w) not in removed:
                seen[w] = True
                stack.append(w)
    return bool(seen[A2].any())


# --------------------------------------------------------------------------
# volume growth

def ball_sizes(g: Graph, x, r_max: int) -> np.ndarray:
    """``|B(x, r)|`` for ``r = 1..r_max``."""
    dist = bfs_distances(g, [g.check_vertex(x)], max_depth=r_max)
    counts = np.bincount(dist[dist >= 0], minlength=r_max + 1)
    return np.cumsum(counts)[1:]


def fit_volume_bounds(g: Graph, anchors, r_max: int,
                      max_poly_degree: float = EXPONENTIAL_THRESHOLD) -> VolumeFit:
    """Fit ``c_l r^d_l <= |B(x,r)| <= c_u r^d_u`` over anchors and ``1 <= r <= r_max``.

    The exponent is the least-squares log-log slope over the upper half of
    the radius range; constants are then inflated (resp. deflated) until
    the inequalities hold at every sampled point.  Growth is diagnosed as
    exponential when the local exponent at ``r_max`` exceeds
    ``max_poly_degree``.
    """
    anchors = [g.check_vertex(a) for a in anchors]
    if not anchors or r_max < 1:
        raise DomainError("need at least one anchor and r_max >= 1")
    for a in anchors:
        ecc = eccentricity(g, a)
        if ecc < r_max:
            raise OutOfRangeError(f"r_max={r_max} exceeds eccentricity {ecc} of anchor {a}",
                                  maximum=ecc)
    sizes = np.array([ball_sizes(g, a, r_max) for a in anchors], dtype=float)
    r = np.arange(1, r_max + 1, dtype=float)
    lo = r_max // 2 if r_max >= 4 else 0
    xs = np.tile(np.log(r[lo:]), len(anchors))
    ys = np.log(sizes[:, lo:]).ravel()
    slope = float(np.polyfit(xs, ys, 1)[0]) if r_max >= 2 else 1.0
    slope = max(slope, 1e-9)
    c_u = float(np.max(sizes / r**slope))
    c_l = float(np.min(sizes / r**slope))
    if r_max >= 2:
        local = np.log(sizes[:, -1] / sizes[:, -2]) / math.log(r_max / (r_max - 1))
        growth = "exponential" if float(local.max()) > max_poly_degree else "polynomial"
    else:
        growth = "polynomial"
    fit = VolumeFit(slope, c_u, slope, c_l, anchors, r_max, growth, sizes)
    while not fit.holds():  # guard against rounding at the extremal point
        fit.c_u *= 1 + 1e-12
        fit.c_l *= 1 - 1e-12
    return fit


def verify_volume_lower_induction(g: Graph, x, r_max: int, d_i: float, c_i: float) -> dict:
    """Check ``|B(x,j)| >= (c3 j)^d_i`` for ``j <= r_max`` with ``c3 = min(1, c_i / (2^d_i d_i Delta))``."""
    _check_d_i(d_i)
    if not c_i > 0:
        raise DomainError("c_i must be positive")
    c3 = min(1.0, c_i / (2**d_i * d_i * g.max_degree))
    sizes = ball_sizes(g, x, r_max)
    j = np.arange(1, r_max + 1, dtype=float)
    ok = sizes >= (c3 * j) ** d_i
    bad = np.flatnonzero(~ok)
    return {"c3": c3, "passed": bool(ok.all()), "checked": int(r_max),
            "first_failure": None if bad.size == 0 else int(bad[0] + 1),
            "sizes": sizes.tolist()}


# --------------------------------------------------------------------------
# covering sets

def default_c5(c_u: float, d_u: float) -> float:
    return 4.0 * c_u * (5.0 / 6.0) ** d_u * 2.0


def _covering_geometry(g: Graph, x, r, s):
    key = ("cover", x, r, s)
    if key not in g.cache:
        g.cache[key] = (ball(g, x, 5 * r // 6), ball(g, x, 4 * r // 6))
    return g.cache[key]


def check_covering(g: Graph, x, r, s, K) -> bool:
    """Independent re-check: every vertex of ``B(x, 4r/6)`` is within ``s/6`` of ``K``."""
    K = as_vertex_set(g, K)
    if K.size == 0:
        return False
    dist = bfs_distances(g, K, max_depth=s // 6)
    return bool(np.all(dist[ball(g, x, 4 * r // 6)] >= 0))


def sample_covering_candidates(g: Graph, x, r, s, d, seed, attempt=0) -> np.ndarray:
    """One draw of the random centre set: each ``y`` in ``B(x, 5r/6)`` kept w.p. ``s^-d``."""
    region, _ = _covering_geometry(g, x, r, s)
    keep = generator(seed, attempt).random(region.size) < float(s) ** (-d)
    return region[keep]


def _greedy_cover(g: Graph, centres, target, radius) -> np.ndarray:
    """Greedy set cover of ``target`` by radius-``radius`` balls around ``centres``."""
    step = g.csr() + sparse.identity(g.n, dtype=np.int8, format="csr")
    reach = step[centres]
    for _ in range(radius - 1):
        reach = (reach @ step).astype(bool).astype(np.int8)
    cover = reach[:, target].astype(bool).tocsr()
    uncovered = np.ones(target.size, dtype=bool)
    gain = np.asarray(cover.sum(axis=1)).ravel()
    heap = [(-int(c), i) for i, c in enumerate(gain)]
    heapq.heapify(heap)
    chosen = []
    left = target.size
    while left and heap:
        neg, i = heapq.heappop(heap)
        cols = cover.indices[cover.indptr[i]:cover.indptr[i + 1]]
        fresh = int(uncovered[cols].sum())
        if fresh != -neg:
            if fresh:
                heapq.heappush(heap, (-fresh, i))
            continue
        chosen.append(i)
        uncovered[cols] = False
        left -= fresh
    if left:
        raise PercolabError("greedy cover failed: target not coverable from centres")
    return np.sort(centres[chosen])


def build_covering_set(g: Graph, x, r: int, s: int, d: float, seed: int,
                       max_retries: int = 10, c5: float | None = None,
                       fit: VolumeFit | None = None) -> CoveringSet:
    """Random covering of ``B(x, 4r/6)`` by ``s/6``-balls centred in ``B(x, 5r/6)``.

    Each attempt keeps every candidate independently with probability
    ``s^-d`` and is accepted when it covers and respects the size bound
    ``c5 r^d_u / s^d``.  After ``max_retries`` failures a greedy cover is
    returned instead (``method == "greedy"``).
    """
    x = g.check_vertex(x)
    if s < 6 or s > r:
        raise DomainError(f"need 6 <= s <= r, got s={s}, r={r}")
    if s > r / 6:
        warnings.warn(f"s={s} exceeds r/6={r / 6:g}; the covering bound is not expected "
                      "to be sharp", stacklevel=2)
    if fit is None:
        fit = fit_volume_bounds(g, [x], min(r, eccentricity(g, x)))
    if not d < fit.d_l:
        raise DomainError(f"d={d} must be below the fitted lower exponent {fit.d_l:.3f}")
    if d > 0 and fit.d_l > d and s < math.log(max(r, 2)) ** (2.0 / (fit.d_l - d)):
        warnings.warn("s lies below the asymptotic regime (log r)^(2/(d_l-d))", stacklevel=2)
    c5 = default_c5(fit.c_u, fit.d_u) if c5 is None else float(c5)
    bound = c5 * r**fit.d_u / s**d
    region, target = _covering_geometry(g, x, r, s)
    radius = s // 6
    for attempt in range(max_retries):
        K = sample_covering_candidates(g, x, r, s, d, seed, attempt)
        if K.size and K.size <= bound and check_covering(g, x, r, s, K):
            return CoveringSet(K, x, r, s, d, c5, fit.d_u, attempt + 1, "random")
    K = _greedy_cover(g, region, target, radius)
    return CoveringSet(K, x, r, s, d, c5, fit.d_u, max_retries, "greedy")
