"""Immutable locally finite graphs, metric primitives and generators.

Vertices are dense integers ``0..n-1``.  Vertex sets are passed around as
sorted ``int64`` numpy arrays; any iterable of ids is accepted on input.
Fractional radii are truncated with ``floor`` because graph distances are
integers.
"""

from __future__ import annotations

import itertools
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .errors import DomainError, OutOfRangeError, ParseError

FORMAT_HEADER = "plgraph 1"


class Graph:
    """Undirected simple connected graph stored in CSR form.

    ``labels`` holds coordinates for generated families (``None`` for loaded
    graphs).  ``host_boundary`` marks the truncation boundary of a finite
    piece standing in for an infinite graph; when unknown it falls back to
    the vertices whose degree is below the maximum degree.
    """

    def __init__(self, indptr, indices, labels=None, host_boundary=None, name=""):
        self.indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(indices, dtype=np.int64)
        self.indptr.flags.writeable = False
        self.indices.flags.writeable = False
        self.n = len(self.indptr) - 1
        self.degrees = np.diff(self.indptr)
        self.degrees.flags.writeable = False
        self.max_degree = int(self.degrees.max()) if self.n else 0
        self.labels = labels
        self._label_index = None
        self._host_boundary = host_boundary
        self.name = name
        # per-graph memo for derived geometry (balls, candidate families...)
        self.cache: dict = {}

    @classmethod
    def from_edges(cls, n, edges, **kwargs) -> "Graph":
        edges = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges,
                           dtype=np.int64).reshape(-1, 2)
        if len(edges) and (edges.min() < 0 or edges.max() >= n):
            raise DomainError("edge endpoint outside [0, n)")
        if np.any(edges[:, 0] == edges[:, 1]):
            raise DomainError("self-loops are not allowed")
        u = np.concatenate([edges[:, 0], edges[:, 1]])
        v = np.concatenate([edges[:, 1], edges[:, 0]])
        order = np.lexsort((v, u))
        u, v = u[order], v[order]
        if len(u) > 1 and np.any((u[1:] == u[:-1]) & (v[1:] == v[:-1])):
            raise DomainError("duplicate edges are not allowed")
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(indptr, u + 1, 1)
        return cls(np.cumsum(indptr), v, **kwargs)

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    @property
    def adjacency(self) -> list[tuple[int, ...]]:
        return [tuple(int(w) for w in self.neighbors(v)) for v in range(self.n)]

    def edges(self) -> np.ndarray:
        """All edges as an ``(m, 2)`` array with ``u < v``, lexicographically sorted."""
        u = np.repeat(np.arange(self.n), self.degrees)
        keep = u < self.indices
        return np.column_stack([u[keep], self.indices[keep]])

    @property
    def num_edges(self) -> int:
        return int(self.indices.size // 2)

    def csr(self) -> sparse.csr_matrix:
        if "csr" not in self.cache:
            data = np.ones(self.indices.size, dtype=np.int8)
            self.cache["csr"] = sparse.csr_matrix(
                (data, self.indices, self.indptr), shape=(self.n, self.n))
        return self.cache["csr"]

    def index_of(self, label) -> int:
        if self.labels is None:
            raise DomainError(f"graph {self.name!r} carries no vertex labels")
        if self._label_index is None:
            self._label_index = {lab: i for i, lab in enumerate(self.labels)}
        try:
            return self._label_index[tuple(label) if not isinstance(label, tuple) else label]
        except KeyError:
            raise DomainError(f"no vertex with label {label!r}") from None

    @property
    def host_boundary(self) -> np.ndarray:
        if self._host_boundary is None:
            self._host_boundary = np.flatnonzero(self.degrees < self.max_degree)
        return np.asarray(self._host_boundary, dtype=np.int64)

    def check_vertex(self, x) -> int:
        if not isinstance(x, (int, np.integer)) or not 0 <= x < self.n:
            raise DomainError(f"invalid vertex id {x!r} (graph has {self.n} vertices)")
        return int(x)

    def __eq__(self, other):
        return (isinstance(other, Graph) and self.n == other.n
                and np.array_equal(self.indptr, other.indptr)
                and np.array_equal(self.indices, other.indices))

    __hash__ = object.__hash__

    def __repr__(self):
        return f"Graph({self.name or 'unnamed'}, n={self.n}, m={self.num_edges}, max_degree={self.max_degree})"


@dataclass(frozen=True)
class PathSeq:
    """A path ``vertices[0], ..., vertices[length]`` in a graph."""

    vertices: tuple[int, ...]

    @property
    def length(self) -> int:
        return len(self.vertices) - 1

    def is_valid(self, g: Graph) -> bool:
        return all(int(b) in set(g.neighbors(a).tolist())
                   for a, b in zip(self.vertices, self.vertices[1:]))


def as_vertex_set(g: Graph, vertices) -> np.ndarray:
    arr = np.unique(np.asarray(list(vertices) if not isinstance(vertices, np.ndarray)
                               else vertices, dtype=np.int64))
    if arr.size and (arr[0] < 0 or arr[-1] >= g.n):
        raise DomainError("vertex set contains ids outside the graph")
    return arr


def _gather(indptr, indices, frontier):
    starts = indptr[frontier]
    counts = indptr[frontier + 1] - starts
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    offsets = np.repeat(starts - (np.cumsum(counts) - counts), counts) + np.arange(total)
    return indices[offsets]


def neighborhood_of(g: Graph, S: np.ndarray) -> np.ndarray:
    """All neighbours of the vertices in ``S`` (with repetition)."""
    return _gather(g.indptr, g.indices, np.asarray(S, dtype=np.int64))


def bfs_distances(g: Graph, sources, max_depth=None, allowed=None) -> np.ndarray:
    """Multi-source BFS distances; ``-1`` marks unreached vertices.

    ``allowed`` (boolean mask) restricts the search to an induced subgraph.
    """
    dist = np.full(g.n, -1, dtype=np.int64)
    frontier = np.unique(np.asarray(sources, dtype=np.int64))
    if allowed is not None:
        frontier = frontier[allowed[frontier]]
    dist[frontier] = 0
    depth = 0
    while frontier.size and (max_depth is None or depth < max_depth):
        nb = _gather(g.indptr, g.indices, frontier)
        nb = nb[dist[nb] < 0]
        if allowed is not None:
            nb = nb[allowed[nb]]
        frontier = np.unique(nb)
        depth += 1
        dist[frontier] = depth
    return dist


def ball(g: Graph, x, r) -> np.ndarray:
    """``B(x, r) = {y : d(x, y) <= floor(r)}`` as a sorted id array."""
    x = g.check_vertex(x)
    if r < 0:
        raise DomainError("radius must be nonnegative")
    dist = bfs_distances(g, [x], max_depth=math.floor(r))
    return np.flatnonzero(dist >= 0)


def set_ball(g: Graph, S, r) -> np.ndarray:
    """The ``r``-neighbourhood ``B(S, r)`` of a vertex set."""
    dist = bfs_distances(g, as_vertex_set(g, S), max_depth=math.floor(r))
    return np.flatnonzero(dist >= 0)


def boundary(g: Graph, A, ambient=None) -> np.ndarray:
    """Edge boundary of ``A`` (relative to ``ambient`` when given).

    Returns an ``(k, 2)`` array of edges ``(x, y)`` with ``x`` in ``A``.
    """
    A = as_vertex_set(g, A)
    in_a = np.zeros(g.n, dtype=bool)
    in_a[A] = True
    outside = ~in_a
    if ambient is not None:
        amb = as_vertex_set(g, ambient)
        in_amb = np.zeros(g.n, dtype=bool)
        in_amb[amb] = True
        if not in_amb[A].all():
            raise DomainError("A is not contained in the ambient set")
        outside &= in_amb
    src = np.repeat(A, g.degrees[A])
    dst = _gather(g.indptr, g.indices, A)
    keep = outside[dst]
    return np.column_stack([src[keep], dst[keep]])


def distance(g: Graph, A, B) -> int:
    """Minimum graph distance between two nonempty vertex sets."""
    A, B = as_vertex_set(g, A), as_vertex_set(g, B)
    if A.size == 0 or B.size == 0:
        raise DomainError("distance between empty sets is undefined")
    dist = bfs_distances(g, A)
    d = dist[B]
    d = d[d >= 0]
    if d.size == 0:
        raise DomainError("sets lie in different components")
    return int(d.min())


def eccentricity(g: Graph, x) -> int:
    return int(bfs_distances(g, [g.check_vertex(x)]).max())


def diameter(g: Graph, A) -> int:
    """``max d_g(a, b)`` over ``a, b`` in ``A``, measured in the ambient metric."""
    A = as_vertex_set(g, A)
    if A.size == 0:
        raise DomainError("diameter of an empty set is undefined")
    best = 0
    for a in A:
        best = max(best, int(bfs_distances(g, [a])[A].max()))
    return best


def diameter_at_least(g: Graph, A, t: int, allowed=None) -> bool:
    """Decide ``diameter(A) >= t`` with depth-limited searches.

    ``allowed`` may restrict the searches to a subgraph known to contain
    every geodesic between points of ``A`` (e.g. a ball twice as large).
    """
    A = np.asarray(A, dtype=np.int64)
    if t <= 0:
        return A.size > 0
    if A.size <= 1:
        return False
    a = A[0]
    for _ in range(2):
        dist = bfs_distances(g, [a], max_depth=t - 1, allowed=allowed)
        da = dist[A]
        if np.any(da < 0):
            return True
        a = A[int(np.argmax(da))]
    for a in A:
        if np.any(bfs_distances(g, [a], max_depth=t - 1, allowed=allowed)[A] < 0):
            return True
    return False


def connected_components(g: Graph, S) -> list[np.ndarray]:
    """Partition ``S`` into components of the subgraph induced by ``S``.

    Components are ordered by their smallest vertex.
    """
    S = as_vertex_set(g, S)
    if S.size == 0:
        return []
    sub = g.csr()[S][:, S]
    k, lab = csgraph.connected_components(sub, directed=False)
    order = np.argsort(lab, kind="stable")
    splits = np.flatnonzero(np.diff(lab[order])) + 1
    comps = [S[idx] for idx in np.split(order, splits)]
    comps.sort(key=lambda c: int(c[0]))
    return comps


def is_connected(g: Graph, S) -> bool:
    return len(connected_components(g, S)) == 1


def geodesic_ray(g: Graph, x, length: int) -> PathSeq:
    """Initial segment of a geodesic from ``x`` to a farthest vertex.

    Satisfies ``d(p[i], p[j]) = |i - j|``; the finite stand-in for a
    half-axis path.
    """
    x = g.check_vertex(x)
    dist = bfs_distances(g, [x])
    ecc = int(dist.max())
    if length < 0 or length > ecc:
        raise OutOfRangeError(
            f"ray length {length} exceeds eccentricity {ecc} of vertex {x}", maximum=ecc)
    far = int(np.flatnonzero(dist == ecc)[0])
    path = [far]
    while path[-1] != x:
        v = path[-1]
        nb = g.neighbors(v)
        path.append(int(nb[dist[nb] == dist[v] - 1][0]))
    path.reverse()
    return PathSeq(tuple(path[:length + 1]))


# --------------------------------------------------------------------------
# generators

def _lattice_graph(coords: np.ndarray, lo: np.ndarray, shape, name, boundary_mask):
    """Nearest-neighbour graph on integer points ``coords`` (rows)."""
    n, dim = coords.shape
    lookup = np.full(int(np.prod(shape)), -1, dtype=np.int64)
    flat = np.ravel_multi_index(tuple((coords - lo).T), shape)
    lookup[flat] = np.arange(n)
    edges = []
    for axis in range(dim):
        shifted = coords.copy()
        shifted[:, axis] += 1
        inside = shifted[:, axis] - lo[axis] < shape[axis]
        tgt = np.full(n, -1, dtype=np.int64)
        tgt[inside] = lookup[np.ravel_multi_index(tuple((shifted[inside] - lo).T), shape)]
        ok = tgt >= 0
        edges.append(np.column_stack([np.flatnonzero(ok), tgt[ok]]))
    labels = [tuple(int(c) for c in row) for row in coords]
    return Graph.from_edges(n, np.concatenate(edges), labels=labels,
                            host_boundary=np.flatnonzero(boundary_mask), name=name)


def grid_zd(dim: int, radius: int) -> Graph:
    """The ball of L1-radius ``radius`` around the origin of ``Z^dim``."""
    if dim < 1 or radius < 1:
        raise DomainError("grid_zd needs dim >= 1 and radius >= 1")
    axis = np.arange(-radius, radius + 1)
    pts = np.array(list(itertools.product(axis, repeat=dim)), dtype=np.int64)
    norm = np.abs(pts).sum(axis=1)
    pts = pts[norm <= radius]
    norm = norm[norm <= radius]
    lo = np.full(dim, -radius)
    return _lattice_graph(pts, lo, (2 * radius + 1,) * dim, f"Z{dim}[r={radius}]",
                          norm == radius)


def grid_box(*shape: int) -> Graph:
    """The box ``[0, s_1) x ... x [0, s_k)`` of the hypercubic lattice."""
    if not shape or min(shape) < 1:
        raise DomainError("grid_box needs positive side lengths")
    pts = np.array(list(itertools.product(*[range(s) for s in shape])), dtype=np.int64)
    side = np.zeros(len(pts), dtype=bool)
    for axis, s in enumerate(shape):
        side |= (pts[:, axis] == 0) | (pts[:, axis] == s - 1)
    return _lattice_graph(pts, np.zeros(len(shape), dtype=np.int64), shape,
                          "box" + "x".join(map(str, shape)), side)


def regular_tree(branch: int, depth: int) -> Graph:
    """Ball of radius ``depth`` around a vertex of the ``branch``-regular tree.

    The root gets ``branch`` children and every other internal vertex
    ``branch - 1``, so all internal vertices have degree ``branch``.
    Labels are ``(depth, index_within_level)``.
    """
    if branch < 2 or depth < 1:
        raise DomainError("regular_tree needs branch >= 2 and depth >= 1")
    labels = [(0, 0)]
    edges = []
    level = [0]
    for lev in range(1, depth + 1):
        kids = branch if lev == 1 else branch - 1
        nxt = []
        for parent in level:
            for _ in range(kids):
                v = len(labels)
                labels.append((lev, len(nxt)))
                edges.append((parent, v))
                nxt.append(v)
        level = nxt
    boundary_ids = np.array(level, dtype=np.int64)
    return Graph.from_edges(len(labels), edges, labels=labels, host_boundary=boundary_ids,
                            name=f"tree(b={branch},depth={depth})")


def joined_grids(dim: int, radius: int) -> Graph:
    """Two copies of ``grid_zd(dim, radius)`` with their origins joined by one edge.

    Labels are ``(copy, *coords)`` with ``copy`` in ``{1, 2}``.
    """
    base = grid_zd(dim, radius)
    n = base.n
    e = base.edges()
    origin = base.index_of((0,) * dim)
    edges = np.concatenate([e, e + n, [[origin, origin + n]]])
    labels = [(1, *lab) for lab in base.labels] + [(2, *lab) for lab in base.labels]
    hb = np.concatenate([base.host_boundary, base.host_boundary + n])
    return Graph.from_edges(2 * n, edges, labels=labels, host_boundary=hb,
                            name=f"joinedZ{dim}[r={radius}]")


# --------------------------------------------------------------------------
# edge-list text format

def serialize(g: Graph) -> str:
    lines = [FORMAT_HEADER]
    lines.extend(f"{u} {v}" for u, v in g.edges())
    return "\n".join(lines) + "\n"


def write_edge_list(g: Graph, path) -> None:
    Path(path).write_text(serialize(g))


def from_edge_list(source) -> Graph:
    """Parse the ``plgraph 1`` edge-list format from text or a file path.

    Rejects self-loops, duplicate edges (in either orientation), gaps in
    the id range and disconnected graphs.
    """
    if isinstance(source, os.PathLike) or (isinstance(source, str) and "\n" not in source
                                           and Path(source).is_file()):
        text = Path(source).read_text()
    else:
        text = source
    header_seen = False
    edges: list[tuple[int, int]] = []
    seen: dict[tuple[int, int], int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if not header_seen:
            if line != FORMAT_HEADER:
                raise ParseError(f"expected header {FORMAT_HEADER!r}, got {line!r}", lineno)
            header_seen = True
            continue
        parts = line.split()
        if len(parts) != 2 or not all(p.isdigit() for p in parts):
            raise ParseError(f"expected two nonnegative integer ids, got {line!r}", lineno)
        u, v = int(parts[0]), int(parts[1])
        if u == v:
            raise ParseError(f"self-loop at vertex {u}", lineno)
        key = (min(u, v), max(u, v))
        if key in seen:
            raise ParseError(f"duplicate edge {key} (first on line {seen[key]})", lineno)
        seen[key] = lineno
        edges.append(key)
    if not header_seen:
        raise ParseError("empty input: missing header", 1)
    if not edges:
        raise ParseError("graph has no edges")
    n = max(max(e) for e in edges) + 1
    g = Graph.from_edges(n, edges, name="loaded")
    if bfs_distances(g, [0]).min() < 0:
        missing = int(np.flatnonzero(bfs_distances(g, [0]) < 0)[0])
        where = seen.get(next((e for e in seen if missing in e), None))
        raise ParseError(f"graph is disconnected (vertex {missing} unreachable from 0)", where)
    return g


def check_margin(g: Graph, x, radius, margin) -> None:
    """Require ``B(x, radius)`` to stay ``margin`` away from the host boundary.

    Working balls close to the truncation boundary would see artificial
    dead ends that the infinite graph does not have.
    """
    x = g.check_vertex(x)
    hb = g.host_boundary
    if hb.size == 0:
        return
    dist = bfs_distances(g, [x], max_depth=math.floor(radius) + math.floor(margin) - 1)
    near = dist[hb]
    near = near[near >= 0]
    if near.size:
        room = int(near.min()) - math.floor(radius)
        raise OutOfRangeError(
            f"B({x},{radius}) is only {room} steps from the host boundary; need {margin}",
            maximum=int(near.min()) - math.ceil(margin))
