"""Open clusters on finite windows: labelling, uniqueness, spanning and tails.

A cluster "touches the boundary" when it meets the region's metric
boundary (vertices with a neighbour outside the region, plus the host
graph's own truncation boundary).  That is the finite-window stand-in for
an infinite cluster throughout this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .environments import Configuration, EnvironmentSpec, sample_batch
from .errors import DomainError, OutOfRangeError
from .graph import Graph, as_vertex_set, ball, diameter, diameter_at_least
from .rng import derive_seed, generator
from .stats import wilson_interval

BATCH_NODES = 2_000_000


@dataclass
class Window:
    """A finite region with a designated boundary.

    ``sides`` (two disjoint vertex sets) turns spanning into a left-right
    crossing; otherwise spanning means ``center`` reaches ``boundary``.
    """

    vertices: np.ndarray
    boundary: np.ndarray
    radius: int
    center: int | None = None
    sides: tuple[np.ndarray, np.ndarray] | None = None


def region_boundary(g: Graph, region: np.ndarray) -> np.ndarray:
    """Vertices of ``region`` with a neighbour outside it, or on the host boundary."""
    inside = np.zeros(g.n, dtype=bool)
    inside[region] = True
    deg_in = np.add.reduceat(inside[g.indices].astype(np.int64), g.indptr[:-1])
    deg_in[g.degrees == 0] = 0
    edge = region[deg_in[region] < g.degrees[region]]
    hb = g.host_boundary
    return np.union1d(edge, hb[inside[hb]])


def ball_window(g: Graph, center, radius: int) -> Window:
    center = g.check_vertex(center)
    verts = ball(g, center, radius)
    return Window(verts, region_boundary(g, verts), int(radius), center)


def box_window(g: Graph, axis: int = 0) -> Window:
    """The whole of a ``grid_box`` host with its two faces normal to ``axis`` as sides."""
    if g.labels is None:
        raise DomainError("box windows need coordinate labels")
    coords = np.asarray(g.labels)
    lo = np.flatnonzero(coords[:, axis] == coords[:, axis].min())
    hi = np.flatnonzero(coords[:, axis] == coords[:, axis].max())
    verts = np.arange(g.n)
    extent = int(coords[:, axis].max() - coords[:, axis].min())
    return Window(verts, np.union1d(lo, hi), extent, None, (lo, hi))


@dataclass
class ClusterLabeling:
    g: Graph
    region: np.ndarray
    open: np.ndarray  # per region vertex
    label: np.ndarray  # per region vertex, -1 when closed
    sizes: np.ndarray  # per label
    roots: np.ndarray  # smallest vertex id of each cluster
    boundary: np.ndarray
    _diams: dict = field(default_factory=dict, repr=False)

    @property
    def count(self) -> int:
        return int(self.sizes.size)

    def index(self, x) -> int:
        i = int(np.searchsorted(self.region, x))
        if i >= self.region.size or self.region[i] != x:
            raise DomainError(f"vertex {x} lies outside the region")
        return i

    def label_of(self, x) -> int:
        return int(self.label[self.index(x)])

    def members(self, lab: int) -> np.ndarray:
        return self.region[self.label == lab]

    def touches_boundary(self, lab: int) -> bool:
        b = np.searchsorted(self.region, self.boundary)
        return bool(np.any(self.label[b] == lab))

    def diameter(self, lab: int) -> int:
        if lab not in self._diams:
            self._diams[lab] = diameter(self.g, self.members(lab))
        return self._diams[lab]


def _region_edges(g: Graph, region: np.ndarray) -> np.ndarray:
    key = ("region_edges", region.size, hash(region.tobytes()))
    if key not in g.cache:
        pos = np.full(g.n, -1, dtype=np.int64)
        pos[region] = np.arange(region.size)
        e = pos[g.edges()]
        g.cache[key] = e[(e[:, 0] >= 0) & (e[:, 1] >= 0)]
    return g.cache[key]


def _batch_labels(edges: np.ndarray, bits: np.ndarray) -> np.ndarray:
    """Component labels for a stack of configurations on one region.

    ``bits`` is ``(T, n)``; returns ``(T, n)`` labels that are unique across
    the whole stack (the trials are laid out as a block-diagonal graph) and
    ``-1`` at closed sites.
    """
    T, n = bits.shape
    keep = bits[:, edges[:, 0]] & bits[:, edges[:, 1]]
    t, k = np.nonzero(keep)
    rows = edges[k, 0] + t * n
    cols = edges[k, 1] + t * n
    mat = sparse.csr_matrix((np.ones(rows.size, dtype=np.int8), (rows, cols)),
                            shape=(T * n, T * n))
    _, lab = csgraph.connected_components(mat, directed=False)
    lab = lab.reshape(T, n)
    lab[~bits] = -1
    return lab


def _as_bits(g: Graph, config, region: np.ndarray) -> np.ndarray:
    if isinstance(config, Configuration):
        mask = config.mask(g.n)
        if not np.isin(region, config.region).all():
            raise DomainError("configuration does not cover the region")
        return mask[region]
    arr = np.asarray(config, dtype=bool)
    if arr.shape == (g.n,):
        return arr[region]
    if arr.shape == region.shape:
        return arr
    raise DomainError("configuration must be a Configuration, a mask over the graph, "
                      "or a mask over the region")


def label_clusters(g: Graph, config, region=None) -> ClusterLabeling:
    """Open clusters of ``config`` inside ``region`` (default: whole graph).

    Labels are dense integers ordered by each cluster's smallest vertex id.
    """
    region = np.arange(g.n) if region is None else as_vertex_set(g, region)
    bits = _as_bits(g, config, region)
    raw = _batch_labels(_region_edges(g, region), bits[None, :])[0]
    open_idx = np.flatnonzero(raw >= 0)
    # first occurrence in increasing vertex order gives the smallest member
    uniq, first = np.unique(raw[open_idx], return_index=True)
    order = np.argsort(open_idx[first], kind="stable")
    rank = np.empty(uniq.size, dtype=np.int64)
    rank[order] = np.arange(uniq.size)
    label = np.full(region.size, -1, dtype=np.int64)
    label[open_idx] = rank[np.searchsorted(uniq, raw[open_idx])]
    sizes = np.bincount(label[open_idx], minlength=uniq.size)
    roots = region[open_idx[first[order]]]
    return ClusterLabeling(g, region, bits, label, sizes, roots, region_boundary(g, region))


def cluster_stats(labeling: ClusterLabeling, x, with_diameter: bool = True):
    """``(size, diameter, touches_boundary)`` of the open cluster of ``x``.

    A closed ``x`` has the empty cluster: ``(0, None, False)``.
    """
    lab = labeling.label_of(x)
    if lab < 0:
        return 0, None, False
    diam = labeling.diameter(lab) if with_diameter else None
    return int(labeling.sizes[lab]), diam, labeling.touches_boundary(lab)


# --------------------------------------------------------------------------
# uniqueness

def macroscopic_counts(g: Graph, window: Window, bits: np.ndarray) -> np.ndarray:
    """Per trial, the number of clusters touching the boundary with diameter >= radius/2."""
    region = window.vertices
    edges = _region_edges(g, region)
    bpos = np.searchsorted(region, window.boundary)
    need = math.ceil(window.radius / 2)
    out = np.zeros(bits.shape[0], dtype=np.int64)
    step = max(1, BATCH_NODES // region.size)
    for s in range(0, bits.shape[0], step):
        labs = _batch_labels(edges, bits[s:s + step])
        for t in range(labs.shape[0]):
            row = labs[t]
            touching = np.unique(row[bpos])
            touching = touching[touching >= 0]
            if touching.size == 0:
                continue
            sizes = np.bincount(row[row >= 0])
            count = 0
            for lab in touching:
                if sizes[lab] <= need:  # too few vertices to span the required diameter
                    continue
                if diameter_at_least(g, region[row == lab], need):
                    count += 1
            out[s + t] = count
    return out


def uniqueness_stats(g: Graph, spec: EnvironmentSpec, window: Window, trials: int,
                     seed: int) -> dict:
    """Frequency of at most one macroscopic cluster, and the mean count."""
    bits = sample_batch(spec, g, window.vertices, derive_seed(seed, "uniqueness"),
                        np.arange(trials))
    counts = macroscopic_counts(g, window, bits)
    k = int((counts <= 1).sum())
    return {"trials": trials, "freq_at_most_one": k / trials,
            "freq_exactly_one": float((counts == 1).mean()),
            "mean_count": float(counts.mean()), "ci_at_most_one": wilson_interval(k, trials),
            "counts": np.bincount(counts).tolist(),
            "surrogate": "touches window boundary and diameter >= radius/2"}


# --------------------------------------------------------------------------
# spanning sweep

class UnionFind:
    """Union by size with path halving; tracks a bitmask of touched sides per root."""

    def __init__(self, n: int, flags=None):
        self.parent = list(range(n))
        self.size = [1] * n
        self.flags = list(flags) if flags is not None else [0] * n

    def find(self, a: int) -> int:
        parent = self.parent
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(self, a: int, b: int) -> int:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return ra
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        self.flags[ra] |= self.flags[rb]
        return ra


def spanning_threshold(g: Graph, window: Window, u: np.ndarray) -> float:
    """Smallest ``p`` at which ``{v : u_v < p}`` spans ``window`` (Newman-Ziff order).

    Sites are opened in increasing order of their uniforms ``u`` (one per
    window vertex); the returned value is the uniform of the site whose
    opening first creates a spanning cluster, or ``inf`` if none does.
    """
    region = window.vertices
    n = region.size
    pos = np.full(g.n, -1, dtype=np.int64)
    pos[region] = np.arange(n)
    flags = np.zeros(n, dtype=np.int64)
    if window.sides is not None:
        flags[pos[window.sides[0]]] |= 1
        flags[pos[window.sides[1]]] |= 2
    else:
        if window.center is None:
            raise DomainError("window needs sides or a center")
        flags[pos[window.center]] |= 1
        flags[pos[window.boundary]] |= 2
    uf = UnionFind(n, flags.tolist())
    nbrs = [pos[g.neighbors(v)] for v in region]
    nbrs = [nb[nb >= 0].tolist() for nb in nbrs]
    is_open = [False] * n
    order = np.argsort(u, kind="stable")
    for i in order.tolist():
        is_open[i] = True
        root = uf.find(i)
        for j in nbrs[i]:
            if is_open[j]:
                root = uf.union(root, j)
        if uf.flags[root] == 3:
            return float(u[i])
    return math.inf


def pc_sweep(g: Graph, window: Window, samples: int, p_grid, seed: int) -> dict:
    """Spanning probability on ``p_grid`` from per-sample Newman-Ziff thresholds.

    Each sample draws one uniform per site; the sample spans at ``p`` iff
    its threshold is ``< p``, so every sample's indicator is monotone in
    ``p`` and the curve is nondecreasing by construction.
    """
    p_grid = np.asarray(p_grid, dtype=float)
    if np.any(np.diff(p_grid) < 0) or p_grid.min(initial=0) < 0 or p_grid.max(initial=1) > 1:
        raise DomainError("p_grid must be sorted within [0, 1]")
    thresholds = np.array([spanning_threshold(g, window,
                                              generator(seed, k).random(window.vertices.size))
                           for k in range(samples)])
    hits = (thresholds[None, :] < p_grid[:, None]).sum(axis=1)
    prob = hits / samples
    ci = [wilson_interval(int(h), samples) for h in hits]
    return {"p": p_grid.tolist(), "spanning_prob": prob.tolist(), "ci": ci,
            "thresholds": thresholds, "samples": samples}


# --------------------------------------------------------------------------
# finite-cluster tail

@dataclass
class TailCurve:
    V_values: list[int]
    probs: list[float]
    chi: float
    weighted: list[float]
    ci: list[tuple[float, float]] = field(default_factory=list)
    counts: list[int] = field(default_factory=list)
    trials: int = 0
    flagged: bool = False
    note: str = ""


def origin_cluster_sizes(g: Graph, window: Window, x: int, bits: np.ndarray):
    """Per trial: size of the cluster of ``x`` and whether it touches the boundary."""
    region = window.vertices
    edges = _region_edges(g, region)
    xi = int(np.searchsorted(region, x))
    bpos = np.searchsorted(region, window.boundary)
    sizes = np.zeros(bits.shape[0], dtype=np.int64)
    touch = np.zeros(bits.shape[0], dtype=bool)
    step = max(1, BATCH_NODES // region.size)
    for s in range(0, bits.shape[0], step):
        labs = _batch_labels(edges, bits[s:s + step])
        lx = labs[:, xi]
        same = (labs == lx[:, None]) & (lx[:, None] >= 0)
        sizes[s:s + labs.shape[0]] = same.sum(axis=1)
        touch[s:s + labs.shape[0]] = same[:, bpos].any(axis=1)
    return sizes, touch


def tail_estimate(g: Graph, spec: EnvironmentSpec, x, V_values, chi: float, trials: int,
                  seed: int, window: Window | int) -> TailCurve:
    """Monte-Carlo ``P[V < |C_x| < inf]`` with "finite" meaning the cluster
    misses the window boundary.  All ``V`` share the same trials, so the
    estimates are exactly nonincreasing in ``V``."""
    x = g.check_vertex(x)
    if not isinstance(window, Window):
        window = ball_window(g, x, int(window))
    V_values = [int(v) for v in V_values]
    if max(V_values) >= window.vertices.size:
        raise OutOfRangeError(f"V={max(V_values)} is not below the window volume "
                              f"{window.vertices.size}", maximum=window.vertices.size - 1)
    bits = sample_batch(spec, g, window.vertices, derive_seed(seed, "tail"), np.arange(trials))
    sizes, touch = origin_cluster_sizes(g, window, x, bits)
    finite = ~touch
    counts = [int(np.sum(finite & (sizes > V))) for V in V_values]
    probs = [c / trials for c in counts]
    flagged = max(V_values) > window.radius / 4
    return TailCurve(V_values, probs, chi, [V**chi * p for V, p in zip(V_values, probs)],
                     [wilson_interval(c, trials) for c in counts], counts, trials, flagged,
                     "finite = cluster does not touch the window boundary"
                     + ("; max V exceeds radius/4, boundary effects possible" if flagged else ""))
