"""Separation events: two large connected sets near an anchor that no open
path inside a bigger ball joins.

Conventions: the sets live in ``B(x, inner(L))`` with ``inner(L) = ⌊3L/6⌋``,
open paths are confined to ``B(x, L)``, a path "connects" ``A`` to ``B``
when it starts in ``B(A,1)`` and ends in ``B(B,1)``, and diameters use the
ambient graph metric.  Deciding "no open path" reduces to cluster labels:
``A`` and ``B`` are separated iff no open cluster of ``B(x, L)`` meets both
``B(A,1)`` and ``B(B,1)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .environments import Configuration
from .errors import CapExceededError, DomainError, PreconditionError
from .graph import (
    Graph, as_vertex_set, ball, bfs_distances, connected_components, diameter_at_least,
    set_ball,
)
from .isoperimetry import CoveringSet, check_covering, max_disjoint_paths
from .percolation import label_clusters


@dataclass(frozen=True)
class SeparationThresholds:
    """Ratios and diameter rules of the separation event, with desk-scale floors."""

    inner_num: int = 3
    outer_num: int = 6
    denom: int = 6
    diam_divisor: int = 100
    diam_floor: int = 1
    diam_override: int | None = None
    relaxed_divisor: int = 1000
    distance_divisor: int = 750
    trim_divisor: int = 300
    scale_ratio: float = 4.0  # asymptotic regime uses 2000
    spacing_factor: int = 3
    c9: float = 1.0
    exact_cap: int = 16

    def inner(self, L: int) -> int:
        return self.inner_num * L // self.denom

    def outer(self, L: int) -> int:
        return self.outer_num * L // self.denom

    def diam(self, L: int) -> int:
        if self.diam_override is not None:
            return self.diam_override
        return max(self.diam_floor, L // self.diam_divisor)

    def relaxed_diam(self, L: int) -> int:
        return max(self.diam_floor, L // self.relaxed_divisor)

    def min_distance(self, L: int) -> int:
        return max(2, math.ceil(L / self.distance_divisor))

    def trim_radius(self, L: int) -> int:
        return max(1, L // self.trim_divisor)

    def as_record(self) -> dict:
        return asdict(self)


DEFAULT_THRESHOLDS = SeparationThresholds()


@dataclass
class SeparationWitness:
    x: int
    L: int
    A: np.ndarray
    B: np.ndarray
    thresholds: SeparationThresholds = DEFAULT_THRESHOLDS

    def to_json(self) -> str:
        return json.dumps({"x": int(self.x), "L": int(self.L), "A": self.A.tolist(),
                           "B": self.B.tolist(), "thresholds": self.thresholds.as_record()},
                          sort_keys=True)


@dataclass
class DetectorResult:
    verdict: str  # "separated", "not_separated" or "unknown"
    method: str  # "exact" or "heuristic"
    witness: SeparationWitness | None = None
    candidates: int = 0

    @property
    def separated(self) -> bool:
        return self.verdict == "separated"


def _config_mask(g: Graph, config, need: np.ndarray) -> np.ndarray:
    if isinstance(config, Configuration):
        if not np.isin(need, config.region).all():
            raise DomainError("configuration does not cover B(x, L)")
        return config.mask(g.n)
    mask = np.asarray(config, dtype=bool)
    if mask.shape != (g.n,):
        raise DomainError("configuration must be a Configuration or a mask over the graph")
    return mask


def _balls(g: Graph, x: int, L: int, th: SeparationThresholds):
    key = ("separation_balls", x, L, th.inner_num, th.outer_num, th.denom)
    if key not in g.cache:
        g.cache[key] = (ball(g, x, th.inner(L)), ball(g, x, th.outer(L)))
    return g.cache[key]


def _touch_labels(g: Graph, labeling, outer: np.ndarray, S: np.ndarray) -> set:
    """Open-cluster labels meeting ``B(S,1)`` inside ``outer``."""
    halo = set_ball(g, S, 1)
    halo = halo[np.isin(halo, outer)]
    labs = labeling.label[np.searchsorted(labeling.region, halo)]
    return set(labs[labs >= 0].tolist())


def is_witness(g: Graph, config, x, L: int, A, B,
               thresholds: SeparationThresholds = DEFAULT_THRESHOLDS) -> bool:
    """Check every condition of a separation witness ``(A, B)`` for ``(x, L)``."""
    x = g.check_vertex(x)
    inner, outer = _balls(g, x, L, thresholds)
    mask = _config_mask(g, config, outer)
    A, B = as_vertex_set(g, A), as_vertex_set(g, B)
    if A.size == 0 or B.size == 0:
        return False
    if not (np.isin(A, inner).all() and np.isin(B, inner).all()):
        return False
    if len(connected_components(g, A)) != 1 or len(connected_components(g, B)) != 1:
        return False
    if np.any(bfs_distances(g, A, max_depth=1)[B] >= 0):
        return False
    t = thresholds.diam(L)
    if not (diameter_at_least(g, A, t) and diameter_at_least(g, B, t)):
        return False
    lab = label_clusters(g, mask, outer)
    return not (_touch_labels(g, lab, outer, A) & _touch_labels(g, lab, outer, B))


# --------------------------------------------------------------------------
# heuristic detector

def _dilate(g: Graph, mask: np.ndarray) -> np.ndarray:
    return mask | (g.csr() @ mask.astype(np.int8) > 0)


def heuristic_candidates(g: Graph, mask: np.ndarray, inner: np.ndarray, outer: np.ndarray,
                         labeling) -> list[np.ndarray]:
    """Connected pieces of ``B(x, inner)`` worth pairing up, largest first:
    open pieces, closed pieces, pieces away from the largest cluster, and
    pieces that only see a single cluster."""
    open_inner = inner[mask[inner]]
    pieces = connected_components(g, open_inner) if open_inner.size else []
    closed_inner = inner[~mask[inner]]
    if closed_inner.size:
        pieces += connected_components(g, closed_inner)
    if labeling.count:
        biggest = labeling.region[labeling.label == int(np.argmax(labeling.sizes))]
        near = np.zeros(g.n, dtype=bool)
        near[biggest] = True
        far = inner[~_dilate(g, near)[inner]]
        if far.size:
            pieces += connected_components(g, far)
    pieces += private_zones(g, inner, outer, labeling)
    seen, out = set(), []
    for p in sorted(pieces, key=lambda p: (-p.size, int(p[0]))):
        key = p.tobytes()
        if key not in seen:
            seen.add(key)
            out.append(p)
    return out


def private_zones(g: Graph, inner: np.ndarray, outer: np.ndarray, labeling) -> list[np.ndarray]:
    """For each open cluster ``c``, components of the inner vertices whose
    1-neighbourhood meets no open cluster other than ``c``."""
    lab = np.full(g.n, -1, dtype=np.int64)
    lab[labeling.region] = labeling.label
    big = np.iinfo(np.int64).max
    own = lab[inner]
    nb = lab[g.indices]
    lo = np.minimum.reduceat(np.where(nb >= 0, nb, big), g.indptr[:-1])[inner]
    hi = np.maximum.reduceat(nb, g.indptr[:-1])[inner]
    isolated = g.degrees[inner] == 0
    lo[isolated], hi[isolated] = big, -1
    lo = np.minimum(lo, np.where(own >= 0, own, big))
    hi = np.maximum(hi, own)
    empty = hi < 0
    single = (lo == hi) & ~empty
    out = []
    for c in np.unique(hi[single]):
        members = inner[empty | (single & (hi == c))]
        out += connected_components(g, members)
    if empty.any():
        out += connected_components(g, inner[empty])
    return out


def far_ends(g: Graph, piece: np.ndarray, t: int) -> list[np.ndarray]:
    """Two small connected bits at opposite ends of a large piece, each of diameter ``>= t``."""
    if piece.size < 2 * t + 4:
        return []
    inside = np.zeros(g.n, dtype=bool)
    inside[piece] = True
    ends = []
    a = int(piece[0])
    for _ in range(2):
        d = bfs_distances(g, [a], allowed=inside)[piece]
        a = int(piece[int(np.argmax(d))])
        ends.append(a)
    out = []
    for e in ends:
        local = piece[bfs_distances(g, [e], max_depth=t)[piece] >= 0]
        comp = next(c for c in connected_components(g, local) if e in c)
        if diameter_at_least(g, comp, t):
            out.append(comp)
    return out if len(out) == 2 else []


def detect_separation(g: Graph, config, x, L: int,
                      thresholds: SeparationThresholds = DEFAULT_THRESHOLDS,
                      method: str = "heuristic") -> DetectorResult:
    """Search for a separation witness.

    ``heuristic`` is sound but incomplete: "not_separated" means no witness
    was found among the candidates.  ``exact`` delegates to the exhaustive
    search and is only available on small balls.
    """
    if method == "exact":
        w = find_witness_exact(g, config, x, L, thresholds)
        return DetectorResult("separated" if w is not None else "not_separated", "exact", w)
    if method != "heuristic":
        raise DomainError(f"unknown method {method!r}")
    x = g.check_vertex(x)
    inner, outer = _balls(g, x, L, thresholds)
    mask = _config_mask(g, config, outer)
    lab = label_clusters(g, mask, outer)
    t = thresholds.diam(L)
    cands = [c for c in heuristic_candidates(g, mask, inner, outer, lab)
             if c.size > t and diameter_at_least(g, c, t)]
    cands += [bit for c in cands[:8] for bit in far_ends(g, c, t)]
    in_outer = np.zeros(g.n, dtype=bool)
    in_outer[outer] = True
    halos, touch = [], []
    for c in cands:
        halo = np.zeros(g.n, dtype=bool)
        halo[c] = True
        halo = _dilate(g, halo)
        halos.append(halo)
        hv = np.flatnonzero(halo & in_outer)
        labs = lab.label[np.searchsorted(lab.region, hv)]
        touch.append(set(labs[labs >= 0].tolist()))
    for i in range(len(cands)):
        for j in range(i + 1, len(cands)):
            if touch[i] & touch[j] or halos[i][cands[j]].any():
                continue
            if is_witness(g, mask, x, L, cands[i], cands[j], thresholds):
                return DetectorResult("separated", "heuristic",
                                      SeparationWitness(x, L, cands[i], cands[j], thresholds),
                                      len(cands))
    return DetectorResult("not_separated", "heuristic", None, len(cands))


# --------------------------------------------------------------------------
# exact detector

@dataclass
class _ExactGeometry:
    inner: np.ndarray
    halo: np.ndarray  # B(inner, 1) in the graph, restricted to the outer ball
    sets: list[int]  # minimal connected sets with large diameter, as bitmasks over inner
    nbhd: list[int]  # their 1-neighbourhoods as bitmasks over halo
    blocked: list[int]  # their 1-neighbourhoods as bitmasks over inner


def _connected_subsets(adj: list[int], n: int):
    """Every connected vertex subset of a small graph, as bitmasks, each once."""
    out = []

    def extend(sub: int, frontier: int, banned: int):
        out.append(sub)
        cand = frontier & ~banned
        while cand:
            v = (cand & -cand).bit_length() - 1
            cand &= cand - 1
            banned |= 1 << v
            extend(sub | 1 << v, (frontier | adj[v]) & ~(sub | 1 << v), banned)

    for root in range(n):
        lower = (1 << root) - 1  # subsets rooted at their smallest vertex
        extend(1 << root, adj[root] & ~lower, lower | 1 << root)
    return out


def _exact_geometry(g: Graph, x: int, L: int, th: SeparationThresholds) -> _ExactGeometry:
    key = ("separation_exact", x, L, th.diam(L), th.inner_num, th.outer_num, th.denom)
    if key in g.cache:
        return g.cache[key]
    inner, outer = _balls(g, x, L, th)
    if inner.size > th.exact_cap:
        raise CapExceededError(f"B(x, {th.inner(L)}) has {inner.size} vertices, exact cap is "
                               f"{th.exact_cap}", size=inner.size, cap=th.exact_cap)
    n = inner.size
    halo = set_ball(g, inner, 1)
    halo = halo[np.isin(halo, outer)]
    ipos = {int(v): i for i, v in enumerate(inner)}
    hpos = {int(v): i for i, v in enumerate(halo)}
    adj = [0] * n
    for v, i in ipos.items():
        for w in g.neighbors(v):
            j = ipos.get(int(w))
            if j is not None:
                adj[i] |= 1 << j
    t = th.diam(L)
    far = [0] * n
    for i, v in enumerate(inner):
        d = bfs_distances(g, [v], max_depth=max(t - 1, 0))
        for j, w in enumerate(inner):
            if d[w] < 0 or d[w] >= t:
                far[i] |= 1 << j

    def wide(s):
        if t <= 0:
            return True
        m = s
        while m:
            i = (m & -m).bit_length() - 1
            m &= m - 1
            if far[i] & s & ~(1 << i):
                return True
        return False

    wide_sets = sorted((s for s in _connected_subsets(adj, n) if wide(s)),
                       key=lambda s: bin(s).count("1"))
    minimal: list[int] = []
    for s in wide_sets:
        if not any(m & s == m for m in minimal):
            minimal.append(s)

    def neighbourhood(s, pos):
        out = 0
        m = s
        while m:
            i = (m & -m).bit_length() - 1
            m &= m - 1
            v = int(inner[i])
            for w in (v, *g.neighbors(v).tolist()):
                j = pos.get(int(w))
                if j is not None:
                    out |= 1 << j
        return out

    geo = _ExactGeometry(inner, halo, minimal, [neighbourhood(s, hpos) for s in minimal],
                         [neighbourhood(s, ipos) for s in minimal])
    g.cache[key] = geo
    return geo


def _bits_to_vertices(bits: int, verts: np.ndarray) -> np.ndarray:
    return verts[[i for i in range(verts.size) if bits >> i & 1]]


def find_witness_exact(g: Graph, config, x, L: int,
                       thresholds: SeparationThresholds = DEFAULT_THRESHOLDS):
    """Exhaustive witness search, or ``None`` when the event fails.

    A witness pair stays a witness when either set is replaced by a
    connected subset that keeps the diameter threshold (containment,
    distance and the no-open-path condition are all inherited), so it
    suffices to pair up inclusion-minimal connected sets of large diameter.
    """
    x = g.check_vertex(x)
    geo = _exact_geometry(g, x, L, thresholds)
    _, outer = _balls(g, x, L, thresholds)
    mask = _config_mask(g, config, outer)
    lab = label_clusters(g, mask, outer)
    halo_labels = lab.label[np.searchsorted(lab.region, geo.halo)]
    touch = []
    for nb in geo.nbhd:
        ts = 0
        m = nb
        while m:
            i = (m & -m).bit_length() - 1
            m &= m - 1
            if halo_labels[i] >= 0:
                ts |= 1 << int(halo_labels[i])
        touch.append(ts)
    sets = geo.sets
    for a in range(len(sets)):
        for b in range(a + 1, len(sets)):
            if geo.blocked[a] & sets[b] or touch[a] & touch[b]:
                continue
            return SeparationWitness(x, L, _bits_to_vertices(sets[a], geo.inner),
                                     _bits_to_vertices(sets[b], geo.inner), thresholds)
    return None


def detect_separation_exact(g: Graph, config, x, L: int,
                            thresholds: SeparationThresholds = DEFAULT_THRESHOLDS) -> bool:
    return find_witness_exact(g, config, x, L, thresholds) is not None


# --------------------------------------------------------------------------
# cascade

@dataclass
class CascadeReport:
    k: int | None
    L_big: int
    L_small: int
    K_used: np.ndarray
    witness: SeparationWitness
    A_trim: np.ndarray
    B_trim: np.ndarray
    paths: list[np.ndarray]
    path_hits: list[int | None]  # the y found for each path
    found: list[tuple[int, SeparationWitness]]
    spaced: list[int]
    N_target: int
    pairwise_min_distance: int | None
    degenerate: bool = False
    notes: list[str] = field(default_factory=list)

    @property
    def all_paths_hit(self) -> bool:
        return bool(self.paths) and all(y is not None for y in self.path_hits)


def _trim_pair(g: Graph, A, B, L: int, th: SeparationThresholds):
    """Connected pieces ``A' ⊆ A`` and ``B' ⊆ B`` around far-apart points,
    each with diameter at least the relaxed threshold and at distance at
    least the relaxed separation."""
    rad, t, sep = th.trim_radius(L), th.relaxed_diam(L), th.min_distance(L)
    pieces = []
    for S in (A, B):
        opts = []
        for a in S:
            local = ball(g, a, rad)
            comp = next(c for c in connected_components(g, S[np.isin(S, local)]) if a in c)
            if diameter_at_least(g, comp, t):
                opts.append(comp)
        pieces.append(opts)
    for pa in pieces[0]:
        da = bfs_distances(g, pa, max_depth=sep - 1)
        for pb in pieces[1]:
            if np.all(da[pb] < 0):
                return pa, pb
    return None


def greedy_spaced(g: Graph, points, spacing: int) -> list[int]:
    """Greedily keep points pairwise at distance ``>= spacing``."""
    kept: list[int] = []
    for y in points:
        if all(bfs_distances(g, [y], max_depth=spacing - 1)[z] < 0 for z in kept):
            kept.append(int(y))
    return kept


def cascade_check(g: Graph, config, x, L_big: int, L_small: int, K,
                  thresholds: SeparationThresholds = DEFAULT_THRESHOLDS,
                  witness: SeparationWitness | None = None, k: int | None = None,
                  d_i: float = 2.0, d_u: float = 2.0) -> CascadeReport:
    """Trace a big-scale separation down to separation points of ``K`` at the small scale.

    Every disjoint path from ``A'`` to ``B'`` inside ``B(x, 4 L_big / 6)`` is
    scanned for a centre ``y`` of ``K`` whose ``L_small/6``-ball it meets
    and where the small-scale event holds.
    """
    x = g.check_vertex(x)
    th = thresholds
    if L_big < th.scale_ratio * L_small:
        raise DomainError(f"scale ratio {L_big / L_small:.3g} below configured {th.scale_ratio}"
                          " (asymptotic regime: 2000)")
    _, outer = _balls(g, x, L_big, th)
    mask = _config_mask(g, config, outer)
    K = as_vertex_set(g, K.K if isinstance(K, CoveringSet) else K)
    if not check_covering(g, x, L_big, L_small, K):
        raise DomainError("K fails the coverage recheck")
    if witness is None:
        res = detect_separation(g, mask, x, L_big, th)
        if not res.separated:
            raise PreconditionError("no separation witness at the big scale")
        witness = res.witness
    elif not is_witness(g, mask, x, L_big, witness.A, witness.B, th):
        raise PreconditionError("supplied witness does not certify the big-scale event")
    gamma = math.log(L_big) / math.log(L_small)
    n_target = math.floor(th.c9 * L_small ** (gamma * (d_i - 1) / d_i - (d_u - 1)))
    notes = [f"scale ratio {L_big / L_small:.3g} (asymptotic regime: 2000)"]
    trimmed = _trim_pair(g, witness.A, witness.B, L_big, th)
    if trimmed is None:
        notes.append("no trimmed pair meets the relaxed thresholds; using the witness sets")
        trimmed = (witness.A, witness.B)
    A2, B2 = trimmed
    region = ball(g, x, 4 * L_big // 6)
    try:
        dp = max_disjoint_paths(g, region, A2, B2, "vertex_disjoint")
    except DomainError as exc:
        return CascadeReport(k, L_big, L_small, K, witness, A2, B2, [], [], [], [], n_target,
                             None, True, notes + [f"degenerate: {exc}"])
    paths = [np.asarray(p.vertices, dtype=np.int64) for p in dp.paths]
    if not paths:
        return CascadeReport(k, L_big, L_small, K, witness, A2, B2, [], [], [], [], n_target,
                             None, True, notes + ["degenerate: no connecting path"])
    reach = L_small // 6
    verdicts: dict[int, DetectorResult] = {}
    hits: list[int | None] = []
    for p in paths:
        near = bfs_distances(g, p, max_depth=reach)
        hit = None
        for y in K[near[K] >= 0]:
            y = int(y)
            if y not in verdicts:
                verdicts[y] = detect_separation(g, mask, y, L_small, th)
            if verdicts[y].separated:
                hit = y
                break
        hits.append(hit)
    found_ys = sorted({y for y in hits if y is not None})
    found = [(y, verdicts[y].witness) for y in found_ys]
    spaced = greedy_spaced(g, found_ys, th.spacing_factor * L_small)
    min_dist = None
    if len(spaced) > 1:
        min_dist = min(int(bfs_distances(g, [a])[b]) for i, a in enumerate(spaced)
                       for b in spaced[i + 1:])
    return CascadeReport(k, L_big, L_small, K, witness, A2, B2, paths, hits, found, spaced,
                         n_target, min_dist, False, notes)

