"""Site-percolation environments and empirical decoupling checks.

Three families of measures on ``{0,1}^V`` (1 = open):

* ``bernoulli`` -- independent sites, ``P[open] = p``.
* ``finitely_dependent`` -- ``x`` is open iff every i.i.d. uniform mark in
  ``B(x, radius)`` is at least ``theta_x = 1 - p^(1/|B(x,radius)|)``;
  fields on sets at distance ``> 2 radius`` are independent.
* ``long_range`` -- a Poisson number of centres sits on each vertex, each
  closing the ball of radius ``R`` around it with ``P[R >= t] = t^-tau``
  (capped at ``max_radius``).  The intensity makes the fullest vertex of
  the region have marginal exactly ``p``; correlations between distant
  sites decay like ``r^-(tau - d_u)``.

Randomness is counter based: bit ``v`` of trial ``t`` is a pure function
of ``(seed, t, v)``, so any batch of trials can be regenerated alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import stats as sps

from .errors import ConfigError, ContractViolation, DomainError
from .graph import Graph, as_vertex_set, ball, bfs_distances, geodesic_ray
from .rng import derive_seed, uniforms
from .stats import binomial_sigma, loglog_slope, wilson_interval

KINDS = ("bernoulli", "finitely_dependent", "long_range")
CHUNK_CELLS = 4_000_000  # trials x vertices per vectorised batch


@dataclass(frozen=True)
class EnvironmentSpec:
    kind: str
    p: float
    radius: int = 0
    tail_exponent: float | None = None
    alpha: float | None = None
    c_alpha: float | None = None
    max_radius: int = 16
    growth_exponent: float = 2.0
    intensity: float | None = None  # overrides the tuned long-range intensity

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown environment kind {self.kind!r}; expected one of {KINDS}")
        if not 0.0 <= self.p <= 1.0:
            raise ConfigError(f"p must lie in [0, 1], got {self.p}")
        if self.kind == "finitely_dependent" and self.radius < 0:
            raise ConfigError("finitely_dependent needs radius >= 0")
        if self.kind == "long_range":
            if self.tail_exponent is None:
                raise ConfigError("long_range needs tail_exponent")
            if self.tail_exponent <= self.growth_exponent:
                raise ConfigError(
                    f"tail_exponent {self.tail_exponent} must exceed the growth exponent "
                    f"{self.growth_exponent}: the closed density would be infinite")
            if self.p == 0 and self.intensity is None:
                raise ConfigError("p = 0 is unattainable for long_range (infinite intensity)")
            if self.max_radius < 1:
                raise ConfigError("max_radius must be >= 1")
        defaults = {"bernoulli": (math.inf, 0.0),
                    "finitely_dependent": (2.0, float((2 * self.radius + 1) ** 2)),
                    "long_range": ((self.tail_exponent or 0) - self.growth_exponent, 1.0)}
        alpha, c_alpha = defaults[self.kind]
        if self.alpha is None:
            object.__setattr__(self, "alpha", alpha)
        if self.c_alpha is None:
            object.__setattr__(self, "c_alpha", c_alpha)

    def defect_bound(self, r: float) -> float:
        """Claimed decoupling slack ``c_alpha r^-alpha``."""
        if self.c_alpha == 0:
            return 0.0
        return self.c_alpha * float(r) ** (-self.alpha)

    def as_record(self) -> dict:
        return {k: getattr(self, k) for k in ("kind", "p", "radius", "tail_exponent",
                                              "alpha", "c_alpha", "max_radius")}


@dataclass
class Configuration:
    region: np.ndarray
    bits: np.ndarray
    spec: EnvironmentSpec
    seed: int
    trial: int = 0

    def mask(self, n: int) -> np.ndarray:
        """Open-site indicator over all ``n`` vertices (``False`` off the region)."""
        out = np.zeros(n, dtype=bool)
        out[self.region[self.bits]] = True
        return out


class FieldSampler:
    """Vectorised sampler for one ``(spec, graph, region)``.

    ``batch(seed, trials)`` returns a ``(len(trials), len(region))`` boolean
    array; row ``i`` depends only on ``(seed, trials[i])``.
    """

    def __init__(self, spec: EnvironmentSpec, g: Graph, region):
        self.spec = spec
        self.g = g
        self.region = as_vertex_set(g, region)
        if self.region.size == 0:
            raise DomainError("region is empty")
        kind = spec.kind
        if kind == "finitely_dependent":
            self._setup_local(spec.radius)
            sizes = self._ball_sizes(spec.radius)
            with np.errstate(divide="ignore"):
                self.theta = 1.0 - spec.p ** (1.0 / sizes)
        elif kind == "long_range":
            self._setup_local(spec.max_radius)
            self._setup_long_range()

    # -- geometry ------------------------------------------------------------
    def _setup_local(self, radius):
        g = self.g
        dist = bfs_distances(g, self.region, max_depth=radius)
        self.local = np.flatnonzero(dist >= 0)
        pos = np.full(g.n, -1, dtype=np.int64)
        pos[self.local] = np.arange(self.local.size)
        self.region_local = pos[self.region]
        e = g.edges()
        e = pos[e]
        e = e[(e[:, 0] >= 0) & (e[:, 1] >= 0)]
        sub = Graph.from_edges(self.local.size, e)
        self.sub = sub

    def _neighbour_reduce(self, values, op, shift=0):
        """Row-wise ``op`` of each value with its neighbours' values plus ``shift``."""
        sub = self.sub
        has = sub.degrees > 0
        red = op.reduceat(values[:, sub.indices], sub.indptr[:-1][has], axis=1)
        out = values.copy()
        out[:, has] = op(out[:, has], red + shift if shift else red)
        return out

    def _ball_sizes(self, radius):
        g = self.g
        return np.array([ball(g, int(x), radius).size for x in self.region], dtype=float)

    def _setup_long_range(self):
        spec = self.spec
        g = self.g
        tau, rmax = spec.tail_exponent, spec.max_radius
        j = np.arange(0, rmax + 1, dtype=float)
        self.tail = np.where(j == 0, 1.0, np.maximum(j, 1.0) ** (-tau))  # P[R >= j]
        pos = np.full(g.n, -1, dtype=np.int64)
        pos[self.local] = np.arange(self.local.size)
        # distances from region vertices to potential centres (dense only when small)
        self.use_dense = self.region.size * self.local.size <= CHUNK_CELLS // 4
        if self.use_dense:
            self.dist = np.full((self.region.size, self.local.size), rmax + 1, dtype=np.int16)
        self.load = np.zeros(self.region.size)  # S_x = sum_z P[R >= d(x,z)]
        for i, x in enumerate(self.region):
            d = bfs_distances(g, [int(x)], max_depth=rmax)
            hit = np.flatnonzero(d >= 0)
            self.load[i] = float(self.tail[d[hit]].sum())
            if self.use_dense:
                self.dist[i, pos[hit]] = d[hit]
        if spec.intensity is not None:
            self.lam = float(spec.intensity)
        elif spec.p == 1:
            self.lam = 0.0
        else:
            self.lam = -math.log(spec.p) / float(self.load.max())
        # Poisson CDF table for inverse-transform sampling of centre counts
        cdf = []
        k = 0
        while not cdf or (cdf[-1] < 1.0 - 1e-17 and k < 64):
            cdf.append(float(sps.poisson.cdf(k, self.lam)))
            k += 1
        self.count_cdf = np.array(cdf)

    def marginals(self) -> np.ndarray:
        """Exact ``P[x open]`` for every region vertex."""
        spec = self.spec
        if spec.kind == "bernoulli":
            return np.full(self.region.size, spec.p)
        if spec.kind == "finitely_dependent":
            return np.full(self.region.size, spec.p)
        return np.exp(-self.lam * self.load)

    # -- sampling ------------------------------------------------------------
    def batch(self, seed: int, trials) -> np.ndarray:
        trials = np.asarray(trials, dtype=np.int64).reshape(-1)
        width = self.region.size if self.spec.kind == "bernoulli" else self.local.size
        step = max(1, CHUNK_CELLS // max(width, 1))
        out = [self._batch(seed, trials[i:i + step]) for i in range(0, trials.size, step)]
        return np.concatenate(out) if out else np.zeros((0, self.region.size), dtype=bool)

    def _ids(self, trials, vertices):
        n = np.uint64(self.g.n)
        return trials.astype(np.uint64)[:, None] * n + vertices.astype(np.uint64)[None, :]

    def _batch(self, seed, trials):
        spec = self.spec
        if spec.kind == "bernoulli":
            u = uniforms(derive_seed(seed, "site"), self._ids(trials, self.region))
            return u < spec.p
        if spec.kind == "finitely_dependent":
            u = uniforms(derive_seed(seed, "mark"), self._ids(trials, self.local))
            for _ in range(spec.radius):
                u = self._neighbour_reduce(u, np.minimum)
            return u[:, self.region_local] >= self.theta[None, :]
        return self._long_range(seed, trials)

    def _long_range(self, seed, trials):
        spec = self.spec
        T = trials.size
        if self.lam == 0:
            return np.ones((T, self.region.size), dtype=bool)
        u = uniforms(derive_seed(seed, "count"), self._ids(trials, self.local))
        counts = np.searchsorted(self.count_cdf, u, side="right")
        reach = np.full(counts.shape, -1, dtype=np.int16)  # largest radius centred at z
        tau, rmax = spec.tail_exponent, spec.max_radius
        kmax = int(counts.max()) if counts.size else 0
        for k in range(kmax):
            has = counts > k
            if not has.any():
                break
            ids = self._ids(trials, self.local) * np.uint64(64) + np.uint64(k)
            v = 1.0 - uniforms(derive_seed(seed, "radius"), ids[has])
            radii = np.minimum(np.floor(v ** (-1.0 / tau)), rmax).astype(np.int16)
            cur = reach[has]
            reach[has] = np.maximum(cur, radii)
        if self.use_dense:
            closed = np.zeros((T, self.region.size), dtype=bool)
            for i in range(self.region.size):
                closed[:, i] = np.any(reach >= self.dist[i][None, :], axis=1)
            return ~closed
        # remaining radius max_z (R_z - d(z, v)); a site is closed iff it is >= 0
        budget = reach
        for _ in range(rmax):
            budget = self._neighbour_reduce(budget, np.maximum, shift=-1)
        return budget[:, self.region_local] < 0


def _sampler(spec, g, region) -> FieldSampler:
    key = ("field", spec, tuple(as_vertex_set(g, region).tolist()))
    if key not in g.cache:
        g.cache[key] = FieldSampler(spec, g, region)
    return g.cache[key]


def sample(spec: EnvironmentSpec, g: Graph, region, seed: int, trial: int = 0) -> Configuration:
    """One configuration on ``region``; bit-identical for identical inputs."""
    s = _sampler(spec, g, region)
    return Configuration(s.region, s.batch(seed, [trial])[0], spec, seed, trial)


def sample_batch(spec: EnvironmentSpec, g: Graph, region, seed: int, trials) -> np.ndarray:
    """``(len(trials), |region|)`` open-site matrix, rows keyed by trial id."""
    return _sampler(spec, g, region).batch(seed, trials)


# --------------------------------------------------------------------------
# events

@dataclass
class Event:
    """A site event that reads only the bits of ``support``.

    ``predicate`` maps a ``(trials, len(support))`` open-site matrix to a
    boolean vector; it never sees any other vertex.
    """

    support: np.ndarray
    predicate: Callable[[np.ndarray], np.ndarray]
    name: str = "event"

    def __post_init__(self):
        self.support = np.unique(np.asarray(self.support, dtype=np.int64))

    def __call__(self, bits: np.ndarray) -> np.ndarray:
        return np.asarray(self.predicate(bits), dtype=bool)


def all_closed(vertices, name="all_closed") -> Event:
    return Event(vertices, lambda b: ~b.any(axis=1), name)


def any_closed(vertices, name="any_closed") -> Event:
    return Event(vertices, lambda b: ~b.all(axis=1), name)


def closed_ball_pair(event_radius: int = 0):
    """Builder: ``B(x, event_radius)`` all closed, and the same around a
    point at distance ``2r + 1 + event_radius`` along a geodesic from ``x``."""

    def build(g: Graph, x, r):
        if event_radius > r:
            raise DomainError("event radius exceeds r")
        far = 2 * r + 1 + event_radius
        y = geodesic_ray(g, x, far).vertices[-1]
        return (all_closed(ball(g, x, event_radius), "closed_near"),
                all_closed(ball(g, y, event_radius), "closed_far"))

    return build


def check_measurable(g: Graph, event: Event, allowed: np.ndarray | None = None,
                     forbidden: np.ndarray | None = None) -> None:
    """Raise ``ContractViolation`` naming the first vertex read outside the allowed set."""
    sup = event.support
    if allowed is not None:
        bad = sup[~np.isin(sup, allowed)]
        if bad.size:
            raise ContractViolation(f"event {event.name!r} reads forbidden vertex {int(bad[0])}")
    if forbidden is not None:
        bad = sup[np.isin(sup, forbidden)]
        if bad.size:
            raise ContractViolation(f"event {event.name!r} reads forbidden vertex {int(bad[0])}")


def check_decreasing(event: Event, rng: np.random.Generator, samples: int = 256,
                     bits: np.ndarray | None = None) -> None:
    """Randomised monotonicity test: opening a closed site must never switch the event on."""
    k = event.support.size
    if k == 0:
        return
    pools = [rng.random((samples, k)) < rng.random((samples, 1))]
    if bits is not None and len(bits):
        pools.append(np.asarray(bits[:samples], dtype=bool))
    for base in pools:
        before = event(base)
        for _ in range(4):
            flipped = base.copy()
            closed_rows, closed_cols = np.nonzero(~base)
            if closed_rows.size == 0:
                break
            pick = rng.integers(closed_rows.size, size=base.shape[0])
            rows, cols = closed_rows[pick], closed_cols[pick]
            flipped[rows, cols] = True
            after = event(flipped)
            if np.any(after & ~before):
                raise ContractViolation(f"event {event.name!r} is not decreasing: "
                                        "opening a closed site switched it on")


# --------------------------------------------------------------------------
# decoupling

@dataclass
class DecouplingReport:
    r_values: list[int]
    defects: list[float]
    sigmas: list[float]
    ci_halfwidths: list[float]
    fitted_alpha: float
    probabilities: list[dict] = field(default_factory=list)
    bounds: list[float] = field(default_factory=list)
    trials: int = 0

    def within_certificate(self, z: float = 3.0) -> list[bool]:
        return [d <= b + z * s for d, b, s in zip(self.defects, self.bounds, self.sigmas)]


def _pair_statistics(a: np.ndarray, b: np.ndarray):
    n = a.size
    pa, pb = a.mean(), b.mean()
    pab = (a & b).mean()
    defect = pab - pa * pb
    # influence-function standard error of pab - pa pb
    infl = (a & b).astype(float) - pb * a - pa * b
    sigma = float(infl.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    return float(pa), float(pb), float(pab), float(defect), sigma


def estimate_decoupling_defect(spec: EnvironmentSpec, g: Graph, x, r_values, event_builder,
                               trials: int, seed: int, z: float = 3.0) -> DecouplingReport:
    """Monte-Carlo ``P(G and G') - P(G) P(G')`` for decreasing events on
    ``B(x, r)`` and on the complement of ``B(x, 2r)``, for each ``r``."""
    x = g.check_vertex(x)
    if trials < 2:
        raise DomainError("need at least two trials")
    report = DecouplingReport([], [], [], [], math.nan, trials=trials)
    for r in r_values:
        inner, outer = event_builder(g, x, r)
        check_measurable(g, inner, allowed=ball(g, x, r))
        check_measurable(g, outer, forbidden=ball(g, x, 2 * r))
        region = np.union1d(inner.support, outer.support)
        bits = sample_batch(spec, g, region, derive_seed(seed, "decoupling", r), np.arange(trials))
        cols_in = np.searchsorted(region, inner.support)
        cols_out = np.searchsorted(region, outer.support)
        rng = np.random.default_rng(derive_seed(seed, "monotone", r))
        check_decreasing(inner, rng, bits=bits[:, cols_in])
        check_decreasing(outer, rng, bits=bits[:, cols_out])
        a = inner(bits[:, cols_in])
        b = outer(bits[:, cols_out])
        pa, pb, pab, defect, sigma = _pair_statistics(a, b)
        report.r_values.append(int(r))
        report.defects.append(defect)
        report.sigmas.append(sigma)
        report.ci_halfwidths.append(z * sigma)
        report.bounds.append(spec.defect_bound(r))
        report.probabilities.append({
            "p_inner": pa, "p_outer": pb, "p_both": pab,
            "ci_inner": wilson_interval(int(a.sum()), trials),
            "ci_outer": wilson_interval(int(b.sum()), trials),
            "ci_both": wilson_interval(int((a & b).sum()), trials)})
    slope = loglog_slope(report.r_values, report.defects)
    report.fitted_alpha = -slope if not math.isnan(slope) else math.nan
    return report


def several_boxes_check(spec: EnvironmentSpec, g: Graph, points, r: int, events,
                        trials: int, seed: int, z: float = 3.0) -> dict:
    """Empirical check of ``P(G_1 ... G_J) <= prod (P(G_i) + c_alpha r^-alpha)``.

    ``events[i]`` must be decreasing and measurable on ``B(points[i], r)``;
    the points must be pairwise at distance ``>= 3r``.
    """
    points = [g.check_vertex(p) for p in points]
    if len(points) != len(events) or not points:
        raise DomainError("need one event per point")
    for i, p in enumerate(points):
        d = bfs_distances(g, [p], max_depth=3 * r - 1)
        for j in range(i + 1, len(points)):
            if d[points[j]] >= 0:
                raise DomainError(f"points {p} and {points[j]} are at distance "
                                  f"{int(d[points[j]])} < 3r = {3 * r}")
    for p, ev in zip(points, events):
        check_measurable(g, ev, allowed=ball(g, p, r))
    region = np.unique(np.concatenate([ev.support for ev in events]))
    bits = sample_batch(spec, g, region, derive_seed(seed, "boxes"), np.arange(trials))
    rng = np.random.default_rng(derive_seed(seed, "monotone"))
    hits = []
    for ev in events:
        cols = np.searchsorted(region, ev.support)
        check_decreasing(ev, rng, bits=bits[:, cols])
        hits.append(ev(bits[:, cols]))
    hits = np.array(hits)
    joint = float(hits.all(axis=0).mean())
    marg = hits.mean(axis=1)
    slack = spec.defect_bound(r)
    rhs = float(np.prod(marg + slack))
    sigma = binomial_sigma(joint, trials) + sum(binomial_sigma(m, trials) for m in marg)
    return {"joint": joint, "marginals": marg.tolist(), "product_bound": rhs,
            "slack": slack, "sigma": sigma, "holds": joint <= rhs + z * sigma,
            "trials": trials}
