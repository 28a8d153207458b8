"""Scale ladder, parameter selection, Monte-Carlo ``p_k`` and recursion checks.

``p_k`` is the probability of the separation event at scale ``L_k``; the
multiscale argument bounds ``p_{k+1}`` by a power of ``p_k`` and turns that
into decay ``p_k <= L_k^{-beta}``.  Everything here is either arithmetic on
those inequalities or bookkeeping around Monte-Carlo estimates of ``p_k``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction

import numpy as np

from .environments import EnvironmentSpec, sample_batch
from .errors import DomainError, InfeasibleError, OutOfRangeError, PreconditionError
from .graph import Graph, ball, bfs_distances, check_margin
from .isoperimetry import default_c5
from .rng import derive_seed
from .separation import DEFAULT_THRESHOLDS, SeparationThresholds, detect_separation
from .stats import wilson_interval, wilson_lower, wilson_upper

ASYMPTOTIC_L0 = 10000
MARGIN = 0.05


@dataclass(frozen=True)
class ScaleLadder:
    L0: int
    gamma: float
    scales: tuple[int, ...]

    @property
    def k_max(self) -> int:
        return len(self.scales) - 1

    def next_scale(self, L: int) -> int:
        return _ceil_power(L, self.gamma)


def _iroot_ceil(n: int, b: int) -> int:
    """Least ``c >= 0`` with ``c ** b >= n`` (integer Newton iteration)."""
    if n <= 1:
        return n
    c = 1 << -(-n.bit_length() // b)  # an upper bound
    while True:
        nxt = ((b - 1) * c + n // c ** (b - 1)) // b
        if nxt >= c:
            break
        c = nxt
    while c**b < n:
        c += 1
    while c > 0 and (c - 1) ** b >= n:
        c -= 1
    return c


def _ceil_power(L: int, gamma: float) -> int:
    """``ceil(L ** gamma)``, exact whenever ``gamma`` is a small-denominator rational."""
    frac = Fraction(gamma).limit_denominator(64)
    if float(frac) == gamma and frac.numerator * math.log2(max(L, 2)) < 1 << 16:
        return _iroot_ceil(L**frac.numerator, frac.denominator)
    return math.ceil(float(L) ** gamma)


def build_ladder(L0: int, gamma: float, k_max: int) -> ScaleLadder:
    """``L_0, ..., L_kmax`` with ``L_{k+1} = ceil(L_k^gamma)``."""
    if gamma <= 1:
        raise DomainError(f"gamma must exceed 1, got {gamma}")
    if L0 < 2 or k_max < 0:
        raise DomainError("need L0 >= 2 and k_max >= 0")
    if L0 != ASYMPTOTIC_L0:
        warnings.warn(f"L0={L0} is a desk-scale ladder (asymptotic regime uses "
                      f"L0={ASYMPTOTIC_L0})", stacklevel=2)
    scales = [int(L0)]
    for _ in range(k_max):
        scales.append(max(_ceil_power(scales[-1], gamma), scales[-1] + 1))
    return ScaleLadder(int(L0), float(gamma), tuple(scales))


# --------------------------------------------------------------------------
# parameters

@dataclass
class RecursionParams:
    d_i: float
    c_i: float = 1.0
    d_u: float | None = None
    c_u: float = 1.0
    d_l: float | None = None
    c_l: float = 1.0
    alpha: float | None = None
    c_alpha: float = 0.0
    gamma: float | None = None
    d: float | None = None
    beta: float | None = None
    J: int | None = None
    chi: float = 0.0
    c5: float | None = None
    c9: float = 1.0
    mode: str = "bernoulli"

    def as_record(self) -> dict:
        return asdict(self)

    def gamma_bound(self) -> float:
        return max(1.0, self.d_i * (self.d_u - 1) / (self.d_i - 1))

    def growth(self) -> float:
        """Exponent ``gamma d_u - d`` of the covering-set size."""
        return self.gamma * self.d_u - self.d

    def violations(self) -> list[str]:
        """Every strict inequality the parameters must satisfy, re-checked from scratch."""
        bad = []
        if not self.d_i > 1:
            bad.append("d_i > 1")
        if not self.gamma > self.gamma_bound():
            bad.append(f"gamma > {self.gamma_bound():g}")
        if not self.gamma * (self.d_i - 1) / self.d_i > self.d_u - 1:
            bad.append("gamma (d_i - 1)/d_i > d_u - 1")
        if not 0 < self.d < self.d_l:
            bad.append(f"0 < d < d_l = {self.d_l:g}")
        if not self.J >= 2:
            bad.append("J >= 2")
        if not self.beta > self.gamma * (1 + self.chi):
            bad.append("beta > gamma (1 + chi)")
        if self.mode == "bernoulli":
            if not self.beta > self.growth():
                bad.append("beta > gamma d_u - d")
            if not self.J * (self.beta - self.growth()) > self.gamma * self.beta:
                bad.append("J (beta - (gamma d_u - d)) > gamma beta")
        else:
            if not self.alpha > self.growth():
                bad.append("alpha > gamma d_u - d")
            if not self.beta > self.alpha:
                bad.append("beta > alpha")
            if not self.J * (self.alpha - self.growth()) > self.gamma * self.beta:
                bad.append("J (alpha - (gamma d_u - d)) > gamma beta")
        return bad


def dependent_alpha_bound(d_i: float, d_u: float, d_l: float) -> float:
    """Infimum of feasible decorrelation exponents."""
    return max(1.0, d_i * (d_u - 1) / (d_i - 1)) * d_u - d_l


def _above(bound: float) -> float:
    return bound * (1 + MARGIN) if bound > 0 else bound + MARGIN


def select_parameters(params_in, mode: str = "bernoulli") -> RecursionParams:
    """Complete ``gamma, d, beta, J`` just above their strict lower bounds.

    Real parameters get a 5% margin (shrunk when a dependent-mode ``alpha``
    sits close to its bound); ``J`` is the least integer above its bound.
    Supplied values are kept and checked.  The result is re-validated
    against every inequality before it is returned.
    """
    if isinstance(params_in, RecursionParams):
        p = replace(params_in, mode=mode)
    else:
        p = RecursionParams(**{**dict(params_in), "mode": mode})
    if mode not in ("bernoulli", "dependent"):
        raise DomainError(f"unknown mode {mode!r}")
    if not p.d_i > 1:
        raise InfeasibleError(f"d_i must exceed 1, got {p.d_i}")
    p.d_u = p.d_i if p.d_u is None else p.d_u
    p.d_l = p.d_u if p.d_l is None else p.d_l
    p.c5 = default_c5(p.c_u, p.d_u) if p.c5 is None else p.c5
    gmin = p.gamma_bound()
    if p.gamma is not None and not p.gamma > gmin:
        raise InfeasibleError(f"gamma={p.gamma} must exceed {gmin:g} (strict)")
    if p.d is not None and not 0 < p.d < p.d_l:
        raise InfeasibleError(f"d={p.d} must lie in (0, {p.d_l:g})")

    if mode == "dependent":
        if p.alpha is None:
            raise DomainError("dependent mode needs alpha")
        bound = dependent_alpha_bound(p.d_i, p.d_u, p.d_l)
        if not p.alpha > bound:
            raise InfeasibleError(f"alpha={p.alpha} must exceed {bound:g} "
                                  "= max(1, d_i(d_u-1)/(d_i-1)) d_u - d_l")
        slack = p.alpha - bound
        if p.gamma is None:
            p.gamma = gmin + min(MARGIN * gmin, slack / (4 * p.d_u))
        if p.d is None:
            p.d = p.d_l - min(MARGIN * p.d_l, slack / 4)
        if not p.alpha > p.growth():
            raise InfeasibleError(f"alpha={p.alpha} must exceed gamma d_u - d = {p.growth():g}")
        lower = max(p.alpha, p.gamma * (1 + p.chi))
        if p.beta is None:
            p.beta = _above(lower)
        gap = p.alpha - p.growth()
    else:
        if p.gamma is None:
            p.gamma = _above(gmin)
        if p.d is None:
            p.d = (1 - MARGIN) * p.d_l
        lower = max(p.growth(), p.gamma * (1 + p.chi))
        if p.beta is None:
            p.beta = _above(lower)
        gap = p.beta - p.growth()
    if not p.beta > lower:
        raise InfeasibleError(f"beta={p.beta} must exceed {lower:g}")
    j_bound = p.gamma * p.beta / gap
    j_min = max(2, math.floor(j_bound) + 1)
    if p.J is None:
        p.J = j_min
    elif p.J < j_min:
        raise InfeasibleError(f"J={p.J} must exceed {j_bound:g} (and be >= 2)")
    bad = p.violations()
    if bad:
        raise InfeasibleError("selected parameters violate: " + "; ".join(bad))
    return p


def ratio_exponent(params: RecursionParams) -> float:
    """Exponent ``e`` in ``RHS / L_{k+1}^{-beta} = c5^J L_k^{-e}`` when ``p_k = L_k^{-beta}``."""
    gap = (params.beta - params.growth() if params.mode == "bernoulli"
           else params.alpha - params.growth())
    return params.J * gap - params.gamma * params.beta


# --------------------------------------------------------------------------
# p_k estimation

@dataclass
class PkSeries:
    scales: tuple[int, ...]
    gamma: float
    p_hat: list[float]
    ci: list[tuple[float, float]]
    counts: list[int]  # successes of the maximising anchor
    anchors: list[int]
    trials: int
    per_anchor: list[list[int]] = field(default_factory=list)
    method: str = "heuristic"
    thresholds: dict = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)


def default_anchors(g: Graph, L_max: int, limit: int = 5) -> list[int]:
    """A coarse net of vertices at distance ``>= L_max`` from the host boundary.

    Starts from the vertex deepest inside the host and adds vertices in
    order of depth, keeping them ``L_max`` apart.
    """
    hb = g.host_boundary
    if hb.size == 0:
        return [0]
    depth = bfs_distances(g, hb)
    order = np.argsort(-depth, kind="stable")
    order = order[depth[order] >= L_max]
    chosen: list[int] = []
    for v in order.tolist():
        if len(chosen) >= limit:
            break
        if all(bfs_distances(g, [v], max_depth=L_max - 1)[c] < 0 for c in chosen):
            chosen.append(v)
    if not chosen:
        raise DomainError(f"no vertex lies {L_max} away from the host boundary")
    return chosen


def estimate_pk(g: Graph, spec: EnvironmentSpec, ladder: ScaleLadder, anchors, trials: int,
                thresholds: SeparationThresholds = DEFAULT_THRESHOLDS, seed: int = 0,
                method: str = "heuristic") -> PkSeries:
    """Frequency of the separation event per scale, maximised over anchors.

    Each anchor uses one stream of trials for all scales, so the
    configurations at different scales are nested restrictions of each
    other.  The heuristic detector only finds certified witnesses, so its
    estimates are biased low.
    """
    L_max = ladder.scales[-1]
    if anchors is None or (isinstance(anchors, str) and anchors == "auto"):
        anchors = default_anchors(g, L_max)
    anchors = [g.check_vertex(a) for a in anchors]
    for a in anchors:
        try:
            check_margin(g, a, L_max, 0)
        except OutOfRangeError as exc:
            raise DomainError(f"anchor {a}: {exc}") from exc
    per_anchor = []
    for a in anchors:
        stream = derive_seed(seed, "pk", a)
        counts = []
        for L in ladder.scales:
            region = ball(g, a, L)
            bits = sample_batch(spec, g, region, stream, np.arange(trials))
            mask = np.zeros(g.n, dtype=bool)
            hits = 0
            for row in bits:
                mask[region] = row
                hits += detect_separation(g, mask, a, L, thresholds, method).separated
            counts.append(hits)
        per_anchor.append(counts)
    table = np.asarray(per_anchor)
    best = table.max(axis=0)
    notes = [f"L0={ladder.L0} (asymptotic regime: {ASYMPTOTIC_L0})",
             "sup over the graph replaced by a max over anchors"]
    if method == "heuristic":
        notes.append("heuristic detector: estimates are lower-bound flavoured")
    return PkSeries(ladder.scales, ladder.gamma, (best / trials).tolist(),
                    [wilson_interval(int(c), trials) for c in best], best.tolist(), anchors,
                    trials, table.tolist(), method, thresholds.as_record(), notes)


# --------------------------------------------------------------------------
# recursion and decay checks

def _log_rhs(params: RecursionParams, L: int, p: float, mode: str) -> float:
    base = p + (params.c_alpha * L ** (-params.alpha) if mode == "dependent" else 0.0)
    if base <= 0:
        return -math.inf
    return params.J * (math.log(params.c5) + params.growth() * math.log(L) + math.log(base))


def recursion_rhs(params: RecursionParams, L: int, p: float, mode: str) -> float:
    lr = _log_rhs(params, L, p, mode)
    return 0.0 if lr == -math.inf else (math.inf if lr > 700 else math.exp(lr))


def check_recursion(series: PkSeries, params: RecursionParams, mode: str | None = None) -> dict:
    """Per-step verdicts for ``p_{k+1} <= RHS(p_k)`` and per-scale decay targets.

    A step passes when the estimates satisfy the inequality, is
    "inconclusive" when only the 99% one-sided Wilson bounds do, and fails
    otherwise.
    """
    mode = mode or params.mode
    if not math.isclose(series.gamma, params.gamma, rel_tol=1e-9):
        warnings.warn(f"series built with gamma={series.gamma}, params use {params.gamma}",
                      stacklevel=2)
    n = series.trials
    steps = []
    for k in range(len(series.scales) - 1):
        L, p, q = series.scales[k], series.p_hat[k], series.p_hat[k + 1]
        rhs = recursion_rhs(params, L, p, mode)
        if q <= rhs:
            verdict = "pass"
        else:
            rhs_hi = recursion_rhs(params, L, wilson_upper(series.counts[k], n), mode)
            verdict = "inconclusive" if wilson_lower(series.counts[k + 1], n) <= rhs_hi else "fail"
        lr = _log_rhs(params, L, p, mode)
        steps.append({"k": k, "L_k": L, "L_next": series.scales[k + 1], "p_k": p, "p_next": q,
                      "rhs": rhs, "log10_rhs": lr / math.log(10) if lr > -math.inf else None,
                      "verdict": verdict})
    decay = []
    for k, (L, p) in enumerate(zip(series.scales, series.p_hat)):
        target = float(L) ** (-params.beta)
        decay.append({"k": k, "L_k": L, "p_hat": p, "target": target, "holds": p <= target})
    holds = [d["holds"] for d in decay]
    decay_k = next((k for k, h in enumerate(holds) if h), None)
    return {"mode": mode, "steps": steps, "decay": decay, "decay_k": decay_k,
            "decay_persists": decay_k is not None and all(holds[decay_k:]),
            "passed": all(s["verdict"] != "fail" for s in steps),
            "beta": params.beta, "J": params.J}


def gk_union_bound(series: PkSeries, params: RecursionParams, k_o: int) -> float:
    """``sum_{k >= k_o} (L_{k+1} / L_k) p_hat[k]`` over the measured scales.

    Requires the decay target ``p_hat[k] <= L_k^{-beta}`` for every
    ``k >= k_o``; compare the result with ``L_{k_o}^{-gamma chi}``.
    """
    if not 0 <= k_o < len(series.scales):
        raise DomainError(f"k_o={k_o} outside the measured scales")
    for k in range(k_o, len(series.scales)):
        if series.p_hat[k] > float(series.scales[k]) ** (-params.beta):
            raise PreconditionError(f"decay target fails at k={k}")
    total = 0.0
    for k in range(k_o, len(series.scales)):
        L = series.scales[k]
        L_next = series.scales[k + 1] if k + 1 < len(series.scales) else _ceil_power(L, series.gamma)
        total += (L_next / L) * series.p_hat[k]
    return total


def operational_threshold(p_grid, series_by_p, params: RecursionParams, k_o: int = 0):
    """Smallest grid ``p`` whose series meets the decay target at every ``k >= k_o``."""
    for p, series in sorted(zip(p_grid, series_by_p), key=lambda t: t[0]):
        if all(series.p_hat[k] <= float(series.scales[k]) ** (-params.beta)
               for k in range(k_o, len(series.scales))):
            return p
    return None
