import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from percolab.environments import (EnvironmentSpec, Event, FieldSampler, all_closed,
                                   any_closed, check_decreasing, closed_ball_pair,
                                   estimate_decoupling_defect, sample, sample_batch,
                                   several_boxes_check)
from percolab.errors import ConfigError, ContractViolation, DomainError
from percolab.graph import ball, geodesic_ray, grid_zd

from oracles import long_range_pair_covariance

KINDS = [EnvironmentSpec("bernoulli", 0.7),
         EnvironmentSpec("finitely_dependent", 0.7, radius=2),
         EnvironmentSpec("long_range", 0.7, tail_exponent=3.0)]


@pytest.fixture(scope="module")
def z2():
    return grid_zd(2, 60)


@pytest.fixture(scope="module")
def o(z2):
    return z2.index_of((0, 0))


@pytest.mark.parametrize("kind", ["bernoulli", "finitely_dependent", "long_range"])
def test_extreme_p(z2, o, kind):
    kw = {"radius": 1} if kind == "finitely_dependent" else {}
    if kind == "long_range":
        kw = {"tail_exponent": 3.0}
    region = ball(z2, o, 3)
    assert sample(EnvironmentSpec(kind, 1.0, **kw), z2, region, seed=4).bits.all()
    if kind != "long_range":
        assert not sample(EnvironmentSpec(kind, 0.0, **kw), z2, region, seed=4).bits.any()


def test_spec_validation():
    with pytest.raises(ConfigError):
        EnvironmentSpec("gibbs", 0.5)
    with pytest.raises(ConfigError):
        EnvironmentSpec("bernoulli", 1.5)
    with pytest.raises(ConfigError):
        EnvironmentSpec("long_range", 0.5)
    with pytest.raises(ConfigError):
        EnvironmentSpec("long_range", 0.5, tail_exponent=2.0)
    with pytest.raises(ConfigError):
        EnvironmentSpec("long_range", 0.0, tail_exponent=3.0)
    b = EnvironmentSpec("bernoulli", 0.5)
    assert b.c_alpha == 0 and b.alpha == math.inf and b.defect_bound(3) == 0
    assert EnvironmentSpec("long_range", 0.5, tail_exponent=6).alpha == 4


def test_bernoulli_mean_in_band(z2):
    region = np.arange(z2.n)[:10_000]
    bits = sample(EnvironmentSpec("bernoulli", 0.7), z2, region, seed=11).bits
    assert abs(bits.mean() - 0.7) <= 3 * math.sqrt(0.21 / region.size)


@pytest.mark.parametrize("spec", KINDS, ids=lambda s: s.kind)
def test_marginals_at_every_vertex(z2, o, spec):
    region = ball(z2, o, 6)
    trials = 4000
    bits = sample_batch(spec, z2, region, seed=2, trials=np.arange(trials))
    expected = FieldSampler(spec, z2, region).marginals()
    sigma = np.sqrt(expected * (1 - expected) / trials)
    # 85 vertices, 4 sigma keeps the family-wise false alarm rate negligible
    assert np.all(np.abs(bits.mean(axis=0) - expected) <= 4 * sigma)
    assert np.all(expected >= spec.p - 1e-12)


@pytest.mark.parametrize("spec", KINDS, ids=lambda s: s.kind)
def test_reproducible_and_order_independent(z2, o, spec):
    region = ball(z2, o, 4)
    a = sample_batch(spec, z2, region, seed=9, trials=np.arange(50))
    b = sample_batch(spec, z2, region, seed=9, trials=np.arange(49, -1, -1))[::-1]
    assert np.array_equal(a, b)
    c = sample(spec, z2, region, seed=9, trial=17)
    assert np.array_equal(c.bits, a[17])
    assert not np.array_equal(a, sample_batch(spec, z2, region, seed=10, trials=np.arange(50)))


def test_configuration_restricts_to_region(z2, o):
    region = ball(z2, o, 2)
    conf = sample(EnvironmentSpec("bernoulli", 1.0), z2, region, seed=0)
    mask = conf.mask(z2.n)
    assert mask.sum() == region.size and mask[region].all()


def test_long_range_subregion_consistency(z2, o):
    spec = EnvironmentSpec("long_range", 0.6, tail_exponent=3.0, intensity=0.05)
    big = ball(z2, o, 6)
    small = ball(z2, o, 2)
    a = sample_batch(spec, z2, big, seed=3, trials=np.arange(40))
    b = sample_batch(spec, z2, small, seed=3, trials=np.arange(40))
    assert np.array_equal(a[:, np.searchsorted(big, small)], b)


def test_long_range_dense_and_propagation_agree(z2, o):
    s = FieldSampler(EnvironmentSpec("long_range", 0.6, tail_exponent=3.0), z2, ball(z2, o, 5))
    assert s.use_dense
    dense = s.batch(5, np.arange(100))
    s.use_dense = False
    assert np.array_equal(dense, s.batch(5, np.arange(100)))


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(0.0, 0.2), st.integers(0, 2**31))
def test_bernoulli_monotone_coupling(p, dp, seed):
    g = grid_zd(2, 4)
    lo = sample(EnvironmentSpec("bernoulli", p), g, range(g.n), seed).bits
    hi = sample(EnvironmentSpec("bernoulli", min(1.0, p + dp)), g, range(g.n), seed).bits
    assert np.all(hi >= lo)


def test_finitely_dependent_independence_range(z2, o):
    spec = EnvironmentSpec("finitely_dependent", 0.5, radius=2)
    y = geodesic_ray(z2, o, 5).vertices[-1]
    far = geodesic_ray(z2, o, 4).vertices[-1]
    bits = sample_batch(spec, z2, [o, far, y], seed=1, trials=np.arange(40_000))
    cols = np.searchsorted(np.sort([o, far, y]), [o, far, y])
    a, near, b = (bits[:, c] for c in cols)
    cov_far = (a & b).mean() - a.mean() * b.mean()
    cov_near = (a & near).mean() - a.mean() * near.mean()
    sigma = 0.25 / math.sqrt(40_000)
    assert abs(cov_far) <= 4 * sigma  # distance 5 > 2 * radius
    assert cov_near > 4 * sigma  # distance 4 shares marks


def test_event_measurability_and_monotonicity(z2, o):
    spec = EnvironmentSpec("bernoulli", 0.5)

    def leaky(g, x, r):
        return all_closed(ball(g, x, r + 1), "leaky"), all_closed([geodesic_ray(g, x, 3 * r).vertices[-1]])

    with pytest.raises(ContractViolation, match="forbidden vertex"):
        estimate_decoupling_defect(spec, z2, o, [2], leaky, trials=100, seed=0)

    def increasing(g, x, r):
        ev = Event(ball(g, x, 0), lambda b: b.all(axis=1), "open_here")
        return ev, all_closed([geodesic_ray(g, x, 3 * r).vertices[-1]])

    with pytest.raises(ContractViolation, match="not decreasing"):
        estimate_decoupling_defect(spec, z2, o, [2], increasing, trials=100, seed=0)
    rng = np.random.default_rng(0)
    check_decreasing(any_closed(range(5)), rng)
    check_decreasing(all_closed(range(5)), rng)


def test_bernoulli_defect_vanishes(z2, o):
    rep = estimate_decoupling_defect(EnvironmentSpec("bernoulli", 0.5), z2, o, [1, 2, 4],
                                     closed_ball_pair(0), trials=20_000, seed=3)
    assert all(abs(d) <= 3 * s for d, s in zip(rep.defects, rep.sigmas))
    assert all(rep.within_certificate())


def test_finitely_dependent_defect_vanishes_beyond_range(z2, o):
    rep = estimate_decoupling_defect(EnvironmentSpec("finitely_dependent", 0.5, radius=2),
                                     z2, o, [5], closed_ball_pair(1), trials=20_000, seed=3)
    assert abs(rep.defects[0]) <= 3 * rep.sigmas[0]


def test_long_range_defects_match_exact_covariance(z2, o):
    spec = EnvironmentSpec("long_range", 0.5, tail_exponent=3.0)
    rep = estimate_decoupling_defect(spec, z2, o, [1, 2, 4], closed_ball_pair(0),
                                     trials=40_000, seed=8)
    lam = FieldSampler(spec, z2, [o]).lam
    for r, d, s in zip(rep.r_values, rep.defects, rep.sigmas):
        y = geodesic_ray(z2, o, 2 * r + 1).vertices[-1]
        exact = long_range_pair_covariance(z2, o, y, 3.0, 16, lam)[2]
        assert abs(d - exact) <= 4 * s
    assert rep.defects[0] > 3 * rep.sigmas[0]
    assert rep.fitted_alpha > 0
    assert all(rep.within_certificate())


def test_long_range_tau6_small_r_correlation(z2, o):
    spec = EnvironmentSpec("long_range", 0.5, tail_exponent=6.0)
    lam = FieldSampler(spec, z2, [o]).lam
    exact = [long_range_pair_covariance(z2, o, geodesic_ray(z2, o, 2 * r + 1).vertices[-1],
                                        6.0, 16, lam)[2] for r in (1, 2, 3)]
    assert all(e > 0 for e in exact) and exact == sorted(exact, reverse=True)
    rep = estimate_decoupling_defect(spec, z2, o, [1], closed_ball_pair(0), 100_000, seed=1)
    assert rep.defects[0] > 0 and abs(rep.defects[0] - exact[0]) <= 4 * rep.sigmas[0]


def test_several_boxes(z2, o):
    pts = [z2.index_of(p) for p in [(0, 0), (6, 0), (0, 6)]]
    spec = EnvironmentSpec("bernoulli", 0.5)
    ev = [all_closed(ball(z2, p, 1)) for p in pts]
    rep = several_boxes_check(spec, z2, pts, 2, ev, trials=20_000, seed=1)
    assert rep["holds"] and rep["slack"] == 0
    one = several_boxes_check(spec, z2, pts[:1], 2, ev[:1], trials=1000, seed=1)
    assert one["joint"] == pytest.approx(one["marginals"][0])
    with pytest.raises(DomainError, match="distance"):
        several_boxes_check(spec, z2, pts, 3, ev, trials=10, seed=1)
    lr = EnvironmentSpec("long_range", 0.5, tail_exponent=3.0)
    pts = [z2.index_of(p) for p in [(0, 0), (24, 0)]]
    rep = several_boxes_check(lr, z2, pts, 8, [all_closed(ball(z2, p, 1)) for p in pts],
                              trials=20_000, seed=2)
    assert rep["holds"]
