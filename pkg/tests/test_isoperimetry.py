import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from percolab.errors import CapExceededError, DomainError, OutOfRangeError
from percolab.graph import (Graph, ball, bfs_distances, boundary, connected_components,
                            distance, grid_zd, joined_grids, regular_tree)
from percolab.isoperimetry import (ball_sizes, build_covering_set, check_covering,
                                   default_c5, estimate_iso_profile_sampled,
                                   fit_volume_bounds, max_disjoint_paths,
                                   sample_covering_candidates,
                                   verify_local_iso_exhaustive,
                                   verify_volume_lower_induction)

from oracles import (brute_edge_disjoint, brute_min_ratio, brute_vertex_disjoint,
                     random_connected_graph, scipy_edge_flow)


@pytest.fixture(scope="module")
def z2():
    return grid_zd(2, 30)


def origin(g):
    return g.index_of((0,) * len(g.labels[0]))


# -- exhaustive / sampled profiles -------------------------------------------

def test_exhaustive_z2_radius_two(z2):
    prof = verify_local_iso_exhaustive(z2, origin(z2), 2, 2)
    B = ball(z2, origin(z2), 2)
    # frozen from the brute-force subset enumeration: a tip vertex has one inner edge
    assert prof.c_i == pytest.approx(brute_min_ratio(z2, B, 2)) == pytest.approx(1.0)
    assert prof.mode == "exhaustive"
    assert len(boundary(z2, prof.worst_set, ambient=B)) / len(prof.worst_set) ** 0.5 \
        == pytest.approx(prof.c_i)


def test_exhaustive_refuses_large_balls(z2):
    with pytest.raises(CapExceededError) as err:
        verify_local_iso_exhaustive(z2, origin(z2), 4, 2)
    assert err.value.size == 41 and err.value.cap == 24
    with pytest.raises(DomainError):
        verify_local_iso_exhaustive(z2, origin(z2), 2, 1.0)


def test_singleton_floor(z2):
    o = origin(z2)
    prof = estimate_iso_profile_sampled(z2, o, 5, 2, trials=1, seed=0, start=o, max_size=1)
    assert prof.c_i == 4 and prof.worst_set.tolist() == [o]
    assert prof.mode == "sampled"


def test_sampled_z2_in_band(z2):
    prof = estimate_iso_profile_sampled(z2, origin(z2), 20, 2, trials=2000, seed=7)
    assert 0.5 <= prof.c_i <= 4


def test_sampled_finds_bridge_cut():
    jg = joined_grids(2, 20)
    x = jg.index_of((1, 0, 0))
    prof = estimate_iso_profile_sampled(jg, x, 20, 2, trials=50, seed=3)
    B = ball(jg, x, 20)
    v2 = [v for v in B if jg.labels[v][0] == 2]
    assert prof.c_i <= 1 / math.sqrt(len(v2)) + 1e-12
    assert len(boundary(jg, v2, ambient=B)) == 1


def test_joined_grids_ratio_decays():
    ratios = []
    for r in range(2, 5):
        jg = joined_grids(2, r)
        B = ball(jg, jg.index_of((1, 0, 0)), r)
        side = [v for v in B if jg.labels[v][0] == 2]
        assert len(boundary(jg, side, ambient=B)) == 1
        ratios.append(1 / math.sqrt(len(side)))
    assert ratios == sorted(ratios, reverse=True)
    jg = joined_grids(2, 1)
    prof = verify_local_iso_exhaustive(jg, jg.index_of((1, 0, 0)), 1, 2)
    assert prof.c_i <= 1.0


small_graphs = st.builds(
    lambda seed, n, extra: random_connected_graph(np.random.default_rng(seed), n, extra),
    st.integers(0, 2**32 - 1), st.integers(2, 11), st.floats(0, 0.4))


@settings(max_examples=60, deadline=None)
@given(small_graphs, st.data(), st.sampled_from([1.5, 2.0, 3.0]))
def test_exhaustive_matches_brute_force(g, data, d_i):
    x = data.draw(st.integers(0, g.n - 1))
    r = data.draw(st.integers(1, 3))
    B = ball(g, x, r)
    if B.size < 2:
        return
    prof = verify_local_iso_exhaustive(g, x, r, d_i)
    assert prof.c_i == pytest.approx(brute_min_ratio(g, B, d_i))
    assert 1 <= len(prof.worst_set) <= B.size // 2


@settings(max_examples=40, deadline=None)
@given(small_graphs, st.data())
def test_sampled_never_below_exhaustive(g, data):
    x = data.draw(st.integers(0, g.n - 1))
    r = data.draw(st.integers(1, 3))
    if ball(g, x, r).size < 2:
        return
    exact = verify_local_iso_exhaustive(g, x, r, 2)
    sampled = estimate_iso_profile_sampled(g, x, r, 2, trials=30, seed=data.draw(st.integers(0, 99)))
    assert sampled.c_i >= exact.c_i - 1e-12


# -- disjoint paths --------------------------------------------------------------

def test_edge_disjoint_on_z2_ball():
    g = grid_zd(2, 4)
    B = ball(g, origin(g), 4)
    res = max_disjoint_paths(g, B, [g.index_of((-2, 0))], [g.index_of((2, 0))], "edge_disjoint")
    assert res.count == 4 == scipy_edge_flow(g, B, [g.index_of((-2, 0))],
                                             [g.index_of((2, 0))])
    used = [frozenset(map(frozenset, zip(p.vertices, p.vertices[1:]))) for p in res.paths]
    assert all(not (a & b) for i, a in enumerate(used) for b in used[i + 1:])


def test_vertex_disjoint_dumbbell():
    # two triangles {0,1,2} and {4,5,6} whose tips 0 and 4 meet at the midpoint 3
    g = Graph.from_edges(7, [(0, 1), (0, 2), (1, 2), (0, 3), (3, 4), (4, 5), (4, 6), (5, 6)])
    res = max_disjoint_paths(g, range(7), [0], [4])
    assert res.count == 1 and res.cut.tolist() == [3]
    assert brute_vertex_disjoint(g, range(7), [0], [4])[0] == 1


def test_tree_has_single_path():
    t = regular_tree(3, 5)
    res = max_disjoint_paths(t, range(t.n), [1, 4], [2, 7])
    assert res.count == 1


def test_disjoint_paths_errors():
    g = grid_zd(2, 2)
    with pytest.raises(DomainError):
        max_disjoint_paths(g, range(g.n), [0, 1], [1, 2])
    with pytest.raises(DomainError):
        max_disjoint_paths(g, range(g.n), [0], [3], mode="bogus")
    with pytest.raises(DomainError):
        max_disjoint_paths(g, [0, 1], [0], [3])


def _random_instance(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 13))
    g = random_connected_graph(rng, n, float(rng.uniform(0, 0.35)))
    perm = rng.permutation(n)
    ka = int(rng.integers(1, max(2, n // 3)))
    kb = int(rng.integers(1, max(2, n // 3)))
    return g, sorted(perm[:ka].tolist()), sorted(perm[ka:ka + kb].tolist())


@pytest.mark.parametrize("mode", ["vertex_disjoint", "edge_disjoint"])
def test_flow_matches_enumeration(mode):
    brute = brute_vertex_disjoint if mode == "vertex_disjoint" else brute_edge_disjoint
    for seed in range(80):
        g, A, A2 = _random_instance(seed)
        res = max_disjoint_paths(g, range(g.n), A, A2, mode)
        count, paths = brute(g, range(g.n), A, A2)
        assert res.count == count
        assert all(p.is_valid(g) for p in res.paths)
        # every connecting path meets the returned cut
        if mode == "vertex_disjoint":
            cut = set(res.cut.tolist())
            assert all(cut & set(p) for p in paths)
        else:
            cut = {frozenset(e) for e in res.cut.tolist()}
            assert all(cut & {frozenset(e) for e in zip(p, p[1:])} for p in paths)


@pytest.mark.parametrize("r", [1, 2])
def test_disjoint_paths_meet_isoperimetric_lower_bound(r):
    g = grid_zd(2, 4)
    B = ball(g, origin(g), r)
    c_i = verify_local_iso_exhaustive(g, origin(g), r, 2).c_i
    rng = np.random.default_rng(r)
    for _ in range(60):
        perm = rng.permutation(B)
        k = int(rng.integers(1, B.size // 2 + 1))
        k2 = int(rng.integers(1, B.size - k + 1))
        A, A2 = perm[:k], perm[k:k + k2]
        need = math.ceil(c_i * min(len(A), len(A2)) ** 0.5 - 1e-9)
        assert max_disjoint_paths(g, B, A, A2, "edge_disjoint").count >= need


# -- volume --------------------------------------------------------------------

def test_ball_sizes_closed_form(z2):
    r = np.arange(1, 31)
    assert ball_sizes(z2, origin(z2), 30).tolist() == (2 * r**2 + 2 * r + 1).tolist()
    t = regular_tree(3, 6)
    r = np.arange(1, 7)
    assert ball_sizes(t, 0, 6).tolist() == (1 + 3 * (2**r - 1)).tolist()


def test_fit_z2(z2):
    fit = fit_volume_bounds(z2, [origin(z2)], 30)
    assert 1.9 <= fit.d_u <= 2.1
    assert fit.growth == "polynomial"
    sizes = ball_sizes(z2, origin(z2), 30)
    r = np.arange(1, 31)
    assert np.all(fit.c_l * r**fit.d_l <= sizes * (1 + 1e-9))
    assert np.all(sizes <= fit.c_u * r**fit.d_u * (1 + 1e-9))
    # the trivial lower bound is always a certificate on a connected infinite-family piece
    assert np.all(sizes >= r)


def test_fit_several_anchors(z2):
    anchors = [z2.index_of(p) for p in [(0, 0), (3, -2), (-5, 1)]]
    fit = fit_volume_bounds(z2, anchors, 20)
    assert fit.holds()
    assert fit.sizes.shape == (3, 20)


def test_fit_tree_is_exponential():
    t = regular_tree(3, 10)
    fit = fit_volume_bounds(t, [0], 10)
    assert fit.growth == "exponential"


def test_fit_range_error(z2):
    with pytest.raises(OutOfRangeError) as err:
        fit_volume_bounds(z2, [origin(z2)], 31)
    assert err.value.maximum == 30


def test_lower_induction(z2):
    t = regular_tree(3, 3)
    assert verify_volume_lower_induction(grid_zd(2, 1), 0, 1, 2, 1)["c3"] == pytest.approx(1 / 32)
    c_i = verify_local_iso_exhaustive(z2, origin(z2), 2, 2).c_i
    rep = verify_volume_lower_induction(z2, origin(z2), 30, 2, c_i)
    assert rep["passed"] and rep["first_failure"] is None
    rep = verify_volume_lower_induction(t, 0, 1, 2, 100.0)
    assert rep["c3"] <= 1 and rep["passed"]


# -- covering -----------------------------------------------------------------

@pytest.fixture(scope="module")
def z2_60():
    g = grid_zd(2, 60)
    return g, origin(g), fit_volume_bounds(g, [origin(g)], 60)


def test_covering_output_invariants(z2_60):
    g, o, fit = z2_60
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        cov = build_covering_set(g, o, 60, 12, 1, seed=5, fit=fit, max_retries=3)
    assert check_covering(g, o, 60, 12, cov.K)
    assert set(cov.K.tolist()) <= set(ball(g, o, 50).tolist())
    assert cov.K.size <= cov.size_bound
    assert cov.c5 == pytest.approx(default_c5(fit.c_u, fit.d_u))


def test_covering_random_branch_accepts(z2_60):
    g, o, fit = z2_60
    # dense sampling (small d) makes the random draw succeed on the first attempt
    cov = build_covering_set(g, o, 60, 6, 0.05, seed=1, fit=fit)
    assert cov.method == "random" and cov.attempts == 1
    assert check_covering(g, o, 60, 6, cov.K)


def test_covering_domain_errors(z2_60):
    g, o, fit = z2_60
    with pytest.raises(DomainError):
        build_covering_set(g, o, 60, 5, 1, seed=0, fit=fit)
    with pytest.raises(DomainError):
        build_covering_set(g, o, 60, 12, 2.5, seed=0, fit=fit)


def test_covering_single_centre_suffices():
    path = Graph.from_edges(3, [(0, 1), (1, 2)])
    assert check_covering(path, 1, 36, 6, [1])
    cov = build_covering_set(path, 1, 36, 6, 0.5, seed=0, max_retries=0,
                             fit=fit_volume_bounds(path, [0], 2))
    assert cov.method == "greedy" and cov.K.tolist() == [1]


def test_uncovered_frequency_matches_product_bound(z2_60):
    g, o, _ = z2_60
    r, s, d = 60, 12, 1
    probes = [g.index_of(p) for p in [(0, 0), (10, 5), (-20, 17)]]
    runs = 600
    misses = np.zeros(len(probes))
    for k in range(runs):
        K = sample_covering_candidates(g, o, r, s, d, seed=99, attempt=k)
        dist = bfs_distances(g, K, max_depth=s // 6) if K.size else np.full(g.n, -1)
        misses += dist[probes] < 0
    p = float(s) ** -d
    for z, m in zip(probes, misses):
        bound = (1 - p) ** ball(g, z, s // 6).size
        sigma = math.sqrt(bound * (1 - bound) / runs)
        assert m / runs <= bound + 3 * sigma
