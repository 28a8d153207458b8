"""Shared configuration fixtures for the test-suite."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from percolab.graph import Graph, grid_zd, regular_tree
from percolab.isoperimetry import build_covering_set


def path_graph(n: int) -> Graph:
    return Graph.from_edges(n, [(i, i + 1) for i in range(n - 1)])


def cycle_graph(n: int) -> Graph:
    return Graph.from_edges(n, [(i, (i + 1) % n) for i in range(n)])


def tiny_balls():
    """Small ``(g, x, L)`` instances whose ball ``B(x, L)`` has at most ten vertices."""
    from percolab.graph import grid_box
    g = path_graph(9)
    yield "path9", g, 4, 4
    g = grid_box(3, 3)
    yield "grid3x3", g, g.index_of((1, 1)), 2
    g = grid_box(2, 5)
    yield "grid2x5", g, g.index_of((0, 2)), 3
    g = cycle_graph(10)
    yield "cycle10", g, 0, 5
    g = regular_tree(3, 2)
    yield "tree3_2", g, 0, 2


@lru_cache(maxsize=None)
def strip_host(radius: int = 56):
    return grid_zd(2, radius)


@lru_cache(maxsize=None)
def strip_cover(L_big: int = 48, L_small: int = 8, seed: int = 5):
    g = strip_host()
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return build_covering_set(g, g.index_of((0, 0)), L_big, L_small, 1.0, seed)


def strip_fixture(seed: int, width: int = 3, background: float = 0.97, shift: int = 6):
    """A closed straight strip (random offset and orientation) through the
    host's centre, with independent background noise elsewhere."""
    g = strip_host()
    rng = np.random.default_rng(seed)
    coords = np.asarray(g.labels)
    axis = int(rng.integers(2))
    offset = int(rng.integers(-shift, shift + 1))
    mask = rng.random(g.n) < background
    mask[np.abs(coords[:, axis] - offset) <= width // 2] = False
    return g, mask, g.index_of((0, 0))
