import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from haarscat.datasets import grid_graph
from haarscat.multires import (
    Graph,
    GridVariant,
    MultiresApprox,
    build_from_pairings,
    connectivity_fraction,
    grid_ensemble,
    grid_multires,
    grid_traversal,
    grid_variants,
    identity_multires,
    pad_to_power_of_two,
    random_multires,
)


class TestBuildFromPairings:
    def test_single_pair(self):
        m = build_from_pairings(2, [[(0, 1)]])
        assert m.sets(1) == [[0, 1]]

    def test_full_merge(self):
        m = build_from_pairings(4, [[(0, 1), (2, 3)], [(0, 1)]])
        assert m.sets(2) == [[0, 1, 2, 3]]
        assert m.J == 2

    def test_repeated_index_rejected(self):
        with pytest.raises(ValueError, match="perfect matching"):
            build_from_pairings(4, [[(0, 1), (1, 2)]])

    def test_wrong_pair_count(self):
        with pytest.raises(ValueError):
            build_from_pairings(4, [[(0, 1)]])

    def test_out_of_range(self):
        with pytest.raises(ValueError, match="range"):
            build_from_pairings(4, [[(0, 1), (2, 4)]])

    def test_not_power_of_two(self):
        with pytest.raises(ValueError):
            build_from_pairings(6, [])

    def test_too_deep(self):
        with pytest.raises(ValueError):
            build_from_pairings(2, [[(0, 1)], [(0, 1)]])

    def test_json_round_trip(self, rng):
        m = random_multires(16, 3, rng)
        back = MultiresApprox.from_json(m.to_json())
        assert back == m
        assert json.loads(m.to_json())["J"] == 3

    def test_json_depth_mismatch(self):
        doc = identity_multires(4, 2).to_dict()
        doc["J"] = 1
        with pytest.raises(ValueError):
            MultiresApprox.from_dict(doc)


@st.composite
def multires(draw, max_log=6):
    k = draw(st.integers(1, max_log))
    J = draw(st.integers(0, k))
    seed = draw(st.integers(0, 2**31))
    return random_multires(1 << k, J, np.random.default_rng(seed))


class TestStructure:
    @given(multires())
    @settings(max_examples=60, deadline=None)
    def test_partition_size_nesting(self, m):
        for j, sets in enumerate(m.vertex_sets):
            assert sets.shape == (m.d >> j, 1 << j)
            assert sorted(sets.ravel().tolist()) == list(range(m.d))
        for j, p in enumerate(m.pairings):
            below = m.vertex_sets[j]
            for n, (a, b) in enumerate(p):
                merged = sorted(below[a].tolist() + below[b].tolist())
                assert merged == m.vertex_sets[j + 1][n].tolist()

    @given(multires())
    @settings(max_examples=40, deadline=None)
    def test_canonical_keeps_sets(self, m):
        c = m.canonical()
        for j in range(m.J + 1):
            assert sorted(map(tuple, c.sets(j))) == sorted(map(tuple, m.sets(j)))
        for p in c.pairings:
            assert np.all(p[:, 0] < p[:, 1])
            assert np.all(np.diff(p[:, 0]) > 0)

    def test_permuted_rejects_non_permutation(self):
        with pytest.raises(ValueError):
            identity_multires(4, 1).permuted([0, 0, 1, 2])


class TestGrid:
    def test_two_by_two(self):
        m = grid_multires(2, 2, 2, 0)
        assert m.sets(1) == [[0, 1], [2, 3]]
        assert m.sets(2) == [[0, 1, 2, 3]]

    def test_four_by_four_level_one_horizontal(self):
        m = grid_multires(4, 4, 1, 0)
        for a, b in m.pairings[0]:
            assert a // 4 == b // 4 and abs(a - b) == 1

    def test_variant_count(self):
        assert len(grid_variants(4, 4)) == 64
        assert len(grid_variants(32, 32)) == 64
        assert len(grid_variants(8, 4)) == 16

    def test_all_variants_connected(self):
        g = grid_graph(4, 4)
        for v in grid_variants(4, 4):
            assert connectivity_fraction(grid_multires(4, 4, 4, v), g) == [1.0] * 5

    @pytest.mark.parametrize("w,h", [(8, 8), (8, 4), (8, 16)])
    def test_larger_grids_connected(self, w, h):
        g = grid_graph(w, h)
        J = (w * h).bit_length() - 1
        for v in grid_variants(w, h)[::5]:
            assert min(connectivity_fraction(grid_multires(w, h, J, v), g)) == 1.0

    def test_traversal_is_closed_tour(self):
        cells = grid_traversal(8, 8)
        assert len(set(cells)) == 64
        for p, q in zip(cells, cells[1:] + cells[:1]):
            assert max(abs(p[0] - q[0]), abs(p[1] - q[1])) == 1

    def test_elongated_grid_rejected(self):
        with pytest.raises(ValueError, match="ratio"):
            grid_multires(4, 16, 2, 0)

    def test_rotation_needs_square(self):
        with pytest.raises(ValueError):
            grid_multires(8, 4, 2, GridVariant(rotation=1))

    def test_ensemble_distinct(self):
        members = grid_ensemble(8, 8, 6, 8, seed=3)
        assert len(set(members)) == 8
        assert grid_ensemble(8, 8, 6, 8, seed=3) == members

    def test_ensemble_too_large(self):
        with pytest.raises(ValueError):
            grid_ensemble(2, 2, 1, 10)


def _flood_fill_connected(vertices, g: Graph) -> bool:
    vs = set(vertices)
    stack, seen = [min(vs)], set()
    while stack:
        u = stack.pop()
        if u in seen:
            continue
        seen.add(u)
        stack.extend(w for w in vs if g.has_edge(u, w))
    return seen == vs


class TestConnectivity:
    def test_random_level_one_counts_adjacent_pairs(self, rng):
        g = grid_graph(4, 4)
        for _ in range(20):
            m = random_multires(16, 4, rng)
            frac = connectivity_fraction(m, g)
            adjacent = sum(g.has_edge(int(a), int(b)) for a, b in m.pairings[0])
            assert frac[0] == 1.0
            assert frac[1] == adjacent / 8
            for j in range(2, 5):
                oracle = np.mean([_flood_fill_connected(s, g) for s in m.sets(j)])
                assert frac[j] == oracle

    def test_active_mask(self):
        g = Graph.from_edges(4, [(0, 1)])
        m = build_from_pairings(4, [[(0, 2), (1, 3)]])
        assert connectivity_fraction(m, g)[1] == 0.0
        assert connectivity_fraction(m, g, active=[0, 1])[1] == 1.0
        mask = np.array([True, False, False, False])
        assert connectivity_fraction(m, g, active=mask) == [1.0, 1.0]

    def test_size_mismatch(self):
        with pytest.raises(ValueError):
            connectivity_fraction(identity_multires(4, 1), grid_graph(4, 4))


class TestGraph:
    def test_self_loop(self):
        with pytest.raises(ValueError):
            Graph.from_edges(3, [(1, 1)])

    def test_relabeled(self):
        g = Graph.from_edges(3, [(0, 1)])
        h = g.relabeled([2, 0, 1])
        assert h.edges == frozenset({(1, 2)})


def test_pad_to_power_of_two():
    x, mask = pad_to_power_of_two(np.ones((2, 5)))
    assert x.shape == (2, 8)
    assert mask.tolist() == [True] * 5 + [False] * 3
    assert np.all(x[:, 5:] == 0)
