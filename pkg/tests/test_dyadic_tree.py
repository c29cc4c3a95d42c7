"""Tree/partition geometry, invariants, and hand-counted boundary measures."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adaptree.dyadic_tree import (
    AdaptivePartition,
    DyadicCube,
    ScaleCapError,
    TreeInvariantError,
    TruncatedTree,
    boundary_area,
    cube_from_jsonable,
    locate,
    outer_leaves,
    random_proper_subtree,
    root_cube,
    tree_from_jsonable,
    tree_to_jsonable,
)


class TestCubeGeometry:
    def test_root(self):
        c = root_cube(2)
        assert c.side == 1.0 and c.volume == 1.0 and c.anchor == (0.0, 0.0)
        assert c.parent() is None

    def test_children_order_and_parent_roundtrip(self):
        c = DyadicCube(1, (0, 1))
        kids = c.children()
        assert [k.k for k in kids] == [(0, 2), (0, 3), (1, 2), (1, 3)]
        assert all(k.parent() == c for k in kids)
        assert all(k.side == 0.25 for k in kids)

    def test_anchor_exact_dyadic(self):
        c = DyadicCube(16, (2**16 - 1,))
        # 65535 / 65536 is exactly representable
        assert c.anchor[0] == 65535.0 / 65536.0
        assert c.anchor[0] + c.side == 1.0

    def test_halfopen_membership(self):
        c = DyadicCube(1, (0,))
        assert c.contains([0.0]) and c.contains([0.49999])
        assert not c.contains([0.5])
        right = DyadicCube(1, (1,))
        assert right.contains([0.5]) and right.contains([1.0])  # closed outer face

    def test_membership_2d_outer_closure(self):
        c = DyadicCube(1, (1, 1))
        assert c.contains([1.0, 1.0]) and c.contains([0.5, 0.75])
        assert not c.contains([0.5, 0.25])

    def test_locate(self):
        assert locate([0.3], 2) == DyadicCube(2, (1,))
        assert locate([1.0], 3) == DyadicCube(3, (7,))
        assert locate([0.5, 0.5], 1) == DyadicCube(1, (1, 1))
        with pytest.raises(ValueError):
            locate([1.2], 1)

    def test_scale_cap(self):
        with pytest.raises(ScaleCapError):
            DyadicCube(16, (0,)).children()
        with pytest.raises(ScaleCapError):
            DyadicCube(10, (0, 0)).children()
        # an explicit cap overrides the default
        assert len(DyadicCube(16, (0,)).children(max_scale=17)) == 2

    def test_invalid_cubes(self):
        with pytest.raises(ValueError):
            DyadicCube(-1, (0,))
        with pytest.raises(ValueError):
            DyadicCube(1, (2,))
        with pytest.raises(ValueError):
            DyadicCube(0, ())


class TestTreeInvariants:
    def test_parent_closure_enforced(self):
        r = root_cube(1)
        grandchild = r.children()[0].children()[0]
        with pytest.raises(TreeInvariantError):
            TruncatedTree([r, grandchild], 1)

    def test_root_required_when_nonempty(self):
        with pytest.raises(TreeInvariantError):
            TruncatedTree([DyadicCube(1, (0,))], 1)

    def test_empty_tree_is_legal(self):
        t = TruncatedTree([], 2)
        assert len(t) == 0 and t.max_scale == -1

    def test_iteration_sorted(self):
        r = root_cube(1)
        t = TruncatedTree([r, *r.children()], 1)
        assert [c.sort_key() for c in t] == [(0, (0,)), (1, (0,)), (1, (1,))]


class TestOuterLeaves:
    def test_empty_tree_gives_root_cell(self):
        part = outer_leaves(TruncatedTree([], 3))
        assert part.cells == (root_cube(3),)
        assert part.is_tiling()

    def test_root_only_1d(self):
        part = outer_leaves(TruncatedTree([root_cube(1)], 1))
        assert [c.sort_key() for c in part] == [(1, (0,)), (1, (1,))]

    def test_lopsided_1d(self):
        r = root_cube(1)
        left = r.children()[0]
        part = outer_leaves(TruncatedTree([r, left], 1))
        # right half stays coarse; left half splits into quarters
        assert [c.sort_key() for c in part] == [(1, (1,)), (2, (0,)), (2, (1,))]
        assert part.is_tiling()

    def test_quadrants_2d(self):
        part = outer_leaves(TruncatedTree([root_cube(2)], 2))
        assert len(part) == 4 and part.is_tiling()

    def test_locate_cell(self):
        r = root_cube(1)
        part = outer_leaves(TruncatedTree([r, r.children()[0]], 1))
        assert part.locate_cell([0.9]) == DyadicCube(1, (1,))
        assert part.locate_cell([0.3]) == DyadicCube(2, (1,))


class TestBoundaryArea:
    """Hand-counted interior face measures."""

    def test_1d_counts_interior_breakpoints(self):
        r = root_cube(1)
        assert boundary_area(outer_leaves(TruncatedTree([r], 1))) == 1.0
        assert boundary_area(outer_leaves(TruncatedTree([r, r.children()[0]], 1))) == 2.0
        assert boundary_area(outer_leaves(TruncatedTree([], 1))) == 0.0

    def test_2d_quadrants(self):
        # one vertical + one horizontal interior segment, each of length 1
        part = outer_leaves(TruncatedTree([root_cube(2)], 2))
        assert boundary_area(part) == 2.0

    def test_2d_partial_face_not_double_counted(self):
        r = root_cube(2)
        t = TruncatedTree([r, r.children()[0]], 2)
        # quadrant cross (2.0) + cross inside the refined quadrant (1.0)
        assert boundary_area(outer_leaves(t)) == 3.0

    def test_uniform_grid_2d(self):
        # full refinement to scale 2: 4x4 grid, interior lines 2 * 3 * 1
        r = root_cube(2)
        nodes = [r, *r.children()]
        t = TruncatedTree(nodes, 2)
        assert boundary_area(outer_leaves(t)) == 6.0

    def test_3d_octants(self):
        part = outer_leaves(TruncatedTree([root_cube(3)], 3))
        # three interior coordinate planes of area 1 each
        assert boundary_area(part) == 3.0


class TestRandomSubtrees:
    @settings(max_examples=60, deadline=None)
    @given(
        seed=st.integers(0, 2**32 - 1),
        dim=st.integers(1, 3),
        n_nodes=st.integers(1, 60),
    )
    def test_sandwich_tiling_and_face_bound(self, seed, dim, n_nodes):
        rng = np.random.default_rng(seed)
        tree = random_proper_subtree(rng, dim, n_nodes)
        assert 1 <= len(tree) <= n_nodes
        part = outer_leaves(tree)
        assert part.is_tiling()
        assert len(tree) <= len(part) <= (2**dim) * len(tree)
        area = boundary_area(part)
        assert area <= 2 ** (dim + 1) * dim * len(tree) ** (1.0 / dim) + 1e-9

    def test_deterministic_given_rng(self):
        t1 = random_proper_subtree(np.random.default_rng(7), 2, 30)
        t2 = random_proper_subtree(np.random.default_rng(7), 2, 30)
        assert t1 == t2

    def test_respects_cap(self):
        tree = random_proper_subtree(np.random.default_rng(0), 1, 10**6, max_scale=3)
        assert tree.max_scale <= 3
        # the whole depth-3 tree has 1 + 2 + 4 + 8 = 15 nodes
        assert len(tree) == 15


class TestSerialization:
    def test_roundtrip_sorted(self):
        r = root_cube(2)
        tree = TruncatedTree([r, r.children()[2]], 2)
        obj = tree_to_jsonable(tree)
        assert obj == [[0, 0, 0], [1, 1, 0]]
        assert tree_from_jsonable(obj, 2) == tree

    def test_parse_validates(self):
        with pytest.raises(TreeInvariantError):
            tree_from_jsonable([[1, 0]], 1)  # missing root
        with pytest.raises(ValueError):
            cube_from_jsonable([0, 0], dim=2)  # wrong dimension

    def test_partition_rejects_empty(self):
        with pytest.raises(ValueError):
            AdaptivePartition([], 1)


def test_is_tiling_detects_gaps_and_nesting():
    r = root_cube(1)
    halves = r.children()
    assert AdaptivePartition(halves, 1).is_tiling()
    assert not AdaptivePartition([halves[0]], 1).is_tiling()  # gap
    assert not AdaptivePartition([r, *halves], 1).is_tiling()  # nested


def test_math_side_relation():
    np.testing.assert_allclose(DyadicCube(5, (3, 3)).volume, math.ldexp(1, -10))
