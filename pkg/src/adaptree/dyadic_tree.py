"""Dyadic cubes, truncated trees, and adaptive partitions on [0, 1]^d.

The unit cube is split recursively into 2^d half-open children; a *truncated
tree* is a set of cubes that contains the root (unless empty) and the parent
of each of its members.  The *outer leaves* of a tree -- the children of tree
nodes that are not themselves tree nodes -- tile [0, 1]^d and form the
adaptive partition on which local polynomial fits live.

Conventions, fixed here once for every other module:

* a cube at scale ``j`` with location ``k`` covers ``prod_l [k_l 2^-j, (k_l+1) 2^-j)``,
  except that faces lying on the outer boundary of the domain are closed so
  that the leaves of any tree tile all of ``[0, 1]^d`` including the point 1;
* anchors ``k 2^-j`` are exact binary floats for every scale this module
  admits, so point-in-cube tests are exact;
* scales are capped (16, 10, 7 for d = 1, 2, 3) and exceeding the cap is a
  hard error rather than a silent approximation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product
from typing import Iterable, Iterator, Sequence

import numpy as np

__all__ = [
    "DEFAULT_MAX_SCALE",
    "DyadicCube",
    "ScaleCapError",
    "TreeInvariantError",
    "TruncatedTree",
    "AdaptivePartition",
    "default_max_scale",
    "root_cube",
    "locate",
    "outer_leaves",
    "boundary_area",
    "random_proper_subtree",
    "tree_to_jsonable",
    "tree_from_jsonable",
    "cube_to_jsonable",
    "cube_from_jsonable",
]

#: Scale caps keeping anchors exact and full-grid enumerations enumerable.
DEFAULT_MAX_SCALE = {1: 16, 2: 10, 3: 7}


class ScaleCapError(ValueError):
    """Raised when an operation would descend below the scale cap."""


class TreeInvariantError(ValueError):
    """Raised when a node set is not a proper (root-containing, parent-closed) tree."""


def default_max_scale(dim: int) -> int:
    return DEFAULT_MAX_SCALE.get(dim, DEFAULT_MAX_SCALE[3])


@dataclass(frozen=True, slots=True)
class DyadicCube:
    """Cube ``C_{j,k}`` with scale ``j >= 0`` and location ``k`` in ``{0..2^j - 1}^d``."""

    j: int
    k: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.j < 0:
            raise ValueError(f"scale must be >= 0, got {self.j}")
        n = 1 << self.j
        if not self.k or any(not (0 <= ki < n) for ki in self.k):
            raise ValueError(f"location {self.k} out of range for scale {self.j}")

    @property
    def dim(self) -> int:
        return len(self.k)

    @property
    def side(self) -> float:
        return math.ldexp(1.0, -self.j)

    @property
    def volume(self) -> float:
        return math.ldexp(1.0, -self.j * self.dim)

    @property
    def anchor(self) -> tuple[float, ...]:
        h = self.side
        return tuple(ki * h for ki in self.k)

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """(lower, upper) corner arrays; the cube is half-open except at the domain edge."""
        h = self.side
        lo = np.array([ki * h for ki in self.k])
        return lo, lo + h

    def parent(self) -> DyadicCube | None:
        if self.j == 0:
            return None
        return DyadicCube(self.j - 1, tuple(ki >> 1 for ki in self.k))

    def children(self, max_scale: int | None = None) -> tuple[DyadicCube, ...]:
        """The 2^d children, in lexicographic location order.

        Descending past the scale cap (``default_max_scale(dim)`` unless an
        explicit ``max_scale`` is given) raises :class:`ScaleCapError`.
        """
        cap = default_max_scale(self.dim) if max_scale is None else max_scale
        if self.j + 1 > cap:
            raise ScaleCapError(
                f"children of scale-{self.j} cube exceed the scale cap {cap}"
            )
        base = tuple(ki << 1 for ki in self.k)
        return tuple(
            DyadicCube(self.j + 1, tuple(b + o for b, o in zip(base, offs)))
            for offs in product((0, 1), repeat=self.dim)
        )

    def ancestors(self) -> Iterator[DyadicCube]:
        """Proper ancestors, nearest first (parent, grandparent, ..., root)."""
        cube = self.parent()
        while cube is not None:
            yield cube
            cube = cube.parent()

    def contains(self, x: Sequence[float] | np.ndarray) -> bool:
        """Exact membership under the half-open-with-closed-outer-boundary rule."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"expected a point in R^{self.dim}, got shape {x.shape}")
        lo, hi = self.bounds
        inside = (x >= lo) & ((x < hi) | ((hi == 1.0) & (x == 1.0)))
        return bool(inside.all())

    def contains_points(self, x: np.ndarray) -> np.ndarray:
        """Vectorised :meth:`contains` for an (n, d) array; returns a boolean mask."""
        x = np.asarray(x, dtype=float)
        lo, hi = self.bounds
        inside = (x >= lo) & ((x < hi) | ((hi == 1.0) & (x == 1.0)))
        return inside.all(axis=1)

    def sort_key(self) -> tuple:
        return (self.j, self.k)

    def __repr__(self) -> str:  # compact: C(j; k1,k2,...)
        return f"C({self.j}; {','.join(map(str, self.k))})"


def root_cube(dim: int) -> DyadicCube:
    return DyadicCube(0, (0,) * dim)


def locate(x: Sequence[float] | np.ndarray, j: int) -> DyadicCube:
    """The scale-``j`` cube containing the point ``x`` in [0, 1]^d."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise ValueError("point outside [0, 1]^d")
    n = 1 << j
    k = np.minimum(np.floor(x * n).astype(int), n - 1)
    return DyadicCube(j, tuple(int(ki) for ki in k))


class TruncatedTree:
    """A proper subtree of the dyadic tree: parent-closed, root-containing (or empty).

    Immutable.  Iteration is in (scale, location) order so downstream output
    is deterministic.
    """

    __slots__ = ("_nodes", "_dim")

    def __init__(self, nodes: Iterable[DyadicCube], dim: int):
        nodes = frozenset(nodes)
        for c in nodes:
            if c.dim != dim:
                raise TreeInvariantError(f"node {c!r} has dimension {c.dim}, expected {dim}")
        if nodes and root_cube(dim) not in nodes:
            raise TreeInvariantError("non-empty tree must contain the root cube")
        for c in nodes:
            p = c.parent()
            if p is not None and p not in nodes:
                raise TreeInvariantError(f"node {c!r} is missing its parent {p!r}")
        self._nodes = nodes
        self._dim = dim

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def nodes(self) -> frozenset[DyadicCube]:
        return self._nodes

    @property
    def max_scale(self) -> int:
        """Deepest scale present; -1 for the empty tree."""
        return max((c.j for c in self._nodes), default=-1)

    def __len__(self) -> int:
        return len(self._nodes)

    def __contains__(self, cube: DyadicCube) -> bool:
        return cube in self._nodes

    def __iter__(self) -> Iterator[DyadicCube]:
        return iter(sorted(self._nodes, key=DyadicCube.sort_key))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TruncatedTree):
            return NotImplemented
        return self._dim == other._dim and self._nodes == other._nodes

    def __hash__(self) -> int:
        return hash((self._dim, self._nodes))

    def __repr__(self) -> str:
        return f"TruncatedTree(dim={self._dim}, size={len(self._nodes)})"


class AdaptivePartition:
    """The outer leaves of a truncated tree: finitely many cubes tiling [0, 1]^d."""

    __slots__ = ("_cells", "_dim")

    def __init__(self, cells: Iterable[DyadicCube], dim: int):
        cells = tuple(sorted(cells, key=DyadicCube.sort_key))
        if not cells:
            raise ValueError("a partition needs at least one cell")
        for c in cells:
            if c.dim != dim:
                raise ValueError(f"cell {c!r} has dimension {c.dim}, expected {dim}")
        self._cells = cells
        self._dim = dim

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def cells(self) -> tuple[DyadicCube, ...]:
        return self._cells

    @property
    def max_scale(self) -> int:
        return max(c.j for c in self._cells)

    def __len__(self) -> int:
        return len(self._cells)

    def __iter__(self) -> Iterator[DyadicCube]:
        return iter(self._cells)

    def is_tiling(self) -> bool:
        """Exact check (integer arithmetic) that the cells tile [0, 1]^d."""
        J = self.max_scale
        d = self._dim
        total = sum(1 << ((J - c.j) * d) for c in self._cells)
        if total != 1 << (J * d):
            return False
        cellset = set(self._cells)
        if len(cellset) != len(self._cells):
            return False
        # equal total volume + no cell nested inside another => disjoint cover
        return not any(a in cellset for c in self._cells for a in c.ancestors())

    def locate_cell(self, x: Sequence[float] | np.ndarray) -> DyadicCube:
        """The unique cell containing ``x`` (tiling assumed)."""
        x = np.asarray(x, dtype=float)
        for j in range(self.max_scale + 1):
            c = locate(x, j)
            if c in set(self._cells):
                return c
        raise KeyError(f"no cell contains {x} -- not a tiling?")

    def __repr__(self) -> str:
        return f"AdaptivePartition(dim={self._dim}, cells={len(self._cells)})"


def outer_leaves(tree: TruncatedTree) -> AdaptivePartition:
    """Children of tree nodes that are not themselves tree nodes.

    The empty tree's partition is the root cube alone.  For a non-empty tree
    of size N the cell count is sandwiched between N and 2^d * N.
    """
    if len(tree) == 0:
        return AdaptivePartition([root_cube(tree.dim)], tree.dim)
    nodes = tree.nodes
    leaves = [
        child
        for cube in nodes
        for child in cube.children(max_scale=cube.j + 1)
        if child not in nodes
    ]
    return AdaptivePartition(leaves, tree.dim)


def boundary_area(partition: AdaptivePartition) -> float:
    """(d-1)-dimensional measure of the union of interior cell faces.

    Faces on the boundary of [0, 1]^d are excluded.  For d = 1 this is the
    number of interior breakpoints.  Exact: faces are rasterised onto the
    finest grid present in the partition and counted once each, so shared
    faces and partial overlaps (a coarse face met by several finer ones) are
    never double counted.
    """
    d = partition.dim
    J = partition.max_scale
    n = 1 << J
    keys: list[np.ndarray] = []
    for cell in partition.cells:
        scale_up = J - cell.j
        m = 1 << scale_up  # fine faces per side, per transverse axis
        for axis in range(d):
            lo_f = cell.k[axis] << scale_up
            for face_c in (lo_f, lo_f + m):
                if face_c == 0 or face_c == n:
                    continue  # domain boundary
                # transverse fine-index ranges
                ranges = [
                    np.arange(cell.k[ax] << scale_up, (cell.k[ax] + 1) << scale_up)
                    for ax in range(d)
                    if ax != axis
                ]
                if ranges:
                    grids = np.meshgrid(*ranges, indexing="ij")
                    flat = np.stack([g.ravel() for g in grids], axis=1)
                else:
                    flat = np.zeros((1, 0), dtype=int)
                # pack (axis, face coordinate, transverse indices) into one int64
                key = np.full(flat.shape[0], axis, dtype=np.int64)
                key = key * (n + 1) + face_c
                for col in range(flat.shape[1]):
                    key = key * n + flat[:, col]
                keys.append(key)
    if not keys:
        return 0.0
    count = np.unique(np.concatenate(keys)).size
    return count * math.ldexp(1.0, -J * (d - 1))


def random_proper_subtree(
    rng: np.random.Generator,
    dim: int,
    n_nodes: int,
    max_scale: int | None = None,
) -> TruncatedTree:
    """Grow a random proper subtree by repeatedly promoting a random outer leaf.

    Every intermediate set is itself a proper subtree, so the result is one by
    construction.  ``n_nodes = 0`` gives the empty tree.
    """
    cap = default_max_scale(dim) if max_scale is None else max_scale
    if n_nodes <= 0:
        return TruncatedTree([], dim)
    nodes: set[DyadicCube] = {root_cube(dim)}
    frontier: list[DyadicCube] = []
    if cap >= 1:
        frontier = list(root_cube(dim).children(max_scale=cap))
    while len(nodes) < n_nodes and frontier:
        i = int(rng.integers(len(frontier)))
        frontier[i], frontier[-1] = frontier[-1], frontier[i]
        cube = frontier.pop()
        nodes.add(cube)
        if cube.j + 1 <= cap:
            frontier.extend(cube.children(max_scale=cap))
    return TruncatedTree(nodes, dim)


def cube_to_jsonable(cube: DyadicCube) -> list[int]:
    return [cube.j, *cube.k]


def cube_from_jsonable(obj: Sequence[int], dim: int | None = None) -> DyadicCube:
    if len(obj) < 2:
        raise ValueError(f"cube entry needs [j, k...], got {obj!r}")
    cube = DyadicCube(int(obj[0]), tuple(int(v) for v in obj[1:]))
    if dim is not None and cube.dim != dim:
        raise ValueError(f"cube {obj!r} has dimension {cube.dim}, expected {dim}")
    return cube


def tree_to_jsonable(tree: TruncatedTree) -> list[list[int]]:
    """Sorted ``[[j, k_1, ..., k_d], ...]``; stable across runs."""
    return [cube_to_jsonable(c) for c in tree]


def tree_from_jsonable(obj: Sequence[Sequence[int]], dim: int) -> TruncatedTree:
    """Parse and re-validate the invariants (raises :class:`TreeInvariantError`)."""
    return TruncatedTree([cube_from_jsonable(e, dim) for e in obj], dim)
