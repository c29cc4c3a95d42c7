"""Probability measures on [0, 1]^d and per-cube quadrature.

Three measure kinds are supported: Lebesgue, absolutely continuous with a
supplied density (with an upper-regularity constant used for rejection
sampling and reported bounds), and empirical (finitely many weighted points,
e.g. loaded from a CSV of samples).

All integration against a measure happens through :func:`cell_nodes`, which
returns quadrature points and weights for one dyadic cube.  The weights
already include the measure, so ``sum(w * g(p))`` approximates the cell
integral of ``g``.  Rules:

* ``tensor-gauss`` -- per-axis Gauss-Legendre nodes (order ``2*theta + 4``
  per axis by default), exact for the polynomial Gram matrices the fitting
  layer needs, as long as the density itself is polynomial on the cube.
  A *splitter* hook lets a target with known discontinuity geometry replace
  the node layout on cubes the geometry crosses (see ``corpus``).
* ``monte-carlo`` -- uniform points in the cube, seeded per cube so results
  are reproducible and independent of traversal order.

Empirical measures ignore the rule and simply return their in-cube points.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Protocol, Sequence

import numpy as np

from adaptree.dyadic_tree import DyadicCube

__all__ = [
    "Measure",
    "QuadratureSpec",
    "Splitter",
    "default_quadrature",
    "lebesgue",
    "density_measure",
    "empirical_measure",
    "measure_from_csv",
    "cell_nodes",
    "cell_mass",
    "cell_inner_product",
    "sample",
]

DensityFn = Callable[[np.ndarray], np.ndarray]


class Splitter(Protocol):
    """Geometry hook: custom Lebesgue nodes for a box, or None for the default."""

    def __call__(
        self, lo: np.ndarray, hi: np.ndarray, order: int
    ) -> tuple[np.ndarray, np.ndarray] | None: ...


@dataclass(frozen=True)
class Measure:
    """A measure on [0, 1]^d.  Use the factory functions below."""

    kind: str  # 'lebesgue' | 'density' | 'empirical'
    dim: int
    density: DensityFn | None = None
    upper_const: float | None = None  # sup of the density, when known
    points: np.ndarray | None = None
    weights: np.ndarray | None = None
    label: str = ""

    def density_at(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.kind == "lebesgue":
            return np.ones(x.shape[0])
        if self.kind == "density":
            assert self.density is not None
            return np.asarray(self.density(x), dtype=float)
        raise ValueError("empirical measures have no density")


def lebesgue(dim: int) -> Measure:
    return Measure(kind="lebesgue", dim=dim, upper_const=1.0, label="lebesgue")


def density_measure(
    dim: int, density: DensityFn, upper_const: float, label: str = "density"
) -> Measure:
    """Absolutely continuous measure; ``upper_const`` must dominate the density."""
    if upper_const <= 0:
        raise ValueError("upper_const must be positive")
    return Measure(
        kind="density", dim=dim, density=density, upper_const=upper_const, label=label
    )


def empirical_measure(
    points: np.ndarray, weights: np.ndarray | None = None, label: str = "empirical"
) -> Measure:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.ndim != 2:
        raise ValueError("points must be an (n, d) array")
    if np.any(points < 0.0) or np.any(points > 1.0):
        raise ValueError("empirical points must lie in [0, 1]^d")
    n = points.shape[0]
    if weights is None:
        weights = np.full(n, 1.0 / n)
    else:
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (n,) or np.any(weights < 0):
            raise ValueError("weights must be a nonnegative length-n vector")
    return Measure(
        kind="empirical", dim=points.shape[1], points=points, weights=weights, label=label
    )


def measure_from_csv(path: str) -> Measure:
    """Empirical measure from a headerless CSV whose columns are coordinates."""
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if row:
                rows.append([float(v) for v in row])
    if not rows:
        raise ValueError(f"no samples in {path}")
    return empirical_measure(np.array(rows), label=f"csv:{path}")


@dataclass(frozen=True)
class QuadratureSpec:
    """How to integrate over one cube.

    ``order`` is the per-axis Gauss-Legendre order for ``tensor-gauss``;
    ``n_points``/``seed`` drive the ``monte-carlo`` fallback; ``splitter``
    optionally replaces node layout on geometry-crossing cubes (ignored for
    empirical measures).
    """

    kind: str = "tensor-gauss"
    order: int = 6
    n_points: int = 4096
    seed: int = 0
    splitter: Splitter | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.kind not in ("tensor-gauss", "monte-carlo"):
            raise ValueError(f"unknown quadrature kind {self.kind!r}")
        if self.order < 1 or self.n_points < 1:
            raise ValueError("order and n_points must be >= 1")


def default_quadrature(theta: int, splitter: Splitter | None = None) -> QuadratureSpec:
    """Tensor Gauss-Legendre at order ``2*theta + 4`` per axis."""
    return QuadratureSpec(kind="tensor-gauss", order=2 * theta + 4, splitter=splitter)


@lru_cache(maxsize=64)
def _gauss_01(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes/weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


def gauss_box_nodes(lo: np.ndarray, hi: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Tensor-product Gauss nodes on a box; weights sum to the box volume."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    x01, w01 = _gauss_01(order)
    axes_x = [lo[i] + (hi[i] - lo[i]) * x01 for i in range(lo.size)]
    axes_w = [(hi[i] - lo[i]) * w01 for i in range(lo.size)]
    grids = np.meshgrid(*axes_x, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    wgrids = np.meshgrid(*axes_w, indexing="ij")
    w = wgrids[0].ravel().copy()
    for g in wgrids[1:]:
        w *= g.ravel()
    return pts, w


def cell_nodes(
    measure: Measure, cube: DyadicCube, quad: QuadratureSpec
) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature points and measure-inclusive weights for one cube.

    Returns ``(points, weights)`` with ``points`` of shape (n, d); may be
    empty (n = 0) for an empirical measure with no samples in the cube.
    """
    if measure.dim != cube.dim:
        raise ValueError("measure/cube dimension mismatch")
    if measure.kind == "empirical":
        mask = cube.contains_points(measure.points)
        return measure.points[mask], measure.weights[mask]

    lo, hi = cube.bounds
    if quad.kind == "tensor-gauss":
        pts = w = None
        if quad.splitter is not None:
            custom = quad.splitter(lo, hi, quad.order)
            if custom is not None:
                pts, w = custom
        if pts is None:
            pts, w = gauss_box_nodes(lo, hi, quad.order)
    else:  # monte-carlo, seeded per cube
        rng = np.random.default_rng(
            np.random.SeedSequence([quad.seed, cube.j, *cube.k])
        )
        pts = lo + (hi - lo) * rng.random((quad.n_points, cube.dim))
        w = np.full(quad.n_points, cube.volume / quad.n_points)

    if measure.kind == "density":
        w = w * np.asarray(measure.density(pts), dtype=float)
    return pts, w


def cell_mass(measure: Measure, cube: DyadicCube, quad: QuadratureSpec) -> float:
    _, w = cell_nodes(measure, cube, quad)
    return float(w.sum())


def cell_inner_product(
    g: Callable[[np.ndarray], np.ndarray],
    h: Callable[[np.ndarray], np.ndarray],
    cube: DyadicCube,
    measure: Measure,
    quad: QuadratureSpec,
) -> float:
    """``int_cube g * h d(measure)`` under the given rule."""
    pts, w = cell_nodes(measure, cube, quad)
    if pts.shape[0] == 0:
        return 0.0
    return float(np.sum(w * np.asarray(g(pts)) * np.asarray(h(pts))))


def sample(measure: Measure, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw n points.  Density measures use rejection against ``upper_const``."""
    if measure.kind == "lebesgue":
        return rng.random((n, measure.dim))
    if measure.kind == "empirical":
        idx = rng.choice(
            measure.points.shape[0],
            size=n,
            p=measure.weights / measure.weights.sum(),
        )
        return measure.points[idx]
    if measure.upper_const is None:
        raise ValueError("density measure needs upper_const for sampling")
    out = np.empty((n, measure.dim))
    got = 0
    while got < n:
        m = max(2 * (n - got), 64)
        cand = rng.random((m, measure.dim))
        accept = rng.random(m) * measure.upper_const <= measure.density_at(cand)
        take = cand[accept][: n - got]
        out[got : got + take.shape[0]] = take
        got += take.shape[0]
    return out
