"""Local polynomial fits on dyadic cubes and the refinement quantity.

On each cube the degree-``theta`` fit is the projection of ``f`` onto
polynomials in the cube-scaled coordinates ``u = (x - anchor) / side``, taken
in L2 of the supplied measure restricted to the cube.  The projection is
computed through an orthonormal basis built by modified Gram-Schmidt (with
re-orthogonalisation) over the scaled monomials in graded lexicographic
order, so the fit coefficients are plain inner products and the squared norm
of the fit is the sum of squared coefficients.

The *refinement quantity* of a cube is the L2(measure) norm of the
difference between the cube's fit and its children's fits, glued over the
children:

    delta(C)^2 = sum_children int_child (p_child - p_C)^2 dmeasure.

It is attached to every cube including the root (for f(x) = x at degree 0
the root has delta = 1/4 and scale-j cubes have delta = 2^(-3j/2)/4), and at
degree 0 it reduces to the magnitude of the classical Haar wavelet
coefficient.  delta is *not* monotone along branches, which is why tree
truncation (see ``adaptive_approx``) explores breadth-first instead of
pruning on the first small value.

Degenerate cells (measure mass below :data:`MASS_FLOOR`, or too few/poorly
spread empirical points to determine the basis) yield a zero patch carrying
``degenerate=True`` rather than an error; fits over regions the measure
never charges are reported as zero and flagged, and every downstream
consumer (truncation, error reports) propagates the flag.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from adaptree.dyadic_tree import DyadicCube, cube_from_jsonable, cube_to_jsonable
from adaptree.measures import Measure, QuadratureSpec, cell_nodes

__all__ = [
    "MASS_FLOOR",
    "PIVOT_TOL",
    "DegenerateCellError",
    "RankDeficientBasisError",
    "OrthonormalBasis",
    "PolynomialPatch",
    "CellFit",
    "RefinementRecord",
    "multi_indices",
    "n_poly_basis",
    "scaled_monomials",
    "orthonormal_basis",
    "basis_gram",
    "fit_cell",
    "fit_local_polynomial",
    "refinement_quantity",
    "patch_to_jsonable",
    "patch_from_jsonable",
]

#: Cells with measure mass below this are treated as unseen by the measure.
MASS_FLOOR = 1e-12
#: Gram-Schmidt pivot threshold below which a direction is undetermined.
PIVOT_TOL = 1e-12

FunctionOnPoints = Callable[[np.ndarray], np.ndarray]


class DegenerateCellError(ValueError):
    """The measure puts (numerically) no mass on the cube."""


class RankDeficientBasisError(ValueError):
    """The cell inner product cannot resolve all monomial directions."""


@lru_cache(maxsize=256)
def multi_indices(theta: int, dim: int) -> tuple[tuple[int, ...], ...]:
    """All exponent tuples with total degree <= theta, graded lexicographic."""
    if theta < 0 or dim < 1:
        raise ValueError("need theta >= 0 and dim >= 1")
    out: list[tuple[int, ...]] = []
    for total in range(theta + 1):
        level: list[tuple[int, ...]] = []

        def rec(prefix: tuple[int, ...], remaining: int, axes_left: int) -> None:
            if axes_left == 1:
                level.append(prefix + (remaining,))
                return
            for v in range(remaining, -1, -1):
                rec(prefix + (v,), remaining - v, axes_left - 1)

        rec((), total, dim)
        out.extend(sorted(level))
    return tuple(out)


def n_poly_basis(theta: int, dim: int) -> int:
    return math.comb(theta + dim, dim)


def scaled_monomials(
    cube: DyadicCube, alphas: Sequence[tuple[int, ...]], pts: np.ndarray
) -> np.ndarray:
    """Matrix of ``u^alpha`` columns at ``pts``, with u the cube-scaled coordinates."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    lo, _ = cube.bounds
    u = (pts - lo) / cube.side
    cols = np.empty((pts.shape[0], len(alphas)))
    for col, alpha in enumerate(alphas):
        acc = np.ones(pts.shape[0])
        for axis, a in enumerate(alpha):
            if a:
                acc = acc * u[:, axis] ** a
        cols[:, col] = acc
    return cols


def _orthonormal_coeffs(
    gram: np.ndarray, pivot_tol: float = PIVOT_TOL
) -> tuple[np.ndarray, list[int]]:
    """Modified Gram-Schmidt (twice) in coefficient space over a monomial Gram matrix.

    Returns row-coefficient matrix C (rows are basis functions over the
    monomials; dropped directions are zero rows) and the list of kept rows.
    """
    n = gram.shape[0]
    C = np.zeros((n, n))
    kept: list[int] = []
    for ell in range(n):
        v = np.zeros(n)
        v[ell] = 1.0
        for _ in range(2):  # re-orthogonalise to keep Gram at ~1e-15 of identity
            for m in kept:
                v = v - (v @ gram @ C[m]) * C[m]
        pivot = math.sqrt(max(float(v @ gram @ v), 0.0))
        if pivot < pivot_tol:
            continue
        C[ell] = v / pivot
        kept.append(ell)
    return C, kept


@dataclass(frozen=True)
class OrthonormalBasis:
    """Orthonormal polynomial basis on one cube, w.r.t. one measure.

    ``coeffs[i]`` holds the scaled-monomial coefficients of the i-th basis
    function; evaluation composes with :func:`scaled_monomials`.
    """

    cube: DyadicCube
    degree: int
    alphas: tuple[tuple[int, ...], ...]
    coeffs: np.ndarray

    def eval(self, pts: np.ndarray) -> np.ndarray:
        return scaled_monomials(self.cube, self.alphas, pts) @ self.coeffs.T


def orthonormal_basis(
    cube: DyadicCube, theta: int, measure: Measure, quad: QuadratureSpec
) -> OrthonormalBasis:
    """Full orthonormal basis; strict about degeneracy.

    Raises :class:`DegenerateCellError` if the cube's mass is below
    :data:`MASS_FLOOR` and :class:`RankDeficientBasisError` if any
    Gram-Schmidt pivot falls below :data:`PIVOT_TOL` (e.g. an empirical cell
    with fewer points than basis functions).
    """
    alphas = multi_indices(theta, cube.dim)
    pts, w = cell_nodes(measure, cube, quad)
    if float(w.sum()) < MASS_FLOOR:
        raise DegenerateCellError(f"cube {cube!r} carries no mass")
    U = scaled_monomials(cube, alphas, pts)
    gram = U.T @ (U * w[:, None])
    C, kept = _orthonormal_coeffs(gram)
    if len(kept) < len(alphas):
        raise RankDeficientBasisError(
            f"cube {cube!r}: only {len(kept)}/{len(alphas)} directions resolvable"
        )
    return OrthonormalBasis(cube=cube, degree=theta, alphas=alphas, coeffs=C)


def basis_gram(
    basis: OrthonormalBasis, measure: Measure, quad: QuadratureSpec
) -> np.ndarray:
    """Gram matrix of the basis under the cell inner product (identity if orthonormal)."""
    pts, w = cell_nodes(measure, basis.cube, quad)
    V = basis.eval(pts)
    return V.T @ (V * w[:, None])


@dataclass(frozen=True)
class PolynomialPatch:
    """A polynomial on one cube, stored over scaled monomials.

    ``coeffs[i]`` multiplies ``u^alphas[i]``.  The polynomial extends to all
    of R^d (needed when comparing a parent fit on a child cube, and by the
    network compiler on slightly inflated supports); restriction to the cube
    is the caller's business.
    """

    cube: DyadicCube
    degree: int
    alphas: tuple[tuple[int, ...], ...]
    coeffs: np.ndarray
    degenerate: bool = False

    def eval(self, pts: np.ndarray) -> np.ndarray:
        return scaled_monomials(self.cube, self.alphas, pts) @ self.coeffs

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        return self.eval(pts)


@dataclass(frozen=True)
class CellFit:
    """A fitted patch plus the cell quantities every consumer reuses.

    ``sq_norm`` is the squared L2(measure) norm of the patch over the cube
    (sum of squared orthonormal coefficients); ``sq_f`` the cell integral of
    f^2; their difference is the squared local fit error, which dominates
    the refinement quantity of the cube and of every descendant.
    """

    patch: PolynomialPatch
    mass: float
    sq_f: float
    sq_norm: float

    @property
    def sq_fit_error(self) -> float:
        return max(self.sq_f - self.sq_norm, 0.0)


def fit_cell(
    f: FunctionOnPoints,
    cube: DyadicCube,
    theta: int,
    measure: Measure,
    quad: QuadratureSpec,
) -> CellFit:
    """Best degree-theta fit on the cube; degenerate cells yield a flagged zero patch."""
    alphas = multi_indices(theta, cube.dim)
    pts, w = cell_nodes(measure, cube, quad)
    mass = float(w.sum())
    if mass < MASS_FLOOR:
        zero = PolynomialPatch(cube, theta, alphas, np.zeros(len(alphas)), degenerate=True)
        return CellFit(patch=zero, mass=mass, sq_f=0.0, sq_norm=0.0)
    fv = np.asarray(f(pts), dtype=float)
    U = scaled_monomials(cube, alphas, pts)
    gram = U.T @ (U * w[:, None])
    moments = U.T @ (w * fv)
    C, kept = _orthonormal_coeffs(gram)
    on_coeffs = C[kept] @ moments if kept else np.zeros(0)
    mono = C[kept].T @ on_coeffs if kept else np.zeros(len(alphas))
    patch = PolynomialPatch(
        cube, theta, alphas, mono, degenerate=(len(kept) < len(alphas))
    )
    return CellFit(
        patch=patch,
        mass=mass,
        sq_f=float(np.sum(w * fv * fv)),
        sq_norm=float(np.sum(on_coeffs**2)),
    )


def fit_local_polynomial(
    f: FunctionOnPoints,
    cube: DyadicCube,
    theta: int,
    measure: Measure,
    quad: QuadratureSpec,
) -> PolynomialPatch:
    return fit_cell(f, cube, theta, measure, quad).patch


@dataclass(frozen=True)
class RefinementRecord:
    """delta(C) together with the fits that defined it."""

    cube: DyadicCube
    delta: float
    parent_fit: CellFit
    child_fits: tuple[CellFit, ...]

    @property
    def degenerate(self) -> bool:
        return self.parent_fit.patch.degenerate or any(
            c.patch.degenerate for c in self.child_fits
        )


def refinement_quantity(
    f: FunctionOnPoints,
    cube: DyadicCube,
    theta: int,
    measure: Measure,
    quad: QuadratureSpec,
    max_scale: int | None = None,
) -> RefinementRecord:
    """delta(C): L2(measure) distance between the cube fit and its children's fits.

    Computed by direct integration of (p_child - p_cube)^2 over each child.
    Defined for every cube, the root included.
    """
    parent = fit_cell(f, cube, theta, measure, quad)
    kids = cube.children(max_scale=max_scale)
    child_fits = []
    acc = 0.0
    for child in kids:
        cf = fit_cell(f, child, theta, measure, quad)
        child_fits.append(cf)
        pts, w = cell_nodes(measure, child, quad)
        if pts.shape[0]:
            diff = cf.patch.eval(pts) - parent.patch.eval(pts)
            acc += float(np.sum(w * diff * diff))
    return RefinementRecord(
        cube=cube, delta=math.sqrt(max(acc, 0.0)), parent_fit=parent,
        child_fits=tuple(child_fits),
    )


def patch_to_jsonable(patch: PolynomialPatch) -> dict:
    """``{"cube": [j, k...], "degree": d, "coeffs": [[[alpha...], value], ...]}``."""
    return {
        "cube": cube_to_jsonable(patch.cube),
        "degree": patch.degree,
        "coeffs": [
            [list(alpha), float(c)] for alpha, c in zip(patch.alphas, patch.coeffs)
        ],
        "degenerate": patch.degenerate,
    }


def patch_from_jsonable(obj: dict, dim: int | None = None) -> PolynomialPatch:
    cube = cube_from_jsonable(obj["cube"], dim)
    degree = int(obj["degree"])
    alphas = multi_indices(degree, cube.dim)
    coeffs = np.zeros(len(alphas))
    index = {a: i for i, a in enumerate(alphas)}
    for alpha, value in obj["coeffs"]:
        key = tuple(int(a) for a in alpha)
        if key not in index:
            raise ValueError(f"exponent {key} exceeds degree {degree}")
        coeffs[index[key]] = float(value)
    return PolynomialPatch(
        cube, degree, alphas, coeffs, degenerate=bool(obj.get("degenerate", False))
    )
