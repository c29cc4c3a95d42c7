"""Orthonormal fits: hand-derived bases, exactness, Haar equivalence at degree 0."""

from __future__ import annotations

import math

import numpy as np
import pytest

from adaptree.dyadic_tree import DyadicCube, root_cube
from adaptree.local_poly import (
    CellFit,
    DegenerateCellError,
    RankDeficientBasisError,
    basis_gram,
    fit_cell,
    fit_local_polynomial,
    multi_indices,
    n_poly_basis,
    orthonormal_basis,
    patch_from_jsonable,
    patch_to_jsonable,
    refinement_quantity,
)
from adaptree.measures import (
    QuadratureSpec,
    default_quadrature,
    density_measure,
    empirical_measure,
    lebesgue,
)


def haar_coefficient(f, j: int, k: int, order: int = 24) -> float:
    """Independent oracle: 2^(j/2) * (int over left half - int over right half).

    Direct Gauss integration on the two halves; shares nothing with the
    fitting code path.
    """
    h = 2.0**-j
    a, mid, b = k * h, k * h + h / 2, (k + 1) * h
    x, w = np.polynomial.legendre.leggauss(order)

    def integral(lo, hi):
        pts = (lo + hi) / 2 + (hi - lo) / 2 * x
        return float(np.sum((hi - lo) / 2 * w * f(pts)))

    return 2.0 ** (j / 2) * (integral(a, mid) - integral(mid, b))


class TestMultiIndices:
    def test_graded_lex_2d(self):
        assert multi_indices(2, 2) == (
            (0, 0), (0, 1), (1, 0), (0, 2), (1, 1), (2, 0),
        )

    def test_counts(self):
        assert n_poly_basis(3, 3) == 20 == len(multi_indices(3, 3))
        assert n_poly_basis(0, 2) == 1

    def test_invalid(self):
        with pytest.raises(ValueError):
            multi_indices(-1, 1)


class TestOrthonormalBasis:
    def test_degree1_lebesgue_unit_interval(self):
        # hand Gram-Schmidt: {1, sqrt(12) (x - 1/2)}
        basis = orthonormal_basis(root_cube(1), 1, lebesgue(1), default_quadrature(1))
        np.testing.assert_allclose(basis.coeffs[0], [1.0, 0.0], atol=1e-14)
        np.testing.assert_allclose(
            basis.coeffs[1], [-math.sqrt(3), 2 * math.sqrt(3)], atol=1e-13
        )

    def test_gram_identity_random_cubes(self):
        rng = np.random.default_rng(3)
        smooth = density_measure(
            2, lambda p: (0.55 + 0.9 * p[:, 0]) * (0.55 + 0.9 * p[:, 1]), upper_const=2.2
        )
        for measure in (lebesgue(2), smooth):
            for _ in range(10):
                j = int(rng.integers(0, 6))
                k = tuple(int(v) for v in rng.integers(0, 2**j, size=2))
                theta = int(rng.integers(0, 4))
                quad = default_quadrature(theta)
                basis = orthonormal_basis(DyadicCube(j, k), theta, measure, quad)
                gram = basis_gram(basis, measure, quad)
                np.testing.assert_allclose(gram, np.eye(len(basis.alphas)), atol=1e-9)

    def test_rank_deficient_raises(self):
        m = empirical_measure(np.array([[0.25]]))
        with pytest.raises(RankDeficientBasisError):
            orthonormal_basis(root_cube(1), 1, m, default_quadrature(1))

    def test_degenerate_raises(self):
        # density vanishing on the right half: that cell carries no mass
        rho = density_measure(1, lambda p: 2.0 * (p[:, 0] < 0.5), upper_const=2.0)
        with pytest.raises(DegenerateCellError):
            orthonormal_basis(DyadicCube(1, (1,)), 1, rho, default_quadrature(1))


class TestFitCell:
    def test_reproduces_polynomial_exactly(self):
        f = lambda p: 3.0 - 2.0 * p[:, 0] + p[:, 0] ** 2
        fit = fit_cell(f, DyadicCube(2, (1,)), 2, lebesgue(1), default_quadrature(2))
        pts = np.linspace(0.25, 0.5, 17)[:, None]
        np.testing.assert_allclose(fit.patch.eval(pts), f(pts), atol=1e-12)
        assert fit.sq_fit_error < 1e-14

    def test_degree0_is_cell_mean(self):
        f = lambda p: p[:, 0]
        patch = fit_local_polynomial(f, DyadicCube(1, (1,)), 0, lebesgue(1), default_quadrature(0))
        np.testing.assert_allclose(patch.eval(np.array([[0.9]])), [0.75], atol=1e-13)

    def test_fit_error_nonnegative_and_exact_value(self):
        # f = x on [0,1], theta = 0: error^2 = int (x - 1/2)^2 = 1/12
        fit = fit_cell(lambda p: p[:, 0], root_cube(1), 0, lebesgue(1), default_quadrature(0))
        np.testing.assert_allclose(fit.sq_fit_error, 1 / 12, rtol=1e-13)
        np.testing.assert_allclose(fit.sq_norm, 1 / 4, rtol=1e-13)

    def test_empirical_cell_without_points_is_degenerate_zero(self):
        m = empirical_measure(np.array([[0.9], [0.8]]))
        fit = fit_cell(lambda p: p[:, 0], DyadicCube(1, (0,)), 1, m, default_quadrature(1))
        assert fit.patch.degenerate and fit.mass == 0.0
        np.testing.assert_array_equal(fit.patch.coeffs, 0.0)

    def test_empirical_underdetermined_reduces_not_raises(self):
        m = empirical_measure(np.array([[0.25]]))
        fit = fit_cell(lambda p: 7.0 * np.ones(p.shape[0]), root_cube(1), 1, m, default_quadrature(1))
        assert fit.patch.degenerate
        # the resolvable direction (constants) is still fitted
        np.testing.assert_allclose(fit.patch.eval(np.array([[0.25]])), [7.0], atol=1e-12)


class TestRefinementQuantity:
    def test_linear_function_root_delta(self):
        rec = refinement_quantity(
            lambda p: p[:, 0], root_cube(1), 0, lebesgue(1), default_quadrature(0)
        )
        np.testing.assert_allclose(rec.delta, 0.25, rtol=1e-13)

    def test_linear_function_scale_law(self):
        # delta at any scale-j cube is 2^(-3j/2)/4 (independent of location)
        for j, k in [(1, 0), (2, 3), (3, 5)]:
            rec = refinement_quantity(
                lambda p: p[:, 0], DyadicCube(j, (k,)), 0, lebesgue(1), default_quadrature(0)
            )
            np.testing.assert_allclose(rec.delta, 2.0 ** (-1.5 * j) / 4, rtol=1e-12)

    def test_degree0_matches_haar_oracle(self):
        f = lambda p: np.sin(2 * np.pi * p[:, 0]) if p.ndim == 2 else np.sin(2 * np.pi * p)
        quad = QuadratureSpec(kind="tensor-gauss", order=10)
        for j in range(4):
            for k in range(2**j):
                rec = refinement_quantity(
                    lambda p: np.sin(2 * np.pi * p[:, 0]),
                    DyadicCube(j, (k,)), 0, lebesgue(1), quad,
                )
                oracle = abs(haar_coefficient(lambda x: np.sin(2 * np.pi * x), j, k))
                np.testing.assert_allclose(rec.delta, oracle, atol=1e-12)

    def test_energy_identity_for_polynomial_input(self):
        # delta^2 = sum_children ||p_child||^2 - ||p_parent||^2, exactly, when
        # every integrand stays within the rule's polynomial exactness range
        f = lambda p: p[:, 0] ** 3
        rec = refinement_quantity(f, DyadicCube(1, (1,)), 1, lebesgue(1), default_quadrature(1))
        lhs = rec.delta**2
        rhs = sum(c.sq_norm for c in rec.child_fits) - rec.parent_fit.sq_norm
        np.testing.assert_allclose(lhs, rhs, rtol=1e-10)

    def test_smooth_fit_gives_zero_delta(self):
        rec = refinement_quantity(
            lambda p: 1.0 + 2.0 * p[:, 0], DyadicCube(1, (0,)), 1, lebesgue(1), default_quadrature(1)
        )
        assert rec.delta < 1e-13

    def test_degenerate_children_flagged(self):
        rho = density_measure(1, lambda p: 2.0 * (p[:, 0] < 0.5), upper_const=2.0)
        rec = refinement_quantity(
            lambda p: p[:, 0], root_cube(1), 0, rho, default_quadrature(0)
        )
        assert rec.degenerate  # right child carries no mass
        # but the delta integral itself only sees the charged half
        assert np.isfinite(rec.delta)

    def test_2d_constant_delta_zero(self):
        rec = refinement_quantity(
            lambda p: np.full(p.shape[0], 5.0), root_cube(2), 0, lebesgue(2), default_quadrature(0)
        )
        assert rec.delta < 1e-14


class TestPatchSerialization:
    def test_roundtrip(self):
        patch = fit_local_polynomial(
            lambda p: p[:, 0] * p[:, 1], DyadicCube(1, (0, 1)), 2, lebesgue(2), default_quadrature(2)
        )
        obj = patch_to_jsonable(patch)
        back = patch_from_jsonable(obj)
        assert back.cube == patch.cube and back.degree == patch.degree
        np.testing.assert_allclose(back.coeffs, patch.coeffs, rtol=1e-15)

    def test_bad_exponent_rejected(self):
        obj = {"cube": [0, 0], "degree": 1, "coeffs": [[[5], 1.0]]}
        with pytest.raises(ValueError):
            patch_from_jsonable(obj)
