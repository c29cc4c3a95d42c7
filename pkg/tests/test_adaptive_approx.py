"""Thresholding, approximants, energy identities, seminorm and rate estimates.

The linear function f(x) = x at degree 0 has closed-form refinement
quantities (2^(-3j/2)/4 at every scale-j cube), which pins down trees,
errors, and the decomposition identity exactly.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from adaptree.adaptive_approx import (
    DepthCapWarning,
    InsufficientDataError,
    RefinementScan,
    approx_error,
    build_adaptive_approximant,
    default_eta_grid,
    error_rate_slope,
    estimate_rate_s,
    estimate_seminorm,
    threshold_constant,
    truncate_tree,
)
from adaptree.dyadic_tree import TruncatedTree, outer_leaves, root_cube
from adaptree.measures import QuadratureSpec, default_quadrature, lebesgue

X = lambda p: p[:, 0]
SIN = lambda p: np.sin(2 * np.pi * p[:, 0])
QUAD10 = QuadratureSpec(kind="tensor-gauss", order=10)


def full_tree_size(depth: int) -> int:
    return 2 ** (depth + 1) - 1


class TestTruncateTree:
    def test_zero_function_gives_empty_tree(self):
        t = truncate_tree(lambda p: np.zeros(p.shape[0]), 0.1, 0, lebesgue(1), QUAD10)
        assert len(t) == 0
        assert outer_leaves(t).cells == (root_cube(1),)

    def test_linear_eta_point2_keeps_root_only(self):
        # delta(root) = 1/4 > 0.2; scale-1 deltas 2^(-3/2)/4 ~ 0.088 < 0.2
        t = truncate_tree(X, 0.2, 0, lebesgue(1), QUAD10)
        assert set(t.nodes) == {root_cube(1)}

    def test_linear_tree_is_full_to_predicted_depth(self):
        # delta_j > eta iff 2^(-3j/2)/4 > eta; all locations share one delta,
        # so T is the full tree down to the last qualifying scale
        eta = 0.01
        t = truncate_tree(X, eta, 0, lebesgue(1), QUAD10)
        jstar = max(j for j in range(20) if 2.0 ** (-1.5 * j) / 4 > eta)
        assert len(t) == full_tree_size(jstar)

    def test_eta_above_delta_max_gives_empty(self):
        t = truncate_tree(X, 0.3, 0, lebesgue(1), QUAD10)
        assert len(t) == 0

    def test_monotone_in_eta(self):
        scan = RefinementScan(SIN, 0, lebesgue(1), QUAD10, max_scale=8)
        grid = default_eta_grid(scan.delta_max, n_points=12)
        trees = [scan.truncate(e)[0] for e in grid]
        for coarse, fine in zip(trees, trees[1:]):
            assert coarse.nodes <= fine.nodes  # eta decreasing => trees grow

    def test_depth_cap_warning(self):
        with pytest.warns(DepthCapWarning):
            truncate_tree(SIN, 1e-6, 0, lebesgue(1), QUAD10, max_scale=4)

    def test_invalid_eta(self):
        scan = RefinementScan(X, 0, lebesgue(1), QUAD10)
        with pytest.raises(ValueError):
            scan.truncate(0.0)


class TestBuildApproximant:
    def test_empty_tree_linear_gives_global_mean(self):
        pp = build_adaptive_approximant(X, TruncatedTree([], 1), 0, lebesgue(1), QUAD10)
        np.testing.assert_allclose(pp.eval(np.array([[0.1], [0.9]])), [0.5, 0.5], atol=1e-13)

    def test_polynomial_reproduction_any_tree(self):
        f = lambda p: 1.0 + p[:, 0] - 3.0 * p[:, 0] ** 2
        tree = truncate_tree(SIN, 0.05, 2, lebesgue(1), QUAD10)  # shape from sin
        pp = build_adaptive_approximant(f, tree, 2, lebesgue(1), QUAD10)
        assert approx_error(f, pp, lebesgue(1), QUAD10) <= 1e-9

    def test_eval_covers_domain_exactly_once(self):
        tree = truncate_tree(SIN, 0.1, 1, lebesgue(1), QUAD10)
        pp = build_adaptive_approximant(SIN, tree, 1, lebesgue(1), QUAD10)
        pts = np.linspace(0, 1, 101)[:, None]
        assert np.isfinite(pp.eval(pts)).all()

    def test_patch_cell_alignment_enforced(self):
        t1 = truncate_tree(X, 0.2, 0, lebesgue(1), QUAD10)
        t2 = truncate_tree(X, 0.05, 0, lebesgue(1), QUAD10)
        pp1 = build_adaptive_approximant(X, t1, 0, lebesgue(1), QUAD10)
        pp2 = build_adaptive_approximant(X, t2, 0, lebesgue(1), QUAD10)
        from adaptree.adaptive_approx import PiecewisePolynomial

        with pytest.raises(ValueError):
            PiecewisePolynomial(pp1.partition, pp2.patches, 0)


class TestApproxError:
    def test_self_error_zero(self):
        tree = truncate_tree(SIN, 0.05, 1, lebesgue(1), QUAD10)
        pp = build_adaptive_approximant(SIN, tree, 1, lebesgue(1), QUAD10)
        assert approx_error(pp.eval, pp, lebesgue(1), QUAD10) <= 1e-10

    def test_closed_form_linear_error(self):
        # full tree to depth j has leaves at depth j+1, each with squared
        # error h^3/12: total 2^(-2(j+1))/12
        eta = 0.05  # keeps scales with 2^(-3j/2)/4 > 0.05: j <= 1
        tree = truncate_tree(X, eta, 0, lebesgue(1), QUAD10)
        assert len(tree) == 3
        pp = build_adaptive_approximant(X, tree, 0, lebesgue(1), QUAD10)
        err = approx_error(X, pp, lebesgue(1), QUAD10)
        np.testing.assert_allclose(err**2, 2.0 ** (-4) / 12, rtol=1e-12)

    def test_scan_error_matches_direct_integration(self):
        scan = RefinementScan(SIN, 1, lebesgue(1), QUAD10, max_scale=10)
        for eta in (0.05, 0.01, 0.002):
            pp = scan.approximant(eta)
            direct = approx_error(SIN, pp, lebesgue(1), QUAD10)
            np.testing.assert_allclose(scan.error_sq(eta), direct**2, rtol=1e-9, atol=1e-16)

    def test_error_nonincreasing_along_grid(self):
        scan = RefinementScan(SIN, 0, lebesgue(1), QUAD10, max_scale=9)
        pts = scan.curve(default_eta_grid(scan.delta_max, n_points=15))
        errs = [p.error_sq for p in pts]
        assert all(a >= b - 1e-12 for a, b in zip(errs, errs[1:]))


class TestDecompositions:
    def test_energy_identity_linear(self):
        # int f^2 = 1/3 splits into ||p_root||^2 = 1/4 plus sum of delta^2
        # (geometric, totalling 1/12) plus the unexplored tail
        scan = RefinementScan(X, 0, lebesgue(1), QUAD10, max_scale=10, prune_floor=1e-7)
        dec = scan.energy_decomposition()
        np.testing.assert_allclose(dec.coarse_sq, 0.25, rtol=1e-12)
        np.testing.assert_allclose(dec.total_sq, 1 / 3, rtol=1e-12)
        assert abs(dec.identity_gap) < 1e-12
        # the infinite refinement sum is 1/12; truncation leaves a tiny tail
        np.testing.assert_allclose(dec.refinement_sq + dec.tail_sq, 1 / 12, rtol=1e-12)

    def test_error_decomposition_matches_error(self):
        scan = RefinementScan(SIN, 0, lebesgue(1), QUAD10, max_scale=9)
        for eta in (0.1, 0.02, 0.004):
            outside, tail = scan.error_decomposition(eta)
            np.testing.assert_allclose(
                outside + tail, scan.error_sq(eta), rtol=1e-6, atol=1e-14
            )

    def test_pruned_scan_equals_exhaustive_scan(self):
        lazy = RefinementScan(SIN, 0, lebesgue(1), QUAD10, max_scale=6)
        eager = RefinementScan(SIN, 0, lebesgue(1), QUAD10, max_scale=6, prune_floor=0.0)
        grid = default_eta_grid(eager.delta_max, n_points=10)
        for eta in grid:
            assert lazy.truncate(eta)[0] == eager.truncate(eta)[0]


class TestSeminorm:
    def test_zero_function(self):
        curve = estimate_seminorm(
            lambda p: np.zeros(p.shape[0]), 1.0, 0, lebesgue(1), QUAD10
        )
        assert curve.seminorm_estimate == 0.0 and not curve.edge_attained

    def test_linear_s1_finite_not_edge(self):
        curve = estimate_seminorm(X, 1.0, 0, lebesgue(1), QUAD10, max_scale=12)
        assert curve.m == pytest.approx(2 / 3)
        assert curve.seminorm_estimate > 0
        assert not curve.edge_attained
        # eta^(2/3) #T hovers near 2 * 4^(-2/3) on the step points; the grid
        # sup can exceed a single step value but stays bounded
        assert curve.sup_eta_m_T < 2.0

    def test_tree_sizes_nonincreasing_in_eta(self):
        curve = estimate_seminorm(SIN, 1.0, 0, lebesgue(1), QUAD10, max_scale=8)
        sizes = [p.tree_size for p in curve.points]  # grid is decreasing in eta
        assert all(a <= b for a, b in zip(sizes, sizes[1:]))


class TestRateEstimate:
    def test_linear_function_rate_is_one(self):
        est = estimate_rate_s(X, 0, lebesgue(1), QUAD10, max_scale=14)
        assert est.s_hat == pytest.approx(1.0, abs=0.15)

    def test_smooth_sin_degree1_rate_at_least_1p5(self):
        est = estimate_rate_s(SIN, 1, lebesgue(1), QUAD10, max_scale=14)
        assert est.s_hat >= 1.5

    def test_insufficient_data(self):
        scan = RefinementScan(X, 0, lebesgue(1), QUAD10, max_scale=3)
        with pytest.raises(InsufficientDataError):
            estimate_rate_s(X, 0, lebesgue(1), QUAD10, scan=scan,
                            eta_grid=[0.2, 0.15])

    def test_error_rate_slope_linear(self):
        # error^2 ~ (#T)^(-2) for f(x)=x at degree 0 (s = 1)
        scan = RefinementScan(X, 0, lebesgue(1), QUAD10, max_scale=14)
        slope, n = error_rate_slope(scan.curve())
        assert n >= 5
        assert slope == pytest.approx(-2.0, rel=0.15)


class TestThresholdConstant:
    def test_half(self):
        assert threshold_constant(0.5) == pytest.approx(4.0)

    def test_series_value(self):
        s = 2.0
        m = 2 / 5
        brute = 2**m * sum(2.0 ** (ell * (m - 2)) for ell in range(200))
        np.testing.assert_allclose(threshold_constant(s), brute, rtol=1e-12)

    def test_invalid(self):
        with pytest.raises(ValueError):
            threshold_constant(0.0)


def test_default_eta_grid_span():
    g = default_eta_grid(0.5)
    assert len(g) == 40
    np.testing.assert_allclose(g[0], 0.5)
    np.testing.assert_allclose(g[-1], 0.5e-4)
    with pytest.raises(ValueError):
        default_eta_grid(0.0)
