"""Tree thresholding, adaptive piecewise-polynomial approximants, and rates.

The truncated tree ``T(f, eta)`` is the parent-closure of every cube whose
refinement quantity exceeds ``eta``.  Because delta is *not* monotone along
branches, the scan explores breadth-first; descent below a cube stops only
when it is *certified* useless: the local squared fit error

    e(C)^2 = int_C f^2 dmeasure - ||p_C||^2

dominates delta(C) and is monotone under refinement (projections only
shrink residuals), so once ``e(C) <= floor`` no descendant can carry a delta
above ``floor``.  A scan down to ``floor`` therefore reproduces the
exhaustive breadth-first tree *exactly* for every threshold ``eta >= floor``
while fitting only the cubes that matter.

One :class:`RefinementScan` caches every fit it makes; thresholding,
approximants, curve sweeps over an eta grid, seminorm and rate estimates are
all free afterwards.  Scan results match the one-shot operations
(:func:`truncate_tree`, :func:`build_adaptive_approximant`,
:func:`approx_error`) which are kept simple and definitional.

Depth capping: nodes at the scale cap still get a delta (their children are
fitted one scale deeper, which keeps anchors exact), but nothing below them
is explored.  A threshold for which some capped node has ``delta > eta`` is
*saturated*: the returned tree is still the best available, a
:class:`DepthCapWarning` is raised, and curve rows carry a flag so rate and
seminorm fits can discard them.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from adaptree.dyadic_tree import (
    AdaptivePartition,
    DyadicCube,
    TruncatedTree,
    default_max_scale,
    outer_leaves,
    root_cube,
)
from adaptree.local_poly import CellFit, PolynomialPatch, fit_cell
from adaptree.measures import Measure, QuadratureSpec, cell_nodes

__all__ = [
    "DepthCapWarning",
    "InsufficientDataError",
    "PiecewisePolynomial",
    "CurvePoint",
    "SeminormCurve",
    "RateEstimate",
    "EnergyDecomposition",
    "RefinementScan",
    "truncate_tree",
    "build_adaptive_approximant",
    "approx_error",
    "default_eta_grid",
    "estimate_seminorm",
    "estimate_rate_s",
    "error_rate_slope",
    "threshold_constant",
    "approximant_to_jsonable",
    "approximant_from_jsonable",
    "save_approximant",
    "load_approximant",
]

FunctionOnPoints = Callable[[np.ndarray], np.ndarray]


class DepthCapWarning(UserWarning):
    """A node at the scale cap still wanted refinement (delta > eta)."""


class InsufficientDataError(ValueError):
    """Too few usable grid points for a least-squares fit."""


def threshold_constant(s: float) -> float:
    """C_s = 2^m * sum_{l >= 0} 2^(l(m-2)) = 2^m / (1 - 2^(m-2)), with m = 2/(2s+1).

    For s = 1/2 (m = 1) this is 4.
    """
    if s <= 0:
        raise ValueError("s must be positive")
    m = 2.0 / (2.0 * s + 1.0)
    return 2.0**m / (1.0 - 2.0 ** (m - 2.0))


@dataclass(frozen=True)
class PiecewisePolynomial:
    """p_Lambda: one polynomial patch per partition cell."""

    partition: AdaptivePartition
    patches: tuple[PolynomialPatch, ...]
    theta: int
    source_eta: float = float("nan")
    source_tree_size: int = 0

    def __post_init__(self) -> None:
        if len(self.patches) != len(self.partition.cells):
            raise ValueError("need exactly one patch per cell")
        for cell, patch in zip(self.partition.cells, self.patches):
            if patch.cube != cell:
                raise ValueError(f"patch cube {patch.cube!r} != cell {cell!r}")

    @property
    def dim(self) -> int:
        return self.partition.dim

    def eval(self, pts: np.ndarray) -> np.ndarray:
        """Evaluate at (n, d) points; every x in [0,1]^d hits exactly one patch."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.full(pts.shape[0], np.nan)
        for cell, patch in zip(self.partition.cells, self.patches):
            mask = cell.contains_points(pts)
            if mask.any():
                out[mask] = patch.eval(pts[mask])
        return out

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        return self.eval(pts)

    @property
    def any_degenerate(self) -> bool:
        return any(p.degenerate for p in self.patches)


@dataclass(frozen=True)
class CurvePoint:
    eta: float
    tree_size: int
    n_cells: int
    error_sq: float
    eta_m_T: float
    saturated: bool


@dataclass(frozen=True)
class SeminormCurve:
    """Grid view of eta -> #T with the smoothness-class functional eta^m #T.

    ``seminorm_estimate`` is (max over usable rows of eta^m #T)^(1/m); it is
    an estimate tied to this grid, never the true sup.  ``edge_attained``
    set means the max sits at the smallest usable eta, i.e. not converged.
    """

    s: float
    m: float
    points: tuple[CurvePoint, ...]
    seminorm_estimate: float
    edge_attained: bool
    any_saturated: bool
    s_hat: float = float("nan")

    @property
    def sup_eta_m_T(self) -> float:
        return self.seminorm_estimate**self.m if self.seminorm_estimate > 0 else 0.0


@dataclass(frozen=True)
class RateEstimate:
    s_hat: float
    slope_m: float
    stderr_m: float
    stderr_s: float
    n_used: int
    points: tuple[CurvePoint, ...]


@dataclass(frozen=True)
class EnergyDecomposition:
    """||f||^2 split into coarse + refinement + unexplored tail (exact identity)."""

    coarse_sq: float       # ||p_root||^2
    refinement_sq: float   # sum of delta^2 over explored nodes
    tail_sq: float         # sum of e^2 over the exploration frontier
    total_sq: float        # int f^2 dmeasure

    @property
    def identity_gap(self) -> float:
        return self.total_sq - (self.coarse_sq + self.refinement_sq + self.tail_sq)


class RefinementScan:
    """Breadth-first refinement scan with certified pruning; caches all fits."""

    def __init__(
        self,
        f: FunctionOnPoints,
        theta: int,
        measure: Measure,
        quad: QuadratureSpec,
        *,
        max_scale: int | None = None,
        prune_floor: float | None = None,
        floor_span: float = 1e-4,
    ):
        self.f = f
        self.theta = theta
        self.measure = measure
        self.quad = quad
        self.dim = measure.dim
        self.max_scale = (
            default_max_scale(self.dim) if max_scale is None else max_scale
        )
        self.floor_span = floor_span
        self.fits: dict[DyadicCube, CellFit] = {}
        self.deltas: dict[DyadicCube, float] = {}
        self.pruned: set[DyadicCube] = set()
        self.delta_max = 0.0
        if prune_floor is not None:
            self.prune_floor = prune_floor
            self._run(prune_floor)
        else:
            self._run_autofloor()

    # -- scan ------------------------------------------------------------

    def _fit(self, cube: DyadicCube) -> CellFit:
        fit = self.fits.get(cube)
        if fit is None:
            fit = fit_cell(self.f, cube, self.theta, self.measure, self.quad)
            self.fits[cube] = fit
        return fit

    def _run_autofloor(self) -> None:
        # coarse pass to locate delta_max, then full pass; repeat if a deeper
        # scan reveals a larger delta (possible: delta is not monotone)
        coarse = min(3, self.max_scale)
        self._run(0.0, hard_cap=coarse)
        for _ in range(4):
            floor = self.delta_max * self.floor_span * 0.5
            self.prune_floor = floor
            before = self.delta_max
            self._reset()
            self._run(floor)
            if self.delta_max <= before * (1.0 + 1e-12):
                return
        warnings.warn("prune floor did not stabilise; results use the last pass")

    def _reset(self) -> None:
        self.fits = {}
        self.deltas = {}
        self.pruned = set()
        self.delta_max = 0.0

    def _run(self, floor: float, hard_cap: int | None = None) -> None:
        cap = self.max_scale if hard_cap is None else hard_cap
        frontier = [root_cube(self.dim)]
        self._fit(frontier[0])
        while frontier:
            next_frontier: list[DyadicCube] = []
            for cube in frontier:
                fit = self.fits[cube]
                if math.sqrt(fit.sq_fit_error) <= floor:
                    self.pruned.add(cube)
                    continue
                # explore: fit children (one scale past the cap is allowed
                # for delta computation only) and record delta
                kids = cube.children(max_scale=cube.j + 1)
                child_sq = 0.0
                for child in kids:
                    child_sq += self._fit(child).sq_norm
                delta = math.sqrt(max(child_sq - fit.sq_norm, 0.0))
                self.deltas[cube] = delta
                if delta > self.delta_max:
                    self.delta_max = delta
                if cube.j + 1 <= cap:
                    next_frontier.extend(kids)
            frontier = next_frontier

    # -- thresholding ----------------------------------------------------

    def _above(self, eta: float) -> set[DyadicCube]:
        return {c for c, d in self.deltas.items() if d > eta}

    def truncate(self, eta: float) -> tuple[TruncatedTree, bool]:
        """T(f, eta) and a saturation flag (capped node with delta > eta)."""
        if eta <= 0:
            raise ValueError("eta must be positive")
        nodes = set()
        for cube in self._above(eta):
            while cube is not None and cube not in nodes:
                nodes.add(cube)
                cube = cube.parent()
        saturated = any(
            c.j == self.max_scale and d > eta for c, d in self.deltas.items()
        )
        return TruncatedTree(nodes, self.dim), saturated

    def tree_size(self, eta: float) -> int:
        return len(self.truncate(eta)[0])

    def approximant(self, eta: float) -> PiecewisePolynomial:
        tree, _ = self.truncate(eta)
        part = outer_leaves(tree)
        patches = tuple(self._fit(cell).patch for cell in part.cells)
        return PiecewisePolynomial(
            partition=part,
            patches=patches,
            theta=self.theta,
            source_eta=eta,
            source_tree_size=len(tree),
        )

    def error_sq(self, eta: float) -> float:
        """||f - p_Lambda(eta)||^2: exact sum of per-cell fit errors."""
        tree, _ = self.truncate(eta)
        return sum(self._fit(c).sq_fit_error for c in outer_leaves(tree).cells)

    # -- curves and identities -------------------------------------------

    def curve(self, eta_grid: Sequence[float] | None = None, s: float = 1.0) -> list[CurvePoint]:
        if eta_grid is None:
            eta_grid = default_eta_grid(self.delta_max)
        m = 2.0 / (2.0 * s + 1.0)
        pts = []
        for eta in eta_grid:
            tree, saturated = self.truncate(eta)
            part = outer_leaves(tree)
            err = sum(self._fit(c).sq_fit_error for c in part.cells)
            pts.append(
                CurvePoint(
                    eta=float(eta),
                    tree_size=len(tree),
                    n_cells=len(part),
                    error_sq=err,
                    eta_m_T=float(eta) ** m * len(tree),
                    saturated=saturated,
                )
            )
        return pts

    def frontier_cells(self) -> list[DyadicCube]:
        """Fitted-but-unexplored cubes: pruned nodes and children of capped nodes."""
        return [c for c in self.fits if c not in self.deltas]

    def energy_decomposition(self) -> EnergyDecomposition:
        # every explored node's children are fitted, so the fitted-but-
        # unexplored cubes are exactly the exploration leaves and tile [0,1]^d
        root_fit = self.fits[root_cube(self.dim)]
        tail = sum(self.fits[c].sq_fit_error for c in self.frontier_cells())
        return EnergyDecomposition(
            coarse_sq=root_fit.sq_norm,
            refinement_sq=sum(d * d for d in self.deltas.values()),
            tail_sq=tail,
            total_sq=root_fit.sq_f,
        )

    def error_decomposition(self, eta: float) -> tuple[float, float]:
        """(sum of delta^2 over explored nodes outside T, frontier tail).

        Their sum equals error_sq(eta) exactly under exact quadrature.
        """
        tree, _ = self.truncate(eta)
        outside = sum(d * d for c, d in self.deltas.items() if c not in tree)
        tail = sum(
            self.fits[c].sq_fit_error
            for c in self.frontier_cells()
            if c not in tree.nodes
        )
        return outside, tail


# -- one-shot operations (definitional forms) ----------------------------


def truncate_tree(
    f: FunctionOnPoints,
    eta: float,
    theta: int,
    measure: Measure,
    quad: QuadratureSpec,
    max_scale: int | None = None,
) -> TruncatedTree:
    """Parent-closure of {delta > eta} up to the scale cap (breadth-first).

    Saturation (a capped node still wanting refinement) raises a
    :class:`DepthCapWarning`; the tree is still returned.
    """
    scan = RefinementScan(
        f, theta, measure, quad, max_scale=max_scale, prune_floor=eta * 0.5
    )
    tree, saturated = scan.truncate(eta)
    if saturated:
        warnings.warn(
            f"depth cap reached: delta > {eta} at the scale cap; tree may be incomplete",
            DepthCapWarning,
        )
    return tree


def build_adaptive_approximant(
    f: FunctionOnPoints,
    tree: TruncatedTree,
    theta: int,
    measure: Measure,
    quad: QuadratureSpec,
) -> PiecewisePolynomial:
    """Fit one patch per outer leaf of the given tree."""
    part = outer_leaves(tree)
    patches = tuple(fit_cell(f, c, theta, measure, quad).patch for c in part.cells)
    return PiecewisePolynomial(
        partition=part, patches=patches, theta=theta, source_tree_size=len(tree)
    )


def approx_error(
    f: FunctionOnPoints,
    approximant: PiecewisePolynomial,
    measure: Measure,
    quad: QuadratureSpec,
) -> float:
    """||f - p_Lambda||_{L2(measure)} by direct per-cell integration."""
    acc = 0.0
    for cell, patch in zip(approximant.partition.cells, approximant.patches):
        pts, w = cell_nodes(measure, cell, quad)
        if pts.shape[0]:
            diff = np.asarray(f(pts), dtype=float) - patch.eval(pts)
            acc += float(np.sum(w * diff * diff))
    return math.sqrt(max(acc, 0.0))


def default_eta_grid(delta_max: float, n_points: int = 40, span: float = 1e-4) -> np.ndarray:
    """Geometric grid from delta_max down to delta_max * span."""
    if delta_max <= 0:
        raise ValueError("delta_max must be positive (constant functions have no grid)")
    return np.geomspace(delta_max, delta_max * span, n_points)


def _usable(points: Iterable[CurvePoint]) -> list[CurvePoint]:
    return [p for p in points if not p.saturated and p.tree_size >= 1]


def estimate_seminorm(
    f: FunctionOnPoints,
    s: float,
    theta: int,
    measure: Measure,
    quad: QuadratureSpec,
    eta_grid: Sequence[float] | None = None,
    max_scale: int | None = None,
    scan: RefinementScan | None = None,
) -> SeminormCurve:
    """Grid estimate of |f|_{A^s}: (sup over eta of eta^m #T)^(1/m).

    Saturated rows are excluded from the sup; if the sup sits on the
    smallest usable eta the ``edge_attained`` (not converged) flag is set.
    """
    if scan is None:
        scan = RefinementScan(f, theta, measure, quad, max_scale=max_scale)
    m = 2.0 / (2.0 * s + 1.0)
    if scan.delta_max <= 0.0:  # f indistinguishable from a polynomial: seminorm 0
        return SeminormCurve(
            s=s, m=m, points=(), seminorm_estimate=0.0,
            edge_attained=False, any_saturated=False,
        )
    points = scan.curve(eta_grid, s=s)
    usable = _usable(points)
    sup = max((p.eta_m_T for p in usable), default=0.0)
    edge = False
    if usable and sup > 0:
        best = max(usable, key=lambda p: p.eta_m_T)
        edge = best.eta == min(p.eta for p in usable)
    est = sup ** (1.0 / m) if sup > 0 else 0.0
    s_hat = float("nan")
    try:
        s_hat = _fit_rate(points).s_hat
    except InsufficientDataError:
        pass
    return SeminormCurve(
        s=s, m=m, points=tuple(points), seminorm_estimate=est,
        edge_attained=edge, any_saturated=any(p.saturated for p in points),
        s_hat=s_hat,
    )


def _fit_rate(points: Sequence[CurvePoint]) -> RateEstimate:
    usable = _usable(points)
    if len({p.tree_size for p in usable}) < 5:
        raise InsufficientDataError(
            "need at least 5 unsaturated grid points with distinct tree sizes"
        )
    x = np.log([1.0 / p.eta for p in usable])
    y = np.log([p.tree_size for p in usable])
    (slope, _), cov = np.polyfit(x, y, 1, cov=True)
    stderr_m = math.sqrt(max(cov[0, 0], 0.0))
    if slope <= 0:
        raise InsufficientDataError(f"non-positive growth slope {slope:.3g}")
    s_hat = (2.0 / slope - 1.0) / 2.0
    return RateEstimate(
        s_hat=s_hat,
        slope_m=float(slope),
        stderr_m=stderr_m,
        stderr_s=stderr_m / slope**2,
        n_used=len(usable),
        points=tuple(points),
    )


def estimate_rate_s(
    f: FunctionOnPoints,
    theta: int,
    measure: Measure,
    quad: QuadratureSpec,
    eta_grid: Sequence[float] | None = None,
    max_scale: int | None = None,
    scan: RefinementScan | None = None,
) -> RateEstimate:
    """s_hat from the growth law #T ~ eta^(-m), m = 2/(2s+1).

    Least squares of log #T on log(1/eta) over unsaturated grid points;
    s_hat = (2/slope - 1)/2 with its standard error.
    """
    if scan is None:
        scan = RefinementScan(f, theta, measure, quad, max_scale=max_scale)
    return _fit_rate(scan.curve(eta_grid))


def error_rate_slope(points: Sequence[CurvePoint]) -> tuple[float, int]:
    """Slope of log error^2 vs log #T over usable points (rate law: ~ -2s)."""
    usable = [p for p in _usable(points) if p.error_sq > 0]
    sizes = sorted({p.tree_size for p in usable})
    if len(sizes) < 3:
        raise InsufficientDataError("need at least 3 distinct tree sizes")
    # one point per tree size (the curve is a staircase in eta)
    by_size = {p.tree_size: p.error_sq for p in usable}
    x = np.log(sizes)
    y = np.log([by_size[n] for n in sizes])
    slope = float(np.polyfit(x, y, 1)[0])
    return slope, len(sizes)


def approximant_to_jsonable(
    pp: PiecewisePolynomial, s_hat: float | None = None
) -> dict:
    """JSON form with 17-significant-digit decimal strings (bit-faithful).

    ``s_hat``, when given, is stored in the meta block so a later compile
    step can pick its accuracy schedule without re-running the rate fit.
    """
    meta: dict = {
        "dim": pp.dim,
        "theta": pp.theta,
        "n_cells": len(pp.partition),
        "source_tree_size": pp.source_tree_size,
        "source_eta": (
            None if math.isnan(pp.source_eta) else f"{pp.source_eta:.17g}"
        ),
    }
    if s_hat is not None:
        meta["s_hat"] = f"{s_hat:.17g}"
    return {
        "meta": meta,
        "cells": [
            {
                "j": patch.cube.j,
                "k": list(patch.cube.k),
                "degree": patch.degree,
                "degenerate": patch.degenerate,
                "alphas": [list(a) for a in patch.alphas],
                "coeffs": [f"{v:.17g}" for v in patch.coeffs],
            }
            for patch in pp.patches
        ],
    }


def approximant_from_jsonable(obj: Mapping) -> PiecewisePolynomial:
    meta = obj["meta"]
    patches = [
        PolynomialPatch(
            cube=DyadicCube(int(spec["j"]), tuple(int(v) for v in spec["k"])),
            degree=int(spec["degree"]),
            alphas=tuple(tuple(int(a) for a in al) for al in spec["alphas"]),
            coeffs=np.array([float(v) for v in spec["coeffs"]]),
            degenerate=bool(spec.get("degenerate", False)),
        )
        for spec in obj["cells"]
    ]
    patches.sort(key=lambda p: p.cube.sort_key())
    eta = meta.get("source_eta")
    return PiecewisePolynomial(
        partition=AdaptivePartition((p.cube for p in patches), int(meta["dim"])),
        patches=tuple(patches),
        theta=int(meta["theta"]),
        source_eta=float("nan") if eta is None else float(eta),
        source_tree_size=int(meta.get("source_tree_size", 0)),
    )


def save_approximant(
    pp: PiecewisePolynomial, path: str, s_hat: float | None = None
) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(approximant_to_jsonable(pp, s_hat=s_hat), fh, indent=1)


def load_approximant(path: str) -> PiecewisePolynomial:
    with open(path, encoding="utf-8") as fh:
        return approximant_from_jsonable(json.load(fh))
