"""Registry of benchmark targets with known regularity, plus box-counting.

The 1D family is sin(2*pi*x) plus a per-branch constant offset:

* ``onedisc``    offsets (+1, -1) across 1/2;
* ``threedisc``  offsets (-1, +1, -1, +1) across quarters;
* ``fivedisc``   offsets (-1, 0, +1, -1, 0, +1) across sixths -- the printed
  source of this function is self-contradictory (one branch is empty, another
  overlaps); this is the minimal repair with the evident pattern and exactly
  five interior jumps;
* ``sevendisc``  offsets (-1, -1/3, +1/3, +1, -1, -1/3, +1/3, +1) across eighths.

2D entries use a circle (center (0.5, 0.5), radius 0.25): ``disk2d`` is the
disk indicator, ``jump2d`` adds a sign flip across the same circle to a
smooth product of sines.  ``hiddenwild1d`` is smooth on [0, 0.55) and wildly
oscillating beyond, paired with a default measure whose density vanishes
past 1/2 -- the wild region is invisible to that measure, so adaptive rates
match the smooth part (cells inside the null region come back as flagged
zero patches).

Each target ships the quadrature geometry scans need: 1D targets split cells
at their breakpoints; circle targets use x-slices with exact y-splits on the
circle and geometrically graded x-subdivision near the tangency abscissas
(where the half-width sqrt(r^2 - (x-cx)^2) loses smoothness).

`predicted s` values follow the piecewise-Holder taxonomy with the effective
piece regularity capped at theta + 1:

* smooth on [0,1]^d:            s = (theta+1)/d
* piecewise 1D, finite jumps:   s = theta+1
* piecewise multi-d, (d-1)-dimensional boundary: s = min{(theta+1)/d, 1/(2(d-1))}
* smooth except on a null set of the measure:    s = (theta+1)/d
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from adaptree.dyadic_tree import DyadicCube
from adaptree.measures import (
    Measure,
    QuadratureSpec,
    Splitter,
    _gauss_01,
    density_measure,
    lebesgue,
)

__all__ = [
    "TargetSpec",
    "MinkowskiEstimate",
    "UnknownTargetError",
    "DegenerateCountsError",
    "get_target",
    "list_targets",
    "eval_target",
    "known_rate",
    "quadrature_for",
    "interval_splitter",
    "circle_splitter",
    "circle_cube_oracle",
    "square_boundary_cube_oracle",
    "point_cube_oracle",
    "count_boundary_cubes",
    "estimate_minkowski_dim",
]

CIRCLE = (0.5, 0.5, 0.25)  # the one circle all 2D entries share


class UnknownTargetError(KeyError):
    pass


class DegenerateCountsError(ValueError):
    pass


@dataclass(frozen=True)
class TargetSpec:
    """A benchmark function with its geometry and predicted adaptive rate."""

    name: str
    dim: int
    fn: Callable[[np.ndarray], np.ndarray]
    sup_bound: float
    rate_class: str  # 'smooth' | 'piecewise-1d' | 'piecewise-multid' | 'null-set-smooth'
    description: str
    n_discontinuities: int = 0
    breakpoints: tuple[float, ...] = ()
    circle: tuple[float, float, float] | None = None
    has_default_density: bool = False

    def measure(self) -> Measure:
        """The measure this target is meant to be scanned/trained under."""
        if not self.has_default_density:
            return lebesgue(self.dim)
        return density_measure(
            1, lambda p: 2.0 * (p[:, 0] <= 0.5), upper_const=2.0, label="half-support"
        )

    def splitter(self) -> Splitter | None:
        if self.circle is not None:
            return circle_splitter(*self.circle)
        cuts = self.breakpoints
        if self.has_default_density:
            cuts = tuple(sorted({*cuts, 0.5}))  # the density's support edge
        if cuts:
            return interval_splitter(cuts)
        return None

    def predicted_s(self, theta: int) -> float:
        r_eff = theta + 1.0
        if self.rate_class == "smooth":
            return r_eff / self.dim
        if self.rate_class == "piecewise-1d":
            return r_eff
        if self.rate_class == "piecewise-multid":
            return min(r_eff / self.dim, 1.0 / (2.0 * (self.dim - 1)))
        if self.rate_class == "null-set-smooth":
            return r_eff / self.dim
        raise ValueError(f"unknown rate class {self.rate_class!r}")

    def distance_to_discontinuity(self, pts: np.ndarray) -> np.ndarray:
        """Distance from each point to the discontinuity set (inf if none)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if self.circle is not None:
            cx, cy, r = self.circle
            rad = np.hypot(pts[:, 0] - cx, pts[:, 1] - cy)
            return np.abs(rad - r)
        if self.breakpoints:
            bp = np.asarray(self.breakpoints)
            return np.abs(pts[:, 0][:, None] - bp[None, :]).min(axis=1)
        return np.full(pts.shape[0], np.inf)


def _piecewise_sin(breaks: Sequence[float], offsets: Sequence[float]):
    bp = np.asarray(breaks, dtype=float)
    off = np.asarray(offsets, dtype=float)

    def fn(pts: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(pts, dtype=float))[:, 0]
        return np.sin(2 * np.pi * x) + off[np.searchsorted(bp, x, side="right")]

    return fn


def _disk_indicator(pts: np.ndarray) -> np.ndarray:
    cx, cy, r = CIRCLE
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    return (np.hypot(pts[:, 0] - cx, pts[:, 1] - cy) <= r).astype(float)


def _jump2d(pts: np.ndarray) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    smooth = np.sin(2 * np.pi * pts[:, 0]) * np.sin(2 * np.pi * pts[:, 1])
    return smooth + (2.0 * _disk_indicator(pts) - 1.0)


_WILD_EDGE = 0.55


def _hidden_wild(pts: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(np.asarray(pts, dtype=float))[:, 0]
    out = np.sin(2 * np.pi * x)
    wild = x >= _WILD_EDGE
    out[wild] = np.sin(1.0 / (x[wild] - (_WILD_EDGE - 0.001)))
    return out


_REGISTRY: dict[str, TargetSpec] = {}


def _register(spec: TargetSpec) -> None:
    _REGISTRY[spec.name] = spec


_register(TargetSpec(
    name="smooth1d", dim=1, fn=_piecewise_sin((), (0.0,)), sup_bound=1.0,
    rate_class="smooth", description="sin(2 pi x)",
))
_register(TargetSpec(
    name="onedisc", dim=1, fn=_piecewise_sin((0.5,), (1.0, -1.0)), sup_bound=2.0,
    rate_class="piecewise-1d", n_discontinuities=1, breakpoints=(0.5,),
    description="sin(2 pi x) +1 / -1 across 1/2",
))
_register(TargetSpec(
    name="threedisc", dim=1,
    fn=_piecewise_sin((0.25, 0.5, 0.75), (-1.0, 1.0, -1.0, 1.0)), sup_bound=2.0,
    rate_class="piecewise-1d", n_discontinuities=3, breakpoints=(0.25, 0.5, 0.75),
    description="sin(2 pi x) with alternating +-1 offsets on quarters",
))
_register(TargetSpec(
    name="fivedisc", dim=1,
    fn=_piecewise_sin(
        (1 / 6, 1 / 3, 1 / 2, 2 / 3, 5 / 6), (-1.0, 0.0, 1.0, -1.0, 0.0, 1.0)
    ),
    sup_bound=2.0, rate_class="piecewise-1d", n_discontinuities=5,
    breakpoints=(1 / 6, 1 / 3, 1 / 2, 2 / 3, 5 / 6),
    description="sin(2 pi x) with offsets -1,0,+1 repeating on sixths",
))
_register(TargetSpec(
    name="sevendisc", dim=1,
    fn=_piecewise_sin(
        tuple(k / 8 for k in range(1, 8)),
        (-1.0, -1 / 3, 1 / 3, 1.0, -1.0, -1 / 3, 1 / 3, 1.0),
    ),
    sup_bound=2.0, rate_class="piecewise-1d", n_discontinuities=7,
    breakpoints=tuple(k / 8 for k in range(1, 8)),
    description="sin(2 pi x) with graded offsets on eighths",
))
_register(TargetSpec(
    name="disk2d", dim=2, fn=_disk_indicator, sup_bound=1.0,
    rate_class="piecewise-multid", n_discontinuities=1, circle=CIRCLE,
    description="indicator of the disk of radius 0.25 at (0.5, 0.5)",
))
_register(TargetSpec(
    name="jump2d", dim=2, fn=_jump2d, sup_bound=2.0,
    rate_class="piecewise-multid", n_discontinuities=1, circle=CIRCLE,
    description="sin(2 pi x) sin(2 pi y) with a sign flip across the circle",
))
_register(TargetSpec(
    name="hiddenwild1d", dim=1, fn=_hidden_wild, sup_bound=1.0,
    rate_class="null-set-smooth", n_discontinuities=1, breakpoints=(_WILD_EDGE,),
    has_default_density=True,
    description="smooth on the measure's support, wildly oscillating on its null set",
))


def get_target(name: str) -> TargetSpec:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise UnknownTargetError(
            f"unknown target {name!r}; known: {', '.join(sorted(_REGISTRY))}"
        ) from None


def list_targets() -> list[TargetSpec]:
    return [_REGISTRY[name] for name in sorted(_REGISTRY)]


def eval_target(name: str, x) -> np.ndarray | float:
    """Evaluate a registered target at one point (scalar out) or (n, d) points."""
    spec = get_target(name)
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 0 or (arr.ndim == 1 and arr.size == spec.dim)
    pts = arr.reshape(-1, spec.dim)
    vals = spec.fn(pts)
    return float(vals[0]) if single else vals


def known_rate(name: str, theta: int) -> float:
    return get_target(name).predicted_s(theta)


def quadrature_for(target: TargetSpec, theta: int) -> QuadratureSpec:
    """Tensor-Gauss rule with the target's geometry splitter.

    The per-axis order is max(2*theta + 4, 8): the fit algebra only needs
    2*theta + 4, but the sine family benefits from a little headroom at the
    coarsest scales.
    """
    return QuadratureSpec(
        kind="tensor-gauss", order=max(2 * theta + 4, 8), splitter=target.splitter()
    )


# -- geometry splitters ----------------------------------------------------


def interval_splitter(breakpoints: Sequence[float]) -> Splitter:
    """1D splitter: per-segment Gauss between the breakpoints inside the cell."""
    bp = np.sort(np.asarray(breakpoints, dtype=float))

    def split(lo: np.ndarray, hi: np.ndarray, order: int):
        inner = bp[(bp > lo[0]) & (bp < hi[0])]
        if inner.size == 0:
            return None
        edges = np.concatenate([[lo[0]], inner, [hi[0]]])
        x01, w01 = _gauss_01(order)
        pts_list = []
        w_list = []
        for a, b in zip(edges, edges[1:]):
            pts_list.append(a + (b - a) * x01)
            w_list.append((b - a) * w01)
        return np.concatenate(pts_list)[:, None], np.concatenate(w_list)

    return split


def _graded_segments(a: float, b: float, toward: str, levels: int) -> list[tuple[float, float]]:
    """Split [a, b] into geometrically shrinking pieces toward one endpoint."""
    segs = []
    length = b - a
    if toward == "left":
        cuts = [a + length * 2.0 ** (-i) for i in range(levels, 0, -1)]
        segs.append((a, cuts[0]))
        segs.extend(zip(cuts, cuts[1:]))
        segs.append((cuts[-1], b))
    else:
        cuts = [b - length * 2.0 ** (-i) for i in range(1, levels + 1)]
        segs.append((a, cuts[0]))
        segs.extend(zip(cuts, cuts[1:]))
        segs.append((cuts[-1], b))
    return [(s, t) for s, t in segs if t > s]


def circle_splitter(cx: float, cy: float, r: float, grade_levels: int = 12) -> Splitter:
    """Slice quadrature exact (to grading accuracy) across a circular boundary.

    x is cut at the tangency abscissas cx +- r and wherever the circle meets
    the cell's horizontal edges; x-segments ending at a tangency are graded
    geometrically toward it (the slice half-width behaves like a square
    root there).  Each x-node's column is then cut exactly at the circle.
    """

    def split(lo: np.ndarray, hi: np.ndarray, order: int):
        near = math.hypot(
            max(lo[0] - cx, 0.0, cx - hi[0]), max(lo[1] - cy, 0.0, cy - hi[1])
        )
        far = math.hypot(max(cx - lo[0], hi[0] - cx), max(cy - lo[1], hi[1] - cy))
        if near >= r or far <= r:
            return None  # cell entirely on one side (boundary at most touches)
        cuts = {lo[0], hi[0]}
        tangents = set()
        for xt in (cx - r, cx + r):
            if lo[0] <= xt <= hi[0]:
                tangents.add(xt)  # grade even when the tangency sits on an edge
                if lo[0] < xt < hi[0]:
                    cuts.add(xt)
        for yedge in (lo[1], hi[1]):
            dy = abs(yedge - cy)
            if dy < r:
                g = math.sqrt(r * r - dy * dy)
                for xc in (cx - g, cx + g):
                    if lo[0] < xc < hi[0]:
                        cuts.add(xc)
        xs = sorted(cuts)
        segments: list[tuple[float, float]] = []
        for a, b in zip(xs, xs[1:]):
            if a in tangents and b in tangents:
                mid = 0.5 * (a + b)
                segments.extend(_graded_segments(a, mid, "left", grade_levels))
                segments.extend(_graded_segments(mid, b, "right", grade_levels))
            elif a in tangents:
                segments.extend(_graded_segments(a, b, "left", grade_levels))
            elif b in tangents:
                segments.extend(_graded_segments(a, b, "right", grade_levels))
            else:
                segments.append((a, b))
        x01, w01 = _gauss_01(order)
        pts_list = []
        w_list = []
        for a, b in segments:
            xn = a + (b - a) * x01
            xw = (b - a) * w01
            for x_val, x_wt in zip(xn, xw):
                dx = abs(x_val - cx)
                ys = [lo[1], hi[1]]
                if dx < r:
                    g = math.sqrt(r * r - dx * dx)
                    for yc in (cy - g, cy + g):
                        if lo[1] < yc < hi[1]:
                            ys.append(yc)
                ys.sort()
                for ya, yb in zip(ys, ys[1:]):
                    if yb <= ya:
                        continue
                    yn = ya + (yb - ya) * x01
                    yw = (yb - ya) * w01
                    pts_list.append(
                        np.column_stack([np.full(order, x_val), yn])
                    )
                    w_list.append(x_wt * yw)
        return np.vstack(pts_list), np.concatenate(w_list)

    return split


# -- boundary cube counting (box-counting dimension) -----------------------


def circle_cube_oracle(
    cx: float = CIRCLE[0], cy: float = CIRCLE[1], r: float = CIRCLE[2]
) -> Callable[[DyadicCube], bool]:
    """Exact closed-cube/circle intersection test."""

    def oracle(cube: DyadicCube) -> bool:
        lo, hi = cube.bounds
        near = math.hypot(
            max(lo[0] - cx, 0.0, cx - hi[0]), max(lo[1] - cy, 0.0, cy - hi[1])
        )
        far = math.hypot(max(cx - lo[0], hi[0] - cx), max(cy - lo[1], hi[1] - cy))
        return near <= r <= far

    return oracle


def square_boundary_cube_oracle() -> Callable[[DyadicCube], bool]:
    """Cubes touching the boundary of the unit square."""

    def oracle(cube: DyadicCube) -> bool:
        n = 1 << cube.j
        return any(k == 0 or k == n - 1 for k in cube.k)

    return oracle


def point_cube_oracle(point: Sequence[float]) -> Callable[[DyadicCube], bool]:
    p = np.asarray(point, dtype=float)

    def oracle(cube: DyadicCube) -> bool:
        lo, hi = cube.bounds
        return bool(np.all((p >= lo) & (p <= hi)))  # closed cube

    return oracle


def count_boundary_cubes(
    oracle: Callable[[DyadicCube], bool], j: int, dim: int
) -> int:
    """Number of scale-j dyadic cubes whose closure meets the set."""
    n = 1 << j
    count = 0
    for flat in range(n**dim):
        k = []
        rem = flat
        for _ in range(dim):
            k.append(rem % n)
            rem //= n
        if oracle(DyadicCube(j, tuple(k))):
            count += 1
    return count


@dataclass(frozen=True)
class MinkowskiEstimate:
    d_m: float
    c_m: float
    scales: tuple[int, ...]
    counts: tuple[int, ...]


def estimate_minkowski_dim(
    oracle: Callable[[DyadicCube], bool], dim: int, scales: Sequence[int]
) -> MinkowskiEstimate:
    """Box-counting: slope of log N(2^-j) against j log 2.

    c_m is the largest N * (2^-j)^d_m over the scales used.
    """
    scales = tuple(int(j) for j in scales)
    if len(scales) < 4:
        raise ValueError("need at least 4 scales")
    counts = tuple(count_boundary_cubes(oracle, j, dim) for j in scales)
    if any(c == 0 for c in counts):
        raise DegenerateCountsError("zero count at some scale; set looks empty")
    if len(set(counts)) == 1:
        # a point set: identical covers at every scale, slope exactly zero
        return MinkowskiEstimate(
            d_m=0.0, c_m=float(counts[0]), scales=scales, counts=counts
        )
    x = np.array(scales, dtype=float) * math.log(2.0)
    y = np.log(counts)
    d_m = float(np.polyfit(x, y, 1)[0])
    c_m = max(c * 2.0 ** (-j * d_m) for j, c in zip(scales, counts))
    return MinkowskiEstimate(d_m=d_m, c_m=c_m, scales=scales, counts=counts)
