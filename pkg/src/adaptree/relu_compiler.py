"""Compile adaptive piecewise polynomials into explicit ReLU networks.

The network realizes ``sum_cells  product(bump, patch)`` with three stock
gadgets, assembled so that every claimed exactness property is *bitwise*
rather than "up to float noise":

* trapezoid partitions of unity (one ramp pair per axis),
* an approximate product built from iterated-sawtooth squaring,
* multi-products as a right-nested chain of pairwise products.

Float discipline
----------------
Three contracts below are exact-zero contracts: the product gadget returns
``0.0`` (bitwise) when either factor is zero, the multi-product propagates
such zeros, and bumps vanish bitwise outside their inflated support.  These
survive BLAS reorderings and FMA contraction because of two design rules:

1. every weight on a cancellation-critical path is a power of two, so each
   product inside a dot product is exact and equal-and-opposite terms cancel
   exactly in *any* summation order;
2. the three squaring chains inside one product gadget use identical row
   patterns at identical layer widths, so bit-equal inputs yield bit-equal
   outputs, and the final combination only ever adds exact pairs and zeros.

Clamps use the two-layer form ``y -> M - ReLU(2M - ReLU(y + M))`` whose
subtractions are exact by Sterbenz' lemma, so clamping preserves exact zeros.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .adaptive_approx import PiecewisePolynomial
from .dyadic_tree import DyadicCube
from .local_poly import PolynomialPatch
from .measures import Measure, lebesgue, sample

__all__ = [
    "CompileFeasibilityError",
    "CompileReport",
    "NetworkDimensionError",
    "NetworkStats",
    "RampWidthError",
    "ReluNetwork",
    "build_bump_net",
    "build_multiproduct_net",
    "build_patch_net",
    "build_product_net",
    "build_trapezoid_net",
    "compile_adaptive_net",
    "covering_bound",
    "load_network",
    "net_from_jsonable",
    "net_to_jsonable",
    "network_stats",
    "relu_forward",
    "save_network",
    "stack_parallel",
]

Layer = tuple[np.ndarray, np.ndarray]


class NetworkDimensionError(ValueError):
    """Input shape incompatible with a network's input dimension."""


class RampWidthError(ValueError):
    """Ramp width delta incompatible with the requested support."""


class CompileFeasibilityError(ValueError):
    """The partition's finest scale leaves no feasible ramp width."""


@dataclass(frozen=True, eq=False)
class ReluNetwork:
    """Affine layers with ReLU between them and none after the last.

    ``layers[i] = (W, b)`` maps a width-``W.shape[1]`` activation to
    ``W @ a + b``.  ``clamp_m`` records that the final layers clip the
    output to ``[-M, M]`` (the clip sub-network is part of ``layers``
    and counts toward the statistics).
    """

    layers: tuple[Layer, ...]
    clamp_m: float | None = None

    def __post_init__(self) -> None:
        if not self.layers:
            raise ValueError("a network needs at least one affine layer")
        for i, (w, b) in enumerate(self.layers):
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise ValueError(f"layer {i}: malformed weight/bias shapes")
            if i and w.shape[1] != self.layers[i - 1][0].shape[0]:
                raise ValueError(
                    f"layer {i}: expects width {w.shape[1]}, "
                    f"previous layer produces {self.layers[i - 1][0].shape[0]}"
                )

    @property
    def input_dim(self) -> int:
        return self.layers[0][0].shape[1]

    @property
    def output_dim(self) -> int:
        return self.layers[-1][0].shape[0]

    @property
    def n_hidden(self) -> int:
        return len(self.layers) - 1


def _net(layers: Iterable[tuple[np.ndarray, np.ndarray]], clamp_m: float | None = None) -> ReluNetwork:
    clean = tuple(
        (np.ascontiguousarray(w, dtype=float), np.ascontiguousarray(b, dtype=float))
        for w, b in layers
    )
    return ReluNetwork(clean, clamp_m)


_SPARSE_ROW_MAX = 16


def _affine(a: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Affine layer with an order-stable reduction for sparse rows.

    Rows with at most ``_SPARSE_ROW_MAX`` nonzeros (every gadget row the
    compiler emits) are accumulated sequentially in column order, skipping
    zeros.  That makes the result independent of how the row is embedded in
    a larger block-diagonal matrix — BLAS kernels regroup dot products by
    row length, which would break the bitwise-zero and stacking contracts —
    and independent of FMA contraction.  Dense rows take the fast path.
    """
    nnz = np.count_nonzero(w, axis=1)
    if nnz.min() > _SPARSE_ROW_MAX:
        return a @ w.T + b
    out = np.empty((a.shape[0], w.shape[0]))
    for r in range(w.shape[0]):
        row = w[r]
        cols = np.flatnonzero(row)
        if cols.size > _SPARSE_ROW_MAX:
            out[:, r] = a @ row + b[r]
            continue
        acc = np.zeros(a.shape[0])
        for c in cols:
            acc = acc + row[c] * a[:, c]
        out[:, r] = acc + b[r]
    return out


def relu_forward(net: ReluNetwork, x: np.ndarray) -> np.ndarray | float:
    """Evaluate the network at one point or a batch of points.

    A scalar or a length-``input_dim`` vector is a single point; an
    ``(n, input_dim)`` array (or a plain length-n vector when the input is
    one-dimensional) is a batch.  Scalar-output networks return floats /
    1-d arrays accordingly.  Evaluation is deterministic and batch-size
    independent (see ``_affine``).
    """
    arr = np.asarray(x, dtype=float)
    d = net.input_dim
    single = arr.ndim == 0 or (arr.ndim == 1 and arr.size == d)
    if single:
        pts = arr.reshape(1, d)
    elif arr.ndim == 1 and d == 1:
        pts = arr[:, None]
    elif arr.ndim == 2 and arr.shape[1] == d:
        pts = arr
    else:
        raise NetworkDimensionError(
            f"cannot interpret input of shape {arr.shape} for a network with "
            f"{d} input(s)"
        )
    a = pts
    for w, b in net.layers[:-1]:
        a = np.maximum(_affine(a, w, b), 0.0)
    w, b = net.layers[-1]
    out = _affine(a, w, b)
    if net.output_dim == 1:
        out = out[:, 0]
        return float(out[0]) if single else out
    return out[0] if single else out


@dataclass(frozen=True)
class NetworkStats:
    """Size statistics: depth L, max hidden width w, nonzeros K, max |param|."""

    L: int
    w: int
    K: int
    kappa: float
    M: float | None

    def to_jsonable(self) -> dict:
        return {"L": self.L, "w": self.w, "K": self.K, "kappa": self.kappa, "M": self.M}


def network_stats(net: ReluNetwork) -> NetworkStats:
    width = max((w.shape[0] for w, _ in net.layers[:-1]), default=0)
    nonzeros = sum(np.count_nonzero(w) + np.count_nonzero(b) for w, b in net.layers)
    kappa = max(
        (max(np.abs(w).max(initial=0.0), np.abs(b).max(initial=0.0)) for w, b in net.layers),
        default=0.0,
    )
    return NetworkStats(
        L=net.n_hidden, w=width, K=int(nonzeros), kappa=float(kappa), M=net.clamp_m
    )


# ---------------------------------------------------------------------------
# layer-by-layer construction with named channels


class _Builder:
    """Build hidden layers incrementally; rows are dicts over channel names.

    Naming rows instead of indexing columns keeps the gadget wiring readable
    and makes the cross-chain row alignment (see module docstring) explicit.
    """

    def __init__(self, input_names: Sequence[str]):
        self.prev: list[str] = list(input_names)
        self.hidden: list[Layer] = []

    def layer(self, units: Sequence[tuple[str, Mapping[str, float], float]]) -> None:
        index = {name: i for i, name in enumerate(self.prev)}
        w = np.zeros((len(units), len(self.prev)))
        b = np.zeros(len(units))
        names: list[str] = []
        for r, (name, row, bias) in enumerate(units):
            for key, val in row.items():
                w[r, index[key]] = val
            b[r] = bias
            names.append(name)
        self.hidden.append((w, b))
        self.prev = names

    def passes(self, names: Sequence[str]) -> list[tuple[str, dict[str, float], float]]:
        return [(n, {n: 1.0}, 0.0) for n in names]

    def finish(self, row: Mapping[str, float], bias: float, clamp_m: float | None = None) -> ReluNetwork:
        index = {name: i for i, name in enumerate(self.prev)}
        w = np.zeros((1, len(self.prev)))
        for key, val in row.items():
            w[0, index[key]] = val
        return _net(self.hidden + [(w, np.array([bias]))], clamp_m)


def _stages(c_int: float, eps: float) -> int:
    """Sawtooth stage count: error (3/2)c^2 4^-m <= (3/32) eps."""
    return max(1, math.ceil(0.5 * math.log2(c_int * c_int / eps)) + 2)


def _sq_chain(
    bld: _Builder,
    tag: str,
    t_row: Mapping[str, float],
    m: int,
    extras: Sequence[tuple[str, Mapping[str, float], float]],
    carries: Sequence[str],
) -> dict[str, float]:
    """Append the m-stage sawtooth chain for f_m(t) ~= t^2, t = t_row >= 0.

    Returns the affine row (over the final chain layer) whose value is
    f_m(t); the caller materializes it through a ReLU (f_m >= t^2 >= 0).
    All three chains of a product gadget call this with identical stage-row
    patterns, which is what makes equal inputs give bit-equal outputs.
    """
    h0, h1, h2, acc = (f"{tag}{u}" for u in ("h0", "h1", "h2", "acc"))
    bld.layer(
        [(h0, t_row, 0.0), (h1, t_row, -0.5), (h2, t_row, -1.0)]
        + list(extras)
        + bld.passes(carries)
    )
    tail = [name for name, _, _ in extras] + list(carries)
    for s in range(2, m + 1):
        g = {h0: 2.0, h1: -4.0, h2: 2.0}
        if s == 2:
            acc_row = {h0: 0.5, h1: 1.0, h2: -0.5}
        else:
            c = 2.0 / 4.0 ** (s - 1)
            acc_row = {h0: -c, h1: 2.0 * c, h2: -c, acc: 1.0}
        bld.layer(
            [(h0, g, 0.0), (h1, g, -0.5), (h2, g, -1.0), (acc, acc_row, 0.0)]
            + bld.passes(tail)
        )
    if m == 1:
        return {h0: 0.5, h1: 1.0, h2: -0.5}
    c = 2.0 / 4.0 ** m
    return {h0: -c, h1: 2.0 * c, h2: -c, acc: 1.0}


def _product_stage(
    bld: _Builder,
    tag: str,
    pair: tuple[str, str, str, str],
    c_int: float,
    cap: float,
    m: int,
    carries: Sequence[str],
) -> str:
    """Append one product gadget on signed pairs; returns the c2 channel.

    The gadget output is ``cap - c2`` (the caller folds that affine).  With
    ``c_int`` a power of two, a zero factor makes the three squaring chains
    cancel exactly and ``cap - c2 == 0.0`` bitwise.
    """
    xp, xm, yp, ym = pair
    wgt = 0.5 / c_int  # power of two
    p, q, r, s_ = (f"{tag}{u}" for u in ("p", "q", "r", "s"))
    bld.layer(
        [
            (p, {xp: wgt, xm: -wgt, yp: wgt, ym: -wgt}, 0.0),
            (q, {xp: -wgt, xm: wgt, yp: -wgt, ym: wgt}, 0.0),
            (r, {xp: wgt, xm: wgt}, 0.0),
            (s_, {yp: wgt, ym: wgt}, 0.0),
        ]
        + bld.passes(carries)
    )
    r1, r2, r3 = (f"{tag}R{i}" for i in (1, 2, 3))
    f1 = _sq_chain(bld, tag + "a", {p: 1.0, q: 1.0}, m, [], [r, s_, *carries])
    f2 = _sq_chain(bld, tag + "b", {r: 1.0}, m, [(r1, f1, 0.0)], [s_, *carries])
    f3 = _sq_chain(bld, tag + "c", {s_: 1.0}, m, [(r2, f2, 0.0)], [r1, *carries])
    two_c2 = 2.0 * c_int * c_int  # power of two
    bld.layer(
        [(r1, {r1: 1.0}, 0.0), (r2, {r2: 1.0}, 0.0), (r3, f3, 0.0)]
        + bld.passes(carries)
    )
    c1, c2 = f"{tag}c1", f"{tag}c2"
    bld.layer(
        [(c1, {r1: two_c2, r2: -two_c2, r3: -two_c2}, cap)] + bld.passes(carries)
    )
    bld.layer([(c2, {c1: -1.0}, 2.0 * cap)] + bld.passes(carries))
    return c2


def _embed_product(
    bld: _Builder,
    tag: str,
    factors: Sequence[tuple[Mapping[str, float], float]],
    c_factor: float,
    eps: float,
) -> tuple[dict[str, float], float]:
    """Append a right-nested multi-product of ``factors`` (rows over prev).

    Factor values must lie in [-c_factor, c_factor]; they are rescaled to
    [-1, 1] at entry (by a power of two, keeping zeros exact) and the output
    row is scaled back at exit.  Returns (row, bias) for the product value.
    """
    n = len(factors)
    if n < 2:
        raise ValueError("need at least two factors")
    c_out = 1.0 if c_factor <= 1.0 else 2.0 ** math.ceil(math.log2(c_factor))
    m = _stages(1.0, eps)
    abar = [f"{tag}a{i}" for i in range(n)]
    bld.layer(
        [
            (abar[i], {key: val / c_out for key, val in row.items()}, bias / c_out + 1.0)
            for i, (row, bias) in enumerate(factors)
        ]
    )
    right = abar[n - 1]
    for k in range(1, n):
        left = abar[n - 1 - k]
        xp, xm, yp, ym = (f"{tag}s{k}{u}" for u in ("xp", "xm", "yp", "ym"))
        bld.layer(
            [
                (xp, {left: 1.0}, -1.0),
                (xm, {left: -1.0}, 1.0),
                (yp, {right: 1.0}, -1.0),
                (ym, {right: -1.0}, 1.0),
            ]
            + bld.passes(abar)
        )
        c2 = _product_stage(bld, f"{tag}s{k}", (xp, xm, yp, ym), 1.0, 1.0, m, abar)
        if k < n - 1:
            pbar = f"{tag}P{k}"
            bld.layer([(pbar, {c2: -1.0}, 2.0)] + bld.passes(abar))
            right = pbar
        else:
            scale = c_out**n
            return {c2: -scale}, scale
    raise AssertionError("unreachable")


# ---------------------------------------------------------------------------
# public gadget builders


def build_trapezoid_net(a: float, b: float, delta: float) -> ReluNetwork:
    """The four-ReLU trapezoid: 1 on [a+d/2, b-d/2], 0 outside [a-d/2, b+d/2].

    Boundary variants: the left ramp pair is dropped when a == 0 (the plateau
    extends to the boundary) and the right pair when b == 1.
    """
    if not (0.0 <= a < b <= 1.0):
        raise ValueError(f"need 0 <= a < b <= 1, got a={a}, b={b}")
    if not delta > 0.0 or delta >= b - a:
        raise RampWidthError(f"ramp width must satisfy 0 < delta < b - a, got {delta}")
    ramps: list[tuple[float, float]] = []  # (knot, output coefficient)
    if a > 0.0:
        ramps += [(a - delta / 2.0, 1.0), (a + delta / 2.0, -1.0)]
    if b < 1.0:
        ramps += [(b - delta / 2.0, -1.0), (b + delta / 2.0, 1.0)]
    if not ramps:
        return _net([(np.zeros((1, 1)), np.ones(1))])
    w1 = np.ones((len(ramps), 1))
    b1 = np.array([-knot for knot, _ in ramps])
    w2 = np.array([[coeff / delta for _, coeff in ramps]])
    b2 = np.array([1.0 if a == 0.0 else 0.0])
    return _net([(w1, b1), (w2, b2)])


def build_product_net(c: float, eps: float) -> ReluNetwork:
    """Two-input gadget with |out - xy| < eps on [-C, C]^2 and exact zeros.

    ``out(x, 0) == out(0, y) == 0.0`` bitwise, and |out| <= C^2 via the
    final clamp.  Width never exceeds 6; depth is O(log(1/eps)).
    """
    if not c > 0.0 or not math.isfinite(c):
        raise ValueError(f"input bound must be positive and finite, got {c}")
    if not 0.0 < eps < 1.0:
        raise ValueError(f"accuracy must lie in (0, 1), got {eps}")
    c_int = 1.0 if c <= 1.0 else 2.0 ** math.ceil(math.log2(c))
    m = _stages(c_int, eps)
    bld = _Builder(["x", "y"])
    bld.layer(
        [
            ("xp", {"x": 1.0}, 0.0),
            ("xm", {"x": -1.0}, 0.0),
            ("yp", {"y": 1.0}, 0.0),
            ("ym", {"y": -1.0}, 0.0),
        ]
    )
    cap = c * c
    c2 = _product_stage(bld, "pr", ("xp", "xm", "yp", "ym"), c_int, cap, m, [])
    return bld.finish({c2: -1.0}, cap)


def build_multiproduct_net(n: int, c: float, eps: float) -> ReluNetwork:
    """N-input product chain; per-stage accuracy eps, total error <= N*eps.

    Any zero factor propagates to an exact 0.0 output.  The maximum hidden
    width is exactly N + 6: a six-channel product core plus one carried
    channel per input.  Inputs beyond C=1 are rescaled at entry (power of
    two) and restored at exit, so parameters grow like C^N.
    """
    if not isinstance(n, (int, np.integer)) or n < 2:
        raise ValueError(f"need an integer factor count >= 2, got {n}")
    if not c > 0.0 or not math.isfinite(c):
        raise ValueError(f"input bound must be positive and finite, got {c}")
    if not 0.0 < eps < 1.0:
        raise ValueError(f"accuracy must lie in (0, 1), got {eps}")
    bld = _Builder([f"x{i}" for i in range(n)])
    factors = [({f"x{i}": 1.0}, 0.0) for i in range(n)]
    row, bias = _embed_product(bld, "mp", factors, c, eps)
    return bld.finish(row, bias)


def build_bump_net(cube: DyadicCube, delta: float, eps1: float) -> ReluNetwork:
    """Product bump for a cell: trapezoid per axis, multiplied together.

    Exactly 0 outside the delta-inflated cube (bitwise — this needs the ramp
    width to be a power of two) and within d*eps1 of the closed-form product
    bump everywhere.  Axes whose cell face lies on the domain boundary drop
    that ramp, extending the plateau to the boundary.
    """
    if not delta > 0.0:
        raise RampWidthError(f"ramp width must be positive, got {delta}")
    exponent = math.log2(delta)
    if exponent != math.floor(exponent):
        raise RampWidthError(
            f"ramp width must be a power of two for exact support control, got {delta}"
        )
    if delta > 2.0 ** -(cube.j + 2):
        raise RampWidthError(
            f"ramp width {delta} too large for a scale-{cube.j} cell: "
            f"need delta <= 2**-(j+2)"
        )
    if not 0.0 < eps1 < 1.0:
        raise ValueError(f"product accuracy must lie in (0, 1), got {eps1}")
    lo, hi = cube.bounds
    d = cube.dim
    bld = _Builder([f"x{i}" for i in range(d)])
    half = delta / 2.0
    ramp_units: list[tuple[str, dict[str, float], float]] = []
    axis_rows: list[tuple[str, dict[str, float], float]] = []
    for axis in range(d):
        row: dict[str, float] = {}
        if hi[axis] < 1.0:
            name = f"u{axis}r"
            ramp_units.append((name, {f"x{axis}": 1.0}, -(hi[axis] - half)))
            row[name] = -1.0 / delta
        if lo[axis] > 0.0:
            name = f"u{axis}l"
            ramp_units.append((name, {f"x{axis}": -1.0}, lo[axis] + half))
            row[name] = -1.0 / delta
        if row:
            axis_rows.append((f"g{axis}", row, 1.0))
    if not axis_rows:
        return _net([(np.zeros((1, d)), np.ones(1))])
    bld.layer(ramp_units)
    bld.layer([(name, row, bias) for name, row, bias in axis_rows])
    if len(axis_rows) == 1:
        return bld.finish({axis_rows[0][0]: 1.0}, 0.0)
    factors = [({name: 1.0}, 0.0) for name, _, _ in axis_rows]
    row, bias = _embed_product(bld, "bp", factors, 1.0, eps1)
    return bld.finish(row, bias)


def build_patch_net(patch: PolynomialPatch, eps1: float) -> ReluNetwork:
    """Realize one polynomial patch over cube-scaled coordinates.

    Constant and linear terms are a single exact affine layer.  Each
    monomial of total degree >= 2 becomes a multi-product over repeated
    copies of u_l = 2^j (x_l - anchor_l).  The lanes are built to stay
    accurate for |u_l| <= 1.25, i.e. on a 25%-inflated cube, so the compiler
    may multiply the patch by ramps that spill slightly past the cell.
    """
    if not 0.0 < eps1 < 1.0:
        raise ValueError(f"product accuracy must lie in (0, 1), got {eps1}")
    cube = patch.cube
    d = cube.dim
    scale = 2.0**cube.j
    affine_w = np.zeros((1, d))
    affine_b = 0.0
    lanes: list[ReluNetwork] = []
    lane_coeffs: list[float] = []
    for alpha, coeff in zip(patch.alphas, patch.coeffs):
        order = sum(alpha)
        if order == 0:
            affine_b += float(coeff)
        elif order == 1:
            axis = alpha.index(1)
            affine_w[0, axis] += coeff * scale
            affine_b -= coeff * cube.k[axis]
        elif coeff != 0.0:
            bld = _Builder([f"x{i}" for i in range(d)])
            factors = [
                ({f"x{axis}": scale}, -float(cube.k[axis]))
                for axis, power in enumerate(alpha)
                for _ in range(power)
            ]
            row, bias = _embed_product(bld, "mn", factors, 1.25, eps1)
            lanes.append(bld.finish(row, bias))
            lane_coeffs.append(float(coeff))
    affine_net = _net([(affine_w, np.array([affine_b]))])
    if not lanes:
        return affine_net
    stacked = stack_parallel([affine_net] + lanes)
    combine = np.array([[1.0] + lane_coeffs])
    return _compose_affine(stacked, combine, np.zeros(1))


def _compose_affine(net: ReluNetwork, w2: np.ndarray, b2: np.ndarray) -> ReluNetwork:
    """Fold an extra affine map onto the network's final affine layer."""
    w1, b1 = net.layers[-1]
    return _net(list(net.layers[:-1]) + [(w2 @ w1, w2 @ b1 + b2)], net.clamp_m)


def _pad_depth(net: ReluNetwork, extra: int) -> ReluNetwork:
    """Add ``extra`` hidden layers that carry the output through exactly.

    The output is split into an opposing ReLU pair (y = y+ - y-, exact for
    every float: sequential accumulation commutes with negation under
    round-to-nearest) and recombined at the end.
    """
    if extra <= 0:
        return net
    w_out, b_out = net.layers[-1]
    o = w_out.shape[0]
    hid = list(net.layers[:-1])
    hid.append((np.vstack([w_out, -w_out]), np.concatenate([b_out, -b_out])))
    eye = np.eye(2 * o)
    for _ in range(extra - 1):
        hid.append((eye, np.zeros(2 * o)))
    final = (np.hstack([np.eye(o), -np.eye(o)]), np.zeros(o))
    return _net(hid + [final], net.clamp_m)


def stack_parallel(nets: Sequence[ReluNetwork]) -> ReluNetwork:
    """Run networks side by side on the same input; outputs concatenate.

    Shallower networks are depth-padded with exact identity pairs (their
    parameters count toward K).  Because ``_affine`` reduces sparse rows in
    column order and skips zeros, embedding a row in a block-diagonal layer
    does not change its float result: every output whose rows stay on the
    order-stable path (at most ``_SPARSE_ROW_MAX`` nonzeros per row, which
    covers all compiler-built gadgets) matches its standalone evaluation
    bitwise.
    """
    if not nets:
        raise ValueError("cannot stack an empty list of networks")
    d = nets[0].input_dim
    for net in nets[1:]:
        if net.input_dim != d:
            raise NetworkDimensionError("stacked networks must share their input dimension")
    depth = max(net.n_hidden for net in nets)
    padded = [_pad_depth(net, depth - net.n_hidden) for net in nets]
    layers: list[Layer] = []
    for level in range(depth + 1):
        blocks = [net.layers[level] for net in padded]
        rows = sum(w.shape[0] for w, _ in blocks)
        cols = d if level == 0 else layers[-1][0].shape[0]
        w_full = np.zeros((rows, cols))
        b_full = np.zeros(rows)
        r0, c0 = 0, 0
        for w, b in blocks:
            if level == 0:
                w_full[r0 : r0 + w.shape[0], :] = w
            else:
                w_full[r0 : r0 + w.shape[0], c0 : c0 + w.shape[1]] = w
                c0 += w.shape[1]
            b_full[r0 : r0 + w.shape[0]] = b
            r0 += w.shape[0]
        layers.append((w_full, b_full))
    return _net(layers)


def covering_bound(stats: NetworkStats, delta: float) -> float:
    """Log covering number bound: K * log(2 L^2 (w+2) kappa^L w^(L+1) / delta)."""
    if not delta > 0.0:
        raise ValueError(f"cover radius must be positive, got {delta}")
    if stats.K == 0:
        return 0.0
    depth = max(stats.L, 1)
    width = max(stats.w, 1)
    return stats.K * (
        math.log(2.0)
        + 2.0 * math.log(depth)
        + math.log(width + 2.0)
        + depth * math.log(stats.kappa)
        + (depth + 1.0) * math.log(width)
        - math.log(delta)
    )


# ---------------------------------------------------------------------------
# assembly


def _append_clamp(net: ReluNetwork, level: float) -> ReluNetwork:
    """Clip a scalar-output network to [-level, level] with two exact layers."""
    w_out, b_out = net.layers[-1]
    hid = list(net.layers[:-1])
    hid.append((w_out, b_out + level))
    hid.append((np.array([[-1.0]]), np.array([2.0 * level])))
    return _net(hid + [(np.array([[-1.0]]), np.array([level]))], clamp_m=level)


def _cell_branch(
    bump: ReluNetwork, patch_net: ReluNetwork, c_cell: float, eps1: float
) -> ReluNetwork:
    """Multiply a bump by its patch network with one product gadget.

    The gadget is fed signed pairs of both factors; because the bump is 0.0
    bitwise outside its inflated support, the branch output is too, no
    matter how wild the patch polynomial grows out there.
    """
    pair = stack_parallel([bump, patch_net])
    w_out, b_out = pair.layers[-1]
    reencode = (
        np.vstack([w_out[0], -w_out[0], w_out[1], -w_out[1]]),
        np.array([b_out[0], -b_out[0], b_out[1], -b_out[1]]),
    )
    c_int = 1.0 if c_cell <= 1.0 else 2.0 ** math.ceil(math.log2(c_cell))
    bld = _Builder(["fp", "fm", "pp", "pm"])
    c2 = _product_stage(
        bld, "cb", ("fp", "fm", "pp", "pm"), c_int, c_cell * c_cell, _stages(c_int, eps1), []
    )
    core = bld.finish({c2: -1.0}, c_cell * c_cell)
    return _net(list(pair.layers[:-1]) + [reencode] + list(core.layers))


@dataclass(frozen=True)
class CompileReport:
    """What the compiler measured and budgeted for one network."""

    stats: NetworkStats
    target_eps: float
    s: float
    eps1: float
    delta: float
    tree_size: int
    n_cells: int
    finest_scale: int
    dim: int
    theta: int
    output_bound: float
    coeff_bound: float
    c3: float
    mc_error_sq: float
    error_budget: float
    covering_log_bound: float
    kappa_ratio: float
    mc_points: int
    seed: int

    def to_jsonable(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "stats"}
        out["stats"] = self.stats.to_jsonable()
        return out


def _forward_chunked(net: ReluNetwork, pts: np.ndarray, chunk: int = 32768) -> np.ndarray:
    parts = [relu_forward(net, pts[i : i + chunk]) for i in range(0, len(pts), chunk)]
    return np.concatenate(parts)


def _patch_sup_bound(patch: PolynomialPatch, inflate: float) -> float:
    return float(
        sum(abs(c) * (1.0 + inflate) ** sum(a) for a, c in zip(patch.alphas, patch.coeffs))
    )


def _cell_grid(cube: DyadicCube, per_axis: int) -> np.ndarray:
    lo, hi = cube.bounds
    axes = [np.linspace(lo[i], hi[i], per_axis) for i in range(cube.dim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def compile_adaptive_net(
    pp: PiecewisePolynomial,
    eps: float,
    measure: Measure | None = None,
    *,
    s: float | None = None,
    tree_size: int | None = None,
    output_bound: float | None = None,
    mc_points: int = 100_000,
    seed: int = 0,
) -> tuple[ReluNetwork, CompileReport]:
    """Compile a piecewise polynomial into one clamped ReLU network.

    ``s`` is the smoothness exponent steering the internal accuracy budgets
    (use a measured s_hat when the class is unknown); ``eps`` is the target
    accuracy used for reporting (covering bound, kappa ratio).  The internal
    budgets follow the source tree size: eps1 = (#T)^-s and ramp width
    delta = min((#T)^(-2s-1/d), 2^(-J-2)), rounded down to a power of two.
    The report carries the network statistics and a Monte-Carlo estimate of
    the squared L2 distance to ``pp`` under ``measure`` (Lebesgue default).
    """
    if not 0.0 < eps < 1.0:
        raise ValueError(f"target accuracy must lie in (0, 1), got {eps}")
    if s is None:
        raise ValueError("supply the smoothness exponent s (e.g. a measured s_hat)")
    if not s > 0.0:
        raise ValueError(f"smoothness exponent must be positive, got {s}")
    n_tree = tree_size if tree_size is not None else pp.source_tree_size
    if n_tree < 1:
        raise ValueError(
            "the piecewise polynomial does not record its source tree size; "
            "pass tree_size= explicitly"
        )
    d = pp.dim
    cells = pp.partition.cells
    finest = max(cube.j for cube in cells)
    eps1 = min(float(n_tree) ** -s, 0.5)
    delta_raw = min(float(n_tree) ** -(2.0 * s + 1.0 / d), 2.0 ** -(finest + 2))
    if delta_raw <= 0.0 or finest + 2 > 1000:
        raise CompileFeasibilityError(
            f"no feasible ramp width at finest scale {finest} with tree size {n_tree}"
        )
    delta = 2.0 ** math.floor(math.log2(delta_raw))

    inflate = delta * 2.0**finest  # <= 1/4 by construction
    sup_bounds = [_patch_sup_bound(patch, inflate) for patch in pp.patches]
    level = output_bound if output_bound is not None else max(max(sup_bounds), 1.0)

    branches = []
    for cube, patch, m_p in zip(cells, pp.patches, sup_bounds):
        bump = build_bump_net(cube, delta, eps1)
        pnet = build_patch_net(patch, eps1)
        branches.append(_cell_branch(bump, pnet, max(1.0, m_p), eps1))
    stacked = stack_parallel(branches)
    summed = _compose_affine(stacked, np.ones((1, len(branches))), np.zeros(1))
    net = _append_clamp(summed, float(level))
    stats = network_stats(net)

    coeff_bound = max(
        (float(np.abs(patch.coeffs).max(initial=0.0)) for patch in pp.patches),
        default=0.0,
    )
    theta = pp.theta
    c3 = 0.0
    if theta >= 1 and coeff_bound > 0.0:
        per_axis = 17 if d <= 2 else 9
        denom = coeff_bound * theta * eps1
        for cube, patch in zip(cells, pp.patches):
            pnet = build_patch_net(patch, eps1)
            grid = _cell_grid(cube, per_axis)
            gap = np.max(np.abs(relu_forward(pnet, grid) - patch.eval(grid)))
            c3 = max(c3, float(gap) / denom)

    rho = measure if measure is not None else lebesgue(d)
    rng = np.random.default_rng(seed)
    pts = sample(rho, mc_points, rng)
    diff = _forward_chunked(net, pts) - pp.eval(pts)
    mc_error_sq = float(np.mean(diff * diff))

    r_bound = float(level)
    budget = (
        3.0
        * (r_bound**2 * d**2 + 1.0 + c3**2 * coeff_bound**2 * theta**2)
        * eps1**2
        + 2.0 ** (d + 3) * d * r_bound**2 * delta * float(n_tree) ** (1.0 / d)
    )
    report = CompileReport(
        stats=stats,
        target_eps=float(eps),
        s=float(s),
        eps1=eps1,
        delta=delta,
        tree_size=int(n_tree),
        n_cells=len(cells),
        finest_scale=finest,
        dim=d,
        theta=theta,
        output_bound=r_bound,
        coeff_bound=coeff_bound,
        c3=c3,
        mc_error_sq=mc_error_sq,
        error_budget=float(budget),
        covering_log_bound=covering_bound(stats, eps),
        kappa_ratio=stats.kappa * eps ** max(2.0, 1.0 / s),
        mc_points=mc_points,
        seed=seed,
    )
    return net, report


# ---------------------------------------------------------------------------
# serialization


def net_to_jsonable(net: ReluNetwork) -> dict:
    """JSON form with 17-significant-digit decimal strings (bit-faithful)."""
    stats = network_stats(net)
    return {
        "meta": {
            "input_dim": net.input_dim,
            "output_dim": net.output_dim,
            **stats.to_jsonable(),
        },
        "layers": [
            {
                "rows": int(w.shape[0]),
                "cols": int(w.shape[1]),
                "weights": [f"{v:.17g}" for v in w.ravel()],
                "bias": [f"{v:.17g}" for v in b],
            }
            for w, b in net.layers
        ],
    }


def net_from_jsonable(obj: Mapping) -> ReluNetwork:
    layers = []
    for spec in obj["layers"]:
        rows, cols = int(spec["rows"]), int(spec["cols"])
        w = np.array([float(v) for v in spec["weights"]]).reshape(rows, cols)
        b = np.array([float(v) for v in spec["bias"]])
        layers.append((w, b))
    clamp = obj.get("meta", {}).get("M")
    return _net(layers, None if clamp is None else float(clamp))


def save_network(net: ReluNetwork, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(net_to_jsonable(net), fh, indent=1)


def load_network(path: str) -> ReluNetwork:
    with open(path, encoding="utf-8") as fh:
        return net_from_jsonable(json.load(fh))
