"""Command-line front end: targets, sweeps, rate fits, compiling, training.

Every command addresses test functions by corpus name (``adaptree targets
--list``).  The experiment commands (``sweep``, ``approximate``, ``train``)
write the shared result schema to the output directory and render SVG
figures next to the CSV; ``rates`` re-fits slopes from any such table;
``compile``/``eval-net`` move approximants and networks through their JSON
formats; ``seminorm`` and ``boundary-dim`` print the scan-based estimates.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from typing import Sequence

import numpy as np

from adaptree.adaptive_approx import (
    InsufficientDataError,
    RefinementScan,
    build_adaptive_approximant,
    estimate_rate_s,
    estimate_seminorm,
    load_approximant,
    save_approximant,
)
from adaptree.corpus import (
    DegenerateCountsError,
    UnknownTargetError,
    circle_cube_oracle,
    estimate_minkowski_dim,
    get_target,
    known_rate,
    list_targets,
    point_cube_oracle,
    quadrature_for,
)
from adaptree.harness import (
    ExperimentConfig,
    emit_outputs,
    fit_slope,
    generate_dataset,
    rows_from_csv,
    run_sweep,
    held_out_dataset,
)
from adaptree.relu_compiler import (
    compile_adaptive_net,
    load_network,
    network_stats,
    relu_forward,
    save_network,
)
from adaptree.trainer import MlpArchitecture, TrainConfig, forward, init_mlp, to_relu_network, train

__all__ = ["main"]


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(",", " ").split())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.replace(",", " ").split())


def _scales(text: str) -> tuple[int, ...]:
    """Parse '3:8' (inclusive) or '3,4,5,6,7,8'."""
    if ":" in text:
        lo, hi = text.split(":", 1)
        return tuple(range(int(lo), int(hi) + 1))
    return _ints(text)


def _open_out(path: str | None):
    return open(path, "w", encoding="utf-8", newline="") if path else sys.stdout


# ---------------------------------------------------------------------------
# subcommands


def _cmd_targets(args: argparse.Namespace) -> int:
    print(f"{'name':<14}{'d':>2}  {'predicted s (theta=%d)' % args.theta:<24}description")
    for t in list_targets():
        print(f"{t.name:<14}{t.dim:>2}  {t.predicted_s(args.theta):<24.6g}{t.description}")
    return 0


def _cmd_seminorm(args: argparse.Namespace) -> int:
    target = get_target(args.target)
    quad = quadrature_for(target, args.theta)
    curve = estimate_seminorm(
        target.fn,
        args.s,
        args.theta,
        target.measure(),
        quad,
        eta_grid=args.grid,
        max_scale=args.max_scale,
    )
    out = _open_out(args.out)
    try:
        writer = csv.writer(out)
        writer.writerow(["eta", "tree_size", "eta_m_T"])
        for p in curve.points:
            writer.writerow([f"{p.eta:.17g}", p.tree_size, f"{p.eta_m_T:.17g}"])
    finally:
        if out is not sys.stdout:
            out.close()
    print(
        f"seminorm estimate {curve.seminorm_estimate:.6g} (s={curve.s:g}, "
        f"m={curve.m:.6g}, edge_attained={curve.edge_attained}, "
        f"saturated={curve.any_saturated})",
        file=sys.stderr,
    )
    return 0


def _cmd_approximate(args: argparse.Namespace) -> int:
    cfg = ExperimentConfig(
        mode="approximate",
        target=args.target,
        theta=args.theta,
        eta_grid=args.eta_grid or (),
        max_scale=args.max_scale,
        out_dir=args.out_dir,
    )
    rows = run_sweep(cfg)
    paths = emit_outputs(rows, cfg.out_dir)
    print(f"{len(rows)} rows")
    for p in paths:
        print(p)
    if args.emit_partition is not None:
        target = get_target(args.target)
        quad = quadrature_for(target, args.theta)
        scan = RefinementScan(
            target.fn, args.theta, target.measure(), quad, max_scale=args.max_scale
        )
        tree, _ = scan.truncate(args.emit_partition)
        pp = build_adaptive_approximant(
            target.fn, tree, args.theta, target.measure(), quad
        )
        try:
            s_hat = estimate_rate_s(
                target.fn, args.theta, target.measure(), quad, scan=scan
            ).s_hat
        except InsufficientDataError:
            s_hat = known_rate(args.target, args.theta)
        path = f"{cfg.out_dir}/partition_{args.target}_eta{args.emit_partition:g}.json"
        save_approximant(pp, path, s_hat=s_hat)
        print(path)
    return 0


def _cmd_compile(args: argparse.Namespace) -> int:
    with open(args.infile, encoding="utf-8") as fh:
        meta_s = json.load(fh)["meta"].get("s_hat")
    pp = load_approximant(args.infile)
    if args.s is not None:
        s = args.s
    elif meta_s is not None:
        s = float(meta_s)
    elif args.target is not None:
        s = known_rate(args.target, pp.theta)
    else:
        raise ValueError("no smoothness available: pass --s (or --target, or a partition with s_hat)")
    measure = get_target(args.target).measure() if args.target else None
    net, report = compile_adaptive_net(
        pp, args.eps, measure, s=s, mc_points=args.mc_points, seed=args.seed
    )
    save_network(net, args.out)
    st = report.stats
    print(
        f"L={st.L} w={st.w} K={st.K} kappa={st.kappa:.6g} M={st.M:.6g} "
        f"mc_error_sq={report.mc_error_sq:.6g} budget={report.error_budget:.6g}"
    )
    print(args.out)
    return 0


def _cmd_eval_net(args: argparse.Namespace) -> int:
    net = load_network(args.net)
    try:
        pts = np.loadtxt(args.points, delimiter=",", ndmin=2)
    except ValueError:
        pts = np.loadtxt(args.points, delimiter=",", ndmin=2, skiprows=1)
    if pts.shape[1] != net.input_dim:
        raise ValueError(
            f"points have {pts.shape[1]} columns, network expects {net.input_dim}"
        )
    values = relu_forward(net, pts)
    out = _open_out(args.out)
    try:
        writer = csv.writer(out)
        writer.writerow([f"x{i}" for i in range(net.input_dim)] + ["y"])
        for row, v in zip(pts, np.atleast_1d(values)):
            writer.writerow([f"{c:.17g}" for c in row] + [f"{v:.17g}"])
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    target = get_target(args.target)
    widths = args.widths if args.widths else (target.dim, 64, 128, 64, 1)
    if widths[0] != target.dim:
        raise ValueError(f"widths[0] must equal the target dimension {target.dim}")
    data_ss, init_ss = np.random.SeedSequence(args.seed).spawn(2)
    x, y = generate_dataset(target, args.n, args.sigma, seed=data_ss)
    net = init_mlp(MlpArchitecture(widths), seed=init_ss)
    cfg = TrainConfig(learning_rate=args.lr, epochs=args.epochs, seed=args.seed)
    best, history = train(net, x, y, cfg)
    x_test, y_test = held_out_dataset(target, args.n_test)
    test_mse = float(np.mean((np.asarray(forward(best, x_test)) - y_test) ** 2))
    print(
        f"train_mse={history.min():.6g} final={history[-1]:.6g} "
        f"test_mse={test_mse:.6g} (n={args.n}, sigma={args.sigma:g}, "
        f"epochs={args.epochs}, seed={args.seed})"
    )
    if args.out:
        save_network(to_relu_network(best), args.out)
        print(args.out)
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    cfg = ExperimentConfig.from_json(args.config)
    rows = run_sweep(cfg)
    paths = emit_outputs(rows, cfg.out_dir)
    n_err = sum(1 for r in rows if math.isnan(r.metric))
    print(f"{len(rows)} rows ({n_err} errors)")
    for p in paths:
        print(p)
    return 0


_X_SYNONYMS = {"x": "x", "n": "x", "n_train": "x", "eta": "x", "eps": "x"}
_Y_SYNONYMS = {
    "metric": "metric",
    "test_mse": "metric",
    "mse": "metric",
    "err2": "metric",
    "error_sq": "metric",
    "k": "metric",
    "tree_size": "metric",
}
_GROUP_COLUMNS = ("mode", "target", "sigma", "trial", "seed")


def _cmd_rates(args: argparse.Namespace) -> int:
    rows = rows_from_csv(args.table)
    x_col = _X_SYNONYMS.get(args.x.lower())
    if x_col is None:
        raise ValueError(f"unknown x column {args.x!r}; try one of {sorted(_X_SYNONYMS)}")
    y_col = _Y_SYNONYMS.get(args.y.lower())
    if y_col is None:
        raise ValueError(f"unknown y column {args.y!r}; try one of {sorted(_Y_SYNONYMS)}")
    group = tuple(g.strip() for g in args.group.split(",") if g.strip())
    for g in group:
        if g not in _GROUP_COLUMNS:
            raise ValueError(f"unknown group column {g!r}; try some of {_GROUP_COLUMNS}")
    grouped: dict[tuple, list] = {}
    for r in rows:
        grouped.setdefault(tuple(getattr(r, g) for g in group), []).append(r)
    print("\t".join(group) + "\tslope\tintercept\tstderr\tn_points")
    for key in sorted(grouped, key=str):
        label = "\t".join(
            f"{k:.17g}" if isinstance(k, float) else str(k) for k in key
        )
        # a group that cannot support a log-log fit (too few sizes, zeros)
        # prints "-" instead of aborting the whole table
        try:
            fit = fit_slope(grouped[key], x_col=x_col, y_col=y_col, group_keys=group)[key]
        except ValueError:
            print(f"{label}\t-\t-\t-\t-")
            continue
        print(
            f"{label}\t{fit.slope:.6g}\t{fit.intercept:.6g}\t{fit.stderr:.6g}\t{fit.n_points}"
        )
    return 0


def _cmd_boundary_dim(args: argparse.Namespace) -> int:
    target = get_target(args.target)
    if target.circle is not None:
        oracle = circle_cube_oracle(*target.circle)
    elif target.breakpoints:
        oracles = [point_cube_oracle((b,) * target.dim) for b in target.breakpoints]
        oracle = lambda cube: any(o(cube) for o in oracles)  # noqa: E731
    else:
        raise ValueError(f"target {target.name!r} has no discontinuity set")
    est = estimate_minkowski_dim(oracle, target.dim, args.scales)
    print(f"d_M={est.d_m:.6g} c_M={est.c_m:.6g}")
    print("scale\tcount")
    for j, c in zip(est.scales, est.counts):
        print(f"{j}\t{c}")
    return 0


# ---------------------------------------------------------------------------
# parser


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adaptree",
        description="Adaptive tree approximation: sweeps, rates, ReLU compilation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("targets", help="list the test-function corpus")
    p.add_argument("--list", action="store_true", help="list targets (default action)")
    p.add_argument("--theta", type=int, default=1, help="degree for the predicted rate")
    p.set_defaults(func=_cmd_targets)

    p = sub.add_parser("seminorm", help="thresholding curve and seminorm estimate")
    p.add_argument("--target", required=True)
    p.add_argument("--theta", type=int, default=1)
    p.add_argument("--s", type=float, required=True, help="smoothness index")
    p.add_argument("--grid", type=_floats, default=None, help="comma-separated etas")
    p.add_argument("--max-scale", type=int, default=None)
    p.add_argument("--out", default=None, help="CSV path (default: stdout)")
    p.set_defaults(func=_cmd_seminorm)

    p = sub.add_parser("approximate", help="error/size vs eta sweep for one target")
    p.add_argument("--target", required=True)
    p.add_argument("--theta", type=int, default=1)
    p.add_argument("--eta-grid", type=_floats, default=None)
    p.add_argument("--max-scale", type=int, default=None)
    p.add_argument("--out-dir", default="results")
    p.add_argument(
        "--emit-partition",
        type=float,
        default=None,
        metavar="ETA",
        help="also save the approximant at this threshold as JSON",
    )
    p.set_defaults(func=_cmd_approximate)

    p = sub.add_parser("compile", help="compile a saved approximant to a ReLU net")
    p.add_argument("--in", dest="infile", required=True, metavar="PARTITION_JSON")
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--out", required=True, metavar="NET_JSON")
    p.add_argument("--s", type=float, default=None, help="smoothness for the accuracy schedule")
    p.add_argument("--target", default=None, help="corpus name (for measure and fallback s)")
    p.add_argument("--mc-points", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_compile)

    p = sub.add_parser("eval-net", help="evaluate a saved network on CSV points")
    p.add_argument("--net", required=True)
    p.add_argument("--points", required=True, help="CSV of coordinates, one point per row")
    p.add_argument("--out", default=None, help="CSV path (default: stdout)")
    p.set_defaults(func=_cmd_eval_net)

    p = sub.add_parser("train", help="train one MLP on noisy samples of a target")
    p.add_argument("--target", required=True)
    p.add_argument("--n", type=int, required=True, help="training set size")
    p.add_argument("--sigma", type=float, default=0.1)
    p.add_argument("--epochs", type=int, default=20_000)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--widths", type=_ints, default=None, help="e.g. 1,64,128,64,1")
    p.add_argument("--n-test", type=int, default=10_000)
    p.add_argument("--out", default=None, help="export the net as compiler JSON")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("sweep", help="run an experiment config and emit reports")
    p.add_argument("--config", required=True, help="ExperimentConfig JSON")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("rates", help="fit log-log slopes from a result table")
    p.add_argument("--table", required=True, help="results.csv from a sweep")
    p.add_argument("--x", default="x")
    p.add_argument("--y", default="metric")
    p.add_argument("--group", default="mode,target,sigma")
    p.set_defaults(func=_cmd_rates)

    p = sub.add_parser("boundary-dim", help="box-counting dimension of a target's jump set")
    p.add_argument("--target", required=True)
    p.add_argument("--scales", type=_scales, default=tuple(range(3, 9)), help="e.g. 3:8")
    p.set_defaults(func=_cmd_boundary_dim)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UnknownTargetError, DegenerateCountsError, InsufficientDataError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
