"""Config-driven experiment harness: sweeps, slope fits, CSV/SVG reports.

Three sweep modes share one result schema (CSV columns
``mode,target,x,sigma,trial,metric,seconds,seed``):

- ``train``: per (n, sigma, trial), draw y = f(x) + sigma*xi, train an MLP,
  and record the test MSE against a fixed noiseless test set shared by all
  trials of the target.
- ``approximate``: per threshold eta, record the squared best-tree error
  (rows with mode ``approximate``) and the tree size (mode
  ``approximate-size``); ``x`` is eta.
- ``compile``: per accuracy eps, pick the tree whose size matches the
  eps^(-1/s) schedule, compile it, and record the nonzero count (mode
  ``compile``) and depth (mode ``compile-depth``); ``x`` is eps.  Full
  compile reports land in JSON sidecars next to the table.

Rows are keyed by (mode, target, x, sigma, trial) and appended to
``results.csv`` in the output directory as they complete, so an interrupted
sweep resumes where it stopped and converges to the same final table: every
row's seed is a pure function of the config seed and the row key, never of
execution order.  The ``seconds`` column is informational wall time and is
the one column not reproduced across runs.

Sweep points run concurrently up to ``workers`` processes (train mode; the
other modes share one scan and run inline).  ``ADAPTREE_WORKERS`` overrides
the config value.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
import time
import warnings
import zlib
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from adaptree.adaptive_approx import (
    RefinementScan,
    build_adaptive_approximant,
)
from adaptree.corpus import TargetSpec, get_target, known_rate, quadrature_for
from adaptree.measures import Measure, sample
from adaptree.relu_compiler import compile_adaptive_net
from adaptree.trainer import MlpArchitecture, TrainConfig, forward, init_mlp, train

__all__ = [
    "CSV_COLUMNS",
    "ExperimentConfig",
    "ResultRow",
    "SlopeFit",
    "SweepPointWarning",
    "generate_dataset",
    "held_out_dataset",
    "run_sweep",
    "fit_slope",
    "emit_outputs",
    "rows_to_csv",
    "rows_from_csv",
]

CSV_COLUMNS = ("mode", "target", "x", "sigma", "trial", "metric", "seconds", "seed")

_MODES = ("train", "approximate", "compile")


class SweepPointWarning(UserWarning):
    """A sweep point failed; an error row (metric = nan) was recorded."""


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class ExperimentConfig:
    """One sweep: mode, target, grids, and reproducibility knobs.

    ``n_train``/``sigmas`` drive train mode, ``eta_grid`` drives approximate
    mode (empty means the scan's default 40-point grid), ``eps_grid`` drives
    compile mode.  ``s`` overrides the predicted smoothness used for the
    compile schedule; ``None`` falls back to the target's known rate.
    """

    mode: str
    target: str
    theta: int = 1
    n_train: tuple[int, ...] = (16, 32, 64, 128, 256, 512, 1024)
    sigmas: tuple[float, ...] = (0.1,)
    trials: int = 5
    n_test: int = 10_000
    seed: int = 0
    eta_grid: tuple[float, ...] = ()
    eps_grid: tuple[float, ...] = ()
    s: float | None = None
    epochs: int = 20_000
    learning_rate: float = 1e-3
    widths: tuple[int, ...] = (1, 64, 128, 64, 1)
    max_scale: int | None = None
    mc_points: int = 20_000
    out_dir: str = "results"
    workers: int = 1

    def __post_init__(self) -> None:
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}, got {self.mode!r}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.n_test < 1:
            raise ValueError("n_test must be >= 1")
        if self.mode == "train":
            if not self.n_train or not self.sigmas:
                raise ValueError("train mode needs non-empty n_train and sigmas")
            if any(n < 1 for n in self.n_train):
                raise ValueError("n_train entries must be >= 1")
            if any(s < 0 for s in self.sigmas):
                raise ValueError("sigmas must be >= 0")
        if self.mode == "compile":
            if not self.eps_grid:
                raise ValueError("compile mode needs a non-empty eps_grid")
            if any(e <= 0 for e in self.eps_grid):
                raise ValueError("eps_grid entries must be positive")
        if any(e <= 0 for e in self.eta_grid):
            raise ValueError("eta_grid entries must be positive")

    @classmethod
    def from_jsonable(cls, obj: Mapping) -> "ExperimentConfig":
        kwargs = dict(obj)
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(kwargs) - names)
        if unknown:
            raise ValueError(f"unknown config keys: {unknown}")
        for key in ("n_train", "sigmas", "eta_grid", "eps_grid", "widths"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)

    @classmethod
    def from_json(cls, path: str) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_jsonable(json.load(fh))

    def to_jsonable(self) -> dict:
        out = dataclasses.asdict(self)
        for key in ("n_train", "sigmas", "eta_grid", "eps_grid", "widths"):
            out[key] = list(out[key])
        return out


# ---------------------------------------------------------------------------
# result rows and CSV round trip


@dataclass(frozen=True)
class ResultRow:
    """One completed sweep point; ``metric`` is nan for a failed point."""

    mode: str
    target: str
    x: float
    sigma: float
    trial: int
    metric: float
    seconds: float
    seed: int

    @property
    def key(self) -> tuple:
        return (self.mode, self.target, float(self.x), float(self.sigma), self.trial)


def _row_order(r: ResultRow) -> tuple:
    return (r.mode, r.target, r.sigma, r.x, r.trial)


def _row_record(r: ResultRow) -> list:
    return [
        r.mode,
        r.target,
        f"{r.x:.17g}",
        f"{r.sigma:.17g}",
        r.trial,
        f"{r.metric:.17g}",
        f"{r.seconds:.17g}",
        r.seed,
    ]


def rows_to_csv(rows: Iterable[ResultRow], path: str) -> None:
    """Write the pinned schema with 17-significant-digit floats (reload-exact)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in rows:
            writer.writerow(_row_record(r))


def rows_from_csv(path: str) -> list[ResultRow]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != list(CSV_COLUMNS):
            raise ValueError(f"unexpected CSV header {header!r}")
        return [
            ResultRow(m, t, float(x), float(sg), int(tr), float(me), float(se), int(sd))
            for m, t, x, sg, tr, me, se, sd in reader
        ]


def _append_row(path: str, row: ResultRow) -> None:
    fresh = not os.path.exists(path)
    with open(path, "a", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        if fresh:
            writer.writerow(CSV_COLUMNS)
        writer.writerow(_row_record(row))


# ---------------------------------------------------------------------------
# seeding and data generation


def _crc(text: str) -> int:
    return zlib.crc32(text.encode("utf-8"))


def _row_seed(cfg_seed: int, mode: str, target: str, x: float, sigma: float, trial: int) -> int:
    """A 63-bit seed that is a pure function of the row key (order-free)."""
    entropy = [
        cfg_seed,
        _crc(mode),
        _crc(target),
        _crc(f"{x:.17g}"),
        _crc(f"{sigma:.17g}"),
        trial,
    ]
    state = np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint64)[0]
    return int(state >> np.uint64(1))


def generate_dataset(
    target: TargetSpec,
    n: int,
    sigma: float,
    measure: Measure | None = None,
    seed: int | np.random.SeedSequence = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Draw (x, y): x i.i.d. from the measure, y = f(x) + sigma * xi.

    The noise is Gaussian; ``sigma=0`` returns y = f(x) exactly.  The same
    seed reproduces the dataset bit for bit.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if measure is None:
        measure = target.measure()
    rng = np.random.default_rng(seed)
    x = sample(measure, n, rng)
    y = np.asarray(target.fn(x), dtype=float)
    if sigma > 0:
        y = y + sigma * rng.standard_normal(n)
    return x, y


def _test_seed(name: str) -> int:
    return _crc(f"adaptree-test:{name}")


def held_out_dataset(target: TargetSpec, n_test: int) -> tuple[np.ndarray, np.ndarray]:
    """The fixed noiseless test set all trials of a target share."""
    return generate_dataset(target, n_test, 0.0, seed=_test_seed(target.name))


# ---------------------------------------------------------------------------
# sweep execution


def _resolve_workers(cfg: ExperimentConfig) -> int:
    env = os.environ.get("ADAPTREE_WORKERS")
    if env is not None:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"ADAPTREE_WORKERS must be an integer, got {env!r}") from None
    return max(1, cfg.workers)


def _train_metric(args: tuple) -> float:
    """Train one MLP for one sweep point and return its noiseless test MSE."""
    name, widths, epochs, lr, n, sigma, row_seed, n_test = args
    target = get_target(name)
    data_ss, init_ss = np.random.SeedSequence(row_seed).spawn(2)
    x, y = generate_dataset(target, n, sigma, seed=data_ss)
    net = init_mlp(MlpArchitecture(tuple(widths)), seed=init_ss)
    best, _ = train(net, x, y, TrainConfig(learning_rate=lr, epochs=epochs, seed=row_seed))
    x_test, y_test = held_out_dataset(target, n_test)
    pred = forward(best, x_test)
    return float(np.mean((np.asarray(pred) - y_test) ** 2))


def _train_point_safe(args: tuple) -> tuple[float, float, str | None]:
    """Never raises: (metric, seconds, error message or None)."""
    t0 = time.perf_counter()
    try:
        return _train_metric(args), time.perf_counter() - t0, None
    except Exception as exc:  # per-point failure -> error row
        return float("nan"), time.perf_counter() - t0, f"{type(exc).__name__}: {exc}"


def _sweep_train(cfg: ExperimentConfig, done: set, csv_path: str) -> list[ResultRow]:
    get_target(cfg.target)  # unknown target is a config error, not a point error
    pending = []
    for sigma in cfg.sigmas:
        for n in cfg.n_train:
            for trial in range(cfg.trials):
                key = ("train", cfg.target, float(n), float(sigma), trial)
                if key in done:
                    continue
                seed = _row_seed(cfg.seed, "train", cfg.target, float(n), float(sigma), trial)
                pending.append((n, sigma, trial, seed))

    def args_for(point):
        n, sigma, _, seed = point
        return (cfg.target, cfg.widths, cfg.epochs, cfg.learning_rate, n, sigma, seed, cfg.n_test)

    rows: list[ResultRow] = []

    def record(point, outcome):
        n, sigma, trial, seed = point
        metric, seconds, err = outcome
        if err is not None:
            warnings.warn(
                f"train point (n={n}, sigma={sigma}, trial={trial}) failed: {err}",
                SweepPointWarning,
                stacklevel=3,
            )
        row = ResultRow("train", cfg.target, float(n), float(sigma), trial, metric, seconds, seed)
        _append_row(csv_path, row)
        rows.append(row)

    workers = _resolve_workers(cfg)
    if workers > 1 and len(pending) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(_train_point_safe, args_for(p)): p for p in pending}
            for fut in as_completed(futures):
                record(futures[fut], fut.result())
    else:
        for point in pending:
            record(point, _train_point_safe(args_for(point)))
    return rows


def _sweep_approximate(cfg: ExperimentConfig, done: set, csv_path: str) -> list[ResultRow]:
    target = get_target(cfg.target)
    if cfg.eta_grid:  # known keys up front: skip the scan when nothing is pending
        keys = [
            (mode, cfg.target, float(eta), 0.0, 0)
            for eta in cfg.eta_grid
            for mode in ("approximate", "approximate-size")
        ]
        if all(k in done for k in keys):
            return []
    t0 = time.perf_counter()
    quad = quadrature_for(target, cfg.theta)
    scan = RefinementScan(target.fn, cfg.theta, target.measure(), quad, max_scale=cfg.max_scale)
    points = scan.curve(cfg.eta_grid or None)
    seconds = (time.perf_counter() - t0) / max(len(points), 1)
    rows: list[ResultRow] = []
    for p in points:
        for mode, metric in (
            ("approximate", float(p.error_sq)),
            ("approximate-size", float(p.tree_size)),
        ):
            key = (mode, cfg.target, float(p.eta), 0.0, 0)
            if key in done:
                continue
            row = ResultRow(mode, cfg.target, float(p.eta), 0.0, 0, metric, seconds, cfg.seed)
            _append_row(csv_path, row)
            rows.append(row)
    return rows


def _sweep_compile(cfg: ExperimentConfig, done: set, csv_path: str) -> list[ResultRow]:
    target = get_target(cfg.target)
    pending = [
        eps
        for eps in cfg.eps_grid
        if not all(
            (mode, cfg.target, float(eps), 0.0, 0) in done
            for mode in ("compile", "compile-depth")
        )
    ]
    if not pending:
        return []
    s = cfg.s if cfg.s is not None else known_rate(cfg.target, cfg.theta)
    quad = quadrature_for(target, cfg.theta)
    scan = RefinementScan(target.fn, cfg.theta, target.measure(), quad, max_scale=cfg.max_scale)
    menu: dict[int, float] = {}  # tree size -> coarsest eta reaching it
    for p in scan.curve():
        menu.setdefault(p.tree_size, p.eta)
    sizes = np.array(sorted(menu), dtype=float)
    rows: list[ResultRow] = []
    for eps in pending:
        t0 = time.perf_counter()
        seed = _row_seed(cfg.seed, "compile", cfg.target, float(eps), 0.0, 0)
        try:
            wanted = max(eps ** (-1.0 / s), 1.0)
            log_sizes = np.log(np.maximum(sizes, 1.0))  # size 0 = bare root
            size = int(sizes[np.argmin(np.abs(log_sizes - math.log(wanted)))])
            tree, _ = scan.truncate(menu[size])
            pp = build_adaptive_approximant(target.fn, tree, cfg.theta, target.measure(), quad)
            net, report = compile_adaptive_net(
                pp, eps, target.measure(), s=s, mc_points=cfg.mc_points, seed=seed
            )
            out_dir = os.path.dirname(csv_path)
            sidecar = os.path.join(out_dir, f"compile_{cfg.target}_eps{eps:g}.json")
            with open(sidecar, "w", encoding="utf-8") as fh:
                json.dump(report.to_jsonable(), fh, indent=1)
            metrics = {"compile": float(report.stats.K), "compile-depth": float(report.stats.L)}
        except Exception as exc:
            warnings.warn(
                f"compile point eps={eps:g} failed: {type(exc).__name__}: {exc}",
                SweepPointWarning,
                stacklevel=2,
            )
            metrics = {"compile": float("nan"), "compile-depth": float("nan")}
        seconds = time.perf_counter() - t0
        for mode, metric in metrics.items():
            key = (mode, cfg.target, float(eps), 0.0, 0)
            if key in done:
                continue
            row = ResultRow(mode, cfg.target, float(eps), 0.0, 0, metric, seconds, seed)
            _append_row(csv_path, row)
            rows.append(row)
    return rows


def run_sweep(cfg: ExperimentConfig) -> list[ResultRow]:
    """Run every pending sweep point; return the full table, canonically sorted.

    Completed rows append to ``<out_dir>/results.csv`` immediately; rows
    whose (mode, target, x, sigma, trial) key is already present are skipped,
    so re-running an interrupted sweep completes it.  Per-point failures
    record an error row (metric = nan) with a :class:`SweepPointWarning` and
    the sweep continues.
    """
    os.makedirs(cfg.out_dir, exist_ok=True)
    csv_path = os.path.join(cfg.out_dir, "results.csv")
    existing = rows_from_csv(csv_path) if os.path.exists(csv_path) else []
    done = {r.key for r in existing}
    if cfg.mode == "train":
        new = _sweep_train(cfg, done, csv_path)
    elif cfg.mode == "approximate":
        new = _sweep_approximate(cfg, done, csv_path)
    else:
        new = _sweep_compile(cfg, done, csv_path)
    return sorted(existing + new, key=_row_order)


# ---------------------------------------------------------------------------
# slope fitting


@dataclass(frozen=True)
class SlopeFit:
    """OLS fit of log(mean metric) on log(x): metric ~ e^intercept * x^slope."""

    slope: float
    intercept: float
    stderr: float
    n_points: int


def fit_slope(
    rows: Sequence[ResultRow],
    x_col: str = "x",
    y_col: str = "metric",
    group_keys: Sequence[str] = ("mode", "target", "sigma"),
) -> dict[tuple, SlopeFit]:
    """Per-group log-log OLS; trials are averaged *before* the log.

    Error rows (nan metric) are dropped.  Each group needs at least three
    distinct x values, all positive with positive mean metrics; the mean over
    trials is computed on sorted values, so the result is independent of row
    order to the last bit.
    """
    groups: dict[tuple, dict[float, list[float]]] = {}
    for r in rows:
        y = float(getattr(r, y_col))
        if math.isnan(y):
            continue
        key = tuple(getattr(r, k) for k in group_keys)
        groups.setdefault(key, {}).setdefault(float(getattr(r, x_col)), []).append(y)
    out: dict[tuple, SlopeFit] = {}
    for key in sorted(groups):
        by_x = groups[key]
        xs = sorted(by_x)
        if len(xs) < 3:
            raise ValueError(f"group {key}: need >= 3 distinct x values, got {len(xs)}")
        means = [float(np.mean(np.sort(by_x[x]))) for x in xs]
        if xs[0] <= 0 or any(m <= 0 for m in means):
            raise ValueError(f"group {key}: log-log fit needs positive x and y")
        lx = np.log(xs)
        ly = np.log(means)
        design = np.vstack([lx, np.ones(len(xs))]).T
        coef, *_ = np.linalg.lstsq(design, ly, rcond=None)
        resid = ly - design @ coef
        sxx = float(np.sum((lx - lx.mean()) ** 2))
        stderr = math.sqrt(float(resid @ resid) / (len(xs) - 2) / sxx) if len(xs) > 2 else float("nan")
        out[key] = SlopeFit(float(coef[0]), float(coef[1]), stderr, len(xs))
    return out


# ---------------------------------------------------------------------------
# report emission


def _group_for_figures(rows: Sequence[ResultRow]) -> dict[tuple, list[ResultRow]]:
    groups: dict[tuple, list[ResultRow]] = {}
    for r in rows:
        groups.setdefault((r.mode, r.target, r.sigma), []).append(r)
    return dict(sorted(groups.items()))


def _fit_or_none(rows: list[ResultRow], key: tuple) -> SlopeFit | None:
    try:
        return fit_slope(rows)[key]
    except ValueError:
        return None


_AXIS_LABELS = {
    "train": ("n train", "test MSE"),
    "approximate": ("eta", "squared error"),
    "approximate-size": ("eta", "tree size"),
    "compile": ("eps", "nonzero parameters"),
    "compile-depth": ("eps", "depth"),
}


def _emit_figure(path: str, key: tuple, rows: list[ResultRow], fit: SlopeFit | None) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    mode, target, sigma = key
    clean = [r for r in rows if not math.isnan(r.metric)]
    by_x: dict[float, list[float]] = {}
    for r in clean:
        by_x.setdefault(r.x, []).append(r.metric)
    xs = np.array(sorted(by_x))
    means = np.array([float(np.mean(np.sort(by_x[x]))) for x in xs])
    stds = np.array([float(np.std(np.sort(by_x[x]))) for x in xs])

    with plt.rc_context({"svg.hashsalt": "adaptree"}):
        fig, ax = plt.subplots(figsize=(6.0, 4.5))
        ax.scatter(
            [r.x for r in clean],
            [r.metric for r in clean],
            s=12,
            alpha=0.45,
            color="#1f77b4",
            label="trials",
        )
        lower = np.maximum(means - stds, np.min(means) * 1e-3)
        ax.fill_between(xs, lower, means + stds, alpha=0.2, color="#1f77b4", label="±1 std")
        ax.plot(xs, means, "-o", ms=4, color="#1f77b4", label="mean")
        if fit is not None:
            line = np.exp(fit.intercept) * xs**fit.slope
            ax.plot(xs, line, "--", color="#d62728", label=f"slope {fit.slope:.3f}")
        ax.set_xscale("log")
        ax.set_yscale("log")
        xlabel, ylabel = _AXIS_LABELS.get(mode, ("x", "metric"))
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.set_title(f"{mode}: {target} (sigma={sigma:g})")
        ax.legend(fontsize=8)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)


def emit_outputs(rows: Sequence[ResultRow], out_dir: str, stem: str = "results") -> list[str]:
    """Write the canonical CSV, per-group SVG figures, and a slope summary.

    Outputs are byte-stable: identical input tables produce identical files
    (rows are canonically sorted, floats printed at fixed precision, SVG ids
    salted, no timestamps embedded).  Returns the written paths.
    """
    rows = sorted(rows, key=_row_order)
    if not rows:
        raise ValueError("empty result table")
    os.makedirs(out_dir, exist_ok=True)
    paths: list[str] = []

    csv_path = os.path.join(out_dir, f"{stem}.csv")
    rows_to_csv(rows, csv_path)
    paths.append(csv_path)

    groups = _group_for_figures(rows)
    fits = {key: _fit_or_none(grp, key) for key, grp in groups.items()}

    summary_path = os.path.join(out_dir, f"{stem}_summary.txt")
    n_err = sum(1 for r in rows if math.isnan(r.metric))
    with open(summary_path, "w", encoding="utf-8") as fh:
        fh.write(f"rows\t{len(rows)}\nerror_rows\t{n_err}\n\n")
        fh.write("mode\ttarget\tsigma\tslope\tintercept\tstderr\tn_points\n")
        for key, fit in fits.items():
            mode, target, sigma = key
            if fit is None:
                fh.write(f"{mode}\t{target}\t{sigma:.17g}\t-\t-\t-\t-\n")
            else:
                fh.write(
                    f"{mode}\t{target}\t{sigma:.17g}\t{fit.slope:.6g}\t"
                    f"{fit.intercept:.6g}\t{fit.stderr:.6g}\t{fit.n_points}\n"
                )
    paths.append(summary_path)

    for key, grp in groups.items():
        mode, target, sigma = key
        if all(math.isnan(r.metric) for r in grp):
            continue
        fig_path = os.path.join(out_dir, f"{stem}_{mode}_{target}_sigma{sigma:g}.svg")
        _emit_figure(fig_path, key, grp, fits[key])
        paths.append(fig_path)
    return paths
