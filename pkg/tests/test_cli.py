"""CLI surface: each subcommand drives the library end to end."""

import json
import math

import numpy as np
import pytest

from adaptree.cli import main
from adaptree.corpus import list_targets
from adaptree.harness import ResultRow, rows_to_csv
from adaptree.relu_compiler import load_network, relu_forward


def run(*argv):
    return main([str(a) for a in argv])


class TestTargets:
    def test_list_prints_every_target(self, capsys):
        assert run("targets", "--list") == 0
        out = capsys.readouterr().out
        for t in list_targets():
            assert t.name in out
        assert "predicted s" in out


class TestSeminorm:
    def test_csv_emitted(self, tmp_path, capsys):
        out = tmp_path / "curve.csv"
        code = run(
            "seminorm", "--target", "onedisc", "--theta", 1, "--s", 2,
            "--grid", "0.2,0.1,0.05", "--out", out,
        )
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "eta,tree_size,eta_m_T"
        assert len(lines) == 4
        err = capsys.readouterr().err
        assert "seminorm estimate" in err


class TestPipeline:
    def test_approximate_compile_eval(self, tmp_path, capsys):
        out_dir = tmp_path / "ap"
        code = run(
            "approximate", "--target", "onedisc", "--theta", 1,
            "--eta-grid", "0.2,0.1,0.05", "--out-dir", out_dir,
            "--emit-partition", 0.05,
        )
        assert code == 0
        partition = out_dir / "partition_onedisc_eta0.05.json"
        assert partition.exists()
        assert (out_dir / "results.csv").exists()

        net_path = tmp_path / "net.json"
        code = run(
            "compile", "--in", partition, "--eps", 0.1, "--out", net_path,
            "--target", "onedisc", "--mc-points", 1000,
        )
        assert code == 0
        assert "K=" in capsys.readouterr().out

        pts = tmp_path / "pts.csv"
        pts.write_text("0.1\n0.3\n0.7\n0.9\n")
        out_csv = tmp_path / "vals.csv"
        assert run("eval-net", "--net", net_path, "--points", pts, "--out", out_csv) == 0
        lines = out_csv.read_text().splitlines()
        assert lines[0] == "x0,y"
        assert len(lines) == 5
        # the compiled net should track sin(2 pi x) +- 1 on clear interior points
        net = load_network(str(net_path))
        for line in lines[1:]:
            x, y = (float(v) for v in line.split(","))
            truth = math.sin(2 * math.pi * x) + (1.0 if x < 0.5 else -1.0)
            assert abs(y - truth) < 0.35
            assert y == relu_forward(net, np.array([[x]]))[0]

    def test_compile_uses_stored_s_hat(self, tmp_path):
        out_dir = tmp_path / "ap"
        run(
            "approximate", "--target", "onedisc", "--eta-grid", "0.2,0.1,0.05",
            "--out-dir", out_dir, "--emit-partition", 0.1,
        )
        partition = out_dir / "partition_onedisc_eta0.1.json"
        meta = json.loads(partition.read_text())["meta"]
        assert "s_hat" in meta
        # no --s and no --target: falls back to the stored estimate
        code = run(
            "compile", "--in", partition, "--eps", 0.2,
            "--out", tmp_path / "n.json", "--mc-points", 500,
        )
        assert code == 0

    def test_eval_net_dim_mismatch(self, tmp_path, capsys):
        out_dir = tmp_path / "ap"
        run(
            "approximate", "--target", "onedisc", "--eta-grid", "0.2,0.1,0.05",
            "--out-dir", out_dir, "--emit-partition", 0.1,
        )
        run(
            "compile", "--in", out_dir / "partition_onedisc_eta0.1.json",
            "--eps", 0.2, "--out", tmp_path / "n.json",
            "--target", "onedisc", "--mc-points", 500,
        )
        pts = tmp_path / "pts2.csv"
        pts.write_text("0.1,0.2\n0.3,0.4\n")
        assert run("eval-net", "--net", tmp_path / "n.json", "--points", pts) == 2
        assert "columns" in capsys.readouterr().err


class TestTrain:
    def test_single_run_with_export(self, tmp_path, capsys):
        net_path = tmp_path / "mlp.json"
        code = run(
            "train", "--target", "onedisc", "--n", 32, "--sigma", 0.1,
            "--epochs", 30, "--n-test", 200, "--out", net_path,
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "test_mse=" in out
        net = load_network(str(net_path))
        assert net.input_dim == 1

    def test_widths_must_match_dim(self, capsys):
        code = run(
            "train", "--target", "disk2d", "--n", 16, "--epochs", 1,
            "--widths", "1,8,1", "--n-test", 50,
        )
        assert code == 2
        assert "dimension" in capsys.readouterr().err


class TestSweepAndRates:
    def test_sweep_config_round_trip(self, tmp_path, capsys):
        out_dir = tmp_path / "sw"
        cfg = {
            "mode": "train", "target": "onedisc", "n_train": [16],
            "sigmas": [0.1], "trials": 1, "epochs": 30, "n_test": 100,
            "out_dir": str(out_dir),
        }
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(cfg))
        assert run("sweep", "--config", cfg_path) == 0
        out = capsys.readouterr().out
        assert "1 rows (0 errors)" in out
        assert (out_dir / "results.csv").exists()
        assert (out_dir / "results_train_onedisc_sigma0.1.svg").exists()

    def test_rates_with_synonym_columns(self, tmp_path, capsys):
        rows = [
            ResultRow("train", "onedisc", float(n), 0.1, t, 10.0 / n, 0.0, 0)
            for n in (16, 32, 64, 128)
            for t in range(3)
        ]
        table = tmp_path / "results.csv"
        rows_to_csv(rows, str(table))
        code = run(
            "rates", "--table", table, "--x", "n_train", "--y", "test_mse",
            "--group", "sigma",
        )
        assert code == 0
        out = capsys.readouterr().out.splitlines()
        assert out[0] == "sigma\tslope\tintercept\tstderr\tn_points"
        fields = out[1].split("\t")
        assert abs(float(fields[1]) + 1.0) < 1e-9

    def test_rates_skips_unfittable_groups(self, tmp_path, capsys):
        # tree_size 0 at large eta is a legitimate observation, but its
        # log-log fit is undefined; that group must print "-" while the
        # error_sq group still gets its slope
        rows = [
            ResultRow("approximate", "onedisc", eta, 0.0, 0, 4.0 * eta, 0.0, 0)
            for eta in (0.01, 0.02, 0.04, 0.08)
        ] + [
            ResultRow("approximate-size", "onedisc", eta, 0.0, 0, size, 0.0, 0)
            for eta, size in ((0.01, 7.0), (0.02, 3.0), (0.04, 0.0), (0.08, 0.0))
        ]
        table = tmp_path / "results.csv"
        rows_to_csv(rows, str(table))
        assert run("rates", "--table", table) == 0
        out = capsys.readouterr().out.splitlines()
        fits = {line.split("\t")[0]: line.split("\t")[3] for line in out[1:]}
        assert fits["approximate-size"] == "-"
        assert abs(float(fits["approximate"]) - 1.0) < 1e-9

    def test_rates_rejects_unknown_column(self, tmp_path, capsys):
        rows = [ResultRow("m", "t", 1.0, 0.0, 0, 1.0, 0.0, 0)]
        table = tmp_path / "r.csv"
        rows_to_csv(rows, str(table))
        assert run("rates", "--table", table, "--x", "bogus") == 2
        assert "unknown x column" in capsys.readouterr().err


class TestBoundaryDim:
    def test_circle(self, capsys):
        assert run("boundary-dim", "--target", "disk2d", "--scales", "3:8") == 0
        out = capsys.readouterr().out
        d_m = float(out.splitlines()[0].split()[0].split("=")[1])
        assert abs(d_m - 1.0) < 0.15

    def test_breakpoints_give_dimension_zero(self, capsys):
        assert run("boundary-dim", "--target", "fivedisc") == 0
        out = capsys.readouterr().out
        assert out.startswith("d_M=0 ")

    def test_smooth_target_rejected(self, capsys):
        assert run("boundary-dim", "--target", "smooth1d") == 2
        assert "no discontinuity" in capsys.readouterr().err


class TestErrors:
    def test_unknown_target_exit_code(self, capsys):
        assert run("targets") == 0
        assert run("train", "--target", "nope", "--n", 8) == 2
        assert "unknown target" in capsys.readouterr().err
