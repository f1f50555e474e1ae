"""Command-line interface: config handling, artifacts, exit codes."""

import numpy as np
import pytest

from abpflow import cli
from abpflow.errors import ConfigError
from abpflow.grid import GridSpec, read_snapshot, write_snapshot


def run(tmp_path, *argv, sub="run-primal"):
    out = tmp_path / "out"
    return cli.main([sub, "--out", str(out), *argv]), out


class TestConfigFile:
    def test_parse_key_value_and_comments(self, tmp_path):
        cfgfile = tmp_path / "run.cfg"
        cfgfile.write_text(
            "# a comment\n"
            "pe = 0.5   # trailing comment\n"
            "\n"
            "t_final = 0.01\n")
        parsed = cli.parse_config_file(cfgfile)
        assert parsed == {"pe": "0.5", "t_final": "0.01"}

    def test_malformed_line_rejected(self, tmp_path):
        cfgfile = tmp_path / "bad.cfg"
        cfgfile.write_text("just some words\n")
        with pytest.raises(ConfigError):
            cli.parse_config_file(cfgfile)

    def test_unknown_key_exit_1_with_name(self, tmp_path, capsys):
        cfgfile = tmp_path / "bad.cfg"
        cfgfile.write_text("pe = 0.5\nbanana = 7\n")
        code = cli.main(["run-primal", "--out", str(tmp_path / "o"),
                         "--config", str(cfgfile)])
        assert code == 1
        assert "banana" in capsys.readouterr().err

    def test_flag_overrides_config(self, tmp_path):
        cfgfile = tmp_path / "run.cfg"
        cfgfile.write_text("t_final = 0.5\ndt = 0.01\ngrid = 8,8,8\n")
        code, out = run(tmp_path, "--config", str(cfgfile),
                        "--t-final", "0.02")
        assert code == 0
        resolved = (out / "resolved_config.txt").read_text()
        assert "t_final = 0.02" in resolved
        assert "format_version = 1" in resolved


class TestRunPrimal:
    def test_artifacts_written(self, tmp_path):
        code, out = run(tmp_path, "--grid", "8,8,8", "--t-final", "0.02",
                        "--dt", "0.01")
        assert code == 0
        for name in ("resolved_config.txt", "diagnostics.csv", "ledger.csv",
                     "snapshot_times.csv", "snapshot_0000.abpf",
                     "time_series.png", "bounds.png", "rho_final.png"):
            assert (out / name).exists(), name

    def test_deterministic_bytes(self, tmp_path):
        argv = ("--grid", "8,8,8", "--t-final", "0.02", "--dt", "0.005",
                "--pe", "0.5")
        _, out_a = run(tmp_path / "a", *argv)
        _, out_b = run(tmp_path / "b", *argv)
        for name in ("diagnostics.csv", "snapshot_0000.abpf",
                     "snapshot_0001.abpf"):
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()

    def test_init_snapshot_roundtrip(self, tmp_path):
        grid = GridSpec(8, 8, 8)
        f0 = np.full(grid.shape, 0.03)
        snap = tmp_path / "f0.abpf"
        write_snapshot(snap, grid, f0)
        code, out = run(tmp_path, "--grid", "8,8,8", "--t-final", "0.01",
                        "--dt", "0.01", "--init", str(snap))
        assert code == 0
        # the constant is stationary, so the terminal snapshot equals f0
        _, _, _, data = read_snapshot(out / "snapshot_0001.abpf")
        assert np.max(np.abs(data - f0)) <= 1e-12

    def test_init_grid_mismatch_exit_1(self, tmp_path):
        grid = GridSpec(8, 8, 8)
        snap = tmp_path / "f0.abpf"
        write_snapshot(snap, grid, np.full(grid.shape, 0.03))
        code, _ = run(tmp_path, "--grid", "16,16,16", "--t-final", "0.01",
                      "--dt", "0.01", "--init", str(snap))
        assert code == 1

    def test_blowup_exit_2(self, tmp_path):
        grid = GridSpec(16, 16, 16)
        snap = tmp_path / "f0.abpf"
        X, Y, T = grid.meshgrid()
        f0 = 4e7 * (1.0 + 0.2 * np.cos(X) * np.cos(T) + 0.1 * np.sin(Y + T))
        write_snapshot(snap, grid, f0)
        code, _ = run(tmp_path, "--grid", "16,16,16", "--t-final", "1.0",
                      "--dt", "0.1", "--init", str(snap))
        assert code == 2


class TestRunDual:
    def test_artifacts_and_exit_0(self, tmp_path):
        code, out = run(tmp_path, "--grid", "12,12,12", "--modes-k", "2",
                        "--t-final", "0.01", "--epsilon", "0.1",
                        sub="run-dual")
        assert code == 0
        assert (out / "diagnostics.csv").exists()
        assert (out / "ledger.csv").exists()

    def test_epsilon_zero_exit_1(self, tmp_path):
        code, _ = run(tmp_path, "--grid", "12,12,12", "--modes-k", "2",
                      "--t-final", "0.01", "--epsilon", "0", sub="run-dual")
        assert code == 1

    def test_deterministic_bytes(self, tmp_path):
        argv = ("--grid", "12,12,12", "--modes-k", "2", "--t-final", "0.01",
                "--epsilon", "0.1", "--pe", "0.5")
        _, out_a = run(tmp_path / "a", *argv, sub="run-dual")
        _, out_b = run(tmp_path / "b", *argv, sub="run-dual")
        assert (out_a / "diagnostics.csv").read_bytes() == \
            (out_b / "diagnostics.csv").read_bytes()


class TestOtherSubcommands:
    def test_mollify(self, tmp_path):
        code, out = run(tmp_path, "--epsilon", "0.1", "--grid", "8,8,8",
                        sub="mollify")
        assert code == 0
        lines = (out / "budget.csv").read_text().splitlines()
        assert len(lines) == 2  # header plus exactly one data line
        assert (out / "regularized.abpf").exists()

    def test_mollify_requires_epsilon(self, tmp_path):
        code, _ = run(tmp_path, "--grid", "8,8,8", sub="mollify")
        assert code == 1

    def test_rho_drift(self, tmp_path):
        code, out = run(tmp_path, "--grid", "8,8", "--t-final", "0.05",
                        "--dt", "0.01", sub="rho-drift")
        assert code == 0
        lines = (out / "rho_drift.csv").read_text().splitlines()
        assert lines[0] == "t,mass,min_rho,max_rho"
        masses = [float(l.split(",")[1]) for l in lines[1:]]
        assert max(masses) - min(masses) <= 1e-12 * abs(masses[0])

    def test_stationary_scan(self, tmp_path):
        code, out = run(tmp_path, "--f-inf", "0.0397887357729738",
                        "--modes-k", "1", "--grid", "12,12,12",
                        "--t-final", "0.2", "--dt", "0.004",
                        "--measure-modes", "0,0,1", sub="stationary-scan")
        assert code == 0
        lines = (out / "mode_rates.csv").read_text().splitlines()
        assert lines[0] == "n1,n2,n3,re_rate,im_rate,stable,measured_rate"
        rec = {tuple(l.split(",")[:3]): l.split(",") for l in lines[1:]}
        row = rec[("0", "0", "1")]
        assert float(row[3]) == pytest.approx(-1.0)
        assert float(row[6]) == pytest.approx(-1.0, rel=0.05)

    def test_fixed_point(self, tmp_path):
        code, out = run(tmp_path, "--f-inf", "0.0397887357729738",
                        "--grid", "12,12,12", "--t-final", "0.5",
                        "--nt", "30", "--maxit", "10", sub="fixed-point")
        assert code == 0
        assert "converged: True" in (out / "summary.txt").read_text()
        assert (out / "fixed_point.csv").exists()

    def test_verify_small_subset_runs(self, tmp_path, monkeypatch):
        # stub the heavy suite: the CLI contract is exit code and CSV shape
        from abpflow.verify import CriterionResult

        def fake_run_all(size):
            return [CriterionResult(1, "stub", True, "ok", 0.0)]

        monkeypatch.setattr(cli, "run_all", fake_run_all)
        code, out = run(tmp_path, "--size", "small", sub="verify")
        assert code == 0
        assert "index,name,passed,detail,elapsed_s" in \
            (out / "verify.csv").read_text()

    def test_verify_failure_exit_3(self, tmp_path, monkeypatch):
        from abpflow.verify import CriterionResult

        monkeypatch.setattr(cli, "run_all", lambda size: [
            CriterionResult(1, "stub", False, "bad", 0.0)])
        code, _ = run(tmp_path, sub="verify")
        assert code == 3

    def test_sweep(self, tmp_path):
        code, out = run(tmp_path, "--grid", "12,12,12", "--epsilons",
                        "0.1,0.05", "--modes-k-list", "2", "--t-final",
                        "0.005", sub="sweep")
        assert code == 0
        text = (out / "pairwise_l2.csv").read_text()
        assert text.splitlines()[0] == "eps_a,k_a,eps_b,k_b,l2_distance"
        assert len(text.splitlines()) == 2  # one pair
        assert (out / "eps0.1_K2" / "terminal.abpf").exists()
        assert (out / "sweep.png").exists()


class TestThreadCap:
    def test_integer_cap_accepted(self, tmp_path, monkeypatch):
        monkeypatch.setenv("ABPF_THREADS", "2")
        code, _ = run(tmp_path, "--grid", "8,8,8", "--t-final", "0.01",
                      "--dt", "0.01")
        assert code == 0

    def test_non_integer_cap_exit_1(self, tmp_path, monkeypatch):
        monkeypatch.setenv("ABPF_THREADS", "lots")
        code, _ = run(tmp_path, "--grid", "8,8,8", "--t-final", "0.01",
                      "--dt", "0.01")
        assert code == 1
