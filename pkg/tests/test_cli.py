"""End-to-end CLI behaviour: commands, config precedence, error contract."""

from __future__ import annotations

import os
import subprocess
import sys

import numpy as np
import pytest

import tontine.cli as cli
from tontine.cli import DEFAULTS, VALID_KEYS, main
from tontine.mortality import GompertzMakehamParams

from helpers import synthetic_life_table_csv

BENCH = GompertzMakehamParams(a1=0.00584, a2=0.12150, a3=0.0024117)

KAPPA_GAMMA_M3_SCALED_TRIMMED = 0.15410381739109563


def run_cli(argv, capsys):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def read_csv(path):
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().strip().splitlines()
    header = lines[0].split(",")
    rows = [line.split(",") for line in lines[1:]]
    return header, rows


class TestFit:
    @pytest.mark.parametrize("header", ["age,survival", "age,qx"])
    def test_round_trip_from_synthetic_table(self, tmp_path, capsys, header):
        table = tmp_path / "table.csv"
        synthetic_life_table_csv(table, BENCH, header=header)
        out = tmp_path / "fit.csv"
        code, _, err = run_cli(
            ["fit", "--table", str(table), "--out", str(out)], capsys
        )
        assert code == 0 and err == ""
        cols, rows = read_csv(out)
        assert cols == ["a1", "a2", "a3", "objective"]
        a1, a2, a3, objective = (float(v) for v in rows[0])
        assert a1 == pytest.approx(BENCH.a1, rel=1e-4)
        assert a2 == pytest.approx(BENCH.a2, rel=1e-4)
        assert a3 == pytest.approx(BENCH.a3, rel=1e-4)
        assert objective < 1e-10

    def test_missing_table_is_config_error(self, tmp_path, capsys):
        code, _, err = run_cli(["fit", "--out", str(tmp_path / "f.csv")], capsys)
        assert code == 2
        assert err.startswith("error: CONFIG:")
        assert not (tmp_path / "f.csv").exists()


class TestCalibrate:
    def test_writes_kappa_residual_feasible(self, tmp_path, capsys):
        out = tmp_path / "cal.csv"
        code, _, err = run_cli(
            ["calibrate", "--gamma", "-3", "--out", str(out)], capsys
        )
        assert code == 0 and err == ""
        cols, rows = read_csv(out)
        assert cols == ["kappa", "residual", "feasible"]
        kappa, residual, feasible = rows[0]
        assert float(kappa) == pytest.approx(KAPPA_GAMMA_M3_SCALED_TRIMMED, rel=1e-9)
        assert float(residual) < 1e-10
        assert feasible == "true"

    def test_infeasible_gamma_reports_cleanly(self, tmp_path, capsys):
        out = tmp_path / "cal.csv"
        code, _, err = run_cli(
            ["calibrate", "--gamma", "0.5", "--out", str(out)], capsys
        )
        assert code == 0 and err == ""
        _, rows = read_csv(out)
        kappa, _, feasible = rows[0]
        assert feasible == "false"
        assert np.isnan(float(kappa))

    def test_unscaled_variant_rejected(self, tmp_path, capsys):
        code, _, err = run_cli(
            ["calibrate", "--variant", "power", "--out", str(tmp_path / "c.csv")],
            capsys,
        )
        assert code == 2
        assert err.startswith("error: CONFIG:")


class TestSchedule:
    def test_no_bequest_allocates_everything_to_pool(self, tmp_path, capsys):
        out = tmp_path / "schedule.csv"
        code, _, err = run_cli(
            ["schedule", "--variant", "none", "--grid-step", "1/4",
             "--out", str(out)],
            capsys,
        )
        assert code == 0 and err == ""
        cols, rows = read_csv(out)
        assert cols == ["t", "age", "pi_star", "c_star", "alpha_star", "D"]
        alpha = np.array([float(r[4]) for r in rows])
        assert np.all(alpha == 1.0)
        assert float(rows[0][1]) == 65.0

    def test_calibrated_schedule_starts_at_zero_allocation(self, tmp_path, capsys):
        out = tmp_path / "schedule.csv"
        code, _, err = run_cli(
            ["schedule", "--gamma", "-3", "--grid-step", "1/4", "--out", str(out)],
            capsys,
        )
        assert code == 0 and err == ""
        _, rows = read_csv(out)
        assert abs(float(rows[0][4])) < 1e-8


class TestIncome:
    def test_curve_layout(self, tmp_path, capsys):
        out = tmp_path / "income.csv"
        code, _, err = run_cli(["income", "--gamma", "-3", "--out", str(out)], capsys)
        assert code == 0 and err == ""
        cols, rows = read_csv(out)
        assert cols == ["t", "age", "expected_income", "expected_bequest_fraction"]
        assert len(rows) == 200  # quarterly grid over the 50-year pool horizon
        assert float(rows[0][2]) > 0.0


class TestSimulate:
    ARGS = [
        "simulate", "--gamma", "-3", "--paths", "500", "--sim-step", "1/12",
        "--sim-horizon", "5", "--grid-step", "1/12",
    ]

    def test_summary_layout(self, tmp_path, capsys):
        out = tmp_path / "sim.csv"
        code, _, err = run_cli(self.ARGS + ["--out", str(out)], capsys)
        assert code == 0 and err == ""
        cols, rows = read_csv(out)
        assert cols == ["t", "mean_income", "se_income", "mean_Y", "se_Y",
                        "mean_zetaX", "se_zetaX"]
        assert len(rows) >= 2

    def test_same_seed_is_byte_identical(self, tmp_path, capsys):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        run_cli(self.ARGS + ["--out", str(a)], capsys)
        run_cli(self.ARGS + ["--out", str(b)], capsys)
        assert a.read_bytes() == b.read_bytes()

    def test_seed_changes_output(self, tmp_path, capsys):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        run_cli(self.ARGS + ["--out", str(a)], capsys)
        run_cli(self.ARGS + ["--seed", "99", "--out", str(b)], capsys)
        assert a.read_bytes() != b.read_bytes()


class TestConfigFile:
    def test_flags_override_config_file(self, tmp_path, capsys):
        config = tmp_path / "run.cfg"
        config.write_text("gamma = -5\nvariant = scaled_trimmed\n# comment\n")
        out_flag = tmp_path / "flag.csv"
        code, _, _ = run_cli(
            ["calibrate", "--config", str(config), "--gamma", "-3",
             "--out", str(out_flag)],
            capsys,
        )
        assert code == 0
        _, rows = read_csv(out_flag)
        assert float(rows[0][0]) == pytest.approx(
            KAPPA_GAMMA_M3_SCALED_TRIMMED, rel=1e-9
        )

    def test_config_value_used_when_no_flag(self, tmp_path, capsys):
        config = tmp_path / "run.cfg"
        config.write_text("gamma = -3\n")
        out = tmp_path / "cal.csv"
        code, _, _ = run_cli(["calibrate", "--config", str(config), "--out", str(out)], capsys)
        assert code == 0
        _, rows = read_csv(out)
        assert float(rows[0][0]) == pytest.approx(
            KAPPA_GAMMA_M3_SCALED_TRIMMED, rel=1e-9
        )

    def test_unknown_key_lists_valid_keys(self, tmp_path, capsys):
        config = tmp_path / "run.cfg"
        config.write_text("gama = -3\n")
        code, _, err = run_cli(
            ["calibrate", "--config", str(config), "--out", str(tmp_path / "c.csv")],
            capsys,
        )
        assert code == 2
        assert err.startswith("error: CONFIG:")
        assert "valid keys" in err
        for key in VALID_KEYS:
            assert key in err

    def test_malformed_line_rejected(self, tmp_path, capsys):
        config = tmp_path / "run.cfg"
        config.write_text("gamma -3\n")
        code, _, err = run_cli(["calibrate", "--config", str(config)], capsys)
        assert code == 2
        assert "key=value" in err


class TestErrorContract:
    def test_error_line_shape(self, tmp_path, capsys):
        code, _, err = run_cli(
            ["income", "--gamma", "abc", "--out", str(tmp_path / "i.csv")], capsys
        )
        assert code == 2
        assert err.startswith("error: CONFIG:")
        assert err.count("\n") == 1  # single line

    def test_bad_sigma_rejected(self, tmp_path, capsys):
        code, _, err = run_cli(
            ["income", "--sigma", "0", "--out", str(tmp_path / "i.csv")], capsys
        )
        assert code == 2
        assert err.startswith("error: CONFIG:")

    def test_unknown_command_is_usage_error(self, capsys):
        code, _, err = run_cli(["frobnicate"], capsys)
        assert code == 2
        assert err.startswith("error: USAGE:")

    def test_unexpected_exception_rolls_back_outputs(
        self, tmp_path, capsys, monkeypatch
    ):
        out = tmp_path / "income.csv"

        def boom(*args, **kwargs):
            raise RuntimeError("induced failure")

        monkeypatch.setattr(cli, "income_curve", boom)
        code, _, err = run_cli(["income", "--out", str(out)], capsys)
        assert code == 2
        assert err.startswith("error: INTERNAL: RuntimeError")
        assert not out.exists()

    def test_figures_failure_removes_written_files(
        self, tmp_path, capsys, monkeypatch
    ):
        # figures writes fig1..fig3 before fig4; a late failure must remove all
        real = cli.income_curve

        def boom(*args, **kwargs):
            raise RuntimeError("induced failure")

        monkeypatch.setattr(cli, "income_curve", boom)
        code, _, err = run_cli(["figures", "--out", str(tmp_path)], capsys)
        assert code == 2
        assert err.startswith("error: INTERNAL:")
        assert os.listdir(tmp_path) == []
        monkeypatch.setattr(cli, "income_curve", real)


class TestFigures:
    def test_writes_all_four_tables(self, tmp_path, capsys):
        code, _, err = run_cli(["figures", "--out", str(tmp_path)], capsys)
        assert code == 0 and err == ""
        names = sorted(os.listdir(tmp_path))
        assert names == ["fig1.csv", "fig2.csv", "fig3.csv", "fig4.csv"]

        cols, rows = read_csv(tmp_path / "fig1.csv")
        assert cols[:2] == ["t", "age"]
        assert "alpha_-3" in cols
        first = dict(zip(cols, (float(v) for v in rows[0])))
        assert first["alpha_-3"] < 0.0  # unscaled power starts with shorting

        cols3, rows3 = read_csv(tmp_path / "fig3.csv")
        first3 = dict(zip(cols3, (float(v) for v in rows3[0])))
        for g in ("-1", "-3", "-5", "-8", "-11"):
            assert abs(first3[f"alpha_{g}"]) < 1e-8  # calibrated start

        cols4, _ = read_csv(tmp_path / "fig4.csv")
        assert "income_-3" in cols4

    def test_missing_directory_is_io_error(self, tmp_path, capsys):
        code, _, err = run_cli(["figures", "--out", str(tmp_path / "nope")], capsys)
        assert code == 2
        assert err.startswith("error: IO:")


class TestEntryPoint:
    def test_module_invocation(self, tmp_path):
        env = dict(os.environ)
        env["PYTHONPATH"] = os.pathsep.join(
            [os.path.join(os.path.dirname(__file__), os.pardir, "src"),
             env.get("PYTHONPATH", "")]
        )
        out = tmp_path / "cal.csv"
        proc = subprocess.run(
            [sys.executable, "-m", "tontine", "calibrate", "--gamma", "-3",
             "--out", str(out)],
            capture_output=True, text=True, env=env, timeout=120,
        )
        assert proc.returncode == 0, proc.stderr
        assert out.exists()


class TestDefaults:
    def test_default_keys_are_sorted_and_complete(self):
        assert VALID_KEYS == tuple(sorted(DEFAULTS))
        assert set(cli._FLAG_TO_KEY.values()) <= set(DEFAULTS)
