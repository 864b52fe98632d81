"""Command-line contract: subcommands, outputs, and exit codes."""

import json
import os

import pytest

from conftest import make_scenario
from uavmec.cli import main


@pytest.fixture()
def scenario_file(tmp_path):
    sc = make_scenario(
        [(2.0, 0.0), (8.0, 0.0)],
        [1.0, 1.5],
        noise=1e-12,
        slots=4,
        horizon=2.0,
        start=(0.0, 0.0),
        end=(10.0, 0.0),
    )
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(sc.to_dict()))
    return str(path)


class TestRun:
    def test_partial_run_writes_report_and_exits_zero(self, tmp_path, scenario_file, capsys):
        out = str(tmp_path / "out")
        code = main(["run", "--scenario", scenario_file, "--out", out])
        assert code == 0
        captured = capsys.readouterr()
        assert "objective [bits]" in captured.out
        assert "converged" in captured.out
        doc = json.load(open(os.path.join(out, "report.json")))
        assert doc["converged"] is True
        assert doc["objective_bits"] > 0.0
        assert doc["modes"] is None
        lines = open(os.path.join(out, "trajectory.csv")).read().splitlines()
        assert lines[0] == "iter,slot,x,y"
        assert len(lines) == 1 + 5

    def test_binary_run_never_beats_partial(self, tmp_path, scenario_file, capsys):
        out_p = str(tmp_path / "p")
        out_b = str(tmp_path / "b")
        assert main(["run", "--scenario", scenario_file, "--out", out_p]) == 0
        assert main(
            ["run", "--scenario", scenario_file, "--mode", "binary", "--out", out_b]
        ) == 0
        partial = json.load(open(os.path.join(out_p, "report.json")))
        binary = json.load(open(os.path.join(out_b, "report.json")))
        assert binary["objective_bits"] <= partial["objective_bits"] * (1 + 1e-9)
        assert binary["modes"] is not None
        assert "user modes" in capsys.readouterr().out

    def test_missing_scenario_exits_one_without_outputs(self, tmp_path, capsys):
        out = str(tmp_path / "never")
        code = main(["run", "--scenario", str(tmp_path / "nope.json"), "--out", out])
        assert code == 1
        assert "not found" in capsys.readouterr().err
        assert not os.path.exists(out)

    def test_invalid_override_exits_one(self, tmp_path, scenario_file, capsys):
        code = main(
            ["run", "--scenario", scenario_file, "--p0", "-3", "--out", str(tmp_path)]
        )
        assert code == 1
        assert "tx_power" in capsys.readouterr().err

    def test_cap_hit_exits_two_with_outputs(self, tmp_path, scenario_file, capsys):
        out = str(tmp_path / "capped")
        code = main(
            ["run", "--scenario", scenario_file, "--max-outer", "1", "--out", out]
        )
        assert code == 2
        assert os.path.exists(os.path.join(out, "report.json"))
        assert "iteration cap" in capsys.readouterr().out

    def test_emit_svg_renders_figures(self, tmp_path, scenario_file, capsys):
        out = str(tmp_path / "figs")
        code = main(["run", "--scenario", scenario_file, "--out", out, "--emit-svg"])
        assert code == 0
        assert os.path.getsize(os.path.join(out, "trajectory.svg")) > 0
        assert os.path.getsize(os.path.join(out, "convergence.svg")) > 0


class TestSweepCommand:
    def test_sweep_writes_rows(self, tmp_path, scenario_file, capsys):
        out = str(tmp_path / "s")
        code = main(
            [
                "sweep",
                "--scenario",
                scenario_file,
                "--variable",
                "uav_power",
                "--values",
                "0.1,0.2",
                "--schemes",
                "local_only",
                "--out",
                out,
            ]
        )
        assert code == 0
        lines = open(os.path.join(out, "sweep.csv")).read().splitlines()
        assert len(lines) == 1 + 2
        assert lines[0].startswith("scheme,variable,value,objective_bits")

    def test_empty_values_exit_one(self, tmp_path, scenario_file, capsys):
        code = main(
            [
                "sweep",
                "--scenario",
                scenario_file,
                "--variable",
                "uav_power",
                "--values",
                "",
                "--out",
                str(tmp_path),
            ]
        )
        assert code == 1

    def test_usage_error_exits_one(self, capsys):
        assert main(["sweep", "--variable", "gravity", "--values", "1"]) == 1
        assert main(["frobnicate"]) == 1
        assert main(["--help"]) == 0


class TestCompareCommand:
    def test_single_cell(self, tmp_path, scenario_file, capsys):
        out = str(tmp_path / "c")
        code = main(
            [
                "compare",
                "--scenario",
                scenario_file,
                "--schemes",
                "local_only",
                "--trajectories",
                "straight_line",
                "--out",
                out,
            ]
        )
        assert code == 0
        lines = open(os.path.join(out, "compare.csv")).read().splitlines()
        assert len(lines) == 2
        assert lines[1].startswith("local_only/straight_line,")

    def test_failed_cell_exits_nonzero_but_writes_all_rows(
        self, tmp_path, scenario_file, capsys
    ):
        doc = json.load(open(scenario_file))
        doc["uav"]["max_speed"] = 7.0  # semicircle needs ~7.85 m/s
        slow = tmp_path / "slow.json"
        slow.write_text(json.dumps(doc))
        out = str(tmp_path / "cf")
        code = main(
            [
                "compare",
                "--scenario",
                str(slow),
                "--schemes",
                "local_only",
                "--trajectories",
                "straight_line,semicircle",
                "--out",
                out,
            ]
        )
        assert code == 1
        lines = open(os.path.join(out, "compare.csv")).read().splitlines()
        assert len(lines) == 3
        assert "failed" in capsys.readouterr().err


class TestOracleCheck:
    def test_toy_suite_passes(self, capsys):
        code = main(["oracle-check", "--num-users", "1"])
        assert code == 0
        out = capsys.readouterr().out
        assert "PASS allocation-gap" in out
        assert "PASS partition-match" in out
        assert "FAIL" not in out

    def test_zero_tolerance_fails(self, capsys):
        code = main(["oracle-check", "--num-users", "1", "--tol", "0"])
        assert code == 1
        assert "FAIL" in capsys.readouterr().out

    def test_budget_guards(self, capsys):
        assert main(["oracle-check", "--num-users", "5"]) == 1
        assert "budget" in capsys.readouterr().err
        assert main(["oracle-check", "--num-users", "1", "--slots", "4"]) == 1
