"""Baselines, sweeps, CSV emission, and figure rendering."""

import dataclasses
import math

import numpy as np
import pytest

from conftest import make_scenario
from uavmec.channel import Trajectory, straight_line_trajectory
from uavmec.drivers import algorithm1
from uavmec.experiments import (
    ExperimentResult,
    InfeasibleBaselineError,
    baseline_mode,
    baseline_trajectory,
    circle_users,
    compare_grid,
    emit_csv,
    emit_trajectory_csv,
    read_results_csv,
    semicircle_trajectory,
    sweep,
)
from uavmec.scenario import default_paper_scenario


def small_active_scenario():
    return make_scenario(
        [(2.0, 0.0), (8.0, 0.0)],
        [1.0, 1.5],
        noise=1e-12,
        slots=4,
        horizon=2.0,
        start=(0.0, 0.0),
        end=(10.0, 0.0),
    )


class TestSemicircle:
    def test_reference_geometry(self):
        sc = default_paper_scenario()
        traj = semicircle_trajectory(sc)
        traj.validate_for(sc)
        steps = traj.steps()
        # 50 equal chords of a radius-5 half circle
        assert float(steps.max()) == pytest.approx(10.0 * math.sin(math.pi / 100.0), rel=1e-14)
        assert np.allclose(steps, steps[0], rtol=1e-12)
        assert float(steps.max()) <= sc.step_budget()
        assert np.array_equal(traj.waypoints[0], [0.0, 0.0])
        assert np.array_equal(traj.waypoints[-1], [10.0, 0.0])
        assert traj.waypoints[25] == pytest.approx([5.0, 5.0], abs=1e-12)
        assert np.all(traj.waypoints[1:-1, 1] > 0.0)

    def test_too_slow_for_the_arc(self):
        sc = default_paper_scenario()
        slow = dataclasses.replace(sc, uav=dataclasses.replace(sc.uav, max_speed=7.0))
        with pytest.raises(InfeasibleBaselineError, match="m/s"):
            semicircle_trajectory(slow)

    def test_degenerates_to_hovering(self):
        sc = make_scenario([(1.0, 1.0)], slots=3, start=(3.0, 2.0), end=(3.0, 2.0))
        traj = semicircle_trajectory(sc)
        assert np.array_equal(traj.waypoints, np.tile([3.0, 2.0], (4, 1)))

    def test_dispatch(self):
        sc = default_paper_scenario()
        assert np.array_equal(
            baseline_trajectory("straight_line", sc).waypoints,
            straight_line_trajectory(sc).waypoints,
        )
        assert np.array_equal(
            baseline_trajectory("semicircle", sc).waypoints,
            semicircle_trajectory(sc).waypoints,
        )
        with pytest.raises(ValueError, match="unknown"):
            baseline_trajectory("spiral", sc)


class TestCircleUsers:
    def test_four_users_sit_on_the_reference_corners(self):
        got = [u.position for u in circle_users(4)]
        want = [(10.0, 10.0), (0.0, 10.0), (0.0, 0.0), (10.0, 0.0)]
        for (gx, gy), (wx, wy) in zip(got, want):
            assert gx == pytest.approx(wx, abs=1e-12)
            assert gy == pytest.approx(wy, abs=1e-12)
        assert all(u.weight == 1.0 for u in circle_users(4))

    def test_count_validation(self):
        with pytest.raises(ValueError):
            circle_users(0)
        assert len(circle_users(7)) == 7


class TestBaselineMode:
    def test_pins_and_dispatch(self):
        sc = small_active_scenario()
        local = baseline_mode("local_only", sc)
        assert np.all(local.allocation.energy_product == 0.0)
        offload = baseline_mode("offload_only", sc)
        assert np.all(offload.allocation.cpu_freq == 0.0)
        with pytest.raises(ValueError, match="unknown"):
            baseline_mode("hybrid", sc)

    def test_unpowered_local_mode_scores_zero(self):
        sc = small_active_scenario().with_uav_power(0.0)
        assert baseline_mode("local_only", sc).objective_bits == 0.0


class TestSweep:
    def test_rows_in_request_order(self):
        sc = small_active_scenario()
        rows = sweep("uav_power", [0.1, 0.2], ["local_only", "partial"], sc)
        assert [(r.scheme, r.value) for r in rows] == [
            ("local_only", 0.1),
            ("local_only", 0.2),
            ("partial", 0.1),
            ("partial", 0.2),
        ]
        assert all(r.error is None for r in rows)
        assert all(r.variable == "uav_power" for r in rows)
        assert all(len(r.user_bits) == 2 for r in rows)
        assert all(r.wall_seconds > 0.0 for r in rows)

    def test_num_users_rebuilds_the_layout(self):
        sc = default_paper_scenario().with_slots(4)
        rows = sweep("num_users", [1, 2], ["local_only"], sc)
        assert [len(r.user_bits) for r in rows] == [1, 2]
        assert rows[0].fingerprint != rows[1].fingerprint

    def test_empty_schemes_give_empty_result(self):
        assert sweep("uav_power", [0.1], [], small_active_scenario()) == []

    def test_bad_names_rejected(self):
        sc = small_active_scenario()
        with pytest.raises(ValueError, match="variable"):
            sweep("altitude", [10.0], ["partial"], sc)
        with pytest.raises(ValueError, match="scheme"):
            sweep("uav_power", [0.1], ["best_effort"], sc)

    def test_failures_recorded_per_row(self):
        sc = small_active_scenario()
        rows = sweep("uav_power", [-1.0, 0.1], ["local_only"], sc)
        assert rows[0].error is not None and "tx_power" in rows[0].error
        assert math.isnan(rows[0].objective_bits)
        assert rows[1].error is None and rows[1].objective_bits > 0.0

    def test_worker_pool_matches_serial(self):
        sc = small_active_scenario()
        serial = sweep("uav_power", [0.1, 0.2], ["local_only"], sc)
        parallel = sweep("uav_power", [0.1, 0.2], ["local_only"], sc, workers=2)
        for a, b in zip(serial, parallel):
            assert a.scheme == b.scheme and a.value == b.value
            assert a.objective_bits == b.objective_bits
            assert a.user_bits == b.user_bits


class TestCompareGrid:
    def test_cell_labels_and_counts(self):
        sc = small_active_scenario()
        rows = compare_grid(
            sc, schemes=["local_only"], trajectories=["straight_line"]
        )
        assert len(rows) == 1
        assert rows[0].scheme == "local_only/straight_line"
        assert rows[0].error is None

    def test_infeasible_baseline_flagged_without_stopping(self):
        sc = small_active_scenario()
        slow = dataclasses.replace(sc, uav=dataclasses.replace(sc.uav, max_speed=7.0))
        rows = compare_grid(
            slow, schemes=["local_only"], trajectories=["straight_line", "semicircle"]
        )
        assert rows[0].error is None and rows[0].objective_bits > 0.0
        assert rows[1].error is not None and "semicircle" in rows[1].error

    def test_optimized_cells_dominate_fixed_path_cells(self):
        sc = small_active_scenario()
        rows = compare_grid(
            sc, schemes=["partial"], trajectories=["optimized", "straight_line"]
        )
        by_kind = {r.scheme: r.objective_bits for r in rows}
        assert (
            by_kind["partial/optimized"]
            >= by_kind["partial/straight_line"] * (1.0 - 1e-9)
        )


class TestCsvEmission:
    def _rows(self):
        return [
            ExperimentResult("partial", "uav_power", 0.1, 123.456, (100.0, 23.456), 3, 1.5),
            ExperimentResult("binary", "uav_power", 0.2, 7.0, (7.0,), 2, 0.25),
        ]

    def test_header_and_padding(self, tmp_path):
        dest = str(tmp_path / "rows.csv")
        emit_csv(self._rows(), dest)
        lines = open(dest).read().splitlines()
        assert lines[0] == (
            "scheme,variable,value,objective_bits,user_bits_1,user_bits_2,outer_iters,wall_s"
        )
        assert lines[2].split(",")[5] == ""  # second user column padded

    def test_empty_results_emit_header_only(self, tmp_path):
        dest = str(tmp_path / "empty.csv")
        emit_csv([], dest)
        assert open(dest).read().splitlines() == [
            "scheme,variable,value,objective_bits,outer_iters,wall_s"
        ]

    def test_round_trip_is_byte_identical(self, tmp_path):
        first = str(tmp_path / "a.csv")
        second = str(tmp_path / "b.csv")
        emit_csv(self._rows(), first)
        parsed = read_results_csv(first)
        emit_csv(parsed, second)
        assert open(first, "rb").read() == open(second, "rb").read()
        assert parsed[0].objective_bits == 123.456
        assert parsed[0].user_bits == (100.0, 23.456)
        assert parsed[1].user_bits == (7.0,)

    def test_trajectory_csv_layout(self, tmp_path):
        sc = make_scenario([(1.0, 1.0)], slots=3, end=(3.0, 0.0))
        traj = straight_line_trajectory(sc)
        dest = str(tmp_path / "traj.csv")
        emit_trajectory_csv(traj, dest)
        lines = open(dest).read().splitlines()
        assert lines[0] == "iter,slot,x,y"
        assert len(lines) == 1 + 4
        assert lines[1].startswith("0,0,")
        emit_trajectory_csv([(0, traj), (3, traj)], dest)
        lines = open(dest).read().splitlines()
        assert len(lines) == 1 + 8
        assert lines[5].startswith("3,0,")


class TestFigureRendering:
    def test_svg_outputs_are_deterministic(self, tmp_path):
        plots = pytest.importorskip("uavmec.plots")
        sc = default_paper_scenario()
        tracks = {
            "straight": straight_line_trajectory(sc),
            "semicircle": semicircle_trajectory(sc),
        }
        rows = [
            ExperimentResult("partial", "uav_power", 0.1, 10.0, (10.0,), 2, 0.1),
            ExperimentResult("partial", "uav_power", 0.2, 20.0, (20.0,), 2, 0.1),
            ExperimentResult("binary", "uav_power", 0.1, 8.0, (8.0,), 2, 0.1),
        ]
        report = algorithm1(small_active_scenario().with_uav_power(0.1).with_slots(2))
        for render, args in [
            (plots.render_trajectory_figure, (sc, tracks)),
            (plots.render_sweep_figure, (rows,)),
            (plots.render_comparison_figure, (rows,)),
            (plots.render_convergence_figure, (report,)),
        ]:
            first = str(tmp_path / "one.svg")
            second = str(tmp_path / "two.svg")
            render(*args, first)
            render(*args, second)
            blob = open(first, "rb").read()
            assert blob == open(second, "rb").read()
            assert blob.startswith(b"<?xml")
