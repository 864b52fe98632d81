"""Baseline schemes, parameter sweeps, and delimited result emission.

Every run — a single scheme, a comparison grid cell, or a sweep point —
lands in one :class:`ExperimentResult` row tied to its exact scenario by a
content fingerprint.  Rows serialize to CSV with a documented column order
and 17-significant-digit floats, so identical invocations produce
byte-identical files.
"""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .channel import Trajectory, straight_line_trajectory
from .drivers import SolveReport, algorithm1, algorithm2
from .scenario import Scenario, SolverSettings, UserSpec

__all__ = [
    "ExperimentResult",
    "InfeasibleBaselineError",
    "MODE_SCHEMES",
    "TRAJECTORY_KINDS",
    "baseline_mode",
    "baseline_trajectory",
    "circle_users",
    "compare_grid",
    "emit_csv",
    "emit_trajectory_csv",
    "read_results_csv",
    "semicircle_trajectory",
    "sweep",
]

MODE_SCHEMES = ("partial", "binary", "local_only", "offload_only")
TRAJECTORY_KINDS = ("optimized", "straight_line", "semicircle")


class InfeasibleBaselineError(ValueError):
    """A requested baseline path cannot satisfy the speed budget."""


# ---------------------------------------------------------------------------
# Baselines
# ---------------------------------------------------------------------------


def semicircle_trajectory(scenario: Scenario) -> Trajectory:
    """Half-circle over the start-end segment, flown at constant speed.

    The arc bulges to the left of the start→end direction (the +y side for
    a +x crossing) and is sampled at uniform arc length, so every step has
    the same chord.  Degenerates to hovering when start and end coincide.

    Raises:
        InfeasibleBaselineError: when the arc is too long to fly within
            the horizon at max speed.
    """
    start = np.asarray(scenario.uav.start, dtype=np.float64)
    end = np.asarray(scenario.uav.end, dtype=np.float64)
    n = scenario.num_slots
    dist = float(np.linalg.norm(end - start))
    if dist == 0.0:
        return Trajectory(np.tile(start, (n + 1, 1)))
    arc_speed = math.pi * dist / (2.0 * scenario.grid.horizon)
    if arc_speed > scenario.uav.max_speed * (1 + 1e-12):
        raise InfeasibleBaselineError(
            f"semicircle needs {arc_speed:.6g} m/s but the speed cap is "
            f"{scenario.uav.max_speed:.6g} m/s"
        )
    radius = dist / 2.0
    center = (start + end) / 2.0
    u = (end - start) / dist
    v = np.array([-u[1], u[0]])
    phase = np.pi * np.arange(n + 1) / n
    points = (
        center[None, :]
        - np.cos(phase)[:, None] * radius * u[None, :]
        + np.sin(phase)[:, None] * radius * v[None, :]
    )
    points[0] = start
    points[-1] = end
    traj = Trajectory(points)
    traj.validate_for(scenario)
    return traj


def baseline_trajectory(kind: str, scenario: Scenario) -> Trajectory:
    """A named fixed flight path: ``straight_line`` or ``semicircle``."""
    if kind == "straight_line":
        return straight_line_trajectory(scenario)
    if kind == "semicircle":
        return semicircle_trajectory(scenario)
    raise ValueError(f"unknown baseline trajectory {kind!r}")


def baseline_mode(
    kind: str, scenario: Scenario, settings: SolverSettings | None = None
) -> SolveReport:
    """Single-mode benchmark run with the flight path still optimized.

    ``local_only`` pins every user's uplink to zero; ``offload_only`` pins
    every processor speed to zero.
    """
    m = scenario.num_users
    if kind == "local_only":
        return algorithm1(scenario, settings, allow_offload=(False,) * m)
    if kind == "offload_only":
        return algorithm1(scenario, settings, allow_local=(False,) * m)
    raise ValueError(f"unknown baseline mode {kind!r}")


def circle_users(count: int, weight: float = 1.0) -> tuple[UserSpec, ...]:
    """``count`` equal-weight users on the circle through the corner layout.

    Radius 5·√2 around (5, 5), first user at 45°, so four users reproduce
    the reference square corners exactly.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    radius = 5.0 * math.sqrt(2.0)
    angles = math.pi / 4.0 + 2.0 * math.pi * np.arange(count) / count
    return tuple(
        UserSpec(
            position=(5.0 + radius * math.cos(a), 5.0 + radius * math.sin(a)),
            weight=weight,
        )
        for a in angles
    )


# ---------------------------------------------------------------------------
# Result rows
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentResult:
    """One solved configuration: scheme label, swept value, and outcome.

    ``error`` is None for successful rows; failed rows keep the scheme and
    value so a sweep never loses its grid shape.
    """

    scheme: str
    variable: str
    value: float
    objective_bits: float
    user_bits: tuple[float, ...]
    outer_iters: int
    wall_seconds: float
    fingerprint: str = ""
    error: str | None = None


def _run_scheme(
    scenario: Scenario,
    scheme: str,
    settings: SolverSettings | None,
    trajectory_kind: str = "optimized",
) -> SolveReport:
    if trajectory_kind == "optimized":
        initial, moving = None, True
    else:
        initial, moving = baseline_trajectory(trajectory_kind, scenario), False
    if scheme == "partial":
        return algorithm1(scenario, settings, initial=initial, optimize_trajectory=moving)
    if scheme == "binary":
        return algorithm2(scenario, settings, initial=initial, optimize_trajectory=moving)
    if scheme == "local_only":
        return algorithm1(
            scenario,
            settings,
            initial=initial,
            optimize_trajectory=moving,
            allow_offload=(False,) * scenario.num_users,
        )
    if scheme == "offload_only":
        return algorithm1(
            scenario,
            settings,
            initial=initial,
            optimize_trajectory=moving,
            allow_local=(False,) * scenario.num_users,
        )
    raise ValueError(f"unknown scheme {scheme!r}")


def _materialize(template: Scenario, variable: str, value: float) -> Scenario:
    if variable == "uav_power":
        return template.with_uav_power(float(value))
    if variable == "num_users":
        return template.with_users(circle_users(int(value)))
    return template


def _run_cell(task) -> ExperimentResult:
    template, scheme, variable, value, settings, trajectory_kind = task
    started = time.perf_counter()
    scenario = template
    try:
        scenario = _materialize(template, variable, value)
        report = _run_scheme(scenario, scheme, settings, trajectory_kind)
    except Exception as exc:  # recorded, not raised: the sweep must go on
        return ExperimentResult(
            scheme=scheme,
            variable=variable,
            value=value,
            objective_bits=math.nan,
            user_bits=(),
            outer_iters=0,
            wall_seconds=time.perf_counter() - started,
            fingerprint=scenario.fingerprint(),
            error=f"{type(exc).__name__}: {exc}",
        )
    return ExperimentResult(
        scheme=scheme,
        variable=variable,
        value=value,
        objective_bits=report.objective_bits,
        user_bits=tuple(float(b) for b in report.per_user_bits),
        outer_iters=report.outer_iterations,
        wall_seconds=time.perf_counter() - started,
        fingerprint=scenario.fingerprint(),
    )


def _run_cells(tasks: list, workers: int | None) -> list[ExperimentResult]:
    if workers is not None and workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_cell, tasks))
    return [_run_cell(task) for task in tasks]


def sweep(
    variable: str,
    values: Sequence[float],
    schemes: Sequence[str],
    scenario: Scenario,
    settings: SolverSettings | None = None,
    *,
    workers: int | None = None,
) -> list[ExperimentResult]:
    """One optimized run per (scheme, value); rows in request order.

    ``uav_power`` sweeps the energy-beam power in watts; ``num_users``
    rebuilds the user set on the :func:`circle_users` layout.  Failures are
    recorded in their row's ``error`` field and do not stop the sweep.
    """
    if variable not in ("uav_power", "num_users"):
        raise ValueError(f"unknown sweep variable {variable!r}")
    for scheme in schemes:
        if scheme not in MODE_SCHEMES:
            raise ValueError(f"unknown scheme {scheme!r}")
    tasks = [
        (scenario, scheme, variable, float(value), settings, "optimized")
        for scheme in schemes
        for value in values
    ]
    return _run_cells(tasks, workers)


def compare_grid(
    scenario: Scenario,
    settings: SolverSettings | None = None,
    *,
    schemes: Sequence[str] = MODE_SCHEMES,
    trajectories: Sequence[str] = TRAJECTORY_KINDS,
    workers: int | None = None,
) -> list[ExperimentResult]:
    """Scheme × flight-path grid on one scenario, one row per cell.

    Fixed-path cells optimize the allocation only; the scheme label of a
    row is ``"<scheme>/<trajectory>"``.  Infeasible baselines (or any other
    per-cell failure) are recorded in the row's ``error`` field.
    """
    for scheme in schemes:
        if scheme not in MODE_SCHEMES:
            raise ValueError(f"unknown scheme {scheme!r}")
    for kind in trajectories:
        if kind not in TRAJECTORY_KINDS:
            raise ValueError(f"unknown trajectory kind {kind!r}")
    tasks = [
        (
            scenario,
            scheme,
            "uav_power",
            scenario.uav.tx_power,
            settings,
            kind,
        )
        for scheme in schemes
        for kind in trajectories
    ]
    rows = _run_cells(tasks, workers)
    return [
        replace(row, scheme=f"{scheme}/{kind}")
        for row, (scheme, kind) in zip(
            rows, [(s, k) for s in schemes for k in trajectories]
        )
    ]


# ---------------------------------------------------------------------------
# CSV emission
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def emit_csv(results: Sequence[ExperimentResult], destination: str) -> None:
    """Write result rows with the documented column order.

    Header: ``scheme,variable,value,objective_bits,user_bits_1..M,
    outer_iters,wall_s`` where M is the widest row; narrower rows leave
    their trailing user columns empty.
    """
    width = max((len(r.user_bits) for r in results), default=0)
    header = (
        ["scheme", "variable", "value", "objective_bits"]
        + [f"user_bits_{i + 1}" for i in range(width)]
        + ["outer_iters", "wall_s"]
    )
    with open(destination, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for r in results:
            bits = [_fmt(b) for b in r.user_bits]
            bits += [""] * (width - len(r.user_bits))
            writer.writerow(
                [r.scheme, r.variable, _fmt(r.value), _fmt(r.objective_bits)]
                + bits
                + [str(r.outer_iters), _fmt(r.wall_seconds)]
            )


def read_results_csv(path: str) -> list[ExperimentResult]:
    """Parse a file written by :func:`emit_csv`.

    Restores every emitted column exactly (17 significant digits
    round-trip float64); the fingerprint and error fields are not part of
    the schema and come back empty.
    """
    rows: list[ExperimentResult] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        user_cols = [i for i, name in enumerate(header) if name.startswith("user_bits_")]
        for rec in reader:
            rows.append(
                ExperimentResult(
                    scheme=rec[0],
                    variable=rec[1],
                    value=float(rec[2]),
                    objective_bits=float(rec[3]),
                    user_bits=tuple(float(rec[i]) for i in user_cols if rec[i] != ""),
                    outer_iters=int(rec[header.index("outer_iters")]),
                    wall_seconds=float(rec[header.index("wall_s")]),
                )
            )
    return rows


def emit_trajectory_csv(
    trajectory: Trajectory | Sequence[tuple[int, Trajectory]], destination: str
) -> None:
    """Write waypoint rows as ``iter,slot,x,y``.

    Accepts either one final path (emitted as iteration 0) or a sequence
    of (iteration, path) snapshots.
    """
    blocks = (
        [(0, trajectory)] if isinstance(trajectory, Trajectory) else list(trajectory)
    )
    with open(destination, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iter", "slot", "x", "y"])
        for iteration, traj in blocks:
            for slot, (x, y) in enumerate(traj.waypoints):
                writer.writerow([str(iteration), str(slot), _fmt(x), _fmt(y)])
