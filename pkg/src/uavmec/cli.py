"""Command-line front end: runs, scheme comparisons, sweeps, oracle checks.

Diagnostics and progress go to stderr; data goes to files in ``--out`` and
a short human-readable summary to stdout.  Exit codes are a stable
contract: 0 for success/convergence, 1 for usage or configuration errors,
2 when an optimizer stopped at its iteration cap (outputs still written).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Sequence

import numpy as np

from .allocation import optimal_cpu_frequency, optimal_offload_power, solve_p2
from .binary import solve_p6_inner
from .channel import gains_for_trajectory, straight_line_trajectory
from .drivers import SolveReport, algorithm1, algorithm2
from .experiments import (
    MODE_SCHEMES,
    TRAJECTORY_KINDS,
    baseline_trajectory,
    compare_grid,
    emit_csv,
    emit_trajectory_csv,
    sweep,
)
from .oracle import (
    GridSpec,
    OracleBudgetError,
    enumerate_partitions_binary,
    grid_search_p2,
)
from .scenario import (
    Scenario,
    ScenarioError,
    SolverSettings,
    load_scenario,
    default_paper_scenario,
)

__all__ = ["main"]

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_CAP = 2


def _log(message: str) -> None:
    print(message, file=sys.stderr)


# ---------------------------------------------------------------------------
# Argument plumbing
# ---------------------------------------------------------------------------


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--scenario",
        default="table3",
        help="scenario JSON path, or the built-in alias 'table3' (default)",
    )
    parser.add_argument("--p0", type=float, help="override the energy-beam power in watts")
    parser.add_argument("--slots", type=int, help="override the number of time slots")
    parser.add_argument(
        "--paper-literal-speed",
        action="store_true",
        help="use the squared-displacement speed budget variant",
    )
    parser.add_argument("--out", default=".", help="output directory (default: cwd)")
    parser.add_argument("--tol-outer", type=float, help="outer-loop objective tolerance in bits")
    parser.add_argument("--max-outer", type=int, help="outer-loop iteration cap")
    parser.add_argument("--workers", type=int, help="parallel worker processes for grids/sweeps")
    parser.add_argument(
        "--emit-svg",
        action="store_true",
        help="also render vector figures next to the CSV output",
    )


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uavmec",
        description=(
            "Plan energy-causal computation offloading for a wireless-powering "
            "UAV: resource allocation, mode selection, and flight-path refinement."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="one optimizer run with full report output")
    _add_common(run)
    run.add_argument(
        "--mode",
        choices=("partial", "binary"),
        default="partial",
        help="offloading model (default partial)",
    )

    comp = sub.add_parser("compare", help="scheme x flight-path grid on one scenario")
    _add_common(comp)
    comp.add_argument(
        "--schemes",
        default=",".join(MODE_SCHEMES),
        help=f"comma-separated subset of {','.join(MODE_SCHEMES)}",
    )
    comp.add_argument(
        "--trajectories",
        default=",".join(TRAJECTORY_KINDS),
        help=f"comma-separated subset of {','.join(TRAJECTORY_KINDS)}",
    )

    swp = sub.add_parser("sweep", help="one run per (scheme, value) over a parameter")
    _add_common(swp)
    swp.add_argument(
        "--variable",
        choices=("uav_power", "num_users"),
        required=True,
        help="swept parameter",
    )
    swp.add_argument(
        "--values",
        required=True,
        help="comma-separated values, e.g. 0.1,0.2,0.3",
    )
    swp.add_argument(
        "--schemes",
        default=",".join(MODE_SCHEMES),
        help=f"comma-separated subset of {','.join(MODE_SCHEMES)}",
    )

    orc = sub.add_parser(
        "oracle-check", help="brute-force cross-check of the solver stack on a toy instance"
    )
    _add_common(orc)
    orc.add_argument("--num-users", type=int, default=2, help="toy instance size (max 2)")
    orc.add_argument("--noise", type=float, default=1e-12, help="receiver noise power in watts")
    orc.add_argument("--tol", type=float, default=0.01, help="relative objective gap tolerance")
    return parser


def _load_scenario(args: argparse.Namespace) -> Scenario:
    if args.scenario == "table3":
        sc = default_paper_scenario()
    else:
        sc = load_scenario(args.scenario)
    if args.p0 is not None:
        sc = sc.with_uav_power(args.p0)
    if args.slots is not None:
        sc = sc.with_slots(args.slots)
    if args.paper_literal_speed:
        sc = sc.with_literal_speed(True)
    return sc


def _settings(args: argparse.Namespace) -> SolverSettings:
    kwargs = {}
    if args.tol_outer is not None:
        kwargs["tol_outer"] = args.tol_outer
    if args.max_outer is not None:
        kwargs["max_outer_iters"] = args.max_outer
    return SolverSettings(**kwargs)


def _prepare_out(args: argparse.Namespace) -> str:
    os.makedirs(args.out, exist_ok=True)
    return args.out


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _summarize(report: SolveReport, mode: str) -> str:
    lines = [
        f"mode:             {mode}",
        f"objective [bits]: {report.objective_bits:.6f}",
        f"outer iterations: {report.outer_iterations} "
        f"({'converged' if report.converged else 'iteration cap reached'})",
        f"per-user bits:    {', '.join(f'{b:.6f}' for b in report.per_user_bits)}",
    ]
    if report.modes is not None:
        labels = ["offload" if flag else "local" for flag in report.modes.offload_mask]
        lines.append(f"user modes:       {', '.join(labels)}")
    secs = report.stage_seconds
    lines.append(
        "wall clock [s]:   "
        f"allocation {secs['allocation']:.3f}, trajectory {secs['trajectory']:.3f}, "
        f"total {secs['total']:.3f}"
    )
    return "\n".join(lines)


def _cmd_run(args: argparse.Namespace) -> int:
    scenario = _load_scenario(args)
    settings = _settings(args)
    out = _prepare_out(args)
    _log(f"running {args.mode} optimizer on {scenario.num_users} users, "
         f"{scenario.num_slots} slots")
    driver = algorithm1 if args.mode == "partial" else algorithm2
    report = driver(scenario, settings)

    with open(os.path.join(out, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(report.to_document(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    emit_trajectory_csv(report.trajectory, os.path.join(out, "trajectory.csv"))
    if args.emit_svg:
        from . import plots

        plots.render_trajectory_figure(
            scenario,
            {args.mode: report.trajectory, "straight_line": straight_line_trajectory(scenario)},
            os.path.join(out, "trajectory.svg"),
        )
        plots.render_convergence_figure(report, os.path.join(out, "convergence.svg"))
    print(_summarize(report, args.mode))
    return EXIT_OK if report.converged else EXIT_CAP


def _cmd_compare(args: argparse.Namespace) -> int:
    scenario = _load_scenario(args)
    settings = _settings(args)
    out = _prepare_out(args)
    schemes = [s for s in args.schemes.split(",") if s]
    trajectories = [t for t in args.trajectories.split(",") if t]
    _log(f"comparing {len(schemes)}x{len(trajectories)} grid cells")
    rows = compare_grid(
        scenario,
        settings,
        schemes=schemes,
        trajectories=trajectories,
        workers=args.workers,
    )
    emit_csv(rows, os.path.join(out, "compare.csv"))
    if args.emit_svg:
        from . import plots

        plots.render_comparison_figure(rows, os.path.join(out, "compare.svg"))
    failed = [r for r in rows if r.error is not None]
    for row in rows:
        status = row.error if row.error is not None else f"{row.objective_bits:.6f} bits"
        print(f"{row.scheme}: {status}")
    for row in failed:
        _log(f"cell {row.scheme} failed: {row.error}")
    return EXIT_CONFIG if failed else EXIT_OK


def _cmd_sweep(args: argparse.Namespace) -> int:
    scenario = _load_scenario(args)
    settings = _settings(args)
    out = _prepare_out(args)
    try:
        values = [float(v) for v in args.values.split(",") if v]
    except ValueError as exc:
        raise ScenarioError(f"--values: {exc}") from exc
    if not values:
        raise ScenarioError("--values: at least one value is required")
    schemes = [s for s in args.schemes.split(",") if s]
    _log(f"sweeping {args.variable} over {len(values)} values x {len(schemes)} schemes")
    rows = sweep(
        args.variable, values, schemes, scenario, settings, workers=args.workers
    )
    emit_csv(rows, os.path.join(out, "sweep.csv"))
    if args.emit_svg:
        from . import plots

        plots.render_sweep_figure(rows, os.path.join(out, "sweep.svg"))
    failed = [r for r in rows if r.error is not None]
    for row in rows:
        status = row.error if row.error is not None else f"{row.objective_bits:.6f} bits"
        print(f"{row.scheme} @ {row.value:g}: {status}")
    for row in failed:
        _log(f"row {row.scheme} @ {row.value:g} failed: {row.error}")
    return EXIT_CONFIG if failed else EXIT_OK


def _stationarity_residuals(scenario, gains, sol) -> tuple[float, float]:
    """Worst relative mismatch between returned primals and the closed forms."""
    alloc = sol.allocation
    t = alloc.time_share
    power = alloc.energy_product / np.maximum(t, 1e-300)
    res_f, res_z = 0.0, 0.0
    for m in range(scenario.num_users):
        for n in range(scenario.num_slots):
            if alloc.cpu_freq[m, n] > 0 and sol.dual.mu[m, n] > 0:
                f_hat = optimal_cpu_frequency(m, n, sol.dual, scenario)
                res_f = max(res_f, abs(alloc.cpu_freq[m, n] - f_hat) / f_hat)
            if alloc.energy_product[m, n] > 0 and t[m, n] > 0:
                p_hat = optimal_offload_power(
                    m, n, sol.dual, gains.values[m, n], scenario, t[m, n]
                )
                res_z = max(res_z, abs(power[m, n] - p_hat) / max(p_hat, 1e-300))
    return res_f, res_z


def _toy_scenario(num_users: int, noise: float, slots: int) -> Scenario:
    positions = [(5.0, 0.0), (5.0, 25.0)][:num_users]
    weights = [1.0, 3.0][:num_users]
    return load_scenario(
        {
            "users": [
                {"position": list(p), "weight": w} for p, w in zip(positions, weights)
            ],
            "uav": {
                "altitude": 10.0,
                "tx_power": 0.1,
                "max_speed": 20.0,
                "start": [4.0, 0.0],
                "end": [6.0, 0.0],
            },
            "physics": {
                "ref_gain_linear": 1e-5,
                "eh_efficiency": 0.8,
                "bandwidth": 4e7,
                "noise_power": noise,
            },
            "grid": {"horizon": 2.0, "slots": slots},
        }
    )


def _cmd_oracle_check(args: argparse.Namespace) -> int:
    if args.num_users > 2:
        raise ScenarioError(
            f"--num-users {args.num_users}: partition enumeration is budgeted "
            "for toy instances only (max 2)"
        )
    if args.slots is not None and args.slots > 3:
        raise ScenarioError(
            f"--slots {args.slots}: the brute-force grids are budgeted for at most 3 slots"
        )
    slots = args.slots if args.slots is not None else 2
    scenario = _toy_scenario(args.num_users, args.noise, slots)
    if args.p0 is not None:
        scenario = scenario.with_uav_power(args.p0)
    trajectory = straight_line_trajectory(scenario)
    gains = gains_for_trajectory(scenario, trajectory)
    settings = _settings(args)
    grid = GridSpec(refine_passes=3)
    checks: list[tuple[str, bool, str]] = []

    _log("grid-searching the allocation problem")
    oracle = grid_search_p2(scenario, trajectory, grid)
    sol = solve_p2(scenario, gains, settings)
    scale = max(abs(oracle.objective_bits), 1e-300)
    gap = (oracle.objective_bits - sol.objective_bits) / scale
    checks.append(
        (
            "allocation-gap",
            abs(gap) <= args.tol,
            f"relative gap {gap:.3e} (tolerance {args.tol:g})",
        )
    )
    floor = oracle.objective_bits - oracle.cell_slack_bits - 1e-9 * scale
    checks.append(
        (
            "allocation-floor",
            sol.objective_bits >= floor,
            f"solver {sol.objective_bits:.6f} vs grid floor {floor:.6f}",
        )
    )
    res_f, res_z = _stationarity_residuals(scenario, gains, sol)
    checks.append(
        (
            "stationarity",
            max(res_f, res_z) <= max(args.tol * 1e-3, 1e-9),
            f"closed-form residuals f {res_f:.3e}, power {res_z:.3e}",
        )
    )

    if slots <= 2:
        _log("enumerating the mode partitions")
        enum = enumerate_partitions_binary(scenario, trajectory, grid)
        binary = solve_p6_inner(scenario, gains, settings)
        bscale = max(abs(enum.result.objective_bits), 1e-300)
        bgap = (enum.result.objective_bits - binary.objective_bits) / bscale
        checks.append(
            (
                "partition-gap",
                abs(bgap) <= args.tol,
                f"relative gap {bgap:.3e} (tolerance {args.tol:g})",
            )
        )
        checks.append(
            (
                "partition-match",
                binary.modes.offload_mask == enum.offload_mask,
                f"modes {binary.modes.offload_mask} vs enumerated {enum.offload_mask}",
            )
        )
    else:
        _log("skipping partition enumeration (over budget beyond 2 slots)")

    failures = 0
    for name, ok, detail in checks:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        failures += 0 if ok else 1
    return EXIT_OK if failures == 0 else EXIT_CONFIG


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; fold that into the documented
        # config exit code (and keep 0 for --help)
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    handlers = {
        "run": _cmd_run,
        "compare": _cmd_compare,
        "sweep": _cmd_sweep,
        "oracle-check": _cmd_oracle_check,
    }
    try:
        return handlers[args.command](args)
    except (ScenarioError, OracleBudgetError, ValueError) as exc:
        _log(f"error: {exc}")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
