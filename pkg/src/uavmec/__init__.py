"""UAV-assisted wireless-powered edge computing planner.

A rotary-wing UAV flies a fixed-endpoint path over ground devices, beaming
RF power down on the way; the devices spend the harvested energy on local
CPU cycles and/or on TDMA uplink offloading.  This package plans the joint
schedule — per-slot CPU frequency, transmit power, time shares, offload/local
mode, and the flight path itself — to maximize the weighted sum of computed
bits over the mission horizon.

Public surface:

- :mod:`uavmec.scenario`    — validated scenario/configuration types
- :mod:`uavmec.channel`     — channel gains, harvested energy, link capacity
- :mod:`uavmec.allocation`  — per-slot resource allocation (partial offload)
- :mod:`uavmec.trajectory`  — flight-path improvement (convex minorants + barrier solver)
- :mod:`uavmec.binary`      — all-or-nothing offload mode selection
- :mod:`uavmec.drivers`     — alternating whole-problem solvers and reports
- :mod:`uavmec.oracle`      — brute-force reference optimizers for verification
- :mod:`uavmec.experiments` — baselines, parameter sweeps, CSV emission
- :mod:`uavmec.cli`         — command-line entry point
"""

from uavmec.allocation import (
    DualState,
    P2Solution,
    PrimalAllocation,
    allocation_objective,
    optimal_cpu_frequency,
    optimal_offload_power,
    solve_p2,
)
from uavmec.binary import (
    BinaryDualState,
    ModeAssignment,
    P6Solution,
    select_mode,
    selection_scores,
    solve_p6_inner,
)
from uavmec.channel import (
    ChannelGains,
    Trajectory,
    TrajectoryError,
    channel_gain,
    gains_for_trajectory,
    harvested_energy_prefix,
    offload_capacity,
    straight_line_trajectory,
)
from uavmec.drivers import (
    SolveReport,
    algorithm1,
    algorithm2,
    evaluate_objective_binary,
    evaluate_objective_partial,
)
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
from uavmec.oracle import (
    BinaryEnumeration,
    GridSpec,
    OracleBudgetError,
    OracleResult,
    enumerate_partitions_binary,
    grid_search_p2,
)
from uavmec.scenario import (
    PhysicsSpec,
    Scenario,
    ScenarioError,
    SolverSettings,
    TimeGrid,
    UavSpec,
    UserSpec,
    default_paper_scenario,
    load_scenario,
)
from uavmec.trajectory import SCAResult, blended_objective, sca_trajectory_loop

__all__ = [
    "BinaryDualState",
    "BinaryEnumeration",
    "DualState",
    "ExperimentResult",
    "GridSpec",
    "InfeasibleBaselineError",
    "ModeAssignment",
    "OracleBudgetError",
    "OracleResult",
    "P2Solution",
    "P6Solution",
    "PhysicsSpec",
    "PrimalAllocation",
    "SCAResult",
    "Scenario",
    "ScenarioError",
    "SolveReport",
    "SolverSettings",
    "TimeGrid",
    "Trajectory",
    "UavSpec",
    "UserSpec",
    "algorithm1",
    "algorithm2",
    "ChannelGains",
    "TrajectoryError",
    "allocation_objective",
    "baseline_mode",
    "baseline_trajectory",
    "blended_objective",
    "channel_gain",
    "circle_users",
    "compare_grid",
    "default_paper_scenario",
    "emit_csv",
    "emit_trajectory_csv",
    "enumerate_partitions_binary",
    "evaluate_objective_binary",
    "evaluate_objective_partial",
    "gains_for_trajectory",
    "grid_search_p2",
    "harvested_energy_prefix",
    "load_scenario",
    "offload_capacity",
    "optimal_cpu_frequency",
    "optimal_offload_power",
    "read_results_csv",
    "sca_trajectory_loop",
    "select_mode",
    "selection_scores",
    "semicircle_trajectory",
    "solve_p2",
    "solve_p6_inner",
    "straight_line_trajectory",
    "sweep",
]

__version__ = "0.1.0"
