"""Top-level alternating optimizers and whole-system objective evaluators.

Two drivers share one skeleton: repeat (allocation stage, then path stage)
until the restored objective moves by at most ``tol_outer`` bits between
consecutive rounds, or the outer cap trips.  ``algorithm1`` keeps the
partial-mode allocation solver in the first stage; ``algorithm2`` swaps in
the binary mode-selection alternation, so each round also returns a user
partition.  Both report every round's objective (always measured on the
feasibility-restored primal of that round) plus per-stage telemetry.
"""

from __future__ import annotations

import time
from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np

from .allocation import PrimalAllocation, allocation_objective, solve_p2
from .binary import ModeAssignment, solve_p6_inner
from .channel import (
    ChannelGains,
    Trajectory,
    gains_for_trajectory,
    straight_line_trajectory,
)
from .scenario import Scenario, SolverSettings
from .trajectory import sca_trajectory_loop

__all__ = [
    "SolveReport",
    "algorithm1",
    "algorithm2",
    "evaluate_objective_binary",
    "evaluate_objective_partial",
]


# ---------------------------------------------------------------------------
# Objective evaluators
# ---------------------------------------------------------------------------


def evaluate_objective_partial(
    allocation: PrimalAllocation,
    gains: ChannelGains | np.ndarray,
    scenario: Scenario,
) -> float:
    """Weighted-sum computation bits of an allocation, both modes counted.

    Pure evaluation — feasibility of the allocation is the caller's
    business.  Zero allocation scores zero; the result is linear in the
    user weights.
    """
    total, _ = allocation_objective(scenario, gains, allocation)
    return total


def evaluate_objective_binary(
    allocation: PrimalAllocation,
    assignment: ModeAssignment,
    gains: ChannelGains | np.ndarray,
    scenario: Scenario,
) -> float:
    """Weighted-sum bits of a mode-pure allocation under a binary assignment.

    Local users contribute only processed bits, offload users only uplink
    bits; because the allocation must already be consistent with the
    assignment (offload users compute nothing, local users transmit
    nothing), the value coincides with the partial-mode evaluator on the
    same allocation.

    Raises:
        ValueError: if the assignment is fractional, its length does not
            match the scenario, or the allocation is inconsistent with it.
    """
    if not assignment.is_binary:
        raise ValueError("assignment must be binary, got fractional entries")
    if assignment.rho.shape[0] != scenario.num_users:
        raise ValueError(
            f"assignment covers {assignment.rho.shape[0]} users, "
            f"scenario has {scenario.num_users}"
        )
    for m in assignment.offload_users:
        if np.any(allocation.cpu_freq[m] != 0.0):
            raise ValueError(f"offload user {m} has nonzero processor speed")
    for m in assignment.local_users:
        if np.any(allocation.energy_product[m] != 0.0) or np.any(
            allocation.time_share[m] != 0.0
        ):
            raise ValueError(f"local user {m} has nonzero uplink activity")
    return evaluate_objective_partial(allocation, gains, scenario)


# ---------------------------------------------------------------------------
# Report container
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SolveReport:
    """Outcome of one alternating-optimizer run.

    ``objective_trace`` holds the restored objective after every completed
    outer round; the returned primal is the best round seen, so
    ``objective_bits == max(objective_trace)``.  ``stage_seconds`` is
    wall-clock telemetry (keys ``allocation``, ``trajectory``, ``total``)
    and is the only non-deterministic content.

    Attributes:
        allocation: restored allocation of the best round.
        trajectory: ground track of the best round.
        modes: user partition of the best round (binary driver only).
        objective_bits: weighted-sum bits of the best round.
        per_user_bits: unweighted per-user bits at the returned state.
        objective_trace: per-round restored objective, in round order.
        initial_objective_bits: allocation-stage objective on the initial
            path, before any path refinement.
        outer_iterations: completed outer rounds.
        allocation_rounds: inner iterations of each round's allocation
            stage.
        trajectory_rounds: accepted refinement steps of each round's path
            stage (empty when the path is held fixed).
        stage_seconds: wall-clock seconds per stage.
        converged: True when the last two rounds agreed to ``tol_outer``
            bits, False when the outer cap stopped the run.
    """

    allocation: PrimalAllocation
    trajectory: Trajectory
    modes: ModeAssignment | None
    objective_bits: float
    per_user_bits: np.ndarray
    objective_trace: tuple[float, ...]
    initial_objective_bits: float
    outer_iterations: int
    allocation_rounds: tuple[int, ...]
    trajectory_rounds: tuple[int, ...]
    stage_seconds: Mapping[str, float]
    converged: bool

    def to_document(self) -> dict:
        """Plain-types view (JSON-ready) for reporting layers."""
        return {
            "objective_bits": self.objective_bits,
            "per_user_bits": [float(b) for b in self.per_user_bits],
            "objective_trace": list(self.objective_trace),
            "initial_objective_bits": self.initial_objective_bits,
            "outer_iterations": self.outer_iterations,
            "allocation_rounds": list(self.allocation_rounds),
            "trajectory_rounds": list(self.trajectory_rounds),
            "converged": self.converged,
            "stage_seconds": dict(self.stage_seconds),
            "trajectory": [[float(x), float(y)] for x, y in self.trajectory.waypoints],
            "modes": None
            if self.modes is None
            else [float(r) for r in self.modes.rho],
            "allocation": {
                "cpu_freq": self.allocation.cpu_freq.tolist(),
                "offload_power": self.allocation.offload_power.tolist(),
                "time_share": self.allocation.time_share.tolist(),
                "energy_product": self.allocation.energy_product.tolist(),
            },
        }


# ---------------------------------------------------------------------------
# Drivers
# ---------------------------------------------------------------------------


def algorithm1(
    scenario: Scenario,
    settings: SolverSettings | None = None,
    *,
    initial: Trajectory | None = None,
    allow_local: tuple[bool, ...] | None = None,
    allow_offload: tuple[bool, ...] | None = None,
    optimize_trajectory: bool = True,
) -> SolveReport:
    """Two-stage alternation: partial-mode allocation, then path refinement.

    Starts from ``initial`` (default: the constant-speed straight line) and
    repeats [exact allocation solve at the current path, surrogate path
    refinement at the current allocation] until the objective settles.
    Each allocation stage is warm-started from the previous round, and the
    path stage never accepts a decrease, so the round trace is
    nondecreasing and the final objective dominates the straight-line
    allocation value.

    ``allow_local`` / ``allow_offload`` pin user modes for benchmark runs
    (for instance everyone-local), and ``optimize_trajectory=False`` holds
    the path fixed while still optimizing the allocation.
    """
    settings = settings or SolverSettings()

    def stage(traj: Trajectory, warm: PrimalAllocation | None):
        sol = solve_p2(
            scenario,
            traj,
            settings,
            allow_local=allow_local,
            allow_offload=allow_offload,
            warm_start=warm,
        )
        return sol.allocation, sol.objective_bits, sol.per_user_bits, sol.polish_rounds, None

    return _alternate(scenario, settings, stage, initial, optimize_trajectory)


def algorithm2(
    scenario: Scenario,
    settings: SolverSettings | None = None,
    *,
    initial: Trajectory | None = None,
    optimize_trajectory: bool = True,
) -> SolveReport:
    """Three-stage alternation: allocation + mode selection, then the path.

    Like :func:`algorithm1` but the allocation stage also chooses a binary
    user partition, so every round re-runs the mode-selection alternation
    (seeded with the incumbent partition, which keeps the best-so-far
    objective from regressing between rounds).  The report carries the
    final partition in ``modes``.
    """
    settings = settings or SolverSettings()
    seeds: list[tuple[bool, ...]] = []

    def stage(traj: Trajectory, warm: PrimalAllocation | None):
        sol = solve_p6_inner(scenario, traj, settings, seed_masks=tuple(seeds))
        seeds[:] = [sol.modes.offload_mask]
        return sol.allocation, sol.objective_bits, sol.per_user_bits, sol.rounds, sol.modes

    return _alternate(scenario, settings, stage, initial, optimize_trajectory)


def _alternate(
    scenario: Scenario,
    settings: SolverSettings,
    stage,
    initial: Trajectory | None,
    optimize_trajectory: bool,
) -> SolveReport:
    """Shared outer loop; ``stage`` solves the fixed-path subproblem."""
    t_total = time.perf_counter()
    traj = initial if initial is not None else straight_line_trajectory(scenario)
    traj.validate_for(scenario)

    trace: list[float] = []
    alloc_iters: list[int] = []
    path_iters: list[int] = []
    alloc_seconds = 0.0
    path_seconds = 0.0
    incumbent: tuple[float, PrimalAllocation, Trajectory, np.ndarray, ModeAssignment | None] | None = None
    warm: PrimalAllocation | None = None
    initial_bits: float | None = None
    prev: float | None = None
    converged = False
    outer = 0

    for _ in range(settings.max_outer_iters):
        outer += 1
        t0 = time.perf_counter()
        allocation, bits, per_user, inner, modes = stage(traj, warm)
        alloc_seconds += time.perf_counter() - t0
        alloc_iters.append(inner)
        if initial_bits is None:
            initial_bits = bits

        if optimize_trajectory:
            t0 = time.perf_counter()
            refined = sca_trajectory_loop(scenario, traj, allocation, settings)
            path_seconds += time.perf_counter() - t0
            path_iters.append(refined.iterations)
            traj = refined.trajectory
            bits, per_user = allocation_objective(
                scenario, gains_for_trajectory(scenario, traj), allocation
            )

        trace.append(bits)
        if incumbent is None or bits > incumbent[0]:
            incumbent = (bits, allocation, traj, per_user, modes)
        if prev is not None and abs(bits - prev) <= settings.tol_outer:
            converged = True
            break
        prev = bits
        warm = allocation

    assert incumbent is not None and initial_bits is not None
    best_bits, best_alloc, best_traj, best_per_user, best_modes = incumbent
    return SolveReport(
        allocation=best_alloc,
        trajectory=best_traj,
        modes=best_modes,
        objective_bits=best_bits,
        per_user_bits=np.asarray(best_per_user, dtype=np.float64).copy(),
        objective_trace=tuple(trace),
        initial_objective_bits=initial_bits,
        outer_iterations=outer,
        allocation_rounds=tuple(alloc_iters),
        trajectory_rounds=tuple(path_iters),
        stage_seconds={
            "allocation": alloc_seconds,
            "trajectory": path_seconds,
            "total": time.perf_counter() - t_total,
        },
        converged=converged,
    )
