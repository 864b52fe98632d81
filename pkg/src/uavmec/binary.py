"""Binary offloading: per-user mode selection and the alternating inner loop.

Each user must commit to exactly one mode — local computing or offloading —
instead of blending both.  Relaxing the commitment to a sharing factor in
[0, 1] shows the choice is governed by a derivative sign: compare what the
user's resources earn under either pure mode, net of the shadow prices its
spending would incur, and take the better side.  The inner loop alternates
exact mode-restricted allocation solves with that score-based reassignment,
guards against assignment cycles, and reports the best partition visited.
"""

from __future__ import annotations

import math
from collections.abc import Iterable
from dataclasses import dataclass, field

import numpy as np

from .allocation import (
    DualState,
    P2Solution,
    PrimalAllocation,
    _response,
    solve_p2,
)
from .channel import ChannelGains, Trajectory, gains_for_trajectory
from .scenario import Scenario, SolverSettings

__all__ = [
    "ModeAssignment",
    "BinaryDualState",
    "P6Solution",
    "selection_scores",
    "select_mode",
    "solve_p6_inner",
]

LOCAL = "local"
OFFLOAD = "offload"


@dataclass(frozen=True)
class ModeAssignment:
    """Commitment of every user to local computing or offloading.

    ``rho`` stores the per-user sharing factor; 0 is pure local computing
    and 1 pure offloading.  The solver only ever returns binary vectors,
    but fractional values are representable for relaxation work.
    """

    rho: np.ndarray

    def __post_init__(self) -> None:
        rho = np.asarray(self.rho, dtype=np.float64)
        if rho.ndim != 1:
            raise ValueError("rho must be one-dimensional")
        if np.any((rho < 0.0) | (rho > 1.0)):
            raise ValueError("sharing factors must lie in [0, 1]")
        object.__setattr__(self, "rho", rho)

    @classmethod
    def from_offload_mask(cls, mask) -> "ModeAssignment":
        return cls(np.asarray(mask, dtype=np.float64))

    @property
    def is_binary(self) -> bool:
        return bool(np.all((self.rho == 0.0) | (self.rho == 1.0)))

    @property
    def local_users(self) -> tuple[int, ...]:
        """Users committed to local computing (fractional users excluded)."""
        return tuple(int(m) for m in np.flatnonzero(self.rho == 0.0))

    @property
    def offload_users(self) -> tuple[int, ...]:
        return tuple(int(m) for m in np.flatnonzero(self.rho == 1.0))

    @property
    def offload_mask(self) -> tuple[bool, ...]:
        return tuple(bool(r == 1.0) for r in self.rho)


@dataclass(frozen=True)
class BinaryDualState:
    """Shadow prices of the mode-blended constraints.

    Attributes:
        upsilon: per (user, slot) energy-causality prices, >= 0.
        epsilon: per-slot offload-time prices, >= 0.
        varpi: suffix sums of upsilon along slots (derived) — the total
            price a unit of energy spent at slot n keeps paying.
    """

    upsilon: np.ndarray
    epsilon: np.ndarray
    varpi: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        upsilon = np.asarray(self.upsilon, dtype=np.float64)
        epsilon = np.asarray(self.epsilon, dtype=np.float64)
        if upsilon.ndim != 2 or epsilon.ndim != 1 or upsilon.shape[1] != epsilon.size:
            raise ValueError("upsilon must be (M, N) and epsilon length N")
        if np.any(upsilon < 0.0) or np.any(epsilon < 0.0):
            raise ValueError("prices must be nonnegative")
        object.__setattr__(self, "upsilon", upsilon)
        object.__setattr__(self, "epsilon", epsilon)
        object.__setattr__(
            self, "varpi", np.cumsum(upsilon[:, ::-1], axis=1)[:, ::-1].copy()
        )

    def as_price_state(self) -> DualState:
        """The same prices in the allocation solver's container."""
        return DualState(self.upsilon.copy(), self.epsilon.copy())

    @classmethod
    def from_price_state(cls, dual: DualState) -> "BinaryDualState":
        return cls(dual.energy_price.copy(), dual.time_price.copy())


def selection_scores(
    m: int,
    allocation: PrimalAllocation,
    gains: ChannelGains | np.ndarray,
    dual: BinaryDualState,
    scenario: Scenario,
) -> tuple[float, float]:
    """Mode trade-off scores for user m at the given operating point.

    Each score is the mode's earned bits minus the priced resource cost:
    the local score charges the CPU-energy prefixes at the energy prices,
    the offload score additionally charges the occupied slot time at the
    time prices.  Whichever side is larger is the better commitment for
    the user at these prices; an empty operating point scores (0, 0).
    """
    g = gains.values if isinstance(gains, ChannelGains) else np.asarray(gains)
    user = scenario.users[m]
    delta = scenario.slot_length
    noise = scenario.physics.noise_power
    bw = scenario.physics.bandwidth
    f = allocation.cpu_freq[m]
    z = allocation.energy_product[m]
    t = allocation.time_share[m]
    varpi = dual.varpi[m]

    local_bits = user.weight * delta * f / user.cpu_cycles_per_bit
    local_cost = varpi * delta * user.capacitance_coeff * f**3
    g1 = math.fsum(local_bits - local_cost)

    on = t > 0.0
    rate = np.zeros_like(t)
    rate[on] = (
        user.weight
        * (bw * delta / user.overhead_factor)
        * t[on]
        * np.log2(1.0 + g[m, on] * z[on] / (noise * t[on]))
    )
    g2 = math.fsum(rate - varpi * delta * z - dual.epsilon * t)
    return g1, g2


def select_mode(g1: float, g2: float) -> str:
    """The better commitment at the given scores; ties favor local."""
    return LOCAL if g1 >= g2 else OFFLOAD


@dataclass(frozen=True)
class P6Solution:
    """Outcome of the binary-mode alternation on a fixed trajectory.

    Attributes:
        modes: the returned (binary) assignment.
        allocation: mode-restricted feasible allocation for it.
        dual: prices consistent with that restricted solve.
        objective_bits: weighted bits of the returned allocation.
        per_user_bits: raw bits per user.
        visited: every partition evaluated, as (offload mask, bits), in
            first-visit order.
        rounds: assignment updates performed.
        converged: the loop settled (objective delta within tolerance or
            assignment fixed point / cycle) rather than hitting its cap.
        cycle_detected: the alternation revisited an assignment.
    """

    modes: ModeAssignment
    allocation: PrimalAllocation
    dual: BinaryDualState
    objective_bits: float
    per_user_bits: np.ndarray
    visited: tuple[tuple[tuple[bool, ...], float], ...]
    rounds: int
    converged: bool
    cycle_detected: bool


def _candidate_allocation(
    scenario: Scenario,
    gains: np.ndarray,
    dual: BinaryDualState,
    settings: SolverSettings,
) -> PrimalAllocation:
    """Best-response operating point with both modes open to every user.

    The scores must compare what each mode WOULD earn, so the candidate
    point is the price-optimal response unrestricted by the current
    assignment; the assignment only constrains the exact solves.
    """
    every = np.ones(scenario.num_users, dtype=bool)
    f, _, t, z, _ = _response(
        scenario, gains, dual.as_price_state(), settings, every, every
    )
    return PrimalAllocation.from_z(f, z, t)


def solve_p6_inner(
    scenario: Scenario,
    trajectory_or_gains: Trajectory | ChannelGains,
    settings: SolverSettings | None = None,
    *,
    seed_masks: Iterable[tuple[bool, ...]] = (),
) -> P6Solution:
    """Best binary mode assignment and allocation for a fixed trajectory.

    Alternates (a) an exact allocation solve restricted to the current
    assignment, (b) a price refresh from that solve's multipliers, and
    (c) a score-based reassignment, keeping the best partition seen.  The
    all-local and all-offload partitions are always evaluated as seeds,
    plus any caller-supplied ``seed_masks`` (an outer alternation passes
    its incumbent so the best-so-far objective cannot regress between
    rounds).  Each partition is solved at most once (solves are memoized);
    revisiting one means the alternation has cycled, which terminates the
    loop.

    Users assigned to offloading that end up with zero bits are flipped to
    local mode afterwards (never losing objective), so the returned
    assignment reproduces itself under the selection rule.
    """
    settings = settings or SolverSettings()
    M = scenario.num_users
    if isinstance(trajectory_or_gains, Trajectory):
        gains_obj = gains_for_trajectory(scenario, trajectory_or_gains)
    else:
        gains_obj = trajectory_or_gains

    memo: dict[tuple[bool, ...], P2Solution] = {}

    def restricted(mask: tuple[bool, ...]) -> P2Solution:
        if mask not in memo:
            memo[mask] = solve_p2(
                scenario,
                gains_obj,
                settings,
                allow_local=tuple(not b for b in mask),
                allow_offload=mask,
            )
        return memo[mask]

    visited: list[tuple[tuple[bool, ...], float]] = []
    best_mask: tuple[bool, ...] | None = None
    best: P2Solution | None = None

    def consider(mask: tuple[bool, ...]) -> P2Solution:
        nonlocal best_mask, best
        seen = mask in memo
        sol = restricted(mask)
        if not seen:
            visited.append((mask, sol.objective_bits))
        if best is None or sol.objective_bits > best.objective_bits:
            best_mask, best = mask, sol
        return sol

    all_local = consider(tuple([False] * M))
    all_off = consider(tuple([True] * M))
    for seed in seed_masks:
        if len(seed) != M:
            raise ValueError(f"seed mask length {len(seed)} != num_users {M}")
        consider(tuple(bool(b) for b in seed))

    # joint-mode prices make an informed starting point for the scores; the
    # seed solves' prices propose further partitions worth an exact look
    # (an exact solve prices its own offloaders to zero profit, so each
    # price state is informative mainly about deviations from itself)
    joint = solve_p2(scenario, gains_obj, settings)
    for priced in (all_local, all_off):
        consider(
            _reassign(
                scenario,
                gains_obj.values,
                BinaryDualState.from_price_state(priced.dual),
                settings,
            )
        )
    dual = BinaryDualState.from_price_state(joint.dual)
    mask = _reassign(scenario, gains_obj.values, dual, settings)

    seen_in_loop: set[tuple[bool, ...]] = set()
    prev_bits: float | None = None
    rounds = 0
    converged = False
    cycle_detected = False
    for _ in range(settings.max_mode_iters):
        if mask in seen_in_loop:
            cycle_detected = True
            converged = True
            break
        seen_in_loop.add(mask)
        sol = consider(mask)
        rounds += 1
        if prev_bits is not None and abs(sol.objective_bits - prev_bits) <= settings.tol_mode:
            converged = True
            break
        prev_bits = sol.objective_bits
        dual = BinaryDualState.from_price_state(sol.dual)
        mask = _reassign(scenario, gains_obj.values, dual, settings)

    assert best_mask is not None and best is not None
    # score proposals can miss partitions whose value hinges on cross-user
    # time contention, so finish with a single-flip walk from the incumbent
    # (each pass strictly improves, so it terminates well inside the cap)
    for _ in range(M + 1):
        anchor = best_mask
        for m in range(M):
            consider(tuple((not b) if i == m else b for i, b in enumerate(anchor)))
        if best_mask == anchor:
            break

    # silent offloaders earn nothing where they are; local mode can only help
    for _ in range(M):
        idle = [
            m
            for m in range(M)
            if best_mask[m] and best.per_user_bits[m] <= 0.0
        ]
        if not idle:
            break
        flipped = tuple(
            False if m in idle else b for m, b in enumerate(best_mask)
        )
        sol = consider(flipped)
        if sol.objective_bits < best.objective_bits:
            break  # numerics dipped; keep the better incumbent
        best_mask, best = flipped, sol

    assert best_mask is not None and best is not None
    return P6Solution(
        modes=ModeAssignment.from_offload_mask(best_mask),
        allocation=best.allocation,
        dual=BinaryDualState.from_price_state(best.dual),
        objective_bits=best.objective_bits,
        per_user_bits=best.per_user_bits.copy(),
        visited=tuple(visited),
        rounds=rounds,
        converged=converged,
        cycle_detected=cycle_detected,
    )


def _reassign(
    scenario: Scenario,
    gains: np.ndarray,
    dual: BinaryDualState,
    settings: SolverSettings,
) -> tuple[bool, ...]:
    """Score-based assignment of every user at the current prices."""
    cand = _candidate_allocation(scenario, gains, dual, settings)
    modes = [
        select_mode(*selection_scores(m, cand, gains, dual, scenario))
        for m in range(scenario.num_users)
    ]
    return tuple(mode == OFFLOAD for mode in modes)
