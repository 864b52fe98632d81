"""Trajectory refinement by successive convex minorization.

The true objective and the harvested-energy prefixes are non-concave in the
waypoints, but both depend on the track only through the per-slot squared
distances s[m, n] = ||q[n] - u_m||^2.  Around an incumbent track the rate
term admits an affine-in-s lower bound (tangent of a convex function of s)
and the harvested-gain sum admits another; substituting both turns each
refinement step into a convex program over the stacked free waypoints:
maximize an affine function of s subject to affine-in-s energy prefixes and
quadratic speed limits.  That subproblem is solved here directly with a
logarithmic-barrier interior method (damped Newton over ~2(N-1) variables),
and the outer loop re-linearizes until the track stops moving.

Because each bound touches the true function at the incumbent and never
exceeds it elsewhere, every accepted step is a certified ascent of the true
objective, and an allocation that was energy-feasible on the old track stays
feasible on the new one.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .allocation import PrimalAllocation
from .channel import ChannelGains, Trajectory, gains_for_trajectory
from .scenario import Scenario, SolverSettings

__all__ = [
    "LinearizationPoint",
    "TrajectorySubproblem",
    "SubproblemResult",
    "SCAResult",
    "linearize_around",
    "energy_lower_bound",
    "rate_lower_bound",
    "build_trajectory_subproblem",
    "solve_trajectory_subproblem",
    "sca_trajectory_loop",
    "blended_objective",
]

_LOG2E = 1.0 / math.log(2.0)


# ---------------------------------------------------------------------------
# linearization around an incumbent track
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LinearizationPoint:
    """Affine-in-s expansion data around one incumbent trajectory.

    Attributes:
        base: the expansion trajectory.
        user_positions: ground positions, shape (M, 2).
        sq_dist: ||q0[n] - u_m||^2 per (user, slot), shape (M, N).
        gain: channel power gains at the base, shape (M, N).
        energy_const: per-slot constant of the harvested-gain tangent,
            (H^2 + 2 s0) / (H^2 + s0)^2.
        energy_slope: per-slot slope magnitude 1 / (H^2 + s0)^2; the
            tangent reads energy_const - energy_slope * s.
        alt_sq: flight altitude squared.
        ref_gain: channel gain numerator (1 m reference).
        tx_power: beam power feeding the harvested-energy bound.
        noise: receiver noise power.
    """

    base: Trajectory
    user_positions: np.ndarray
    sq_dist: np.ndarray
    gain: np.ndarray
    energy_const: np.ndarray
    energy_slope: np.ndarray
    alt_sq: float
    ref_gain: float
    tx_power: float
    noise: float


def linearize_around(scenario: Scenario, trajectory: Trajectory) -> LinearizationPoint:
    """Cache the per-slot expansion coefficients for one incumbent track."""
    trajectory.validate_for(scenario)
    users = np.asarray([u.position for u in scenario.users])  # (M, 2)
    track = trajectory.waypoints[:-1]  # serving waypoints, (N, 2)
    s0 = ((track[None, :, :] - users[:, None, :]) ** 2).sum(axis=2)
    alt_sq = scenario.uav.altitude**2
    denom = alt_sq + s0
    return LinearizationPoint(
        base=trajectory,
        user_positions=users,
        sq_dist=s0,
        gain=scenario.physics.ref_gain / denom,
        energy_const=(alt_sq + 2.0 * s0) / denom**2,
        energy_slope=1.0 / denom**2,
        alt_sq=alt_sq,
        ref_gain=scenario.physics.ref_gain,
        tx_power=scenario.uav.tx_power,
        noise=scenario.physics.noise_power,
    )


def _sq_dist(lin: LinearizationPoint, candidate: Trajectory) -> np.ndarray:
    if candidate.num_slots != lin.base.num_slots:
        raise ValueError(
            f"candidate has {candidate.num_slots} slots, expansion point has "
            f"{lin.base.num_slots}"
        )
    track = candidate.waypoints[:-1]
    return ((track[None, :, :] - lin.user_positions[:, None, :]) ** 2).sum(axis=2)


def energy_lower_bound(
    lin: LinearizationPoint, candidate: Trajectory, m: int, n: int
) -> float:
    """Certified lower bound on the beamed-gain prefix for user m, slot n.

    Evaluates tx_power * ref_gain * sum_{i<=n} tangent(s[m, i]).  The map
    s -> 1/(H^2 + s) is convex, so its tangent lies below it everywhere and
    touches at the expansion point; the returned value therefore never
    exceeds tx_power * sum_{i<=n} gain[m, i] at the candidate track.
    """
    s = _sq_dist(lin, candidate)[m, : n + 1]
    tangent = lin.energy_const[m, : n + 1] - lin.energy_slope[m, : n + 1] * s
    return lin.tx_power * lin.ref_gain * float(math.fsum(tangent))


def rate_lower_bound(
    lin: LinearizationPoint, candidate: Trajectory, m: int, n: int, power: float
) -> float:
    """Certified lower bound on log2(1 + SNR) for user m at slot n.

    The true rate is convex in the squared user distance, so its tangent at
    the expansion point minorizes it: exact at the base, below elsewhere.
    All distances are measured to user m's position.
    """
    if power < 0:
        raise ValueError("power must be nonnegative")
    s0 = float(lin.sq_dist[m, n])
    s = float(_sq_dist(lin, candidate)[m, n])
    num = lin.ref_gain * power
    base_val = math.log2(1.0 + num / (lin.noise * (lin.alt_sq + s0)))
    slope = num * _LOG2E / (
        (lin.noise * lin.alt_sq + num + lin.noise * s0) * (lin.alt_sq + s0)
    )
    return base_val - slope * (s - s0)


# ---------------------------------------------------------------------------
# the convex subproblem
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TrajectorySubproblem:
    """One convex refinement step, expressed in squared user distances.

    The maximized surrogate is const - sum(rate_weight * s), so every
    objective coefficient on s is nonpositive; the prefix constraints read
    sum_{i<=n} energy_slope_scaled[m, i] * s[m, i] <= energy_bound[m, n]
    and are affine in s, hence convex in the stacked waypoints.  Endpoints
    are eliminated: only the waypoints serving slots 2..N are variables.
    """

    base: Trajectory
    user_positions: np.ndarray  # (M, 2)
    rate_weight: np.ndarray  # (M, N) >= 0: minimization weight on s
    energy_slope_scaled: np.ndarray  # (M, N) > 0
    energy_bound: np.ndarray  # (M, N)
    step_limit_sq: float

    def __post_init__(self) -> None:
        if np.any(self.rate_weight < 0):
            raise ValueError("rate weights must be nonnegative")
        if not self.step_limit_sq > 0:
            raise ValueError("step limit must be positive")


@dataclass(frozen=True)
class SubproblemResult:
    """Outcome of one barrier solve.

    Attributes:
        trajectory: feasible track, never worse than the base on the
            surrogate objective.
        improved: the surrogate strictly increased.
        converged: the barrier ran to its duality target from a strictly
            interior start (False: the base came back untouched).
        surrogate_gain: surrogate objective improvement, >= 0.
        stage_values: scaled surrogate cost after each barrier stage.
        newton_iterations: damped-Newton steps taken in total.
    """

    trajectory: Trajectory
    improved: bool
    converged: bool
    surrogate_gain: float
    stage_values: tuple[float, ...] = field(default=())
    newton_iterations: int = 0


def build_trajectory_subproblem(
    scenario: Scenario,
    lin: LinearizationPoint,
    allocation: PrimalAllocation,
    offload_share: np.ndarray | None = None,
) -> TrajectorySubproblem:
    """Freeze an allocation into the affine-in-s refinement subproblem.

    ``offload_share`` blends each user's spending between its local and
    offload meters and scales its rate reward; None charges both meters in
    full, which is the joint-mode accounting.
    """
    M, N = lin.sq_dist.shape
    if offload_share is None:
        local_scale = np.ones(M)
        off_scale = np.ones(M)
    else:
        rho = np.asarray(offload_share, dtype=np.float64)
        if rho.shape != (M,) or np.any((rho < 0) | (rho > 1)):
            raise ValueError("offload_share must be M values in [0, 1]")
        local_scale = 1.0 - rho
        off_scale = rho

    w = np.array([u.weight for u in scenario.users])[:, None]
    nu = np.array([u.overhead_factor for u in scenario.users])[:, None]
    gamma = np.array([u.capacitance_coeff for u in scenario.users])[:, None]

    t = allocation.time_share
    z = allocation.energy_product
    power = np.divide(z, t, out=np.zeros_like(z), where=t > 0)
    num = lin.ref_gain * power
    slope = np.divide(
        num * _LOG2E,
        (lin.noise * lin.alt_sq + num + lin.noise * lin.sq_dist)
        * (lin.alt_sq + lin.sq_dist),
        out=np.zeros_like(num),
        where=num > 0,
    )
    bits_per_rate = (
        w * scenario.physics.bandwidth * scenario.grid.horizon
        * t * off_scale[:, None] / (nu * N)
    )
    rate_weight = bits_per_rate * slope

    harvest_scale = scenario.physics.eh_efficiency * lin.tx_power * lin.ref_gain
    spend = np.cumsum(
        local_scale[:, None] * gamma * allocation.cpu_freq**3
        + off_scale[:, None] * z,
        axis=1,
    )
    return TrajectorySubproblem(
        base=lin.base,
        user_positions=lin.user_positions,
        rate_weight=rate_weight,
        energy_slope_scaled=harvest_scale * lin.energy_slope,
        energy_bound=harvest_scale * np.cumsum(lin.energy_const, axis=1) - spend,
        step_limit_sq=scenario.step_budget() ** 2,
    )


# ---------------------------------------------------------------------------
# barrier solver
# ---------------------------------------------------------------------------


class _Geometry:
    """Index bookkeeping between free waypoints, serving slots, and steps."""

    def __init__(self, sub: TrajectorySubproblem):
        wp = sub.base.waypoints
        self.N = wp.shape[0] - 1
        self.free = self.N - 1  # waypoints serving slots 2..N
        self.start = wp[0]
        self.end = wp[-1]
        self.x0 = wp[1 : self.N].copy()  # (free, 2)
        self.users = sub.user_positions

    def waypoints(self, x: np.ndarray) -> np.ndarray:
        return np.vstack([self.start[None, :], x, self.end[None, :]])

    def sq_dist(self, x: np.ndarray) -> np.ndarray:
        track = np.vstack([self.start[None, :], x])
        return ((track[None, :, :] - self.users[:, None, :]) ** 2).sum(axis=2)

    def steps_sq(self, x: np.ndarray) -> np.ndarray:
        return (np.diff(self.waypoints(x), axis=0) ** 2).sum(axis=1)


def _slacks(sub, geo, x, bound, limit_sq):
    slack_e = bound - np.cumsum(sub.energy_slope_scaled * geo.sq_dist(x), axis=1)
    slack_s = limit_sq - geo.steps_sq(x)
    return slack_e, slack_s


def _barrier_value(sub, geo, d, bound, limit_sq, x, mu) -> float:
    slack_e, slack_s = _slacks(sub, geo, x, bound, limit_sq)
    if slack_e.min() <= 0.0 or slack_s.min() <= 0.0:
        return math.inf
    cost = float((d * geo.sq_dist(x)).sum())
    return cost - mu * (float(np.log(slack_e).sum()) + float(np.log(slack_s).sum()))


def _barrier_terms(sub, geo, d, bound, limit_sq, x, mu):
    """Value, gradient, and Hessian of the barrier-augmented cost at x."""
    M, N = sub.rate_weight.shape
    free, dim = geo.free, 2 * geo.free
    track = np.vstack([geo.start[None, :], x])
    diff = track[None, :, :] - geo.users[:, None, :]  # (M, N, 2)
    s = (diff**2).sum(axis=2)
    G = sub.energy_slope_scaled

    slack_e = bound - np.cumsum(G * s, axis=1)
    wp = geo.waypoints(x)
    deltas = np.diff(wp, axis=0)  # (N, 2)
    slack_s = limit_sq - (deltas**2).sum(axis=1)
    if slack_e.min() <= 0.0 or slack_s.min() <= 0.0:
        return math.inf, None, None

    cost = float((d * s).sum())
    value = cost - mu * (float(np.log(slack_e).sum()) + float(np.log(slack_s).sum()))

    # objective: sum d[m, c] s[m, c]; column c >= 1 touches free point c - 1
    grad = (2.0 * (d[:, 1:, None] * diff[:, 1:, :]).sum(axis=0)).ravel()
    hess_diag = np.repeat(2.0 * d[:, 1:].sum(axis=0), 2)

    # constraint gradient rows, stacked for one GEMM
    n_rows = M * (N - 1) + N
    A = np.zeros((n_rows, dim))
    w1 = np.empty(n_rows)  # mu / slack
    w2 = np.empty(n_rows)  # mu / slack^2
    P = (2.0 * G[:, 1:, None] * diff[:, 1:, :]).reshape(M, dim)
    r = 0
    for m in range(M):
        for n in range(1, N):
            A[r, : 2 * n] = P[m, : 2 * n]
            w1[r] = mu / slack_e[m, n]
            w2[r] = mu / slack_e[m, n] ** 2
            r += 1
    # prefix-energy curvature: constraint (m, n) carries 2 G[m, c] I on every
    # free column c <= n, summed via suffix sums of the barrier weights
    suffix = np.cumsum((mu / slack_e)[:, ::-1], axis=1)[:, ::-1]  # (M, N)
    hess_diag += np.repeat((2.0 * G[:, 1:] * suffix[:, 1:]).sum(axis=0), 2)

    speed_first = r
    for j in range(N):
        dvec = 2.0 * deltas[j]
        if 1 <= j:  # waypoint j is free index j - 1
            A[r, 2 * (j - 1) : 2 * j] = -dvec
        if j <= free - 1:  # waypoint j + 1 is free index j
            A[r, 2 * j : 2 * j + 2] = dvec
        w1[r] = mu / slack_s[j]
        w2[r] = mu / slack_s[j] ** 2
        r += 1

    grad = grad + A.T @ w1
    hess = (A * w2[:, None]).T @ A
    hess[np.diag_indices(dim)] += hess_diag
    # speed curvature: +-2I blocks on the one or two free endpoints
    for j in range(N):
        wj = w1[speed_first + j]
        a = j - 1 if 1 <= j <= free else None
        b = j if j <= free - 1 else None
        for idx in (a, b):
            if idx is not None:
                hess[2 * idx, 2 * idx] += 2.0 * wj
                hess[2 * idx + 1, 2 * idx + 1] += 2.0 * wj
        if a is not None and b is not None:
            for k in range(2):
                hess[2 * a + k, 2 * b + k] -= 2.0 * wj
                hess[2 * b + k, 2 * a + k] -= 2.0 * wj
    return value, grad, hess


def _newton_minimize(sub, geo, d, bound, limit_sq, x0, mu, max_iters: int = 60):
    """Damped Newton descent of the barrier-augmented cost from x0."""
    x = x0.copy()
    dim = 2 * geo.free
    value, grad, hess = _barrier_terms(sub, geo, d, bound, limit_sq, x, mu)
    for it in range(max_iters):
        ridge = 0.0
        while True:
            try:
                step = np.linalg.solve(
                    hess + ridge * np.eye(dim) if ridge else hess, -grad
                )
                break
            except np.linalg.LinAlgError:
                ridge = max(ridge * 10.0, 1e-10 * max(np.trace(hess) / dim, 1.0))
        slope = float(grad @ step)
        if not math.isfinite(slope) or -0.5 * slope < 1e-12 * max(1.0, abs(value)):
            return x, it
        alpha, accepted = 1.0, False
        for _ in range(50):
            cand = x + alpha * step.reshape(geo.free, 2)
            v_new = _barrier_value(sub, geo, d, bound, limit_sq, cand, mu)
            if v_new <= value + 0.25 * alpha * slope:
                x = cand
                value, grad, hess = _barrier_terms(sub, geo, d, bound, limit_sq, x, mu)
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            return x, it + 1
    return x, max_iters


def solve_trajectory_subproblem(
    sub: TrajectorySubproblem, settings: SolverSettings | None = None
) -> SubproblemResult:
    """Maximize the affine-in-s surrogate with a log-barrier Newton method.

    The incumbent may touch constraint boundaries, so binding constraints
    are first relaxed by a hair (energy by ``settings.feasibility_margin``
    relative, speed by 1e-14 relative) to admit a strictly interior start;
    the relaxations are small enough that every returned step still fits
    the physical budget within 1e-12.  A constant surrogate short-circuits:
    with nothing to gain, the incumbent is already optimal and the solver
    must not wander off it.
    """
    settings = settings or SolverSettings()
    geo = _Geometry(sub)
    if geo.free <= 0 or float(sub.rate_weight.max(initial=0.0)) == 0.0:
        return SubproblemResult(sub.base, False, True, 0.0)

    d = sub.rate_weight / float(sub.rate_weight.max())
    x = geo.x0.copy()

    lhs0 = np.cumsum(sub.energy_slope_scaled * geo.sq_dist(x), axis=1)
    scale = np.maximum(np.abs(sub.energy_bound), np.abs(lhs0))
    margin = settings.feasibility_margin * np.maximum(scale, 1e-300)
    bound = np.maximum(sub.energy_bound, lhs0 + margin)
    steps0 = geo.steps_sq(x)
    limit_sq = max(sub.step_limit_sq, float(steps0.max()) * (1.0 + 1e-14))
    limit_sq += 1e-14 * sub.step_limit_sq

    slack_e, slack_s = _slacks(sub, geo, x, bound, limit_sq)
    if slack_e.min() <= 0.0 or slack_s.min() <= 0.0:
        return SubproblemResult(sub.base, False, False, 0.0)

    n_cons = slack_e.size + slack_s.size
    mu = settings.barrier_initial
    stage_values: list[float] = []
    newton_total = 0
    while True:
        x, iters = _newton_minimize(sub, geo, d, bound, limit_sq, x, mu)
        newton_total += iters
        stage_values.append(float((d * geo.sq_dist(x)).sum()))
        if n_cons * mu < settings.barrier_duality_tol:
            break
        mu *= settings.barrier_shrink

    # physical-feasibility repair: pull toward the incumbent if numerics
    # nudged anything past the relaxed envelope (the blend of two points
    # stays feasible for every convex constraint the endpoints satisfy)
    if _worst_violation(sub, geo, x, bound, limit_sq) > 0.0:
        lo, hi = 0.0, 1.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            blend = geo.x0 + mid * (x - geo.x0)
            if _worst_violation(sub, geo, blend, bound, limit_sq) > 0.0:
                hi = mid
            else:
                lo = mid
        x = geo.x0 + lo * (x - geo.x0)

    gain = float(
        (sub.rate_weight * (geo.sq_dist(geo.x0) - geo.sq_dist(x))).sum()
    )
    if not gain > 0.0:
        return SubproblemResult(
            sub.base, False, True, 0.0, tuple(stage_values), newton_total
        )
    return SubproblemResult(
        Trajectory(geo.waypoints(x)),
        True,
        True,
        gain,
        tuple(stage_values),
        newton_total,
    )


def _worst_violation(sub, geo, x, bound, limit_sq) -> float:
    slack_e, slack_s = _slacks(sub, geo, x, bound, limit_sq)
    worst_e = float((-slack_e / np.maximum(np.abs(bound), 1e-300)).max())
    worst_s = float((-slack_s).max() / limit_sq)
    worst = max(worst_e, worst_s)
    return worst if worst > 1e-12 else 0.0


# ---------------------------------------------------------------------------
# outer successive-approximation loop
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SCAResult:
    """Converged track and its audit trail.

    Attributes:
        trajectory: final feasible track (endpoints pinned exactly).
        objective_bits: true blended objective at the final track.
        objective_trace: true objective after every accepted iterate,
            nondecreasing; position 0 is the initial track.
        displacement_trace: total waypoint movement per accepted iterate.
        iterations: accepted refinement steps.
        converged: the track stopped moving before the iteration cap.
    """

    trajectory: Trajectory
    objective_bits: float
    objective_trace: tuple[float, ...]
    displacement_trace: tuple[float, ...]
    iterations: int
    converged: bool


def blended_objective(
    scenario: Scenario,
    gains: ChannelGains | np.ndarray,
    allocation: PrimalAllocation,
    offload_share: np.ndarray | None = None,
) -> float:
    """Weighted bits of a fixed allocation, optionally mode-blended.

    With ``offload_share`` rho, user m's local bits are scaled by 1 - rho_m
    and its offload bits by rho_m; None counts both in full and then agrees
    exactly with the joint-mode objective evaluator.
    """
    g = gains.values if isinstance(gains, ChannelGains) else np.asarray(gains)
    M, _ = g.shape
    if offload_share is None:
        local_scale = np.ones(M)
        off_scale = np.ones(M)
    else:
        rho = np.asarray(offload_share, dtype=np.float64)
        local_scale, off_scale = 1.0 - rho, rho
    delta = scenario.slot_length
    noise = scenario.physics.noise_power
    weighted = []
    for m, user in enumerate(scenario.users):
        bits = local_scale[m] * delta * allocation.cpu_freq[m] / user.cpu_cycles_per_bit
        t = allocation.time_share[m]
        z = allocation.energy_product[m]
        on = t > 0
        if on.any():
            snr = g[m, on] * z[on] / (noise * t[on])
            bits = bits.copy()
            bits[on] += off_scale[m] * (
                (scenario.physics.bandwidth * delta / user.overhead_factor)
                * t[on]
                * np.log2(1.0 + snr)
            )
        weighted.append(user.weight * math.fsum(bits))
    return math.fsum(weighted)


def sca_trajectory_loop(
    scenario: Scenario,
    initial: Trajectory,
    allocation: PrimalAllocation,
    settings: SolverSettings | None = None,
    *,
    offload_share: np.ndarray | None = None,
    trace_path: str | None = None,
) -> SCAResult:
    """Refine the track until it stops moving, never losing true objective.

    Each round expands around the incumbent, solves the convex surrogate,
    and accepts the result only if the exactly evaluated objective did not
    drop (the surrogate guarantees that mathematically; the check makes it
    bitwise).  Terminates when the total waypoint displacement falls below
    ``settings.tol_trajectory``, or at the iteration cap with the flag
    cleared.  ``trace_path`` dumps every accepted track as CSV rows
    (iter, slot, x, y) for path plotting.
    """
    settings = settings or SolverSettings()
    initial.validate_for(scenario)
    base = initial
    base_value = blended_objective(
        scenario, gains_for_trajectory(scenario, base), allocation, offload_share
    )
    trace: list[tuple[int, int, float, float]] = []
    values = [base_value]
    displacements: list[float] = []
    converged = False
    iterations = 0
    _record_trace(trace, 0, base)
    for _ in range(settings.max_sca_iters):
        lin = linearize_around(scenario, base)
        sub = build_trajectory_subproblem(scenario, lin, allocation, offload_share)
        result = solve_trajectory_subproblem(sub, settings)
        cand = result.trajectory
        cand_value = blended_objective(
            scenario, gains_for_trajectory(scenario, cand), allocation, offload_share
        )
        if cand_value < base_value:
            converged = True  # surrogate exhausted down to rounding: keep incumbent
            break
        moved = float(
            np.linalg.norm(cand.waypoints[:-1] - base.waypoints[:-1], axis=1).sum()
        )
        iterations += 1
        base, base_value = cand, cand_value
        values.append(base_value)
        displacements.append(moved)
        _record_trace(trace, iterations, base)
        if moved <= settings.tol_trajectory:
            converged = True
            break
    if trace_path is not None:
        with open(trace_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iter", "slot", "x", "y"])
            writer.writerows(trace)
    return SCAResult(
        trajectory=base,
        objective_bits=base_value,
        objective_trace=tuple(values),
        displacement_trace=tuple(displacements),
        iterations=iterations,
        converged=converged,
    )


def _record_trace(trace, iteration: int, trajectory: Trajectory) -> None:
    for n, (px, py) in enumerate(trajectory.waypoints, start=1):
        trace.append((iteration, n, float(px), float(py)))
