"""Fixed-trajectory resource allocation by Lagrangian duality.

For a fixed flight path the allocation problem — pick CPU frequencies,
offload powers, and slot time shares to maximize weighted computed bits
under per-user energy causality and a per-slot time budget — is convex
after substituting z = t * P.  This module solves it in two phases:

1. a faithful subgradient ascent on the dual (closed-form frequency/power
   responses, bang-bang time responses, diminishing steps), which locates
   the multiplier region but leaves the primal slightly infeasible; then
2. an exact repair: per-user directional water-filling over the energy
   prefixes (piecewise-constant multiplier levels found by bisection)
   alternated with a per-slot winner-take-all time split, which terminates
   at a primal-dual pair whose KKT residuals are at floating-point level.

The returned multipliers reproduce the closed forms bit-for-bit, so
stationarity, complementary slackness, and weak duality can all be checked
mechanically by tests and by the verification oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from uavmec.channel import ChannelGains, Trajectory, gains_for_trajectory, harvested_energy_prefix
from uavmec.scenario import Scenario, SolverSettings

__all__ = [
    "PrimalAllocation",
    "DualState",
    "P2Solution",
    "UnboundedResponseError",
    "optimal_cpu_frequency",
    "optimal_offload_power",
    "offload_threshold_gain",
    "offload_time_root",
    "subgradient_step",
    "run_dual_ascent",
    "solve_p2",
    "allocation_objective",
    "energy_prefix_slack",
    "dual_function_value",
]

_MU_LO = 1e-30
_MU_HI = 1e30
_BISECT_ITERS = 96


class UnboundedResponseError(ValueError):
    """A closed-form primal response was queried at a zero multiplier."""


@dataclass(frozen=True, eq=False)
class PrimalAllocation:
    """Feasible allocation: per-user, per-slot decisions, shape (M, N).

    ``energy_product`` is z = t * P, the per-slot offload energy rate; it is
    kept consistent with ``time_share`` and ``offload_power`` (zero wherever
    the time share is zero).
    """

    cpu_freq: np.ndarray
    offload_power: np.ndarray
    time_share: np.ndarray
    energy_product: np.ndarray

    def __post_init__(self) -> None:
        arrays = {}
        shape = None
        for name in ("cpu_freq", "offload_power", "time_share", "energy_product"):
            a = np.ascontiguousarray(np.asarray(getattr(self, name), dtype=np.float64))
            if shape is None:
                shape = a.shape
            if a.ndim != 2 or a.shape != shape:
                raise ValueError(f"{name}: expected shape {shape}, got {a.shape}")
            if not np.all(np.isfinite(a)):
                raise ValueError(f"{name}: entries must be finite")
            if name == "time_share":
                if np.any(a < 0) or np.any(a > 1 + 1e-12):
                    raise ValueError("time_share entries must lie in [0, 1]")
            elif np.any(a < 0):
                raise ValueError(f"{name}: entries must be nonnegative")
            a.setflags(write=False)
            arrays[name] = a
        on = arrays["time_share"] > 0
        z_expected = np.where(on, arrays["time_share"] * arrays["offload_power"], 0.0)
        if not np.allclose(arrays["energy_product"], z_expected, rtol=1e-9, atol=1e-300):
            raise ValueError("energy_product must equal time_share * offload_power")
        for name, a in arrays.items():
            object.__setattr__(self, name, a)

    @classmethod
    def zeros(cls, num_users: int, num_slots: int) -> "PrimalAllocation":
        z = np.zeros((num_users, num_slots))
        return cls(z, z.copy(), z.copy(), z.copy())

    @classmethod
    def from_z(cls, cpu_freq, energy_product, time_share) -> "PrimalAllocation":
        t = np.asarray(time_share, dtype=np.float64)
        z = np.asarray(energy_product, dtype=np.float64)
        power = np.divide(z, t, out=np.zeros_like(z), where=t > 0)
        return cls(cpu_freq, power, t, np.where(t > 0, z, 0.0))


@dataclass(frozen=True, eq=False)
class DualState:
    """Multipliers of the allocation dual.

    ``energy_price`` holds the per-(user, slot) energy-causality multipliers
    and ``time_price`` the per-slot time-budget multipliers.  ``mu`` caches
    the suffix sums of the energy prices, which every closed-form response
    consumes.
    """

    energy_price: np.ndarray
    time_price: np.ndarray
    mu: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        lam = np.ascontiguousarray(np.asarray(self.energy_price, dtype=np.float64))
        alpha = np.ascontiguousarray(np.asarray(self.time_price, dtype=np.float64))
        if lam.ndim != 2:
            raise ValueError("energy_price must be 2-D (users, slots)")
        if alpha.shape != (lam.shape[1],):
            raise ValueError("time_price must be 1-D with one entry per slot")
        if np.any(lam < 0) or np.any(alpha < 0):
            raise ValueError("multipliers must be nonnegative")
        if not (np.all(np.isfinite(lam)) and np.all(np.isfinite(alpha))):
            raise ValueError("multipliers must be finite")
        mu = np.ascontiguousarray(np.cumsum(lam[:, ::-1], axis=1)[:, ::-1])
        for a in (lam, alpha, mu):
            a.setflags(write=False)
        object.__setattr__(self, "energy_price", lam)
        object.__setattr__(self, "time_price", alpha)
        object.__setattr__(self, "mu", mu)


@dataclass(frozen=True, eq=False)
class P2Solution:
    """Outcome of a fixed-trajectory allocation solve."""

    allocation: PrimalAllocation
    dual: DualState
    objective_bits: float
    per_user_bits: np.ndarray
    subgradient_iters: int
    polish_rounds: int
    converged: bool
    caps_engaged_at_return: bool


# ---------------------------------------------------------------------------
# closed-form responses
# ---------------------------------------------------------------------------


def optimal_cpu_frequency(m: int, n: int, dual: DualState, scenario: Scenario) -> float:
    """Frequency maximizing the per-slot Lagrangian: sqrt(w / (3 C gamma mu)).

    Raises:
        UnboundedResponseError: if the suffix multiplier is zero (the
            Lagrangian grows without bound in f there).
    """
    user = scenario.users[m]
    mu = float(dual.mu[m, n])
    if mu <= 0.0:
        raise UnboundedResponseError(f"mu[{m},{n}] = 0: frequency response unbounded")
    return math.sqrt(user.weight / (3.0 * user.cpu_cycles_per_bit * user.capacitance_coeff * mu))


def optimal_offload_power(
    m: int, n: int, dual: DualState, gain: float, scenario: Scenario, time_share: float = 1.0
) -> float:
    """Power maximizing the per-slot Lagrangian, clamped at zero.

    Returns 0 when the slot's time share is 0; otherwise
    [w B / (nu ln2 mu) - noise / gain]^+.

    Raises:
        UnboundedResponseError: if the suffix multiplier is zero.
    """
    if time_share <= 0.0:
        return 0.0
    user = scenario.users[m]
    mu = float(dual.mu[m, n])
    if mu <= 0.0:
        raise UnboundedResponseError(f"mu[{m},{n}] = 0: power response unbounded")
    ideal = user.weight * scenario.physics.bandwidth / (
        user.overhead_factor * math.log(2.0) * mu
    )
    return max(0.0, ideal - scenario.physics.noise_power / gain)


def offload_threshold_gain(m: int, n: int, dual: DualState, scenario: Scenario) -> float:
    """Channel gain below which the optimal offload power is exactly zero."""
    user = scenario.users[m]
    mu = float(dual.mu[m, n])
    if mu <= 0.0:
        raise UnboundedResponseError(f"mu[{m},{n}] = 0: threshold undefined")
    return (
        scenario.physics.noise_power
        * user.overhead_factor
        * math.log(2.0)
        * mu
        / (user.weight * scenario.physics.bandwidth)
    )


def offload_time_root(
    m: int,
    n: int,
    z: float,
    gain: float,
    alpha_n: float,
    scenario: Scenario,
    tol: float = 1e-12,
) -> float:
    """Time share balancing the rate gain of more time against its price.

    Solves g(t) = log2(1 + h z / (noise t)) - h z / (ln2 (noise t + h z))
    - nu N alpha / (w B T) = 0 on (0, 1] by bisection; g is strictly
    decreasing in t for z > 0 so the root is unique when bracketed.
    Out-of-bracket cases clamp: z = 0 gives 0; a root above 1 gives 1.
    """
    if z < 0:
        raise ValueError("z must be nonnegative")
    if alpha_n < 0:
        raise ValueError("alpha_n must be nonnegative")
    if z == 0.0:
        return 0.0
    user = scenario.users[m]
    noise = scenario.physics.noise_power
    price = (
        user.overhead_factor
        * scenario.num_slots
        * alpha_n
        / (user.weight * scenario.physics.bandwidth * scenario.grid.horizon)
    )

    def g(t: float) -> float:
        x = gain * z / (noise * t)
        return math.log2(1.0 + x) - x / (math.log(2.0) * (1.0 + x)) - price

    if g(1.0) >= 0.0:
        return 1.0
    lo, hi = 1e-12, 1.0
    if g(lo) <= 0.0:
        return lo
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if g(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# vectorized internals
# ---------------------------------------------------------------------------


def _user_arrays(scenario: Scenario):
    users = scenario.users
    return (
        np.array([u.weight for u in users])[:, None],
        np.array([u.cpu_cycles_per_bit for u in users])[:, None],
        np.array([u.capacitance_coeff for u in users])[:, None],
        np.array([u.overhead_factor for u in users])[:, None],
    )


def _response(
    scenario: Scenario,
    gains: np.ndarray,
    dual: DualState,
    settings: SolverSettings,
    allow_local: np.ndarray,
    allow_offload: np.ndarray,
):
    """Capped dual-optimal primal response (vectorized over users, slots)."""
    w, cyc, cap_c, nu = _user_arrays(scenario)
    noise = scenario.physics.noise_power
    bw = scenario.physics.bandwidth
    delta = scenario.slot_length
    mu = dual.mu
    pos = mu > 0.0
    with np.errstate(divide="ignore", over="ignore"):
        f_raw = np.where(pos, np.sqrt(w / (3.0 * cyc * cap_c * np.where(pos, mu, 1.0))), np.inf)
        p_raw = np.where(
            pos, w * bw / (nu * math.log(2.0) * np.where(pos, mu, 1.0)) - noise / gains, np.inf
        )
    f = np.where(allow_local[:, None], np.minimum(f_raw, settings.cpu_freq_cap), 0.0)
    p = np.where(allow_offload[:, None], np.clip(p_raw, 0.0, settings.tx_power_cap), 0.0)
    capped = bool(
        np.any((f_raw > settings.cpu_freq_cap) & allow_local[:, None])
        or np.any((p_raw > settings.tx_power_cap) & allow_offload[:, None])
    )
    rate = w * (bw * delta / nu) * np.log2(1.0 + gains * p / noise)
    score = rate - mu * delta * p
    t = ((score > dual.time_price[None, :]) & (p > 0)).astype(np.float64)
    z = t * p
    return f, p, t, z, capped


def _consumed_prefix(scenario: Scenario, f: np.ndarray, z: np.ndarray) -> np.ndarray:
    _, _, cap_c, _ = _user_arrays(scenario)
    per_slot = scenario.slot_length * (cap_c * f**3 + z)
    return np.cumsum(per_slot, axis=1)


def subgradient_step(
    dual: DualState,
    primal: PrimalAllocation,
    gains: ChannelGains | np.ndarray,
    scenario: Scenario,
    iteration: int,
    step_scales: tuple[float, float] | None = None,
) -> DualState:
    """One projected subgradient update of both multiplier families.

    The energy subgradient is harvested-prefix minus consumed-prefix; the
    time subgradient is the per-slot leftover share.  Steps follow a
    diminishing base / sqrt(iteration) schedule, the base chosen per family
    to normalize the first iteration's largest component (or supplied via
    ``step_scales``).
    """
    if iteration < 1:
        raise ValueError("iteration count starts at 1")
    if not isinstance(gains, ChannelGains):
        gains = ChannelGains(np.asarray(gains, dtype=np.float64), "adhoc")
    energy = harvested_energy_prefix(scenario, gains)
    spent = _consumed_prefix(scenario, primal.cpu_freq, primal.energy_product)
    d_lam = energy - spent
    d_alpha = 1.0 - primal.time_share.sum(axis=0)
    if step_scales is None:
        lam_scale = 1.0 / max(float(np.abs(d_lam).max()), 1e-300)
        alpha_scale = 1.0 / max(float(np.abs(d_alpha).max()), 1e-300)
    else:
        lam_scale, alpha_scale = step_scales
    shrink = 1.0 / math.sqrt(iteration)
    lam = np.maximum(dual.energy_price - lam_scale * shrink * d_lam, 0.0)
    alpha = np.maximum(dual.time_price - alpha_scale * shrink * d_alpha, 0.0)
    return DualState(lam, alpha)


def run_dual_ascent(
    scenario: Scenario,
    gains: ChannelGains | np.ndarray,
    settings: SolverSettings | None = None,
    *,
    allow_local: tuple[bool, ...] | None = None,
    allow_offload: tuple[bool, ...] | None = None,
    iterations: int | None = None,
    target: float | None = None,
) -> tuple[DualState, float]:
    """Projected subgradient ascent on the dual; returns (dual, best value).

    Without a target the steps follow the diminishing base / sqrt(l)
    schedule normalized at the first iteration.  When the optimal value is
    known from an independent source, passing it as ``target`` switches to
    Polyak steps (gap over squared subgradient norm), which adapt the step
    to the multiplier scale and drive the dual value toward the target.
    """
    settings = settings or SolverSettings()
    if not isinstance(gains, ChannelGains):
        gains = ChannelGains(np.asarray(gains, dtype=np.float64), "adhoc")
    g = gains.values
    M = scenario.num_users
    energy = harvested_energy_prefix(scenario, gains)
    loc = np.array([True] * M if allow_local is None else list(allow_local))
    off = np.array([True] * M if allow_offload is None else list(allow_offload))
    dual = _initial_dual(scenario, settings)
    best_q = dual_function_value(scenario, g, energy, dual, loc, off)
    scales: tuple[float, float] | None = None
    total = iterations if iterations is not None else settings.max_subgradient_iters
    for it in range(1, total + 1):
        f, _p, t, z, _capped = _response(scenario, g, dual, settings, loc, off)
        spent = _consumed_prefix_rows(scenario, f, z)
        d_lam = energy - spent
        d_alpha = 1.0 - t.sum(axis=0)
        q = dual_function_value(scenario, g, energy, dual, loc, off)
        best_q = min(best_q, q)
        if target is not None and math.isfinite(q):
            # per-family Polyak steps: each block's share of the gap over its
            # own squared subgradient norm, so the disparate multiplier
            # scales (energy prices vs time prices) do not starve each other
            gap = max(q - target, 0.0)
            lam_norm = float(np.sum(d_lam**2))
            alpha_norm = float(np.sum(d_alpha**2))
            lam_step = 0.5 * gap / lam_norm if lam_norm > 0 else 0.0
            alpha_step = 0.5 * gap / alpha_norm if alpha_norm > 0 else 0.0
        else:
            if scales is None:
                scales = (
                    1.0 / max(float(np.abs(d_lam).max()), 1e-300),
                    1.0 / max(float(np.abs(d_alpha).max()), 1e-300),
                )
            shrink = 1.0 / math.sqrt(it)
            lam_step, alpha_step = scales[0] * shrink, scales[1] * shrink
        lam_new = np.maximum(dual.energy_price - lam_step * d_lam, 0.0)
        alpha_new = np.maximum(dual.time_price - alpha_step * d_alpha, 0.0)
        if np.array_equal(lam_new, dual.energy_price) and np.array_equal(
            alpha_new, dual.time_price
        ):
            break
        dual = DualState(lam_new, alpha_new)
    best_q = min(best_q, dual_function_value(scenario, g, energy, dual, loc, off))
    return dual, best_q


# ---------------------------------------------------------------------------
# exact per-user water-fill
# ---------------------------------------------------------------------------


def _fill_user(
    scenario: Scenario,
    m: int,
    gains_row: np.ndarray,
    energy_row: np.ndarray,
    t_row: np.ndarray,
    allow_local: bool,
    allow_offload: bool,
):
    """Exact single-user optimum for fixed time shares.

    Splits the horizon into segments of constant multiplier level; each
    level is the unique root of "segment consumption equals remaining
    budget at the segment's end", chosen among candidate ends to maximize
    the level (which keeps interior prefixes feasible).  Returns the
    per-slot frequencies, offload energies, and levels.
    """
    user = scenario.users[m]
    w, cyc, cap_c, nu = user.weight, user.cpu_cycles_per_bit, user.capacitance_coeff, user.overhead_factor
    noise = scenario.physics.noise_power
    bw = scenario.physics.bandwidth
    delta = scenario.slot_length
    N = gains_row.size

    f_row = np.zeros(N)
    z_row = np.zeros(N)
    mu_row = np.zeros(N)

    def consumption(mu_col: np.ndarray, slots: np.ndarray) -> np.ndarray:
        """Per-candidate cumulative consumption matrix diag, shape like mu_col.

        mu_col has one level per candidate end; rows of the (K, L) matrix
        give per-slot consumption at that level; entry k sums slots 0..k.
        """
        mu_c = mu_col[:, None]
        c = np.zeros((mu_col.size, slots.size))
        if allow_local:
            c += cap_c * (w / (3.0 * cyc * cap_c * mu_c)) ** 1.5
        if allow_offload:
            p = w * bw / (nu * math.log(2.0) * mu_c) - noise / gains_row[slots][None, :]
            c += t_row[slots][None, :] * np.maximum(p, 0.0)
        cums = np.cumsum(delta * c, axis=1)
        return cums[np.arange(mu_col.size), np.arange(mu_col.size)]

    start = 0
    spent = 0.0
    level_floor = math.inf  # levels must not increase across segments
    while start < N:
        slots = np.arange(start, N)
        capable = np.full(slots.size, allow_local)
        if allow_offload:
            capable |= t_row[slots] > 0
        reach = np.cumsum(capable) > 0
        if not reach.any():
            break  # nothing left to spend on; zero tail, zero levels
        targets = energy_row[slots] - spent
        lo = np.full(slots.size, _MU_LO)
        hi = np.full(slots.size, _MU_HI)
        for _ in range(_BISECT_ITERS):
            mid = np.sqrt(lo * hi)
            over = consumption(mid, slots) > targets
            lo = np.where(over, mid, lo)
            hi = np.where(~over, mid, hi)
        levels = np.where(reach, hi, -np.inf)  # hi side under-consumes
        levels = np.minimum(levels, level_floor)
        best = float(levels.max())
        k = int(np.flatnonzero(levels == best)[-1])  # ties: longest segment
        seg = np.arange(start, start + k + 1)
        mu_row[seg] = best
        if allow_local:
            f_row[seg] = math.sqrt(w / (3.0 * cyc * cap_c * best))
        if allow_offload:
            p_seg = np.maximum(
                w * bw / (nu * math.log(2.0) * best) - noise / gains_row[seg], 0.0
            )
            z_row[seg] = t_row[seg] * p_seg
        spent += float(delta * np.sum(cap_c * f_row[seg] ** 3 + z_row[seg]))
        level_floor = best
        start += k + 1
    return f_row, z_row, mu_row


def _phi(x: np.ndarray) -> np.ndarray:
    """Marginal-rate gap log2(1+x) - x / (ln2 (1+x)); increasing, phi(0)=0."""
    ln2 = math.log(2.0)
    return np.log1p(x) / ln2 - x / (ln2 * (1.0 + x))


def _time_split(scenario: Scenario, gains: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Exact per-slot time shares for fixed offload energies.

    With z held fixed the slot problem is concave and separable across
    slots; every active user's share satisfies a common marginal price, so
    the price is bisected per slot and each share recovered through the
    inverse of the marginal-rate gap.  Slots with a single active user take
    the whole slot; slots with none stay idle.
    """
    w, _, _, nu = _user_arrays(scenario)
    noise = scenario.physics.noise_power
    bw = scenario.physics.bandwidth
    horizon = scenario.grid.horizon
    M, N = gains.shape
    t = np.zeros((M, N))
    active = z > 0.0
    count = active.sum(axis=0)
    single = np.flatnonzero(count == 1)
    if single.size:
        rows = np.argmax(active[:, single], axis=0)
        t[rows, single] = 1.0
    multi = np.flatnonzero(count >= 2)
    if multi.size == 0:
        return t
    a = gains[:, multi] * z[:, multi] / noise
    act = active[:, multi]
    k = nu * N / (w * bw * horizon)  # price coefficient per user, (M, 1)
    with np.errstate(invalid="ignore"):
        alpha_hi = np.where(act, _phi(2.0 * M * a) / k, 0.0).max(axis=0)
    lo = np.zeros(multi.size)
    hi = alpha_hi
    for _ in range(72):
        mid = 0.5 * (lo + hi)
        target = k * mid[None, :]
        xlo = np.full((M, multi.size), 1e-30)
        xhi = np.full((M, multi.size), 1e60)
        for _ in range(72):
            xm = np.sqrt(xlo * xhi)
            under = _phi(xm) < target
            xlo = np.where(under, xm, xlo)
            xhi = np.where(~under, xm, xhi)
        share = np.where(act, np.minimum(1.0, a / xhi), 0.0)
        demand = share.sum(axis=0)
        too_low = demand > 1.0
        lo = np.where(too_low, mid, lo)
        hi = np.where(~too_low, mid, hi)
    target = k * hi[None, :]
    xlo = np.full((M, multi.size), 1e-30)
    xhi = np.full((M, multi.size), 1e60)
    for _ in range(72):
        xm = np.sqrt(xlo * xhi)
        under = _phi(xm) < target
        xlo = np.where(under, xm, xlo)
        xhi = np.where(~under, xm, xhi)
    t[:, multi] = np.where(act, np.minimum(1.0, a / xhi), 0.0)
    return t


def _slot_prices(
    scenario: Scenario,
    gains: np.ndarray,
    mu: np.ndarray,
    t: np.ndarray,
    allow_offload: np.ndarray,
) -> np.ndarray:
    """Time-budget multipliers consistent with the returned shares.

    The marginal slot value of every user at its own energy level prices a
    fully assigned slot; slots with spare time are free.
    """
    w, _, _, nu = _user_arrays(scenario)
    noise = scenario.physics.noise_power
    bw = scenario.physics.bandwidth
    delta = scenario.slot_length
    pos = mu > 0
    p = np.where(
        pos, w * bw / (nu * math.log(2.0) * np.where(pos, mu, 1.0)) - noise / gains, 0.0
    )
    p = np.maximum(p, 0.0) * allow_offload[:, None]
    rate = w * (bw * delta / nu) * np.log2(1.0 + gains * p / noise)
    score = np.maximum(rate - mu * delta * p, 0.0).max(axis=0)
    full = t.sum(axis=0) >= 1.0 - 1e-12
    return np.where(full, score, 0.0)


def _evaluate_bits(scenario: Scenario, gains: np.ndarray, f, z, t) -> tuple[float, np.ndarray]:
    w, cyc, _, nu = _user_arrays(scenario)
    noise = scenario.physics.noise_power
    bw = scenario.physics.bandwidth
    delta = scenario.slot_length
    local = delta * f / cyc
    on = t > 0
    snr = np.where(on, gains * z / (noise * np.where(on, t, 1.0)), 0.0)
    off = (bw * delta / nu) * t * np.log2(1.0 + snr)
    per_user = np.array([math.fsum((local + off)[m]) for m in range(f.shape[0])])
    total = math.fsum(float(w[m, 0]) * per_user[m] for m in range(f.shape[0]))
    return total, per_user


def allocation_objective(
    scenario: Scenario, gains: ChannelGains | np.ndarray, allocation: PrimalAllocation
) -> tuple[float, np.ndarray]:
    """Weighted-sum objective and raw per-user bits of an allocation."""
    g = gains.values if isinstance(gains, ChannelGains) else np.asarray(gains)
    return _evaluate_bits(
        scenario, g, allocation.cpu_freq, allocation.energy_product, allocation.time_share
    )


def energy_prefix_slack(
    scenario: Scenario, energy: np.ndarray, allocation: PrimalAllocation
) -> np.ndarray:
    """Relative slack of every energy-causality prefix (negative = violated)."""
    spent = _consumed_prefix(scenario, allocation.cpu_freq, allocation.energy_product)
    return (energy - spent) / np.maximum(energy, 1e-300)


def dual_function_value(
    scenario: Scenario,
    gains: np.ndarray,
    energy: np.ndarray,
    dual: DualState,
    allow_local: np.ndarray,
    allow_offload: np.ndarray,
) -> float:
    """Value of the dual function at the given multipliers (may be +inf)."""
    w, cyc, cap_c, nu = _user_arrays(scenario)
    noise = scenario.physics.noise_power
    bw = scenario.physics.bandwidth
    delta = scenario.slot_length
    mu = dual.mu
    pos = mu > 0
    if np.any(~pos & allow_local[:, None]) or np.any(~pos & allow_offload[:, None]):
        return math.inf
    safe_mu = np.where(pos, mu, 1.0)
    f = np.sqrt(w / (3.0 * cyc * cap_c * safe_mu))
    sup_f = np.where(allow_local[:, None], (2.0 / 3.0) * w * delta * f / cyc, 0.0)
    p = np.maximum(w * bw / (nu * math.log(2.0) * safe_mu) - noise / gains, 0.0)
    rate = w * (bw * delta / nu) * np.log2(1.0 + gains * p / noise)
    sup_zt = np.maximum(
        np.where(allow_offload[:, None], rate - mu * delta * p, 0.0)
        - dual.time_price[None, :],
        0.0,
    )
    return float(
        np.sum(sup_f)
        + np.sum(sup_zt)
        + np.sum(dual.energy_price * energy)
        + np.sum(dual.time_price)
    )


# ---------------------------------------------------------------------------
# the solver
# ---------------------------------------------------------------------------


def _initial_dual(scenario: Scenario, settings: SolverSettings) -> DualState:
    N = scenario.num_slots
    w, cyc, cap_c, _ = _user_arrays(scenario)
    remaining = np.arange(N, 0, -1)[None, :].astype(np.float64)
    f_ref = 1e9
    lam = w / (3.0 * cyc * cap_c * remaining * f_ref**2)
    return DualState(lam, np.zeros(N))


def _polish(
    scenario: Scenario,
    gains: np.ndarray,
    energy: np.ndarray,
    t_init: np.ndarray,
    allow_local: np.ndarray,
    allow_offload: np.ndarray,
    settings: SolverSettings,
):
    """Alternate exact water-fill and exact slot splitting until stationary.

    Both half-steps maximize the same concave objective over complementary
    variable blocks whose constraints do not interact, so the value is
    nondecreasing; the loop stops when a round's relative improvement falls
    below the polish tolerance (or the shares repeat exactly).  The best
    iterate is tracked anyway and returned with multipliers re-derived at
    its time shares, making the primal-dual pair self-consistent even when
    the round cap cuts the loop off.
    """
    M, N = gains.shape

    def fill_all(t: np.ndarray):
        f = np.zeros((M, N))
        z = np.zeros((M, N))
        mu = np.zeros((M, N))
        for m in range(M):
            f[m], z[m], mu[m] = _fill_user(
                scenario, m, gains[m], energy[m], t[m], bool(allow_local[m]), bool(allow_offload[m])
            )
        return f, z, mu

    t = t_init.copy()
    best = None
    prev_value = -math.inf
    rounds = 0
    converged = False
    for rounds in range(1, settings.max_polish_iters + 1):
        f, z, mu = fill_all(t)
        value, per_user = _evaluate_bits(scenario, gains, f, z, t)
        if best is None or value > best[0]:
            best = (value, per_user, f, z, t.copy(), mu)
        if value - prev_value <= settings.tol_polish * max(1.0, abs(value)):
            converged = True
            break
        prev_value = value
        t_next = _time_split(scenario, gains, z)
        if np.array_equal(t_next, t):
            converged = True
            break
        t = t_next
    assert best is not None
    value, per_user, f, z, t, mu = best
    # re-derive multipliers at the kept shares so the pair is consistent
    f, z, mu = fill_all(t)
    value, per_user = _evaluate_bits(scenario, gains, f, z, t)
    alpha = _slot_prices(scenario, gains, mu, t, allow_offload)
    lam = np.maximum(mu - np.concatenate([mu[:, 1:], np.zeros((M, 1))], axis=1), 0.0)
    return value, per_user, f, z, t, DualState(lam, alpha), rounds, converged


def _consumed_prefix_rows(scenario: Scenario, f: np.ndarray, z: np.ndarray) -> np.ndarray:
    _, _, cap_c, _ = _user_arrays(scenario)
    return np.cumsum(scenario.slot_length * (cap_c * f**3 + z), axis=1)


def solve_p2(
    scenario: Scenario,
    trajectory_or_gains: Trajectory | ChannelGains,
    settings: SolverSettings | None = None,
    *,
    allow_local: tuple[bool, ...] | None = None,
    allow_offload: tuple[bool, ...] | None = None,
    warm_start: PrimalAllocation | None = None,
) -> P2Solution:
    """Solve the fixed-trajectory allocation problem to KKT accuracy.

    Runs the subgradient phase to locate the multipliers, then the exact
    repair alternation; when a warm-start allocation is supplied its time
    shares seed a second repair branch and the better branch is returned.

    The result is always primal-feasible; ``converged`` is False only when
    the repair alternation was stopped by its round cap.
    """
    settings = settings or SolverSettings()
    M, N = scenario.num_users, scenario.num_slots
    if isinstance(trajectory_or_gains, Trajectory):
        gains_obj = gains_for_trajectory(scenario, trajectory_or_gains)
    else:
        gains_obj = trajectory_or_gains
    gains = gains_obj.values
    if gains.shape != (M, N):
        raise ValueError(f"gains shape {gains.shape} does not match scenario ({M}, {N})")
    energy = harvested_energy_prefix(scenario, gains_obj)
    loc = np.array([True] * M if allow_local is None else list(allow_local))
    off = np.array([True] * M if allow_offload is None else list(allow_offload))

    if scenario.uav.tx_power == 0.0 or energy[:, -1].max() <= 0.0:
        alloc = PrimalAllocation.zeros(M, N)
        dual = DualState(np.zeros((M, N)), np.zeros(N))
        return P2Solution(alloc, dual, 0.0, np.zeros(M), 0, 0, True, False)

    # phase 1: subgradient ascent from the reference-frequency initialization
    _dual, _best_q = run_dual_ascent(
        scenario,
        gains_obj,
        settings,
        allow_local=tuple(bool(b) for b in loc),
        allow_offload=tuple(bool(b) for b in off),
    )
    it = settings.max_subgradient_iters

    # phase 2: exact repair from an even share seed (keeps every
    # offload-capable user priced from the first fill)
    num_off = int(off.sum())
    t_seed = np.zeros((M, N))
    if num_off:
        t_seed[off] = 1.0 / num_off
    branches = [t_seed]
    if warm_start is not None:
        branches.append(np.asarray(warm_start.time_share, dtype=np.float64))
    outcome = None
    for t_init in branches:
        cand = _polish(scenario, gains, energy, t_init, loc, off, settings)
        if outcome is None or cand[0] > outcome[0]:
            outcome = cand
    assert outcome is not None
    value, per_user, f, z, t, dual_out, rounds, converged = outcome
    alloc = PrimalAllocation.from_z(f, z, t)
    caps_final = bool(
        np.any(alloc.cpu_freq > settings.cpu_freq_cap)
        or np.any(alloc.offload_power > settings.tx_power_cap)
    )
    return P2Solution(
        allocation=alloc,
        dual=dual_out,
        objective_bits=value,
        per_user_bits=per_user,
        subgradient_iters=it,
        polish_rounds=rounds,
        converged=converged,
        caps_engaged_at_return=caps_final,
    )
