"""Brute-force reference optimizers for tiny instances.

Everything here is deliberately independent of the production solvers: the
objective, the feasibility checks, and the search are re-derived from the
model definition so the two code paths can certify each other.  The search
enumerates grid points of (cpu frequency f, offload energy z = t * P, time
share t); feasibility is linear in those axes, and the transmit power is
recovered afterwards as P = z / t.

The grid optimum is a certified lower bound on the true optimum (it is a
feasible point).  Refinement passes re-grid around the incumbent, always
re-inserting it, so refining can only raise the reported optimum.

Scaling is a non-goal; clarity and determinism are.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from uavmec.channel import Trajectory, gains_for_trajectory, harvested_energy_prefix
from uavmec.scenario import Scenario

__all__ = [
    "GridSpec",
    "OracleResult",
    "BinaryEnumeration",
    "OracleBudgetError",
    "grid_search_p2",
    "enumerate_partitions_binary",
    "finite_difference_stationarity",
    "grid_search_waypoints",
    "waypoint_grid",
]

_FEAS_REL = 1e-12  # relative slack when testing energy prefixes on the grid


class OracleBudgetError(RuntimeError):
    """Raised when a requested search would exceed the evaluation budget."""


@dataclass(frozen=True)
class GridSpec:
    """Search grids for the brute-force reference.

    Attributes:
        f_values: candidate CPU frequencies in Hz, ascending, containing 0.
        z_values: candidate per-slot offload energies (t * P, in W); None
            derives a log grid per instance from the total harvested budget.
        t_values: candidate slot time shares in [0, 1], containing 0 and 1.
        waypoint_pitch: grid pitch in metres for trajectory searches.
        eval_budget: hard cap on enumerated combinations per search.
        refine_passes: zoom-in passes around the incumbent after the first
            sweep (each pass re-inserts the incumbent, so the reported
            optimum never decreases).
    """

    f_values: np.ndarray = field(
        default_factory=lambda: np.concatenate(([0.0], np.logspace(6, 10, 32)))
    )
    z_values: np.ndarray | None = None
    t_values: np.ndarray = field(default_factory=lambda: np.linspace(0.0, 1.0, 9))
    waypoint_pitch: float = 0.05
    eval_budget: float = 4e8
    refine_passes: int = 2
    state_cap: int = 8192
    menu_cap: int = 512

    def __post_init__(self) -> None:
        f = np.sort(np.asarray(self.f_values, dtype=np.float64))
        if f.size == 0 or f[0] != 0.0 or np.any(f < 0) or not np.all(np.isfinite(f)):
            raise ValueError("f_values must be finite, nonnegative, and contain 0")
        object.__setattr__(self, "f_values", f)
        if self.z_values is not None:
            z = np.sort(np.asarray(self.z_values, dtype=np.float64))
            if z.size == 0 or z[0] != 0.0 or np.any(z < 0) or not np.all(np.isfinite(z)):
                raise ValueError("z_values must be finite, nonnegative, and contain 0")
            object.__setattr__(self, "z_values", z)
        t = np.sort(np.asarray(self.t_values, dtype=np.float64))
        if t.size == 0 or t[0] != 0.0 or t[-1] != 1.0 or np.any((t < 0) | (t > 1)):
            raise ValueError("t_values must lie in [0, 1] and contain 0 and 1")
        object.__setattr__(self, "t_values", t)
        if not self.waypoint_pitch > 0:
            raise ValueError("waypoint_pitch must be positive")
        if not self.eval_budget > 0:
            raise ValueError("eval_budget must be positive")
        if self.refine_passes < 0:
            raise ValueError("refine_passes must be >= 0")
        if self.state_cap < 2:
            raise ValueError("state_cap must be >= 2")
        if self.menu_cap < 2:
            raise ValueError("menu_cap must be >= 2")


@dataclass(frozen=True)
class OracleResult:
    """Best feasible grid point found by :func:`grid_search_p2`.

    Attributes:
        objective_bits: weighted-sum computed bits at the incumbent.
        per_user_bits: raw (unweighted) bits per user, shape (M,).
        cpu_freq: per-slot CPU frequencies, shape (M, N).
        offload_energy: per-slot offload energy z = t * P, shape (M, N).
        time_share: per-slot time shares, shape (M, N).
        cell_slack_bits: first-order Lipschitz bound on how far the true
            optimum can sit above the incumbent, from the local grid pitch.
        evaluations: number of enumerated combinations across all passes.
    """

    objective_bits: float
    per_user_bits: np.ndarray
    cpu_freq: np.ndarray
    offload_energy: np.ndarray
    time_share: np.ndarray
    cell_slack_bits: float
    evaluations: int


@dataclass(frozen=True)
class BinaryEnumeration:
    """Outcome of the exhaustive 2^M mode search."""

    offload_mask: tuple[bool, ...]
    result: OracleResult
    per_partition_bits: tuple[float, ...]


# ---------------------------------------------------------------------------
# menus: per (user, slot, time-share) lists of (consumption, bits) choices
# ---------------------------------------------------------------------------


def _pareto_keep(cost: np.ndarray, value: np.ndarray) -> np.ndarray:
    """Indices of the efficient points: no cheaper point achieves >= value."""
    order = np.argsort(cost, kind="stable")
    v_sorted = value[order]
    run = np.maximum.accumulate(v_sorted)
    prev = np.concatenate(([-np.inf], run[:-1]))
    return order[v_sorted > prev]


class _Menu:
    """Grid choices of one (user, slot) cell, Pareto-pruned.

    ``loss`` bounds the weighted bits that menu thinning may have cost; it
    is carried into the search's reported slack.
    """

    __slots__ = ("cost", "wbits", "f", "z", "t", "loss")

    def __init__(self, cost, wbits, f, z, t, loss=0.0):
        self.cost = cost    # joules consumed in the slot
        self.wbits = wbits  # weighted bits earned in the slot
        self.f = f
        self.z = z
        self.t = t
        self.loss = loss


def _fold_menus(parts: list[_Menu], menu_cap: int) -> _Menu:
    """Union of same-slot menus across time shares, re-pruned and capped."""
    cost = np.concatenate([p.cost for p in parts])
    wbits = np.concatenate([p.wbits for p in parts])
    keep = _pareto_keep(cost, wbits)
    thin, fold_loss = _thin_states(wbits[keep], menu_cap)
    keep = keep[thin]
    return _Menu(
        cost[keep],
        wbits[keep],
        np.concatenate([p.f for p in parts])[keep],
        np.concatenate([p.z for p in parts])[keep],
        np.concatenate([p.t for p in parts])[keep],
        loss=max(p.loss for p in parts) + fold_loss,
    )


def _build_menu(
    sc: Scenario,
    m: int,
    gain: float,
    t: float,
    f_values: np.ndarray,
    z_values: np.ndarray,
    budget: float,
    allow_local: bool,
    allow_offload: bool,
    menu_cap: int,
) -> _Menu:
    user = sc.users[m]
    delta = sc.slot_length
    f_cand = f_values if allow_local else f_values[:1]
    z_cand = z_values if (allow_offload and t > 0.0) else z_values[:1]
    f_grid, z_grid = np.meshgrid(f_cand, z_cand, indexing="ij")
    f_flat = f_grid.ravel()
    z_flat = z_grid.ravel()
    cost = delta * (user.capacitance_coeff * f_flat**3 + z_flat)
    ok = cost <= budget * (1 + _FEAS_REL)
    f_flat, z_flat, cost = f_flat[ok], z_flat[ok], cost[ok]
    raw = delta * f_flat / user.cpu_cycles_per_bit
    if t > 0.0:
        snr = gain * z_flat / (sc.physics.noise_power * t)
        raw = raw + (sc.physics.bandwidth * delta * t / user.overhead_factor) * np.log2(1.0 + snr)
    wbits = user.weight * raw
    keep = _pareto_keep(cost, wbits)
    thin, loss = _thin_states(wbits[keep], menu_cap)
    keep = keep[thin]
    return _Menu(
        cost[keep], wbits[keep], f_flat[keep], z_flat[keep], np.full(keep.size, t), loss
    )


# ---------------------------------------------------------------------------
# per-user dynamic program over slots (energy-prefix feasibility)
# ---------------------------------------------------------------------------


def _extend_states(state_c, state_v, menu: _Menu, cap: float, state_cap: int, chunk: int = 256):
    """One DP step: add every menu choice to every state, prune, bound memory.

    Frontiers wider than ``state_cap`` are thinned value-spaced; the maximum
    objective this can cost is returned alongside so callers can report it.
    """
    pc, pv, pp, pk = [], [], [], []
    ops = 0
    chunk_loss = 0.0
    for start in range(0, menu.cost.size, chunk):
        mc = menu.cost[start : start + chunk]
        mv = menu.wbits[start : start + chunk]
        c = (state_c[:, None] + mc[None, :]).ravel()
        v = (state_v[:, None] + mv[None, :]).ravel()
        ops += c.size
        ok = np.flatnonzero(c <= cap)
        if ok.size == 0:
            continue
        keep = ok[_pareto_keep(c[ok], v[ok])]
        thin, loss = _thin_states(v[keep], state_cap)
        chunk_loss = max(chunk_loss, loss)
        keep = keep[thin]
        pc.append(c[keep])
        pv.append(v[keep])
        pp.append(keep // mc.size)
        pk.append(start + keep % mc.size)
    if not pc:  # cannot happen: the all-zero choice always fits
        raise AssertionError("empty feasible set despite zero choice")
    c = np.concatenate(pc)
    v = np.concatenate(pv)
    parent = np.concatenate(pp)
    choice = np.concatenate(pk)
    keep = _pareto_keep(c, v)
    thin, loss = _thin_states(v[keep], state_cap)
    keep = keep[thin]
    return c[keep], v[keep], parent[keep], choice[keep], ops, chunk_loss + loss


def _thin_states(state_v: np.ndarray, cap: int) -> tuple[np.ndarray, float]:
    """Value-spaced subsample of a frontier, with the exact loss it causes.

    States arrive sorted by cost with strictly increasing value.  Keeping a
    value-spaced subset preserves feasibility of any completion (the kept
    point just below a dropped one is cheaper), and costs at most the
    largest kept value-gap in objective, which is returned for accounting.
    """
    if state_v.size <= cap:
        return np.arange(state_v.size), 0.0
    targets = np.linspace(state_v[0], state_v[-1], cap)
    idx = np.unique(np.searchsorted(state_v, targets).clip(0, state_v.size - 1))
    if idx[-1] != state_v.size - 1:
        idx = np.append(idx, state_v.size - 1)
    gaps = np.diff(idx) > 1
    if gaps.any():
        # a dropped state falls back to the kept state below it; the worst
        # dropped value in a gap is the one just under the gap's upper edge
        upper = idx[1:][gaps]
        lower = idx[:-1][gaps]
        loss = float(np.max(state_v[upper - 1] - state_v[lower]))
    else:
        loss = 0.0
    return idx, loss


def _user_dp(menus: list[_Menu], prefix_budget: np.ndarray, state_cap: int):
    """Best weighted bits for one user given one menu per slot.

    Returns (best weighted bits, choice indices per slot, ops count,
    thinning loss bound) via a forward sweep that keeps Pareto-efficient
    partial states (cheaper prefixes can substitute for dearer ones, so the
    pruning is exact); overeager frontiers are thinned to ``state_cap``
    points, and the value this can cost is accumulated into the returned
    loss bound.
    """
    state_c = np.zeros(1)
    state_v = np.zeros(1)
    parents: list[np.ndarray] = []
    choices: list[np.ndarray] = []
    ops = 0
    loss = 0.0
    for n, menu in enumerate(menus):
        cap = prefix_budget[n] * (1 + _FEAS_REL)
        state_c, state_v, parent, choice, step_ops, step_loss = _extend_states(
            state_c, state_v, menu, cap, state_cap
        )
        ops += step_ops
        loss += step_loss + menu.loss
        parents.append(parent)
        choices.append(choice)
    best = int(np.argmax(state_v))
    picks = []
    idx = best
    for n in range(len(menus) - 1, -1, -1):
        picks.append(int(choices[n][idx]))
        idx = int(parents[n][idx])
    picks.reverse()
    return float(state_v[best]), picks, ops, loss


# ---------------------------------------------------------------------------
# the search itself
# ---------------------------------------------------------------------------


class _Incumbent:
    __slots__ = ("wbits", "f", "z", "t")

    def __init__(self, M, N):
        self.wbits = 0.0
        self.f = np.zeros((M, N))
        self.z = np.zeros((M, N))
        self.t = np.zeros((M, N))


def _search_pass(
    sc: Scenario,
    gains: np.ndarray,
    energy: np.ndarray,
    f_cand: list[list[np.ndarray]],
    z_cand: list[list[np.ndarray]],
    t_cand: list[list[np.ndarray]],
    allow_local: tuple[bool, ...],
    allow_offload: tuple[bool, ...],
    budget_left: float,
    state_cap: int,
    menu_cap: int,
) -> tuple[_Incumbent, int, float]:
    M, N = gains.shape
    menus: list[list[dict[float, _Menu]]] = []
    for m in range(M):
        per_slot = []
        for n in range(N):
            cell = {}
            for t in t_cand[m][n]:
                cell[float(t)] = _build_menu(
                    sc, m, gains[m, n], float(t), f_cand[m][n], z_cand[m][n],
                    energy[m, -1], allow_local[m], allow_offload[m], menu_cap,
                )
            per_slot.append(cell)
        menus.append(per_slot)

    if M == 1:
        # no contention: fold time shares into the per-slot menus and run
        # one dynamic program instead of enumerating share rows
        folded = [
            _fold_menus([menus[0][n][float(t)] for t in t_cand[0][n]], menu_cap)
            for n in range(N)
        ]
        v, picks, ops, loss = _user_dp(folded, energy[0], state_cap)
        if ops > budget_left:
            raise OracleBudgetError(
                f"enumerated {ops} combinations, budget allows {budget_left:.3g}"
            )
        best = _Incumbent(M, N)
        best.wbits = v
        for n in range(N):
            best.f[0, n] = folded[n].f[picks[n]]
            best.z[0, n] = folded[n].z[picks[n]]
            best.t[0, n] = folded[n].t[picks[n]]
        return best, ops, loss

    # enumerate per-user time-share rows; rows couple users through the
    # per-slot sum(t) <= 1 constraint, resolved on the row combination below
    rows_per_user: list[list[tuple[float, ...]]] = [
        [tuple(float(t) for t in row) for row in itertools.product(*t_cand[m])]
        for m in range(M)
    ]
    combo_count = 1.0
    for m in range(M):
        combo_count *= len(rows_per_user[m])
    if combo_count * N > budget_left:
        raise OracleBudgetError(
            f"~{combo_count:.3g} time-share combinations exceed the remaining "
            f"budget {budget_left:.3g}"
        )

    # solve every row's decoupled per-user problem once
    ops = 0
    thinning_loss = 0.0
    row_values: list[dict[tuple[float, ...], tuple[float, list[int]]]] = []
    for m in range(M):
        vals = {}
        worst = 0.0
        for row in rows_per_user[m]:
            v, picks, row_ops, row_loss = _user_dp(
                [menus[m][n][row[n]] for n in range(N)], energy[m], state_cap
            )
            ops += row_ops
            worst = max(worst, row_loss)
            if ops > budget_left:
                raise OracleBudgetError(
                    f"enumerated {ops} combinations, budget allows {budget_left:.3g}"
                )
            vals[row] = (v, picks)
        row_values.append(vals)
        thinning_loss += worst

    # combine users: best sum of row values subject to per-slot share sums
    best = _Incumbent(M, N)
    best_rows: list[tuple[float, ...]]
    if M == 1:
        rows = list(row_values[0].items())
        j = int(np.argmax([v for _, (v, _) in rows]))
        best.wbits = rows[j][1][0]
        best_rows = [rows[j][0]]
    elif M == 2:
        rows1 = list(row_values[0].items())
        rows2 = list(row_values[1].items())
        t1 = np.array([r for r, _ in rows1])  # (R1, N)
        t2 = np.array([r for r, _ in rows2])  # (R2, N)
        v1 = np.array([v for _, (v, _) in rows1])
        v2 = np.array([v for _, (v, _) in rows2])
        ok = np.all(t1[:, None, :] + t2[None, :, :] <= 1.0 + 1e-12, axis=2)
        ops += ok.size
        total = np.where(ok, v1[:, None] + v2[None, :], -np.inf)
        i, j = np.unravel_index(int(np.argmax(total)), total.shape)
        best.wbits = float(total[i, j])
        best_rows = [rows1[i][0], rows2[j][0]]
    else:
        found = None
        for combo in itertools.product(*[list(row_values[m].items()) for m in range(M)]):
            if any(
                sum(combo[m][0][n] for m in range(M)) > 1.0 + 1e-12 for n in range(N)
            ):
                continue
            total = sum(combo[m][1][0] for m in range(M))
            if found is None or total > best.wbits:
                best.wbits = total
                found = [combo[m][0] for m in range(M)]
        assert found is not None  # the all-zero row is always feasible
        best_rows = found

    for m in range(M):
        row = best_rows[m]
        _, picks = row_values[m][row]
        for n in range(N):
            menu = menus[m][n][row[n]]
            best.f[m, n] = menu.f[picks[n]]
            best.z[m, n] = menu.z[picks[n]]
            best.t[m, n] = row[n]
    return best, ops, thinning_loss


def _refine_axis(
    values: np.ndarray,
    star: float,
    base: np.ndarray,
    points: int = 25,
    cap: int = 120,
) -> np.ndarray:
    """Densify the axis around the incumbent without losing escape routes.

    Two bands are added each pass: a fine zoom between the incumbent's
    immediate neighbours (contracts as passes accumulate) and a fixed-ratio
    band one coarse cell wide either side.  The second band matters when
    coordinates are jointly constrained -- e.g. two frequencies sharing one
    energy prefix -- because then the incumbent can sit pinned against a
    budget edge and improving requires moving it a whole cell at once, which
    a purely contracting zoom can never offer.  The original lattice and the
    incumbent always survive the size cap, so the reported optimum never
    decreases across passes.
    """
    pos = values[values > 0]
    if star <= 0.0:
        if pos.size == 0:
            return np.array([0.0])
        zoom = np.geomspace(max(pos[0] / 256.0, 1e-300), pos[0], points)
        merged = np.unique(np.concatenate((values, [0.0], zoom)))
        return _prune_axis(merged, star, base, cap)
    idx = int(np.searchsorted(values, star))
    lo = values[idx - 1] if idx > 0 and values[idx - 1] > 0 else star / 16.0
    hi = values[idx + 1] if idx + 1 < values.size else star * 16.0
    lo = max(lo, star / 256.0)
    zoom = np.geomspace(max(lo, 1e-300), max(hi, lo * 1.0001), points)
    escape = star * 1.6 ** np.linspace(-1.0, 1.0, 13)
    merged = np.unique(np.concatenate((values, [0.0, star], zoom, escape)))
    return _prune_axis(merged, star, base, cap)


def _prune_axis(values: np.ndarray, star: float, base: np.ndarray, cap: int) -> np.ndarray:
    """Bound axis growth: keep the base lattice, the star, and the points
    log-nearest to the star."""
    if values.size <= cap:
        return values
    keep = np.unique(np.concatenate((base, [0.0, max(star, 0.0)])))
    extra = np.setdiff1d(values, keep)
    extra = extra[extra > 0]
    room = cap - keep.size
    if room > 0 and extra.size:
        ref = star if star > 0 else float(np.median(extra))
        order = np.argsort(np.abs(np.log(extra / ref)))
        keep = np.concatenate((keep, extra[order[:room]]))
    return np.unique(keep)


def _refine_shares(values: np.ndarray, star: float, points: int = 17) -> np.ndarray:
    """Time-share zoom: twice the finest pitch around the incumbent, anchored
    on a coarse global lattice so the share can still travel across cells."""
    gaps = np.diff(values)
    gaps = gaps[gaps > 0]
    pitch = float(gaps.min()) if gaps.size else 1.0
    around = star + 2.0 * pitch * np.linspace(-1.0, 1.0, points)
    around = np.clip(around, 0.0, 1.0)
    anchors = np.linspace(0.0, 1.0, 9)
    return np.unique(np.concatenate((anchors, [star], around)))


def _cell_slack(sc: Scenario, gains, inc: _Incumbent, f_cand, z_cand, t_cand) -> float:
    """First-order bound on (true optimum - incumbent) from local grid pitch."""

    def local_gap(values: np.ndarray, star: float) -> float:
        if values.size < 2:
            return 0.0
        idx = int(np.searchsorted(values, star))
        below = star - values[idx - 1] if idx > 0 else 0.0
        above = values[min(idx + 1, values.size - 1)] - star
        return max(below, above)

    delta = sc.slot_length
    total = 0.0
    for m, user in enumerate(sc.users):
        w = user.weight
        for n in range(gains.shape[1]):
            h = gains[m, n]
            fstar, zstar, tstar = inc.f[m, n], inc.z[m, n], inc.t[m, n]
            total += w * delta / user.cpu_cycles_per_bit * local_gap(f_cand[m][n], fstar)
            if tstar > 0.0:
                arg = sc.physics.noise_power * tstar + h * zstar
                lz = w * sc.physics.bandwidth * delta * tstar / user.overhead_factor \
                    * h / (math.log(2.0) * arg)
                total += lz * local_gap(z_cand[m][n], zstar)
                lt = w * sc.physics.bandwidth * delta / user.overhead_factor \
                    * math.log2(1.0 + h * zstar / (sc.physics.noise_power * tstar))
                total += lt * local_gap(t_cand[m][n], tstar)
    return total


def grid_search_p2(
    scenario: Scenario,
    trajectory: Trajectory,
    grid: GridSpec | None = None,
    *,
    allow_local: tuple[bool, ...] | None = None,
    allow_offload: tuple[bool, ...] | None = None,
) -> OracleResult:
    """Exhaustive grid search of the fixed-trajectory allocation problem.

    Enumerates (f, z, t) grid points against the energy-causality prefixes
    and the per-slot time-share budget, then zooms around the incumbent for
    ``grid.refine_passes`` passes.  Partition restrictions (for the binary
    search) are expressed through ``allow_local`` / ``allow_offload``.

    Raises:
        OracleBudgetError: if a pass would enumerate more than the budget.
    """
    grid = grid or GridSpec()
    M, N = scenario.num_users, scenario.num_slots
    allow_local = allow_local or tuple([True] * M)
    allow_offload = allow_offload or tuple([True] * M)
    gains = gains_for_trajectory(scenario, trajectory).values
    energy = harvested_energy_prefix(scenario, gains_for_trajectory(scenario, trajectory))

    if grid.z_values is not None:
        z0 = grid.z_values
    else:
        z_max = float(energy[:, -1].max()) / scenario.slot_length
        if z_max > 0:
            z0 = np.unique(np.concatenate(([0.0], np.geomspace(z_max * 1e-8, z_max, 32))))
        else:
            z0 = np.array([0.0])

    f_cand = [[grid.f_values.copy() for _ in range(N)] for _ in range(M)]
    z_cand = [[z0.copy() for _ in range(N)] for _ in range(M)]
    f_base = grid.f_values.copy()
    z_base = z0.copy()
    t_cand = [
        [
            (grid.t_values.copy() if allow_offload[m] else np.array([0.0]))
            for _ in range(N)
        ]
        for m in range(M)
    ]

    budget = float(grid.eval_budget)
    evaluations = 0
    last_loss = 0.0
    best: _Incumbent | None = None
    for p in range(grid.refine_passes + 1):
        if p > 0 and best is not None:
            # zoom every axis into the incumbent's cell (time shares only
            # where at most two users contend, to keep rows enumerable)
            share_points = 17 if (M == 1 and N <= 3) or N <= 2 else 9
            for m in range(M):
                for n in range(N):
                    f_cand[m][n] = _refine_axis(f_cand[m][n], best.f[m, n], f_base)
                    z_cand[m][n] = _refine_axis(z_cand[m][n], best.z[m, n], z_base)
                    if allow_offload[m] and M <= 2:
                        t_cand[m][n] = _refine_shares(
                            t_cand[m][n], best.t[m, n], share_points
                        )
        inc, used, pass_loss = _search_pass(
            scenario, gains, energy, f_cand, z_cand, t_cand,
            allow_local, allow_offload, budget - evaluations,
            grid.state_cap, grid.menu_cap,
        )
        evaluations += used
        last_loss = pass_loss
        if best is None or inc.wbits >= best.wbits:
            best = inc

    assert best is not None
    raw = np.zeros(M)
    delta = scenario.slot_length
    for m, user in enumerate(scenario.users):
        bits = delta * best.f[m] / user.cpu_cycles_per_bit
        on = best.t[m] > 0
        if on.any():
            snr = gains[m, on] * best.z[m, on] / (scenario.physics.noise_power * best.t[m, on])
            bits[on] += (
                scenario.physics.bandwidth * delta * best.t[m, on] / user.overhead_factor
            ) * np.log2(1.0 + snr)
        raw[m] = math.fsum(bits)
    slack = _cell_slack(scenario, gains, best, f_cand, z_cand, t_cand) + last_loss
    return OracleResult(
        objective_bits=float(best.wbits),
        per_user_bits=raw,
        cpu_freq=best.f,
        offload_energy=best.z,
        time_share=best.t,
        cell_slack_bits=float(slack),
        evaluations=evaluations,
    )


def enumerate_partitions_binary(
    scenario: Scenario,
    trajectory: Trajectory,
    grid: GridSpec | None = None,
) -> BinaryEnumeration:
    """Try all 2^M offload/local partitions; each is grid-searched exactly.

    Partitions are scanned in ascending bitmask order (all-local first) and
    ties keep the earlier partition, so results are deterministic.
    """
    M = scenario.num_users
    if M > 8:
        raise OracleBudgetError(f"2^{M} partitions is beyond the oracle's remit")
    best_mask: tuple[bool, ...] | None = None
    best_result: OracleResult | None = None
    per_partition = []
    for code in range(2**M):
        mask = tuple(bool(code >> m & 1) for m in range(M))
        result = grid_search_p2(
            scenario,
            trajectory,
            grid,
            allow_local=tuple(not b for b in mask),
            allow_offload=mask,
        )
        per_partition.append(result.objective_bits)
        if best_result is None or result.objective_bits > best_result.objective_bits:
            best_mask, best_result = mask, result
    assert best_mask is not None and best_result is not None
    return BinaryEnumeration(
        offload_mask=best_mask,
        result=best_result,
        per_partition_bits=tuple(per_partition),
    )


def finite_difference_stationarity(point, evaluator, step: float) -> np.ndarray:
    """Central-difference gradient of ``evaluator`` at ``point``.

    Args:
        point: coordinate vector (any array-like).
        evaluator: callable mapping a vector to a scalar.
        step: half-width of the central difference; must be > 0.

    Returns:
        Gradient estimate, same shape as ``point``.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    x = np.array(point, dtype=np.float64, copy=True)
    grad = np.zeros_like(x)
    flat = x.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + step
        up = float(evaluator(x.reshape(x.shape)))
        flat[i] = keep - step
        down = float(evaluator(x.reshape(x.shape)))
        flat[i] = keep
        gflat[i] = (up - down) / (2.0 * step)
    return grad


def waypoint_grid(xmin: float, xmax: float, ymin: float, ymax: float, pitch: float) -> np.ndarray:
    """All points of a rectangular grid with the given pitch, shape (K, 2)."""
    if not pitch > 0:
        raise ValueError("pitch must be positive")
    xs = np.arange(xmin, xmax + pitch * 0.5, pitch)
    ys = np.arange(ymin, ymax + pitch * 0.5, pitch)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    return np.column_stack([gx.ravel(), gy.ravel()])


def grid_search_waypoints(
    evaluate_batch,
    candidate_grids: list[np.ndarray],
    eval_budget: float = 1e8,
    chunk: int = 65536,
) -> tuple[np.ndarray, float]:
    """Exhaustive search over free-waypoint placements.

    Args:
        evaluate_batch: callable taking an array of shape (B, n_free, 2) and
            returning (B,) objective values; return -inf for infeasible rows.
        candidate_grids: one (K_i, 2) array of candidate positions per free
            waypoint.
        eval_budget: cap on the total number of combinations.
        chunk: combinations evaluated per call.

    Returns:
        (best free-waypoint array of shape (n_free, 2), best value).
    """
    sizes = [np.asarray(g, dtype=np.float64).reshape(-1, 2).shape[0] for g in candidate_grids]
    grids = [np.asarray(g, dtype=np.float64).reshape(-1, 2) for g in candidate_grids]
    total = 1
    for s in sizes:
        total *= s
    if total > eval_budget:
        raise OracleBudgetError(f"{total} waypoint combinations exceed budget {eval_budget:.3g}")
    n_free = len(grids)
    best_val = -np.inf
    best_idx = 0
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total))
        coords = np.empty((idx.size, n_free, 2))
        rem = idx.copy()
        for i in range(n_free - 1, -1, -1):
            coords[:, i, :] = grids[i][rem % sizes[i]]
            rem //= sizes[i]
        vals = np.asarray(evaluate_batch(coords), dtype=np.float64)
        j = int(np.argmax(vals))
        if vals[j] > best_val:
            best_val = float(vals[j])
            best_idx = int(idx[j])
    coords = np.empty((n_free, 2))
    rem = best_idx
    for i in range(n_free - 1, -1, -1):
        coords[i] = grids[i][rem % sizes[i]]
        rem //= sizes[i]
    return coords, best_val
