"""Channel gains, harvested energy, and uplink capacity.

The air-ground link is line-of-sight: the power gain from the UAV at
horizontal displacement d (altitude H) to a ground user is
``ref_gain / (H^2 + d^2)``.  The same gain drives both directions — downlink
energy delivery and uplink offloading.

A :class:`Trajectory` is the UAV's ground track: ``slots + 1`` waypoints, the
first pinned to the mission start and the last to the mission end.  Slot n is
served from waypoint n (0-indexed: ``waypoints[n-1]``); the final waypoint
only closes the path and radiates no slot.
"""

from __future__ import annotations

import hashlib
import math
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from uavmec.scenario import Scenario

__all__ = [
    "Trajectory",
    "ChannelGains",
    "straight_line_trajectory",
    "channel_gain",
    "gains_for_trajectory",
    "harvested_energy_prefix",
    "offload_capacity",
]


class TrajectoryError(ValueError):
    """Raised when a waypoint sequence violates the mission envelope."""


@dataclass(frozen=True)
class Trajectory:
    """An immutable ground track of ``slots + 1`` waypoints.

    Attributes:
        waypoints: float64 array of shape (slots + 1, 2), write-protected.
    """

    waypoints: np.ndarray

    def __post_init__(self) -> None:
        wp = np.ascontiguousarray(np.asarray(self.waypoints, dtype=np.float64))
        if wp.ndim != 2 or wp.shape[1] != 2 or wp.shape[0] < 2:
            raise TrajectoryError(f"waypoints must have shape (slots+1, 2), got {wp.shape}")
        if not np.all(np.isfinite(wp)):
            raise TrajectoryError("waypoints must be finite")
        wp.setflags(write=False)
        object.__setattr__(self, "waypoints", wp)

    @property
    def num_slots(self) -> int:
        return self.waypoints.shape[0] - 1

    def steps(self) -> np.ndarray:
        """Per-slot displacement lengths, shape (slots,)."""
        return np.linalg.norm(np.diff(self.waypoints, axis=0), axis=1)

    def fingerprint(self) -> str:
        return hashlib.sha256(self.waypoints.tobytes()).hexdigest()

    def validate_for(self, scenario: Scenario, tol: float = 1e-9) -> None:
        """Check slot count, pinned endpoints, and the per-step budget.

        Raises:
            TrajectoryError: naming the first violated condition.
        """
        if self.num_slots != scenario.num_slots:
            raise TrajectoryError(
                f"trajectory has {self.num_slots} slots, scenario has {scenario.num_slots}"
            )
        start, end = np.asarray(scenario.uav.start), np.asarray(scenario.uav.end)
        if not np.allclose(self.waypoints[0], start, rtol=0.0, atol=tol):
            raise TrajectoryError(f"first waypoint {self.waypoints[0]} != mission start {start}")
        if not np.allclose(self.waypoints[-1], end, rtol=0.0, atol=tol):
            raise TrajectoryError(f"last waypoint {self.waypoints[-1]} != mission end {end}")
        budget = scenario.step_budget()
        worst = float(self.steps().max())
        if worst > budget * (1 + 1e-9) + tol:
            raise TrajectoryError(f"step of {worst:.6g} m exceeds per-slot budget {budget:.6g} m")


def straight_line_trajectory(scenario: Scenario) -> Trajectory:
    """Constant-speed straight path from mission start to mission end."""
    frac = np.linspace(0.0, 1.0, scenario.num_slots + 1)[:, None]
    start = np.asarray(scenario.uav.start, dtype=np.float64)
    end = np.asarray(scenario.uav.end, dtype=np.float64)
    return Trajectory(start[None, :] * (1 - frac) + end[None, :] * frac)


@dataclass(frozen=True)
class ChannelGains:
    """Per-user, per-slot channel power gains for one trajectory.

    Attributes:
        values: float64 array of shape (num_users, slots); every entry lies
            in (0, ref_gain / altitude^2].
        trajectory_fingerprint: hash of the trajectory that produced them.
    """

    values: np.ndarray
    trajectory_fingerprint: str

    def __post_init__(self) -> None:
        v = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        if v.ndim != 2:
            raise ValueError(f"gains must be 2-D (users, slots), got shape {v.shape}")
        if not np.all(v > 0):
            raise ValueError("gains must be strictly positive")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


def channel_gain(ref_gain: float, altitude: float, horizontal_dist_sq) -> np.ndarray | float:
    """Line-of-sight power gain at squared horizontal displacement.

    gain = ref_gain / (altitude^2 + horizontal_dist_sq); the peak
    ref_gain / altitude^2 is attained directly overhead.
    """
    return ref_gain / (altitude * altitude + np.asarray(horizontal_dist_sq, dtype=np.float64))


_GAINS_CACHE: OrderedDict[tuple[str, str], ChannelGains] = OrderedDict()
_GAINS_CACHE_MAX = 64


def gains_for_trajectory(scenario: Scenario, trajectory: Trajectory) -> ChannelGains:
    """Channel gains of every (user, slot) pair along a trajectory.

    Slot n uses waypoint n; the final waypoint is excluded.  Results are
    memoized on (scenario, trajectory) content hashes, so repeated
    evaluations inside alternating solvers are free.
    """
    key = (scenario.fingerprint(), trajectory.fingerprint())
    hit = _GAINS_CACHE.get(key)
    if hit is not None:
        _GAINS_CACHE.move_to_end(key)
        return hit
    trajectory.validate_for(scenario)
    pos = np.asarray([u.position for u in scenario.users], dtype=np.float64)  # (M, 2)
    track = trajectory.waypoints[:-1]  # (N, 2): serving waypoints
    d2 = ((track[None, :, :] - pos[:, None, :]) ** 2).sum(axis=2)  # (M, N)
    gains = ChannelGains(
        values=channel_gain(scenario.physics.ref_gain, scenario.uav.altitude, d2),
        trajectory_fingerprint=trajectory.fingerprint(),
    )
    _GAINS_CACHE[key] = gains
    if len(_GAINS_CACHE) > _GAINS_CACHE_MAX:
        _GAINS_CACHE.popitem(last=False)
    return gains


def harvested_energy_prefix(scenario: Scenario, gains: ChannelGains) -> np.ndarray:
    """Cumulative harvested energy through each slot, shape (users, slots).

    Each slot delivers slot_length * eh_efficiency * tx_power * gain joules
    to a user; entry [m, n] is the total banked by user m through slot n+1
    (0-indexed), a nondecreasing prefix along the slot axis.
    """
    per_slot = scenario.slot_length * scenario.physics.eh_efficiency * scenario.uav.tx_power * gains.values
    return np.cumsum(per_slot, axis=1)


def offload_capacity(
    scenario: Scenario,
    user_index: int,
    gain,
    power,
    time_share,
) -> np.ndarray | float:
    """Bits a user can push through the uplink in one slot.

    With time share t of the slot and transmit power P over gain h:
    (bandwidth * slot_length * t / overhead) * log2(1 + h * P / noise_power).
    Zero time share or zero power contributes exactly zero.

    Args:
        scenario: the problem instance (bandwidth, noise, slot length).
        user_index: which user's overhead factor applies.
        gain: channel power gain(s).
        power: transmit power(s), W.
        time_share: slot fraction(s) in [0, 1].

    Returns:
        Bits (array-shaped like the broadcast inputs).
    """
    h = np.asarray(gain, dtype=np.float64)
    p = np.asarray(power, dtype=np.float64)
    t = np.asarray(time_share, dtype=np.float64)
    nu = scenario.users[user_index].overhead_factor
    coeff = scenario.physics.bandwidth * scenario.slot_length / nu
    snr = h * p / scenario.physics.noise_power
    bits = coeff * t * np.log2(1.0 + snr)
    return bits if bits.shape else float(bits)
