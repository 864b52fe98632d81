"""Scenario model: validated, immutable problem instances.

A scenario bundles everything that defines one planning problem: the ground
users (position, priority weight, CPU/radio characteristics), the UAV
(altitude, beam power, speed envelope, fixed endpoints), the physical-layer
constants, and the time discretization.  Instances are frozen dataclasses;
every numeric field is validated on construction so the numeric layers can
assume well-formed inputs.

All public values are SI: meters, seconds, watts, hertz, cycles.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

__all__ = [
    "ScenarioError",
    "UserSpec",
    "UavSpec",
    "PhysicsSpec",
    "TimeGrid",
    "Scenario",
    "SolverSettings",
    "load_scenario",
    "default_paper_scenario",
]


class ScenarioError(ValueError):
    """Raised when a scenario document or field fails validation."""


def _require(condition: bool, field_name: str, message: str) -> None:
    if not condition:
        raise ScenarioError(f"{field_name}: {message}")


def _pair(value: Any, field_name: str) -> tuple[float, float]:
    try:
        x, y = value
        return (float(x), float(y))
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{field_name}: expected an (x, y) pair, got {value!r}") from exc


@dataclass(frozen=True)
class UserSpec:
    """One ground device.

    Attributes:
        position: ground coordinates (x, y) in meters; devices sit at z=0.
        weight: priority weight in the objective, > 0.
        overhead_factor: uplink protocol-overhead factor >= 1 (bits sent per
            useful bit, so achievable useful rate divides by it).
        cpu_cycles_per_bit: CPU cycles needed to compute one bit locally.
        capacitance_coeff: effective switched-capacitance coefficient of the
            device CPU; local compute power is capacitance_coeff * f^3 watts
            at frequency f.
    """

    position: tuple[float, float]
    weight: float
    overhead_factor: float = 1.1
    cpu_cycles_per_bit: float = 1e3
    capacitance_coeff: float = 1e-28

    def __post_init__(self) -> None:
        object.__setattr__(self, "position", _pair(self.position, "user.position"))
        _require(math.isfinite(self.weight) and self.weight > 0, "user.weight", "must be finite and > 0")
        _require(self.overhead_factor >= 1.0, "user.overhead_factor", "must be >= 1")
        _require(self.cpu_cycles_per_bit > 0, "user.cpu_cycles_per_bit", "must be > 0")
        _require(self.capacitance_coeff > 0, "user.capacitance_coeff", "must be > 0")


@dataclass(frozen=True)
class UavSpec:
    """The UAV platform and its mission endpoints.

    Attributes:
        altitude: fixed flight altitude in meters, > 0.
        tx_power: downlink energy-beam transmit power in watts, >= 0.
        max_speed: horizontal speed cap in m/s, > 0.
        start: required initial ground-projected position (x, y).
        end: required final ground-projected position (x, y).
        paper_literal_speed: when True, the per-slot displacement budget is
            sqrt(max_speed * slot_length) instead of the physical
            max_speed * slot_length (a published-model compatibility switch;
            see Scenario.step_budget).
    """

    altitude: float
    tx_power: float
    max_speed: float
    start: tuple[float, float]
    end: tuple[float, float]
    paper_literal_speed: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "start", _pair(self.start, "uav.start"))
        object.__setattr__(self, "end", _pair(self.end, "uav.end"))
        _require(self.altitude > 0, "uav.altitude", "must be > 0")
        _require(math.isfinite(self.tx_power) and self.tx_power >= 0, "uav.tx_power", "must be finite and >= 0")
        _require(self.max_speed > 0, "uav.max_speed", "must be > 0")


@dataclass(frozen=True)
class PhysicsSpec:
    """Physical-layer constants shared by all links.

    Attributes:
        ref_gain: channel power gain at 1 m reference distance (linear).
        eh_efficiency: RF energy-harvesting conversion efficiency, in (0, 1].
        bandwidth: uplink bandwidth in hertz.
        noise_power: receiver noise power in watts.
    """

    ref_gain: float
    eh_efficiency: float
    bandwidth: float
    noise_power: float

    def __post_init__(self) -> None:
        _require(self.ref_gain > 0, "physics.ref_gain", "must be > 0")
        _require(0 < self.eh_efficiency <= 1, "physics.eh_efficiency", "must be in (0, 1]")
        _require(self.bandwidth > 0, "physics.bandwidth", "must be > 0")
        _require(self.noise_power > 0, "physics.noise_power", "must be > 0")


@dataclass(frozen=True)
class TimeGrid:
    """Mission horizon chopped into equal slots."""

    horizon: float
    slots: int

    def __post_init__(self) -> None:
        _require(self.horizon > 0, "grid.horizon", "must be > 0")
        _require(isinstance(self.slots, int) and self.slots >= 1, "grid.slots", "must be an integer >= 1")

    @property
    def slot_length(self) -> float:
        """Length of one slot in seconds."""
        return self.horizon / self.slots


@dataclass(frozen=True)
class Scenario:
    """A validated planning problem instance.

    Frozen after construction; derived quantities (slot length, per-step
    displacement budget) are exposed as properties/methods so downstream code
    never re-derives them inconsistently.
    """

    users: tuple[UserSpec, ...]
    uav: UavSpec
    physics: PhysicsSpec
    grid: TimeGrid

    def __post_init__(self) -> None:
        object.__setattr__(self, "users", tuple(self.users))
        _require(len(self.users) >= 1, "users", "at least one user is required")
        for u in self.users:
            _require(isinstance(u, UserSpec), "users", "entries must be UserSpec")
        # The endpoints must be mutually reachable within the horizon under
        # the selected per-step displacement budget.
        reach = self.num_slots * self.step_budget()
        dist = math.dist(self.uav.start, self.uav.end)
        _require(
            dist <= reach * (1 + 1e-12),
            "uav.end",
            f"endpoint {dist:.6g} m from start exceeds the reachable "
            f"{reach:.6g} m within the horizon",
        )

    # -- convenience accessors -------------------------------------------

    @property
    def num_users(self) -> int:
        return len(self.users)

    @property
    def num_slots(self) -> int:
        return self.grid.slots

    @property
    def slot_length(self) -> float:
        return self.grid.slot_length

    def step_budget(self) -> float:
        """Maximum per-slot horizontal displacement in meters.

        Physical form: max_speed * slot_length.  With
        ``uav.paper_literal_speed`` the squared displacement is capped by
        max_speed * slot_length instead, so the budget is its square root.
        """
        v, dt = self.uav.max_speed, self.slot_length
        if self.uav.paper_literal_speed:
            return math.sqrt(v * dt)
        return v * dt

    def weights(self) -> tuple[float, ...]:
        return tuple(u.weight for u in self.users)

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        """Plain-dict form; round-trips through ``load_scenario``."""
        return {
            "users": [
                {
                    "position": list(u.position),
                    "weight": u.weight,
                    "overhead_factor": u.overhead_factor,
                    "cpu_cycles_per_bit": u.cpu_cycles_per_bit,
                    "capacitance_coeff": u.capacitance_coeff,
                }
                for u in self.users
            ],
            "uav": {
                "altitude": self.uav.altitude,
                "tx_power": self.uav.tx_power,
                "max_speed": self.uav.max_speed,
                "start": list(self.uav.start),
                "end": list(self.uav.end),
                "paper_literal_speed": self.uav.paper_literal_speed,
            },
            "physics": {
                "ref_gain_linear": self.physics.ref_gain,
                "eh_efficiency": self.physics.eh_efficiency,
                "bandwidth": self.physics.bandwidth,
                "noise_power": self.physics.noise_power,
            },
            "grid": {"horizon": self.grid.horizon, "slots": self.grid.slots},
        }

    def fingerprint(self) -> str:
        """Stable content hash, used as a cache key."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    # -- functional updates -----------------------------------------------

    def with_uav_power(self, tx_power: float) -> "Scenario":
        return dataclasses.replace(self, uav=dataclasses.replace(self.uav, tx_power=tx_power))

    def with_slots(self, slots: int) -> "Scenario":
        return dataclasses.replace(self, grid=dataclasses.replace(self.grid, slots=slots))

    def with_users(self, users: Sequence[UserSpec]) -> "Scenario":
        return dataclasses.replace(self, users=tuple(users))

    def with_literal_speed(self, flag: bool) -> "Scenario":
        return dataclasses.replace(self, uav=dataclasses.replace(self.uav, paper_literal_speed=flag))


@dataclass(frozen=True)
class SolverSettings:
    """Tolerances and iteration caps for the solver stack.

    The defaults reproduce the reference configuration: outer alternation
    stops when the objective changes by at most ``tol_outer`` bits, the
    flight-path stage stops when the total waypoint movement drops below
    ``tol_trajectory`` meters, and the mode-selection loop stops when its
    restored objective changes by at most ``tol_mode`` bits.
    """

    tol_outer: float = 1e-4
    tol_trajectory: float = 1e-4
    tol_mode: float = 1e-4
    max_outer_iters: int = 30
    max_subgradient_iters: int = 100
    max_sca_iters: int = 50
    max_mode_iters: int = 60
    max_polish_iters: int = 200
    tol_polish: float = 1e-12
    cpu_freq_cap: float = 1e10
    tx_power_cap: float = 10.0
    barrier_initial: float = 1.0
    barrier_shrink: float = 0.2
    barrier_duality_tol: float = 1e-8
    feasibility_margin: float = 1e-9

    def __post_init__(self) -> None:
        for name in ("tol_outer", "tol_trajectory", "tol_mode", "tol_polish"):
            _require(getattr(self, name) > 0, f"settings.{name}", "must be > 0")
        for name in (
            "max_outer_iters",
            "max_subgradient_iters",
            "max_sca_iters",
            "max_mode_iters",
            "max_polish_iters",
        ):
            _require(getattr(self, name) >= 1, f"settings.{name}", "must be >= 1")
        _require(self.cpu_freq_cap > 0, "settings.cpu_freq_cap", "must be > 0")
        _require(self.tx_power_cap > 0, "settings.tx_power_cap", "must be > 0")
        _require(0 < self.barrier_shrink < 1, "settings.barrier_shrink", "must be in (0, 1)")
        _require(self.barrier_initial > 0, "settings.barrier_initial", "must be > 0")
        _require(self.barrier_duality_tol > 0, "settings.barrier_duality_tol", "must be > 0")
        _require(self.feasibility_margin > 0, "settings.feasibility_margin", "must be > 0")


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------

_USER_KEYS = {"position", "weight", "overhead_factor", "cpu_cycles_per_bit", "capacitance_coeff"}
_UAV_KEYS = {"altitude", "tx_power", "max_speed", "start", "end", "paper_literal_speed"}
_PHYSICS_KEYS = {"ref_gain_db", "ref_gain_linear", "eh_efficiency", "bandwidth", "noise_power"}
_GRID_KEYS = {"horizon", "slots"}


def _check_keys(section: Mapping[str, Any], allowed: set[str], where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ScenarioError(f"{where}: unknown field(s) {sorted(unknown)}")


def _get(section: Mapping[str, Any], key: str, where: str) -> Any:
    if key not in section:
        raise ScenarioError(f"{where}.{key}: missing required field")
    return section[key]


def load_scenario(source: str | Mapping[str, Any]) -> Scenario:
    """Build a validated :class:`Scenario` from a JSON file path or a dict.

    The document has four sections: ``users`` (list), ``uav``, ``physics``,
    and ``grid``.  The reference channel gain is given either in decibels
    (``ref_gain_db``) or linearly (``ref_gain_linear``) — exactly one of the
    two.  Every validation error names the offending field.

    Args:
        source: path to a JSON document, or an already-parsed mapping.

    Returns:
        The validated scenario.

    Raises:
        ScenarioError: on any missing, unknown, or out-of-range field.
    """
    if isinstance(source, str):
        try:
            with open(source, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        except FileNotFoundError as exc:
            raise ScenarioError(f"scenario file not found: {source}") from exc
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"scenario file is not valid JSON: {source}: {exc}") from exc
    else:
        doc = dict(source)

    if not isinstance(doc, Mapping):
        raise ScenarioError("scenario document must be a mapping")
    _check_keys(doc, {"users", "uav", "physics", "grid"}, "scenario")

    users_doc = _get(doc, "users", "scenario")
    if not isinstance(users_doc, Sequence) or isinstance(users_doc, (str, bytes)):
        raise ScenarioError("users: must be a list of user sections")
    users = []
    for i, u in enumerate(users_doc):
        where = f"users[{i}]"
        if not isinstance(u, Mapping):
            raise ScenarioError(f"{where}: must be a mapping")
        _check_keys(u, _USER_KEYS, where)
        kwargs: dict[str, Any] = {"position": _get(u, "position", where), "weight": _get(u, "weight", where)}
        for opt in ("overhead_factor", "cpu_cycles_per_bit", "capacitance_coeff"):
            if opt in u:
                kwargs[opt] = u[opt]
        try:
            users.append(UserSpec(**kwargs))
        except ScenarioError as exc:
            raise ScenarioError(f"{where}.{exc}") from exc

    uav_doc = _get(doc, "uav", "scenario")
    _check_keys(uav_doc, _UAV_KEYS, "uav")
    uav = UavSpec(
        altitude=_get(uav_doc, "altitude", "uav"),
        tx_power=_get(uav_doc, "tx_power", "uav"),
        max_speed=_get(uav_doc, "max_speed", "uav"),
        start=_get(uav_doc, "start", "uav"),
        end=_get(uav_doc, "end", "uav"),
        paper_literal_speed=bool(uav_doc.get("paper_literal_speed", False)),
    )

    phys_doc = _get(doc, "physics", "scenario")
    _check_keys(phys_doc, _PHYSICS_KEYS, "physics")
    has_db = "ref_gain_db" in phys_doc
    has_lin = "ref_gain_linear" in phys_doc
    if has_db == has_lin:
        raise ScenarioError("physics.ref_gain_db / physics.ref_gain_linear: exactly one must be given")
    ref_gain = 10.0 ** (float(phys_doc["ref_gain_db"]) / 10.0) if has_db else float(phys_doc["ref_gain_linear"])
    physics = PhysicsSpec(
        ref_gain=ref_gain,
        eh_efficiency=_get(phys_doc, "eh_efficiency", "physics"),
        bandwidth=_get(phys_doc, "bandwidth", "physics"),
        noise_power=_get(phys_doc, "noise_power", "physics"),
    )

    grid_doc = _get(doc, "grid", "scenario")
    _check_keys(grid_doc, _GRID_KEYS, "grid")
    slots = _get(grid_doc, "slots", "grid")
    if not isinstance(slots, int) or isinstance(slots, bool):
        raise ScenarioError("grid.slots: must be an integer")
    grid = TimeGrid(horizon=float(_get(grid_doc, "horizon", "grid")), slots=slots)

    return Scenario(users=tuple(users), uav=uav, physics=physics, grid=grid)


def default_paper_scenario() -> Scenario:
    """The reference four-user benchmark scenario.

    A 10 m x 10 m field with users on the corners, weights
    (0.1, 0.4, 0.3, 0.2); the UAV flies at 10 m altitude from (0, 0) to
    (10, 0) within 2 s over 50 slots, beaming 0.1 W with a -50 dB reference
    channel gain and 0.8 harvesting efficiency; 40 MHz uplink bandwidth and
    1e-9 W receiver noise.
    """
    corners = [(0.0, 0.0), (0.0, 10.0), (10.0, 10.0), (10.0, 0.0)]
    weights = [0.1, 0.4, 0.3, 0.2]
    return Scenario(
        users=tuple(UserSpec(position=p, weight=w) for p, w in zip(corners, weights)),
        uav=UavSpec(altitude=10.0, tx_power=0.1, max_speed=20.0, start=(0.0, 0.0), end=(10.0, 0.0)),
        physics=PhysicsSpec(ref_gain=1e-5, eh_efficiency=0.8, bandwidth=4e7, noise_power=1e-9),
        grid=TimeGrid(horizon=2.0, slots=50),
    )
