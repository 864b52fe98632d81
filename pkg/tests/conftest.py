"""Shared builders for small test instances."""

import numpy as np
import pytest

from uavmec.channel import Trajectory, straight_line_trajectory
from uavmec.scenario import Scenario, load_scenario


def make_scenario(
    positions,
    weights=None,
    *,
    tx_power=0.1,
    noise=1e-9,
    slots=2,
    horizon=2.0,
    start=(0.0, 0.0),
    end=(0.0, 0.0),
    altitude=10.0,
) -> Scenario:
    """Small scenario with explicit user geometry; defaults hover at origin."""
    weights = weights if weights is not None else [1.0] * len(positions)
    return load_scenario(
        {
            "users": [
                {"position": list(p), "weight": float(w)}
                for p, w in zip(positions, weights)
            ],
            "uav": {
                "altitude": altitude,
                "tx_power": tx_power,
                "max_speed": 20.0,
                "start": list(start),
                "end": list(end),
            },
            "physics": {
                "ref_gain_linear": 1e-5,
                "eh_efficiency": 0.8,
                "bandwidth": 4e7,
                "noise_power": noise,
            },
            "grid": {"horizon": horizon, "slots": slots},
        }
    )


def random_instance(seed: int, num_users: int, slots: int, noise: float):
    """Reproducible random instance (positions, weights, power, mission)."""
    rng = np.random.default_rng(seed)
    positions = rng.uniform(0.0, 10.0, size=(num_users, 2)).tolist()
    weights = rng.uniform(0.5, 2.0, size=num_users).tolist()
    start = rng.uniform(0.0, 10.0, size=2)
    end = rng.uniform(0.0, 10.0, size=2)
    sc = make_scenario(
        positions,
        weights,
        tx_power=float(rng.uniform(0.05, 0.5)),
        noise=noise,
        slots=slots,
        start=tuple(start),
        end=tuple(end),
    )
    return sc, straight_line_trajectory(sc)


@pytest.fixture
def hover_pair():
    """One-user hover instance and its (stationary) trajectory."""
    sc = make_scenario([(0.0, 0.0)], slots=1)
    tr = Trajectory(np.zeros((2, 2)))
    return sc, tr
