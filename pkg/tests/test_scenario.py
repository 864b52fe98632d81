"""Scenario construction, validation, serialization."""

import json
import math

import pytest
from hypothesis import given, strategies as st

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


class TestDefaultScenario:
    def test_shape(self):
        sc = default_paper_scenario()
        assert sc.num_users == 4
        assert sc.num_slots == 50
        assert sc.grid.horizon == 2.0
        assert sc.slot_length == pytest.approx(0.04, rel=0, abs=0)

    def test_table_values(self):
        sc = default_paper_scenario()
        assert sc.uav.altitude == 10.0
        assert sc.uav.tx_power == 0.1
        assert sc.uav.max_speed == 20.0
        assert sc.uav.start == (0.0, 0.0)
        assert sc.uav.end == (10.0, 0.0)
        assert sc.physics.ref_gain == 1e-5
        assert sc.physics.eh_efficiency == 0.8
        assert sc.physics.bandwidth == 4e7
        assert sc.physics.noise_power == 1e-9
        assert [u.position for u in sc.users] == [(0, 0), (0, 10), (10, 10), (10, 0)]
        assert list(sc.weights()) == [0.1, 0.4, 0.3, 0.2]
        for u in sc.users:
            assert u.overhead_factor == 1.1
            assert u.cpu_cycles_per_bit == 1e3
            assert u.capacitance_coeff == 1e-28

    def test_step_budget(self):
        sc = default_paper_scenario()
        assert sc.step_budget() == pytest.approx(0.8)
        lit = sc.with_literal_speed(True)
        assert lit.step_budget() == pytest.approx(math.sqrt(0.8))

    def test_functional_updates(self):
        sc = default_paper_scenario()
        hot = sc.with_uav_power(0.5)
        assert hot.uav.tx_power == 0.5
        assert sc.uav.tx_power == 0.1  # original untouched
        small = sc.with_slots(10)
        assert small.num_slots == 10
        assert small.slot_length == pytest.approx(0.2)


class TestValidation:
    def test_weight_must_be_positive(self):
        with pytest.raises(ScenarioError, match="weight"):
            UserSpec(position=(0, 0), weight=0.0)

    def test_overhead_at_least_one(self):
        with pytest.raises(ScenarioError, match="overhead_factor"):
            UserSpec(position=(0, 0), weight=1.0, overhead_factor=0.9)

    def test_altitude_positive(self):
        with pytest.raises(ScenarioError, match="altitude"):
            UavSpec(altitude=0.0, tx_power=0.1, max_speed=20.0, start=(0, 0), end=(0, 0))

    def test_noise_positive(self):
        with pytest.raises(ScenarioError, match="noise_power"):
            PhysicsSpec(ref_gain=1e-5, eh_efficiency=0.8, bandwidth=4e7, noise_power=0.0)

    def test_efficiency_range(self):
        with pytest.raises(ScenarioError, match="eh_efficiency"):
            PhysicsSpec(ref_gain=1e-5, eh_efficiency=1.5, bandwidth=4e7, noise_power=1e-9)

    def test_slots_integer(self):
        with pytest.raises(ScenarioError, match="slots"):
            TimeGrid(horizon=2.0, slots=0)

    def test_unreachable_mission_rejected(self):
        # 50 slots x 0.8 m = 40 m of travel; 100 m start-to-end cannot close.
        sc = default_paper_scenario()
        uav = UavSpec(altitude=10, tx_power=0.1, max_speed=20, start=(0, 0), end=(100, 0))
        with pytest.raises(ScenarioError, match="reach"):
            Scenario(users=sc.users, uav=uav, physics=sc.physics, grid=sc.grid)

    def test_needs_at_least_one_user(self):
        sc = default_paper_scenario()
        with pytest.raises(ScenarioError, match="user"):
            Scenario(users=(), uav=sc.uav, physics=sc.physics, grid=sc.grid)


class TestSolverSettings:
    def test_defaults_valid(self):
        s = SolverSettings()
        assert s.tol_outer == 1e-4
        assert s.max_outer_iters == 30

    def test_rejects_bad_tolerance(self):
        with pytest.raises(ScenarioError):
            SolverSettings(tol_outer=0.0)

    def test_rejects_bad_cap(self):
        with pytest.raises(ScenarioError):
            SolverSettings(max_outer_iters=0)


def _minimal_dict(**overrides):
    doc = {
        "users": [
            {"position": [0, 0], "weight": 0.5},
            {"position": [3, 4], "weight": 0.5},
        ],
        "uav": {
            "altitude": 10.0,
            "tx_power": 0.1,
            "max_speed": 20.0,
            "start": [0, 0],
            "end": [4, 0],
        },
        "physics": {
            "ref_gain_linear": 1e-5,
            "eh_efficiency": 0.8,
            "bandwidth": 4e7,
            "noise_power": 1e-9,
        },
        "grid": {"horizon": 2.0, "slots": 20},
    }
    doc.update(overrides)
    return doc


class TestLoading:
    def test_from_dict(self):
        sc = load_scenario(_minimal_dict())
        assert sc.num_users == 2
        assert sc.users[1].position == (3.0, 4.0)

    def test_from_file(self, tmp_path):
        path = tmp_path / "scenario.json"
        path.write_text(json.dumps(_minimal_dict()))
        sc = load_scenario(str(path))
        assert sc.num_slots == 20

    def test_gain_in_db(self):
        doc = _minimal_dict()
        doc["physics"] = {
            "ref_gain_db": -50.0,
            "eh_efficiency": 0.8,
            "bandwidth": 4e7,
            "noise_power": 1e-9,
        }
        sc = load_scenario(doc)
        assert sc.physics.ref_gain == pytest.approx(1e-5, rel=1e-12)

    def test_gain_specified_both_ways_rejected(self):
        doc = _minimal_dict()
        doc["physics"]["ref_gain_db"] = -50.0
        with pytest.raises(ScenarioError, match="ref_gain"):
            load_scenario(doc)

    def test_unknown_key_rejected(self):
        doc = _minimal_dict()
        doc["uav"]["cruise_speed"] = 5.0
        with pytest.raises(ScenarioError, match="cruise_speed"):
            load_scenario(doc)

    def test_error_names_offending_user(self):
        doc = _minimal_dict()
        doc["users"][1]["weight"] = -1.0
        with pytest.raises(ScenarioError, match=r"users\[1\]"):
            load_scenario(doc)

    def test_round_trip_preserves_fingerprint(self):
        sc = default_paper_scenario()
        again = load_scenario(sc.to_dict())
        assert again.fingerprint() == sc.fingerprint()

    def test_fingerprint_sensitive_to_power(self):
        sc = default_paper_scenario()
        assert sc.with_uav_power(0.2).fingerprint() != sc.fingerprint()


@given(db=st.floats(min_value=-120.0, max_value=0.0))
def test_db_linear_bijection(db):
    doc = _minimal_dict()
    doc["physics"] = {
        "ref_gain_db": db,
        "eh_efficiency": 0.8,
        "bandwidth": 4e7,
        "noise_power": 1e-9,
    }
    sc = load_scenario(doc)
    assert 10.0 * math.log10(sc.physics.ref_gain) == pytest.approx(db, abs=1e-9)
