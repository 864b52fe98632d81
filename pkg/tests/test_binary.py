"""Mode selection: scores, assignment containers, and the inner alternation."""

import math

import numpy as np
import pytest

from conftest import make_scenario, random_instance
from uavmec.allocation import DualState, PrimalAllocation, energy_prefix_slack, solve_p2
from uavmec.binary import (
    LOCAL,
    OFFLOAD,
    BinaryDualState,
    ModeAssignment,
    select_mode,
    selection_scores,
    solve_p6_inner,
)
from uavmec.channel import gains_for_trajectory, harvested_energy_prefix, straight_line_trajectory
from uavmec.oracle import GridSpec, enumerate_partitions_binary
from uavmec.scenario import SolverSettings, default_paper_scenario


def mixed_scenario():
    """Near user offloads, far heavy user must stay local: split is optimal."""
    return make_scenario(
        [(5.0, 0.0), (5.0, 25.0)],
        [1.0, 3.0],
        noise=1e-12,
        slots=2,
        horizon=2.0,
        start=(4.0, 0.0),
        end=(6.0, 0.0),
    )


class TestModeAssignment:
    def test_validation(self):
        with pytest.raises(ValueError):
            ModeAssignment(np.array([0.0, 1.5]))
        with pytest.raises(ValueError):
            ModeAssignment(np.array([[0.0], [1.0]]))

    def test_partition_views(self):
        modes = ModeAssignment(np.array([0.0, 0.5, 1.0]))
        assert not modes.is_binary
        assert modes.local_users == (0,)
        assert modes.offload_users == (2,)
        binary = ModeAssignment.from_offload_mask([True, False])
        assert binary.is_binary
        assert binary.offload_mask == (True, False)
        assert set(binary.local_users) | set(binary.offload_users) == {0, 1}
        assert set(binary.local_users) & set(binary.offload_users) == set()


class TestBinaryDualState:
    def test_suffix_sums(self):
        dual = BinaryDualState(np.array([[1.0, 2.0, 4.0]]), np.zeros(3))
        assert np.array_equal(dual.varpi, [[7.0, 6.0, 4.0]])

    def test_validation(self):
        with pytest.raises(ValueError):
            BinaryDualState(np.array([[-1.0]]), np.zeros(1))
        with pytest.raises(ValueError):
            BinaryDualState(np.ones((2, 3)), np.zeros(2))

    def test_price_state_roundtrip(self):
        dual = BinaryDualState(np.array([[1.0, 0.5]]), np.array([0.2, 0.0]))
        back = BinaryDualState.from_price_state(dual.as_price_state())
        assert np.array_equal(back.upsilon, dual.upsilon)
        assert np.array_equal(back.epsilon, dual.epsilon)


class TestSelectionScores:
    def test_empty_allocation_scores_zero(self):
        sc = make_scenario([(1.0, 0.0)], slots=2)
        gains = gains_for_trajectory(sc, straight_line_trajectory(sc))
        dual = BinaryDualState(np.full((1, 2), 3.0), np.ones(2))
        g1, g2 = selection_scores(
            0, PrimalAllocation.zeros(1, 2), gains, dual, sc
        )
        assert g1 == 0.0 and g2 == 0.0

    def test_free_local_computing_prefers_local(self):
        sc = make_scenario([(1.0, 0.0)], slots=2)
        gains = gains_for_trajectory(sc, straight_line_trajectory(sc))
        dual = BinaryDualState(np.zeros((1, 2)), np.zeros(2))
        alloc = PrimalAllocation(
            cpu_freq=np.full((1, 2), 1e6),
            offload_power=np.zeros((1, 2)),
            time_share=np.zeros((1, 2)),
            energy_product=np.zeros((1, 2)),
        )
        g1, g2 = selection_scores(0, alloc, gains, dual, sc)
        assert g1 > 0.0 == g2
        assert select_mode(g1, g2) == LOCAL

    def test_select_mode_tie_rule(self):
        assert select_mode(0.0, 0.0) == LOCAL
        assert select_mode(1.0, 2.0) == OFFLOAD
        assert select_mode(2.0, 1.0) == LOCAL

    def test_scores_match_double_sum_reference(self):
        sc = make_scenario([(2.0, 1.0), (6.0, 2.0)], [1.3, 0.7], slots=3, noise=1e-11)
        gains = gains_for_trajectory(sc, straight_line_trajectory(sc))
        rng = np.random.default_rng(5)
        f = rng.uniform(1e5, 1e7, size=(2, 3))
        t = rng.uniform(0.1, 0.45, size=(2, 3))
        p = rng.uniform(0.001, 0.1, size=(2, 3))
        alloc = PrimalAllocation.from_z(f, t * p, t)
        dual = BinaryDualState(
            rng.uniform(0.0, 2.0, size=(2, 3)) * 1e9, rng.uniform(0.0, 1e3, size=3)
        )
        delta = sc.slot_length
        for m, user in enumerate(sc.users):
            ref_g1 = 0.0
            ref_g2 = 0.0
            for n in range(3):
                ref_g1 += user.weight * delta * f[m, n] / user.cpu_cycles_per_bit
                ref_g2 += (
                    user.weight
                    * (sc.physics.bandwidth * delta / user.overhead_factor)
                    * t[m, n]
                    * math.log2(
                        1.0
                        + gains.values[m, n]
                        * alloc.energy_product[m, n]
                        / (sc.physics.noise_power * t[m, n])
                    )
                )
                ref_g2 -= dual.epsilon[n] * t[m, n]
                for k in range(n + 1):
                    ref_g1 -= (
                        dual.upsilon[m, n]
                        * delta
                        * user.capacitance_coeff
                        * f[m, k] ** 3
                    )
                    ref_g2 -= dual.upsilon[m, n] * delta * alloc.energy_product[m, k]
            g1, g2 = selection_scores(m, alloc, gains, dual, sc)
            assert g1 == pytest.approx(ref_g1, rel=1e-12)
            assert g2 == pytest.approx(ref_g2, rel=1e-12)

    def test_weight_scales_both_scores(self):
        base = make_scenario([(3.0, 0.0)], [1.0], slots=2, noise=1e-11)
        heavy = make_scenario([(3.0, 0.0)], [2.0], slots=2, noise=1e-11)
        gains = gains_for_trajectory(base, straight_line_trajectory(base))
        dual = BinaryDualState(np.zeros((1, 2)), np.zeros(2))
        f = np.full((1, 2), 2e6)
        t = np.full((1, 2), 0.5)
        alloc = PrimalAllocation.from_z(f, t * 0.01, t)
        g1a, g2a = selection_scores(0, alloc, gains, dual, base)
        g1b, g2b = selection_scores(0, alloc, gains, dual, heavy)
        assert g1b == pytest.approx(2.0 * g1a, rel=1e-12)
        assert g2b == pytest.approx(2.0 * g2a, rel=1e-12)


class TestSolveP6Inner:
    def test_matches_partition_enumeration_on_split_instance(self):
        sc = mixed_scenario()
        tr = straight_line_trajectory(sc)
        sol = solve_p6_inner(sc, tr)
        enum = enumerate_partitions_binary(sc, tr, GridSpec(refine_passes=3))
        assert sol.modes.offload_mask == enum.offload_mask == (True, False)
        ref = enum.result.objective_bits
        assert abs(sol.objective_bits - ref) <= 0.01 * ref
        assert sol.objective_bits == max(b for _, b in sol.visited)

    def test_matches_partition_enumeration_on_uniform_instances(self):
        for seed, noise in ((202, 1e-12), (402, 1e-10)):
            sc, tr = random_instance(seed, 2, 2, noise)
            sol = solve_p6_inner(sc, tr)
            enum = enumerate_partitions_binary(sc, tr, GridSpec(refine_passes=3))
            assert sol.modes.offload_mask == enum.offload_mask
            ref = enum.result.objective_bits
            assert abs(sol.objective_bits - ref) <= 0.01 * ref

    def test_never_beats_joint_mode(self):
        sc = mixed_scenario()
        gains = gains_for_trajectory(sc, straight_line_trajectory(sc))
        binary = solve_p6_inner(sc, gains)
        joint = solve_p2(sc, gains)
        assert binary.objective_bits <= joint.objective_bits * (1.0 + 1e-9)

    def test_returned_allocation_respects_modes(self):
        sc = mixed_scenario()
        gains = gains_for_trajectory(sc, straight_line_trajectory(sc))
        sol = solve_p6_inner(sc, gains)
        a = sol.allocation
        for m in sol.modes.local_users:
            assert np.all(a.energy_product[m] == 0.0)
            assert np.all(a.time_share[m] == 0.0)
        for m in sol.modes.offload_users:
            assert np.all(a.cpu_freq[m] == 0.0)
        assert np.all(a.time_share.sum(axis=0) <= 1.0 + 1e-9)
        energy = harvested_energy_prefix(sc, gains)
        assert float(energy_prefix_slack(sc, energy, a).min()) >= -1e-9

    def test_no_strict_regret_at_returned_state(self):
        sc = mixed_scenario()
        gains = gains_for_trajectory(sc, straight_line_trajectory(sc))
        sol = solve_p6_inner(sc, gains)
        for m in range(sc.num_users):
            g1, g2 = selection_scores(m, sol.allocation, gains, sol.dual, sc)
            tol = 1e-6 * max(1.0, abs(g1), abs(g2))
            if sol.modes.offload_mask[m]:
                assert g1 <= g2 + tol
            else:
                assert g2 <= g1 + tol

    def test_identical_users_keep_cardinality_under_relabeling(self):
        sc = make_scenario(
            [(5.0, 0.0), (5.0, 0.0)], [1.0, 1.0], noise=1e-12, slots=2,
            horizon=2.0, start=(4.0, 0.0), end=(6.0, 0.0),
        )
        gains = gains_for_trajectory(sc, straight_line_trajectory(sc))
        first = solve_p6_inner(sc, gains)
        second = solve_p6_inner(sc, gains)
        assert first.modes.offload_mask == second.modes.offload_mask
        assert first.objective_bits == second.objective_bits
        assert len(first.modes.local_users) + len(first.modes.offload_users) == 2

    def test_dormant_offloading_goes_all_local(self):
        sc = default_paper_scenario()
        gains = gains_for_trajectory(sc, straight_line_trajectory(sc))
        sol = solve_p6_inner(sc, gains)
        assert sol.modes.offload_mask == (False,) * 4
        joint = solve_p2(sc, gains)
        assert sol.objective_bits == pytest.approx(joint.objective_bits, rel=1e-12)
        assert sol.converged

    def test_iteration_cap_flag(self):
        sc = mixed_scenario()
        gains = gains_for_trajectory(sc, straight_line_trajectory(sc))
        sol = solve_p6_inner(sc, gains, SolverSettings(max_mode_iters=1))
        assert sol.rounds <= 1
        assert sol.objective_bits > 0.0

    def test_silent_offloaders_are_flipped_local(self):
        sc = make_scenario(
            [(5.0, 0.0), (5.0, 200.0)], [1.0, 1.0], noise=1e-12, slots=2,
            horizon=2.0, start=(4.0, 0.0), end=(6.0, 0.0),
        )
        gains = gains_for_trajectory(sc, straight_line_trajectory(sc))
        sol = solve_p6_inner(sc, gains)
        for m in sol.modes.offload_users:
            assert sol.per_user_bits[m] > 0.0

    def test_deterministic(self):
        sc = mixed_scenario()
        gains = gains_for_trajectory(sc, straight_line_trajectory(sc))
        a = solve_p6_inner(sc, gains)
        b = solve_p6_inner(sc, gains)
        assert a.objective_bits == b.objective_bits
        assert a.modes.offload_mask == b.modes.offload_mask
        assert np.array_equal(a.allocation.energy_product, b.allocation.energy_product)
        assert a.visited == b.visited
