"""Correlated profile: signal mechanics, rollouts, reports, Nash membership."""

import dataclasses
import math

import numpy as np
import pytest

from diffgame import equilibrium as eq
from diffgame.errors import ConfigurationError, LatticeRefusal
from diffgame.games import Trajectory
from diffgame.guides import biased_mirror_guide, dirac_policy, mirror_guide
from diffgame.values import make_pair, sign_axis_law

from conftest import make_crossing_profile


@pytest.fixture(scope="module")
def small_profile():
    # coarse partition for fast unit runs
    return make_crossing_profile(delta=0.05, n_steps=20, master_seed=99)


class TestRngStream:
    def test_deterministic_and_key_sensitive(self):
        a = eq.rng_stream(1, 2, 3, 0).standard_normal(4)
        b = eq.rng_stream(1, 2, 3, 0).standard_normal(4)
        assert np.array_equal(a, b)
        c = eq.rng_stream(1, 2, 3, 1).standard_normal(4)
        assert not np.array_equal(a, c)


class TestBuildProfile:
    def test_accepts_acceptance_setup(self, acceptance_profile):
        assert acceptance_profile.d_delta == pytest.approx(0.01)
        assert len(acceptance_profile.partition) == 101

    def test_single_step_partition_valid(self):
        p = make_crossing_profile(n_steps=1)
        assert len(p.partition) == 2

    def test_rejects_bad_boundary_pair(self, crossing):
        class BadPair:
            def value(self, i, t, x):
                x = np.asarray(x, dtype=float)
                return np.zeros(x.shape[:-1])  # != gamma at t = T

        with pytest.raises(ConfigurationError, match="boundary"):
            eq.build_profile(
                game=crossing,
                guide=mirror_guide(crossing, 0.05),
                pair=BadPair(),
                partition=eq.uniform_partition(0.0, 1.0, 10),
                eq_policy=dirac_policy(-1.0, -1.0),
                punish1=lambda v: dirac_policy(1.0, v),
                punish2=lambda u: dirac_policy(u, 1.0),
            )

    def test_rejects_failing_noise_audit(self, crossing):
        with pytest.raises(ConfigurationError, match="audit"):
            eq.build_profile(
                game=crossing,
                guide=biased_mirror_guide(crossing, 0.05),
                pair=make_pair("crossing-alt"),
                partition=eq.uniform_partition(0.0, 1.0, 10),
                eq_policy=dirac_policy(-1.0, -1.0),
                punish1=lambda v: dirac_policy(1.0, v),
                punish2=lambda u: dirac_policy(u, 1.0),
            )

    def test_rejects_partition_not_ending_at_horizon(self, crossing):
        with pytest.raises(ConfigurationError, match="horizon"):
            eq.build_profile(
                game=crossing,
                guide=mirror_guide(crossing, 0.05),
                pair=make_pair("crossing-alt"),
                partition=np.array([0.0, 0.5]),
                eq_policy=dirac_policy(-1.0, -1.0),
                punish1=lambda v: dirac_policy(1.0, v),
                punish2=lambda u: dirac_policy(u, 1.0),
            )

    def test_rejects_off_grid_policy(self, crossing):
        with pytest.raises(ConfigurationError, match="support"):
            eq.build_profile(
                game=crossing,
                guide=mirror_guide(crossing, 0.05),
                pair=make_pair("crossing-alt"),
                partition=eq.uniform_partition(0.0, 1.0, 10),
                eq_policy=dirac_policy(-0.33, -1.0),
                punish1=lambda v: dirac_policy(1.0, v),
                punish2=lambda u: dirac_policy(u, 1.0),
            )


class TestAdvanceSignal:
    def test_first_on_path_step_keeps_guides_glued(self, small_profile):
        p = small_profile
        state = eq.initial_signal_state(np.zeros(2))
        dt = float(p.partition[1])
        # on-path state: exactly the drift forecast
        x_now = np.array([-dt, -dt])
        new, u_star, v_star = eq.advance_signal(p, state, np.zeros(2), x_now, 0)
        assert not new.switched
        assert new.theta is None
        assert np.array_equal(new.Y1, new.Y0)
        assert np.array_equal(new.Y2, new.Y0)
        assert new.last_psi <= new.last_bound
        # at x=y the selectors tie-break to the first grid point
        assert u_star[0] == -1.0 and v_star[0] == -1.0

    def test_forced_switch_is_absorbing(self, small_profile):
        p = small_profile
        state = eq.initial_signal_state(np.zeros(2))
        far = np.array([10.0, 10.0])
        new, _, _ = eq.advance_signal(p, state, np.zeros(2), far, 0)
        assert new.switched
        assert new.theta == pytest.approx(float(p.partition[0]))
        # after the switch the punishment guides separate from Y0 and the
        # flag never resets even on benign steps
        nxt, _, _ = eq.advance_signal(p, new, far, new.Y0.copy(), 0)
        assert nxt.switched
        assert nxt.theta == new.theta

    def test_exhausted_partition_rejected(self, small_profile):
        state = eq.initial_signal_state(np.zeros(2))
        state = dataclasses.replace(state, k=len(small_profile.partition) - 1)
        with pytest.raises(ConfigurationError):
            eq.advance_signal(
                small_profile, state, np.zeros(2), np.zeros(2), 0
            )


class TestRollout:
    def test_determinism_bit_for_bit(self, small_profile):
        a = eq.rollout(small_profile, np.zeros(2), eq.NO_DEVIATION, rollout_id=5)
        b = eq.rollout(small_profile, np.zeros(2), eq.NO_DEVIATION, rollout_id=5)
        assert np.array_equal(a.trajectory.states, b.trajectory.states)
        assert np.array_equal(a.y0, b.y0)
        assert np.array_equal(a.psi, b.psi)
        assert a.payoffs == b.payoffs
        c = eq.rollout(small_profile, np.zeros(2), eq.NO_DEVIATION, rollout_id=6)
        assert not np.array_equal(a.y0, c.y0)

    def test_trajectory_and_glue_invariants(self, small_profile):
        r = eq.rollout(small_profile, np.zeros(2), eq.NO_DEVIATION, rollout_id=1)
        assert r.trajectory.check_lipschitz(small_profile.game.M)
        if not r.switched:
            assert np.array_equal(r.y1, r.y0)
            assert np.array_equal(r.y2, r.y0)

    def test_deviation_isolation(self, small_profile):
        # v* must be a function of the shared signal randomness and the
        # realized path only: replaying a deviated rollout's path through
        # the signal reproduces its v* sequence exactly
        dev = eq.DeviationSpec(player=1, kind="constant", control=(1.0,))
        rec = eq.rollout(small_profile, np.zeros(2), dev, rollout_id=3)
        state = eq.initial_signal_state(rec.trajectory.states[0])
        for k in range(len(small_profile.partition) - 1):
            x_prev = rec.trajectory.states[k]
            x_now = rec.trajectory.states[k + 1]
            _, v_star = eq.signal_controls(small_profile, state, x_prev)
            assert np.array_equal(v_star, rec.v_star[k])
            state, _, _ = eq.advance_signal(
                small_profile, state, x_prev, x_now, rollout_id=3
            )

    def test_deviation_only_overrides_named_player(self, small_profile):
        dev = eq.DeviationSpec(player=2, kind="constant", control=(1.0,))
        rec = eq.rollout(small_profile, np.zeros(2), dev, rollout_id=2)
        assert np.array_equal(rec.u_applied, rec.u_star)
        assert np.all(rec.v_applied == 1.0)

    def test_random_and_feedback_deviations_run(self, small_profile):
        for dev in (
            eq.DeviationSpec(player=1, kind="random"),
            eq.DeviationSpec(player=1, kind="feedback", law=sign_axis_law()),
        ):
            rec = eq.rollout(small_profile, np.zeros(2), dev, rollout_id=0)
            assert rec.trajectory.states.shape[0] == len(small_profile.partition)

    def test_zero_sum_optimal_deviation_runs(self, small_profile, zero_sum_values):
        v1, _ = zero_sum_values
        dev = eq.DeviationSpec(player=1, kind="zero-sum-optimal", val=v1)
        rec = eq.rollout(small_profile, np.zeros(2), dev, rollout_id=0)
        assert np.all(np.abs(rec.u_applied) <= 1.0)

    def test_deviation_spec_validation(self):
        with pytest.raises(ConfigurationError):
            eq.DeviationSpec(player=3, kind="constant", control=(1.0,))
        with pytest.raises(ConfigurationError):
            eq.DeviationSpec(player=1, kind="constant")
        with pytest.raises(ConfigurationError):
            eq.DeviationSpec(player=1, kind="feedback")

    def test_threaded_rollouts_match_serial(self, small_profile):
        serial = eq.run_rollouts(small_profile, np.zeros(2), eq.NO_DEVIATION, 6)
        threaded = eq.run_rollouts(
            small_profile, np.zeros(2), eq.NO_DEVIATION, 6, threads=3
        )
        for a, b in zip(serial, threaded):
            assert np.array_equal(a.trajectory.states, b.trajectory.states)


class TestReports:
    def test_estimate_equilibrium_smoke(self, small_profile):
        rep = eq.estimate_equilibrium(small_profile, np.zeros(2), 8)
        assert rep.n_rollouts == 8
        assert rep.target_values == pytest.approx((0.75, 0.75))
        assert rep.epsilon_limit == pytest.approx(
            (small_profile.constants.R * small_profile.constants.bigC + 1.0) * 0.05
        )

    def test_no_deviation_gain_is_zero(self, small_profile):
        # identical rollout ids on both sides: common random numbers make
        # the paired difference exactly zero
        dev = eq.DeviationSpec(player=1, kind="none")
        rep = eq.deviation_gain(small_profile, np.zeros(2), dev, n_rollouts=6)
        assert rep.gain == 0.0
        assert rep.gain_se == 0.0
        assert rep.passed

    def test_tracking_report_on_clean_set(self, small_profile):
        records = eq.run_rollouts(small_profile, np.zeros(2), eq.NO_DEVIATION, 60)
        rep = eq.verify_tracking_bounds(small_profile, records)
        assert rep.pre_switch_identity_fraction == 1.0
        assert rep.step_pass_fraction >= 0.99
        assert rep.passed


class TestNashCheck:
    def test_equilibrium_path_passes(self, crossing, zero_sum_values):
        v1, v2 = zero_sum_values
        t = np.linspace(0.0, 1.0, 21)
        states = -t[:, None] * np.ones(2)[None, :]
        traj = Trajectory(times=t, states=states)
        check = eq.nash_payoff_check(traj, v1, v2, crossing, tol=0.05)
        assert check.passed
        assert check.velocity_ok
        assert min(check.min_margin) >= -0.05

    def test_greedy_path_fails(self, crossing, zero_sum_values):
        v1, v2 = zero_sum_values
        t = np.linspace(0.0, 1.0, 21)
        states = t[:, None] * np.array([1.0, -1.0])[None, :]
        traj = Trajectory(times=t, states=states)
        check = eq.nash_payoff_check(traj, v1, v2, crossing, tol=0.05)
        assert not check.passed
        # player 2's terminal payoff drops 0.5 below their guaranteed value
        assert check.min_margin[1] == pytest.approx(-0.5, abs=0.03)

    def test_infinite_tolerance_vacuous(self, crossing, zero_sum_values):
        v1, v2 = zero_sum_values
        t = np.linspace(0.0, 1.0, 21)
        states = t[:, None] * np.array([1.0, -1.0])[None, :]
        traj = Trajectory(times=t, states=states)
        assert eq.nash_payoff_check(traj, v1, v2, crossing, tol=math.inf).passed

    def test_off_lattice_trajectory_refused(self, crossing, zero_sum_values):
        v1, v2 = zero_sum_values
        traj = Trajectory(
            times=np.array([0.0, 1.0]), states=np.array([[0.0, 0.0], [50.0, 0.0]])
        )
        with pytest.raises(LatticeRefusal):
            eq.nash_payoff_check(traj, v1, v2, crossing, tol=0.05)

    def test_too_fast_velocity_fails_hull(self, crossing, zero_sum_values):
        v1, v2 = zero_sum_values
        traj = Trajectory(
            times=np.array([0.0, 1.0]), states=np.array([[0.0, 0.0], [-1.9, 0.0]])
        )
        check = eq.nash_payoff_check(traj, v1, v2, crossing, tol=0.05)
        assert not check.velocity_ok
        assert not check.passed


class TestLimitExperiment:
    def test_single_member_family(self):
        def make(dl):
            return make_crossing_profile(delta=dl, n_steps=20, master_seed=7)

        rep = eq.limit_experiment(make, [0.1], np.zeros(2), n_rollouts=6)
        assert len(rep.rows) == 1
        assert rep.limit_point == pytest.approx((0.75, 0.75))
        assert rep.nash_passed is None
        assert rep.monotone_within_ci
