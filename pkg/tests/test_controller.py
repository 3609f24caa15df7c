"""Controller checks: mixer algebra, motor lag, cascade sign conventions,
closed-loop hover and waypoint smoke tests."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quadfault.controller import (
    CascadedController,
    ControllerGains,
    MotorCommand,
    body_wrench_from_motors,
    compute_motor_commands,
    mixer,
    mixer_forward,
    motor_lag,
)
from quadfault.propeller import ESC_MAX, ESC_MIN
from quadfault.simcore import QuadParams, QuadState, hover_rpm, step_rk4, BodyWrench

PARAMS = QuadParams()
GAINS = ControllerGains()

torques = st.floats(-0.5, 0.5, allow_nan=False)


class TestMixer:
    def test_pure_thrust_splits_evenly(self):
        f = mixer(8.0, 0.0, 0.0, 0.0, PARAMS)
        np.testing.assert_allclose(f, 2.0)

    def test_pure_yaw_alternates(self):
        tau = 0.02
        f = mixer(0.0, 0.0, 0.0, tau, PARAMS)
        expected = tau * PARAMS.k_f / (4.0 * PARAMS.k_tau)
        np.testing.assert_allclose(np.sort(np.abs(f)), expected)
        assert f.sum() == pytest.approx(0.0, abs=1e-12)
        # counter-rotating pairs share a sign
        assert f[0] == pytest.approx(f[1]) and f[2] == pytest.approx(f[3])
        assert np.sign(f[0]) == -np.sign(f[2])

    def test_roundtrip_identity(self):
        u = (12.0, 0.3, -0.2, 0.05)
        back = mixer_forward(mixer(*u, PARAMS), PARAMS)
        np.testing.assert_allclose(back, u, atol=1e-12)

    @settings(max_examples=1000, deadline=None)
    @given(st.floats(0.0, 50.0), torques, torques, st.floats(-0.05, 0.05))
    def test_roundtrip_random_wrenches(self, thrust, tr, tp, ty):
        f = mixer(thrust, tr, tp, ty, PARAMS)
        back = np.array(mixer_forward(f, PARAMS))
        assert np.linalg.norm(back - np.array([thrust, tr, tp, ty])) < 1e-10

    def test_wrench_from_motors_matches_forward_for_analytic(self):
        rpm = np.array([500.0, 520.0, 480.0, 510.0])
        f = PARAMS.k_f * rpm**2
        tau = PARAMS.k_tau * rpm**2
        w = body_wrench_from_motors(f, tau, PARAMS)
        ref = mixer_forward(f, PARAMS)
        np.testing.assert_allclose(w, ref, atol=1e-12)


class TestMotorLag:
    def test_fixed_point(self):
        assert motor_lag(600.0, 600.0, 0.01, 0.05) == 600.0

    def test_step_response_at_tau(self):
        out = motor_lag(1.0, 0.0, 0.05, 0.05)
        assert out == pytest.approx(1.0 - math.exp(-1.0), rel=1e-12)

    def test_monotone_no_overshoot(self):
        rpm = 0.0
        prev = rpm
        for _ in range(200):
            rpm = motor_lag(100.0, rpm, 0.01, 0.05)
            assert prev <= rpm <= 100.0
            prev = rpm

    def test_rejects_bad_tau(self):
        with pytest.raises(ValueError):
            motor_lag(1.0, 0.0, 0.01, 0.0)


class TestCascade:
    def test_hover_equilibrium_commands(self):
        state = QuadState(z=2.0)
        cmd = compute_motor_commands(state, (0.0, 0.0, 2.0), GAINS, PARAMS)
        np.testing.assert_allclose(cmd.rpm_setpoint, hover_rpm(PARAMS), rtol=1e-9)
        assert not cmd.saturated

    def test_climb_is_symmetric_and_fast(self):
        state = QuadState(z=2.0)
        cmd = compute_motor_commands(state, (0.0, 0.0, 8.0), GAINS, PARAMS)
        assert np.ptp(cmd.rpm_setpoint) == pytest.approx(0.0, abs=1e-9)
        assert cmd.rpm_setpoint[0] > hover_rpm(PARAMS)

    def test_forward_target_pitches_without_yaw(self):
        state = QuadState(z=2.0)
        cmd = compute_motor_commands(state, (5.0, 0.0, 2.0), GAINS, PARAMS)
        thrust = PARAMS.k_f * cmd.rpm_setpoint**2
        total, tau_r, tau_p, tau_y = mixer_forward(thrust, PARAMS)
        # +x target tilts thrust forward: positive pitch torque, no roll/yaw
        assert tau_p > 1e-4
        assert abs(tau_r) < 1e-9
        assert abs(tau_y) < 1e-9
        # rear motors (2, 4) spin up, front motors (1, 3) slow down
        assert thrust[1] > thrust[0] and thrust[3] > thrust[2]

    def test_esc_always_within_limits(self):
        rng = np.random.default_rng(8)
        for _ in range(200):
            state = QuadState(
                roll=rng.uniform(-0.5, 0.5),
                pitch=rng.uniform(-0.5, 0.5),
                yaw=rng.uniform(-math.pi, math.pi),
                roll_rate=rng.uniform(-2, 2),
                pitch_rate=rng.uniform(-2, 2),
                yaw_rate=rng.uniform(-1, 1),
                x=rng.uniform(-10, 10),
                y=rng.uniform(-10, 10),
                z=rng.uniform(0, 10),
                vx=rng.uniform(-5, 5),
                vy=rng.uniform(-5, 5),
                vz=rng.uniform(-5, 5),
            )
            target = rng.uniform(-10, 10, size=3)
            target[2] = abs(target[2])
            cmd = compute_motor_commands(state, target, GAINS, PARAMS)
            assert np.all(cmd.esc_signal >= ESC_MIN) and np.all(cmd.esc_signal <= ESC_MAX)
            assert np.all(cmd.rpm_setpoint >= GAINS.rpm_min - 1e-9)
            assert np.all(cmd.rpm_setpoint <= GAINS.rpm_max + 1e-9)


def _closed_loop(waypoints, duration, accept=0.5, start_z=2.0):
    """Minimal closed loop with analytic propellers; returns (positions, visit times)."""
    ctrl = CascadedController(GAINS, PARAMS)
    ctrl.reset(hover_rpm(PARAMS))
    state = QuadState(z=start_z)
    t, ctick = 0.0, 0.01
    wp_idx = 0
    visits = []
    positions = []
    while t < duration - 1e-9:
        target = waypoints[wp_idx % len(waypoints)]
        ctrl.tick(state, target, ctick)
        f = PARAMS.k_f * ctrl.rpm_actual**2
        tau = PARAMS.k_tau * ctrl.rpm_actual**2
        w = body_wrench_from_motors(f, tau, PARAMS)
        wrench = BodyWrench(w[0], w[1], w[2], w[3])
        for _ in range(10):
            state = step_rk4(state, wrench, PARAMS, 0.001)
        t += ctick
        pos = np.array([state.x, state.y, state.z])
        positions.append(pos)
        if np.linalg.norm(np.asarray(target) - pos) < accept:
            visits.append((wp_idx % len(waypoints), t))
            wp_idx += 1
    return np.array(positions), visits


class TestClosedLoop:
    def test_hover_regulation_30s(self):
        positions, _ = _closed_loop([(0.0, 0.0, 2.0)], 30.0, accept=1e-9)
        err = np.linalg.norm(positions - np.array([0.0, 0.0, 2.0]), axis=1)
        assert err.max() < 0.05

    def test_five_waypoint_mission_under_80s(self):
        wps = [(4, 3, 4), (-5, 4, 6), (-3, -6, 5), (5, -4, 7), (0, 0, 5)]
        _, visits = _closed_loop(wps, 80.0)
        seen = {v[0] for v in visits}
        assert seen == {0, 1, 2, 3, 4}
        assert visits[4][1] < 80.0
