"""Rigid-body dynamics checks: rotation algebra, equilibria, integrator order."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quadfault.simcore import (
    BodyWrench,
    QuadParams,
    QuadState,
    SimulationBlowup,
    hover_rpm,
    rotation_matrix,
    state_derivative,
    step_rk4,
    wrap_angle,
)

PARAMS = QuadParams()
HOVER_WRENCH = BodyWrench(total_thrust=PARAMS.mass * PARAMS.gravity)

angles = st.floats(-math.pi, math.pi, allow_nan=False)


class TestRotationMatrix:
    def test_zero_angles_identity(self):
        np.testing.assert_allclose(rotation_matrix(0, 0, 0), np.eye(3), atol=1e-15)

    def test_quarter_yaw_swaps_axes(self):
        R = rotation_matrix(0, 0, math.pi / 2)
        np.testing.assert_allclose(R @ np.array([1.0, 0, 0]), [0, 1, 0], atol=1e-15)

    def test_composition_of_elementary_rotations(self):
        roll, pitch, yaw = 0.3, -0.2, 1.1
        cr, sr = math.cos(roll), math.sin(roll)
        cp, sp = math.cos(pitch), math.sin(pitch)
        cy, sy = math.cos(yaw), math.sin(yaw)
        rx = np.array([[1, 0, 0], [0, cr, -sr], [0, sr, cr]])
        ry = np.array([[cp, 0, sp], [0, 1, 0], [-sp, 0, cp]])
        rz = np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1]])
        R = rotation_matrix(roll, pitch, yaw)
        np.testing.assert_allclose(R, rz @ ry @ rx, atol=1e-14)
        np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-9)
        assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-9)

    @settings(max_examples=1000, deadline=None)
    @given(angles, angles, angles)
    def test_orthonormal_unit_determinant(self, roll, pitch, yaw):
        R = rotation_matrix(roll, pitch, yaw)
        np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-9)
        assert abs(np.linalg.det(R) - 1.0) < 1e-9


class TestStateDerivative:
    def test_hover_equilibrium(self):
        dydt = state_derivative(QuadState(), HOVER_WRENCH, PARAMS)
        np.testing.assert_allclose(dydt, 0.0, atol=1e-12)

    def test_free_fall(self):
        p = QuadParams(k_d=0.0)
        dydt = state_derivative(QuadState(), BodyWrench(total_thrust=0.0), p)
        assert dydt[11] == pytest.approx(-9.81)
        np.testing.assert_allclose(np.delete(dydt, 11), 0.0, atol=1e-15)

    def test_principal_axis_spin_is_steady(self):
        state = QuadState(yaw_rate=5.0)
        dydt = state_derivative(state, HOVER_WRENCH, PARAMS)
        np.testing.assert_allclose(dydt[3:6], 0.0, atol=1e-12)


class TestStepRk4:
    def test_hover_fixed_point(self):
        out = step_rk4(QuadState(z=3.0), HOVER_WRENCH, PARAMS, 0.01)
        np.testing.assert_allclose(out.to_array(), QuadState(z=3.0).to_array(), atol=1e-12)

    def test_hover_drift_over_1000_steps(self):
        state = QuadState(z=3.0)
        for _ in range(1000):
            state = step_rk4(state, HOVER_WRENCH, PARAMS, 0.001)
        drift = np.hypot(state.x, np.hypot(state.y, state.z - 3.0))
        assert drift < 1e-9

    def test_free_fall_one_second(self):
        p = QuadParams(k_d=0.0)
        state = QuadState(z=10.0)
        for _ in range(1000):
            state = step_rk4(state, BodyWrench(0.0), p, 0.001)
        assert state.z == pytest.approx(10.0 - 4.905, abs=1e-6)

    def test_rejects_bad_dt(self):
        with pytest.raises(ValueError):
            step_rk4(QuadState(), HOVER_WRENCH, PARAMS, 0.2)

    def test_gimbal_guard_trips(self):
        # large pitch torque drives the attitude past the 85 degree guard
        state = QuadState()
        wrench = BodyWrench(total_thrust=PARAMS.mass * PARAMS.gravity, tau_pitch=2.0)
        with pytest.raises(SimulationBlowup):
            for _ in range(2000):
                state = step_rk4(state, wrench, PARAMS, 0.001)

    def test_fourth_order_convergence(self):
        # smooth torque-free tumble; reference at dt/16
        state0 = QuadState(roll_rate=1.2, pitch_rate=-0.8, yaw_rate=0.5)
        p = QuadParams(k_d=0.0)
        wrench = BodyWrench(total_thrust=0.0)

        def integrate(dt, t_end=0.2):
            s = state0
            for _ in range(int(round(t_end / dt))):
                s = step_rk4(s, wrench, p, dt)
            return s.to_array()

        ref = integrate(0.02 / 16)
        err1 = np.linalg.norm(integrate(0.02) - ref)
        err2 = np.linalg.norm(integrate(0.01) - ref)
        order = math.log2(err1 / err2)
        assert 3.5 <= order <= 4.5

    def test_angular_momentum_magnitude_conserved(self):
        p = QuadParams(k_d=0.0)
        inertia = np.array([p.ixx, p.iyy, p.izz])
        state = QuadState(roll_rate=1.0, pitch_rate=-2.0, yaw_rate=1.5)
        h0 = np.linalg.norm(inertia * state.to_array()[3:6])
        wrench = BodyWrench(total_thrust=0.0)
        for _ in range(10000):
            state = step_rk4(state, wrench, p, 0.001)
        h1 = np.linalg.norm(inertia * state.to_array()[3:6])
        assert abs(h1 - h0) / h0 < 1e-6


class TestHoverRpm:
    def test_table_airframe(self):
        assert hover_rpm(QuadParams(mass=1.5)) == pytest.approx(584.7, abs=0.05)

    def test_light_airframe(self):
        assert hover_rpm(QuadParams(mass=1.2)) == pytest.approx(523.0, abs=0.05)

    def test_kf_scaling(self):
        p1 = QuadParams()
        p2 = QuadParams(k_f=2 * p1.k_f)
        assert hover_rpm(p2) == pytest.approx(hover_rpm(p1) / math.sqrt(2.0), rel=1e-12)


class TestValidation:
    def test_params_reject_nonpositive(self):
        with pytest.raises(ValueError):
            QuadParams(mass=0.0)
        with pytest.raises(ValueError):
            QuadParams(k_d=-0.1)

    def test_wrench_rejects_negative_thrust(self):
        with pytest.raises(ValueError):
            BodyWrench(total_thrust=-1.0)

    def test_wrap_angle_range(self):
        vals = np.array([-3 * math.pi, -math.pi, -0.1, 0.0, 0.1, math.pi, 3 * math.pi])
        wrapped = wrap_angle(vals)
        assert np.all(wrapped > -math.pi) and np.all(wrapped <= math.pi)
        assert wrap_angle(math.pi) == pytest.approx(math.pi)
        assert wrap_angle(-math.pi) == pytest.approx(math.pi)
