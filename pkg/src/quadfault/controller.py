"""Waypoint-following cascaded controller.

Stands in for the autopilot stack: position P -> velocity P -> desired
acceleration -> (tilt setpoints, total thrust) -> attitude PD -> body
torques -> exact mixer inverse -> per-motor thrusts -> RPM setpoints and
ESC commands. One controller instance owns the motor-lag state for one
simulated vehicle.

Motor layout (body frame x forward, y left, z up; arm length L):

    m3 (front-left, CW)    m1 (front-right, CCW)
              \\            /
               \\          /
               /          \\
    m2 (rear-left, CCW)    m4 (rear-right, CW)

Counter-rotating diagonal pairs (1,2) and (3,4).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from quadfault.propeller import esc_to_rpm, rpm_to_esc, ESC_MIN, ESC_MAX
from quadfault.simcore import QuadParams, QuadState, wrap_angle

# signs of (y_i, -x_i, spin) per motor: roll arm, pitch arm, yaw reaction
_ROLL_SIGN = np.array([-1.0, 1.0, 1.0, -1.0])
_PITCH_SIGN = np.array([-1.0, 1.0, -1.0, 1.0])
_YAW_SIGN = np.array([-1.0, -1.0, 1.0, 1.0])


@dataclass(frozen=True)
class ControllerGains:
    pos_p: float = 1.1            # position error -> desired velocity, 1/s
    vel_p: float = 2.4            # velocity error -> desired acceleration, 1/s
    vel_max: float = 3.5          # m/s
    acc_max: float = 5.0          # m/s^2 horizontal and vertical authority
    att_p: float = 250.0          # attitude error -> angular accel, 1/s^2
    att_d: float = 32.0           # rate damping, 1/s
    yaw_p: float = 40.0
    yaw_d: float = 12.0
    max_tilt: float = math.radians(30.0)
    rpm_min: float = esc_to_rpm(ESC_MIN)
    rpm_max: float = esc_to_rpm(ESC_MAX)
    motor_tau: float = 0.03       # s, first-order RPM lag

    def __post_init__(self):
        for name in ("pos_p", "vel_p", "vel_max", "acc_max", "att_p", "att_d", "yaw_p", "yaw_d"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be >= 0")
        if not 0.0 < self.max_tilt < math.radians(85.0):
            raise ValueError("max_tilt must be in (0, 85 deg)")
        if not 0.0 <= self.rpm_min < self.rpm_max:
            raise ValueError("need 0 <= rpm_min < rpm_max")
        if self.motor_tau <= 0.0:
            raise ValueError("motor_tau must be > 0")


@dataclass(frozen=True)
class MotorCommand:
    rpm_setpoint: np.ndarray     # (4,)
    esc_signal: np.ndarray       # (4,)
    saturated: bool = False


def mixer(total_thrust, tau_roll, tau_pitch, tau_yaw, params: QuadParams):
    """Exact inverse of the X-configuration allocation; returns 4 thrusts.

    Forward map: T = sum f_i; roll/pitch arms L/sqrt(2); yaw via the
    k_tau/k_f drag-to-thrust ratio with the diagonal spin pattern.
    """
    d = params.arm_length / math.sqrt(2.0)
    c = params.k_tau / params.k_f
    return (
        0.25 * total_thrust
        + _ROLL_SIGN * (tau_roll / (4.0 * d))
        + _PITCH_SIGN * (tau_pitch / (4.0 * d))
        + _YAW_SIGN * (tau_yaw / (4.0 * c))
    )


def mixer_forward(motor_thrusts, params: QuadParams):
    """Wrench produced by four motor thrusts; inverse of :func:`mixer`."""
    f = np.asarray(motor_thrusts, dtype=float)
    d = params.arm_length / math.sqrt(2.0)
    c = params.k_tau / params.k_f
    return (
        float(f.sum()),
        float(d * (_ROLL_SIGN * f).sum()),
        float(d * (_PITCH_SIGN * f).sum()),
        float(c * (_YAW_SIGN * f).sum()),
    )


def body_wrench_from_motors(motor_thrusts, motor_torques, params: QuadParams):
    """Wrench from measured per-motor thrusts and drag torques.

    Unlike :func:`mixer_forward`, the yaw component uses the supplied drag
    torques directly, so it stays correct when thrust and torque come from
    a learned propeller model rather than the k_tau/k_f ratio.
    """
    f = np.asarray(motor_thrusts, dtype=float)
    tau = np.asarray(motor_torques, dtype=float)
    d = params.arm_length / math.sqrt(2.0)
    return np.array(
        [
            f.sum(),
            d * (_ROLL_SIGN * f).sum(),
            d * (_PITCH_SIGN * f).sum(),
            (_YAW_SIGN * tau).sum(),
        ]
    )


def motor_lag(rpm_cmd, rpm_now, dt, tau_m):
    """First-order lag toward the commanded RPM, exact discretization."""
    if tau_m <= 0.0:
        raise ValueError("tau_m must be > 0")
    alpha = math.exp(-dt / tau_m)
    return rpm_cmd + (rpm_now - rpm_cmd) * alpha


def compute_motor_commands(
    state: QuadState, target, gains: ControllerGains, params: QuadParams, yaw_setpoint=0.0
) -> MotorCommand:
    """One cascade evaluation: waypoint in, four RPM/ESC setpoints out."""
    target = np.asarray(target, dtype=float)
    pos = np.array([state.x, state.y, state.z])
    vel = np.array([state.vx, state.vy, state.vz])

    # position -> velocity -> acceleration, both stages clamped
    v_des = gains.pos_p * (target - pos)
    speed = np.linalg.norm(v_des)
    if speed > gains.vel_max:
        v_des *= gains.vel_max / speed
    acc = gains.vel_p * (v_des - vel)
    acc_norm = np.linalg.norm(acc)
    if acc_norm > gains.acc_max:
        acc *= gains.acc_max / acc_norm

    # desired thrust vector in the inertial frame
    t_vec = params.mass * (acc + np.array([0.0, 0.0, params.gravity]))
    t_vec[2] = max(t_vec[2], 0.1 * params.mass * params.gravity)

    # rotate horizontal components into the yaw frame, then tilt setpoints
    cy, sy = math.cos(state.yaw), math.sin(state.yaw)
    tx = cy * t_vec[0] + sy * t_vec[1]
    ty = -sy * t_vec[0] + cy * t_vec[1]
    tz = t_vec[2]
    pitch_des = max(-gains.max_tilt, min(gains.max_tilt, math.atan2(tx, tz)))
    roll_des = max(-gains.max_tilt, min(gains.max_tilt, math.atan2(-ty, math.hypot(tx, tz))))
    total_thrust = float(np.linalg.norm(t_vec))

    tau_roll = params.ixx * (
        gains.att_p * (roll_des - state.roll) - gains.att_d * state.roll_rate
    )
    tau_pitch = params.iyy * (
        gains.att_p * (pitch_des - state.pitch) - gains.att_d * state.pitch_rate
    )
    tau_yaw = params.izz * (
        gains.yaw_p * float(wrap_angle(yaw_setpoint - state.yaw)) - gains.yaw_d * state.yaw_rate
    )

    f = mixer(total_thrust, tau_roll, tau_pitch, tau_yaw, params)
    f_min = params.k_f * gains.rpm_min**2
    f_max = params.k_f * gains.rpm_max**2
    saturated = bool(np.any(f < f_min) or np.any(f > f_max))
    f = np.clip(f, f_min, f_max)

    rpm = np.sqrt(f / params.k_f)
    esc = rpm_to_esc(rpm)
    return MotorCommand(rpm_setpoint=rpm, esc_signal=np.asarray(esc), saturated=saturated)


class CascadedController:
    """Stateful wrapper: holds the lagged motor RPM between control ticks."""

    def __init__(self, gains: ControllerGains, params: QuadParams):
        self.gains = gains
        self.params = params
        self.rpm_actual = np.full(4, float(gains.rpm_min))

    def reset(self, rpm=None):
        if rpm is None:
            rpm = self.gains.rpm_min
        self.rpm_actual = np.full(4, float(rpm))

    def tick(self, state: QuadState, target, dt) -> MotorCommand:
        """Compute setpoints and advance the motor lag by dt."""
        cmd = compute_motor_commands(state, target, self.gains, self.params)
        self.rpm_actual = motor_lag(cmd.rpm_setpoint, self.rpm_actual, dt, self.gains.motor_tau)
        return cmd
