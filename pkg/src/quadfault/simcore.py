"""Rigid-body quadrotor dynamics.

State layout follows the 12-element vector
[roll, pitch, yaw, p, q, r, x, y, z, vx, vy, vz]: ZYX Euler angles (rad),
body angular rates (rad/s), inertial position (m), inertial velocity (m/s).
Body frame: x forward, y left, z up; propeller thrust acts along body +z.

Propeller speeds are expressed in RPM throughout; the lift/drag constants
k_f and k_tau are per RPM squared.
"""

import math
from dataclasses import dataclass, field

import numpy as np

GRAVITY = 9.81

# pitch beyond this is treated as a simulation fault (gimbal-lock guard)
MAX_PITCH_RAD = math.radians(85.0)


class SimulationBlowup(RuntimeError):
    """Raised when integration produces a non-finite or gimbal-locked state."""


def wrap_angle(a):
    """Wrap an angle (scalar or array) to (-pi, pi]."""
    w = np.mod(a, 2.0 * np.pi)
    return np.where(w > np.pi, w - 2.0 * np.pi, w)


@dataclass(frozen=True)
class QuadParams:
    """Airframe constants; defaults match the UAV model II training setup."""

    mass: float = 1.5            # kg
    arm_length: float = 0.16     # m, hub center to motor axis
    ixx: float = 0.0123          # kg m^2
    iyy: float = 0.0123          # kg m^2
    izz: float = 0.0224          # kg m^2
    k_f: float = 1.076e-5        # N / RPM^2
    k_tau: float = 1.632e-7      # N m / RPM^2
    gravity: float = GRAVITY     # m/s^2
    k_d: float = 0.1             # N s/m, linear drag on inertial velocity

    def __post_init__(self):
        for name in ("mass", "arm_length", "ixx", "iyy", "izz", "k_f", "k_tau"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.k_d < 0.0:
            raise ValueError(f"k_d must be >= 0, got {self.k_d}")


@dataclass(frozen=True)
class QuadState:
    roll: float = 0.0
    pitch: float = 0.0
    yaw: float = 0.0
    roll_rate: float = 0.0
    pitch_rate: float = 0.0
    yaw_rate: float = 0.0
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0
    vx: float = 0.0
    vy: float = 0.0
    vz: float = 0.0

    def to_array(self):
        return np.array(
            [
                self.roll, self.pitch, self.yaw,
                self.roll_rate, self.pitch_rate, self.yaw_rate,
                self.x, self.y, self.z,
                self.vx, self.vy, self.vz,
            ]
        )

    @classmethod
    def from_array(cls, arr):
        arr = np.asarray(arr, dtype=float)
        if arr.shape != (12,):
            raise ValueError(f"state vector must have 12 elements, got {arr.shape}")
        return cls(*arr)


@dataclass(frozen=True)
class BodyWrench:
    """Total thrust along body z plus body-axis torques."""

    total_thrust: float
    tau_roll: float = 0.0
    tau_pitch: float = 0.0
    tau_yaw: float = 0.0

    def __post_init__(self):
        if self.total_thrust < 0.0:
            raise ValueError(f"total_thrust must be >= 0, got {self.total_thrust}")

    def to_array(self):
        return np.array([self.total_thrust, self.tau_roll, self.tau_pitch, self.tau_yaw])


def rotation_matrix(roll, pitch, yaw):
    """Body-to-inertial rotation, ZYX convention: R = Rz(yaw) Ry(pitch) Rx(roll)."""
    cr, sr = math.cos(roll), math.sin(roll)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cy, sy = math.cos(yaw), math.sin(yaw)
    return np.array(
        [
            [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
            [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
            [-sp, cp * sr, cp * cr],
        ]
    )


def _derivative(y, wrench, p: QuadParams):
    """Time derivative of the packed 12-state vector; wrench is a 4-array."""
    roll, pitch, yaw = y[0], y[1], y[2]
    wx, wy, wz = y[3], y[4], y[5]
    vel = y[9:12]

    cr, sr = math.cos(roll), math.sin(roll)
    cp = math.cos(pitch)
    tp = math.tan(pitch)

    # Euler-angle kinematics from body rates
    droll = wx + sr * tp * wy + cr * tp * wz
    dpitch = cr * wy - sr * wz
    dyaw = (sr * wy + cr * wz) / cp

    thrust, tau_x, tau_y, tau_z = wrench
    dwx = (tau_x - (p.izz - p.iyy) * wy * wz) / p.ixx
    dwy = (tau_y - (p.ixx - p.izz) * wx * wz) / p.iyy
    dwz = (tau_z - (p.iyy - p.ixx) * wx * wy) / p.izz

    R = rotation_matrix(roll, pitch, yaw)
    acc = (R[:, 2] * thrust - p.k_d * vel) / p.mass
    acc[2] -= p.gravity

    out = np.empty(12)
    out[0], out[1], out[2] = droll, dpitch, dyaw
    out[3], out[4], out[5] = dwx, dwy, dwz
    out[6:9] = vel
    out[9:12] = acc
    return out


def state_derivative(state: QuadState, wrench: BodyWrench, params: QuadParams):
    """Newton-Euler derivative of the full state; returns a 12-array."""
    return _derivative(state.to_array(), wrench.to_array(), params)


def _rk4(y, wrench, params, dt):
    k1 = _derivative(y, wrench, params)
    k2 = _derivative(y + 0.5 * dt * k1, wrench, params)
    k3 = _derivative(y + 0.5 * dt * k2, wrench, params)
    k4 = _derivative(y + dt * k3, wrench, params)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _check_state(y):
    if not np.all(np.isfinite(y)):
        raise SimulationBlowup("non-finite state during integration")
    if abs(y[1]) > MAX_PITCH_RAD:
        raise SimulationBlowup(f"pitch {math.degrees(y[1]):.1f} deg exceeds gimbal-lock guard")


def step_rk4(state: QuadState, wrench: BodyWrench, params: QuadParams, dt: float) -> QuadState:
    """One classical RK4 step with the wrench held constant over dt."""
    if not 0.0 < dt <= 0.05:
        raise ValueError(f"dt must be in (0, 0.05], got {dt}")
    y = _rk4(state.to_array(), wrench.to_array(), params, dt)
    _check_state(y)
    y[0:3] = wrap_angle(y[0:3])
    return QuadState.from_array(y)


def hover_rpm(params: QuadParams) -> float:
    """Propeller speed at which four identical rotors cancel gravity."""
    return math.sqrt(params.mass * params.gravity / (4.0 * params.k_f))
