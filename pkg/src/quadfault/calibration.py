"""Sim-to-real unbalance calibration.

A real airframe hovers with unequal motor speeds (off-center CG, imperfect
mounts). The calibration estimates per-motor unbalance ratios from a hover
log and the simulation then divides each propeller's thrust/torque by the
squared speed-dependent unbalance factor, forcing the affected motors to
spin faster, like the real vehicle.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class UnbalanceProfile:
    """Per-motor mean-RPM ratios relative to motor 1, plus the RPM reference."""

    u_ratio: tuple = (1.0, 1.0, 1.0, 1.0)
    omega_max: float = 1.0

    def __post_init__(self):
        if len(self.u_ratio) != 4:
            raise ValueError("u_ratio must have 4 entries")
        if self.u_ratio[0] != 1.0:
            raise ValueError("motor 1 is the baseline: u_ratio[0] must be exactly 1")
        if any(r <= 0.0 for r in self.u_ratio):
            raise ValueError("all ratios must be > 0")
        if self.omega_max <= 0.0:
            raise ValueError("omega_max must be > 0")

    @property
    def is_identity(self):
        return all(r == 1.0 for r in self.u_ratio)


def estimate_unbalance(hover_log, min_duration=10.0, max_speed=0.1) -> UnbalanceProfile:
    """Ratios of mean motor RPM over a near-hover log segment.

    The segment must cover at least ``min_duration`` seconds with the speed
    below ``max_speed`` m/s throughout. Works on any log object exposing
    ``omega`` (n,4), ``velocity`` (n,3) and ``period``.
    """
    omega = np.asarray(hover_log.omega, dtype=float)
    vel = np.asarray(hover_log.velocity, dtype=float)
    duration = len(omega) * hover_log.period
    if duration < min_duration:
        raise ValueError(
            f"hover segment too short: {duration:.2f} s < {min_duration:.0f} s required"
        )
    speed = np.linalg.norm(vel, axis=1)
    if speed.max() >= max_speed:
        raise ValueError(
            f"segment is not hovering: max speed {speed.max():.3f} m/s >= {max_speed} m/s"
        )
    means = omega.mean(axis=0)
    ratios = means / means[0]
    ratios[0] = 1.0
    return UnbalanceProfile(u_ratio=tuple(float(r) for r in ratios),
                            omega_max=float(omega.max()))


def hover_segment(log, min_duration=10.0, max_speed=0.1):
    """Longest contiguous near-hover stretch of a full flight log.

    Returns (start, stop) record indices, or raises if no stretch reaches
    ``min_duration`` seconds.
    """
    vel = np.asarray(log.velocity, dtype=float)
    ok = np.linalg.norm(vel, axis=1) < max_speed
    best = (0, 0)
    start = None
    for i, flag in enumerate(np.append(ok, False)):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            if i - start > best[1] - best[0]:
                best = (start, i)
            start = None
    if (best[1] - best[0]) * log.period < min_duration:
        raise ValueError(
            f"no hover stretch of {min_duration:.0f} s found "
            f"(longest {(best[1] - best[0]) * log.period:.2f} s)"
        )
    return best


def unbalance_factor(omega, profile: UnbalanceProfile, motor, corrected=True):
    """Speed-dependent unbalance factor for one motor (1-based index).

    Corrected mode (default): 1 + (omega/omega_max) * (U_r - 1), which is 1
    at every speed for a balanced motor. The verbatim mode evaluates
    1 + (omega/omega_max) * U_r for fidelity experiments with the original
    formulation.
    """
    if not 1 <= motor <= 4:
        raise ValueError(f"motor index must be 1..4, got {motor}")
    omega = np.asarray(omega, dtype=float)
    if np.any(omega < 0.0):
        raise ValueError("omega must be >= 0")
    ratio = profile.u_ratio[motor - 1]
    term = ratio - 1.0 if corrected else ratio
    factor = 1.0 + (omega / profile.omega_max) * term
    return float(factor) if factor.ndim == 0 else factor


def adjusted_thrust_torque(omega, factor, k_f, k_tau):
    """Unbalance-adjusted thrust and torque: the quadratics divided by factor^2."""
    omega = np.asarray(omega, dtype=float)
    if np.any(omega < 0.0):
        raise ValueError("omega must be >= 0")
    factor = np.asarray(factor, dtype=float)
    if np.any(factor <= 0.0):
        raise ValueError("factor must be > 0")
    scale = omega**2 / factor**2
    f = k_f * scale
    tau = k_tau * scale
    if f.ndim == 0:
        return float(f), float(tau)
    return f, tau
