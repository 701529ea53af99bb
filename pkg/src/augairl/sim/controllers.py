"""Low-level vehicle controllers: IDM car following, PID lateral, sliding-mode longitudinal."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class IdmParams:
    a_max: float = 1.5       # m/s^2
    b_comfort: float = 2.0   # m/s^2
    b_max: float = 8.0       # emergency deceleration bound, m/s^2
    delta: float = 4.0
    s0: float = 2.0          # jam distance, m


def idm_acceleration_raw(speed, desired_speed, headway, gap=None, closing_speed=None,
                         params: IdmParams = IdmParams()):
    """Vectorised IDM.

    ``gap`` is bumper-to-bumper distance to the leader and ``closing_speed`` is
    ``v_follower - v_leader``; pass ``None`` (or ``inf`` gaps) for free road.
    The result is clipped to ``[-b_max, a_max]``.
    """
    speed = np.asarray(speed, dtype=np.float64)
    free = 1.0 - (speed / desired_speed) ** params.delta
    if gap is None:
        acc = params.a_max * free
    else:
        gap = np.asarray(gap, dtype=np.float64)
        dv = np.asarray(closing_speed, dtype=np.float64)
        s_star = params.s0 + np.maximum(
            0.0, speed * headway + speed * dv / (2.0 * np.sqrt(params.a_max * params.b_comfort)))
        with np.errstate(divide="ignore", invalid="ignore"):
            interaction = np.where(np.isfinite(gap), (s_star / np.maximum(gap, 0.1)) ** 2, 0.0)
        acc = params.a_max * (free - interaction)
    return np.clip(acc, -params.b_max, params.a_max)


def idm_acceleration(follower, leader=None, params: IdmParams = IdmParams()) -> float:
    """IDM acceleration for a follower :class:`VehicleState` behind an optional leader."""
    if leader is None:
        return float(idm_acceleration_raw(follower.lon_speed, follower.desired_speed,
                                           follower.desired_time_gap, params=params))
    gap = (leader.lon_pos - 0.5 * leader.length) - (follower.lon_pos + 0.5 * follower.length)
    return float(idm_acceleration_raw(follower.lon_speed, follower.desired_speed,
                                      follower.desired_time_gap, gap,
                                      follower.lon_speed - leader.lon_speed, params))


@dataclass(frozen=True)
class PidGains:
    kp: float = 0.8
    ki: float = 0.05
    kd: float = 0.3
    max_lat_speed: float = 1.5   # m/s
    integral_limit: float = 2.0  # m*s


@dataclass
class PidState:
    integral: float = 0.0
    prev_error: float = 0.0
    primed: bool = False

    def reset(self):
        self.integral = 0.0
        self.prev_error = 0.0
        self.primed = False


def pid_lateral(lat_pos: float, target_center: float, state: PidState, dt: float = 0.1,
                gains: PidGains = PidGains()) -> float:
    """Lateral-speed command toward ``target_center``; updates ``state`` in place.

    The derivative term is zero on the first call after a reset, which avoids
    a derivative kick when the reference jumps to a new lane.  The integral is
    frozen while the output saturates in the direction of the error.
    """
    error = target_center - lat_pos
    deriv = (error - state.prev_error) / dt if state.primed else 0.0
    candidate = state.integral + error * dt
    candidate = min(max(candidate, -gains.integral_limit), gains.integral_limit)
    raw = gains.kp * error + gains.ki * candidate + gains.kd * deriv
    cmd = min(max(raw, -gains.max_lat_speed), gains.max_lat_speed)
    if cmd == raw or (error > 0) != (raw > 0):
        state.integral = candidate
    state.prev_error = error
    state.primed = True
    return cmd


@dataclass(frozen=True)
class SlidingModeParams:
    lam: float = 1.0     # s, weight of the speed error in the surface
    k: float = 2.0       # m/s^2, switching gain
    phi: float = 2.0     # boundary-layer width
    a_max: float = 1.5
    b_max: float = 8.0


def sat(x):
    return np.clip(x, -1.0, 1.0)


def sliding_mode_command(position_error, speed_error, params: SlidingModeParams = SlidingModeParams()):
    """``k * sat(s / phi)`` with surface ``s = position_error + lam * speed_error``, clipped."""
    s = position_error + params.lam * speed_error
    return np.clip(params.k * sat(s / params.phi), -params.b_max, params.a_max)


def speed_tracking_command(speed, desired_speed, params: SlidingModeParams = SlidingModeParams()):
    return sliding_mode_command(0.0, desired_speed - speed, params)


def sliding_mode_longitudinal(ego, leader=None, desired_time_gap: float = 1.5,
                              params: SlidingModeParams = SlidingModeParams()) -> float:
    """Time-gap tracking behind ``leader``; desired-speed tracking without one."""
    if desired_time_gap <= 0:
        raise ValueError("desired_time_gap must be positive")
    if leader is None:
        return float(speed_tracking_command(ego.lon_speed, ego.desired_speed, params))
    gap = (leader.lon_pos - 0.5 * leader.length) - (ego.lon_pos + 0.5 * ego.length)
    return float(sliding_mode_command(gap - desired_time_gap * ego.lon_speed,
                                      leader.lon_speed - ego.lon_speed, params))
