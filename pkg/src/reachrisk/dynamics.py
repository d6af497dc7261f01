"""Vehicle motion models.

Three models are used side by side: a point-mass model driven by 2-D
accelerations (forward propagation), a kinematic bicycle for the ego and a
unicycle for the surrounding vehicle combined into a 5-D relative system
(backward reachability), and the transformation that maps the point-mass
control ranges onto equivalent bicycle/unicycle input ranges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class PointMassState:
    """Planar position (m) and velocity (m/s); v1 > 0 in normal operation."""

    y1: float
    y2: float
    v1: float
    v2: float

    def as_array(self) -> np.ndarray:
        return np.array([self.y1, self.y2, self.v1, self.v2], dtype=float)

    @classmethod
    def from_array(cls, arr) -> "PointMassState":
        y1, y2, v1, v2 = (float(x) for x in arr)
        return cls(y1, y2, v1, v2)


@dataclass
class RelativeState:
    """Relative position/heading between the vehicles plus absolute speeds."""

    y1_rel: float
    y2_rel: float
    psi_rel: float
    v_ego: float
    v_sur: float

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.y1_rel, self.y2_rel, self.psi_rel, self.v_ego, self.v_sur],
            dtype=float,
        )


@dataclass(frozen=True)
class VehicleGeometry:
    """Bounding box plus bicycle reference-point offsets (all meters)."""

    length: float = 4.0
    width: float = 2.0
    l_f: float = 1.058
    l_r: float = 1.738

    def __post_init__(self):
        if min(self.length, self.width, self.l_f, self.l_r) <= 0:
            raise ValueError("geometry dimensions must be positive")


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)) or self.lo > self.hi:
            raise ValueError(f"invalid interval [{self.lo}, {self.hi}]")

    @property
    def max_abs(self) -> float:
        return max(abs(self.lo), abs(self.hi))


@dataclass(frozen=True)
class PointMassRanges:
    """Control and velocity ranges of the point-mass model (global frame)."""

    accel_x: Interval = Interval(-5.0, 3.0)
    accel_y: Interval = Interval(-1.5, 1.5)
    speed_x: Interval = Interval(20.0, 40.0)
    speed_y: Interval = Interval(-1.5, 1.5)


@dataclass(frozen=True)
class RelativeInputRanges:
    """Equivalent input intervals for the relative bicycle/unicycle system."""

    a_ego: Interval
    beta_ego: Interval
    a_sur: Interval
    omega_sur: Interval


def wrap_angle(psi: float) -> float:
    """Wrap an angle to [-pi, pi)."""
    return float((psi + math.pi) % (2.0 * math.pi) - math.pi)


def step_point_mass(state: PointMassState, accel, dt: float) -> PointMassState:
    """One propagation step: v' = v + a*dt, y' = y + (v + v')*dt/2."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    a1, a2 = float(accel[0]), float(accel[1])
    v1 = state.v1 + a1 * dt
    v2 = state.v2 + a2 * dt
    y1 = state.y1 + 0.5 * (state.v1 + v1) * dt
    y2 = state.y2 + 0.5 * (state.v2 + v2) * dt
    return PointMassState(y1, y2, v1, v2)


def slip_angle(delta_f: float, geom: VehicleGeometry) -> float:
    """Bicycle slip angle for front steering angle delta_f (|delta_f| < pi/2)."""
    if abs(delta_f) >= math.pi / 2:
        raise ValueError("steering angle out of range")
    return math.atan(geom.l_r / (geom.l_f + geom.l_r) * math.tan(delta_f))


def relative_deriv(x, ego, sur, geom: VehicleGeometry) -> np.ndarray:
    """Time derivative of (y1_rel, y2_rel, psi_rel, v_ego, v_sur).

    ego = (a_ego, beta_ego), sur = (a_sur, omega_sur).
    """
    y1, y2, psi, v_e, v_s = (float(v) for v in np.asarray(x, dtype=float))
    a_e, beta = float(ego[0]), float(ego[1])
    a_s, omega = float(sur[0]), float(sur[1])
    yaw_e = v_e / geom.l_r * math.sin(beta)
    return np.array(
        [
            yaw_e * y2 + v_s * math.cos(psi) - v_e * math.cos(beta),
            -yaw_e * y1 + v_s * math.sin(psi) - v_e * math.sin(beta),
            omega - yaw_e,
            a_e,
            a_s,
        ]
    )


def accel_body_to_global(a_x, a_y, psi, vx, vy):
    """Global-frame accelerations induced by body-frame inputs.

    The yaw rate is tied to lateral acceleration through a_y = psi_dot * vx,
    which contributes the rotation terms below.
    """
    ratio = np.asarray(vy, dtype=float) / np.asarray(vx, dtype=float)
    s, c = np.sin(psi), np.cos(psi)
    xdd = a_x * c - 2.0 * a_y * s - ratio * a_y * c
    ydd = a_x * s + 2.0 * a_y * c - ratio * a_y * s
    return xdd, ydd


def accel_global_to_body(xdd, ydd, psi, vx, vy):
    """Body-frame accelerations recovering given global-frame ones.

    Exact inverse of accel_body_to_global (checked by round trip):
    a_y = (ydd*cos - xdd*sin)/2, a_x = (vy/vx)*a_y + xdd*cos + ydd*sin.
    """
    vx = np.asarray(vx, dtype=float)
    if np.any(vx <= 0):
        raise ValueError("longitudinal speed must be positive")
    s, c = np.sin(psi), np.cos(psi)
    a_y = 0.5 * (ydd * c - xdd * s)
    a_x = (np.asarray(vy, dtype=float) / vx) * a_y + xdd * c + ydd * s
    return a_x, a_y


def derive_input_ranges(
    pm: PointMassRanges, geom: VehicleGeometry
) -> RelativeInputRanges:
    """Equivalent bicycle/unicycle input ranges from point-mass control ranges.

    Acceleration endpoints come from the Euclidean norm at the corners of the
    (accel_x, accel_y) box, signed by the longitudinal direction.  The yaw
    rate follows omega = a_y / vx, maximized at the lowest speed, and the
    slip angle from sin(beta) = omega * l_r / v.  The surrounding vehicle
    shares the ego acceleration range.
    """
    ay = pm.accel_y.max_abs
    a_lo = -math.hypot(-pm.accel_x.lo, ay) if pm.accel_x.lo < 0 else 0.0
    a_hi = math.hypot(pm.accel_x.hi, ay) if pm.accel_x.hi > 0 else 0.0
    if pm.accel_x.lo == pm.accel_x.hi == 0.0 and ay == 0.0:
        a_lo = a_hi = 0.0
    omega_hi = ay / pm.speed_x.lo
    sin_beta = min(1.0, omega_hi * geom.l_r / pm.speed_x.lo)
    beta_hi = math.asin(sin_beta)
    accel = Interval(a_lo, a_hi)
    return RelativeInputRanges(
        a_ego=accel,
        beta_ego=Interval(-beta_hi, beta_hi),
        a_sur=accel,
        omega_sur=Interval(-omega_hi, omega_hi),
    )
