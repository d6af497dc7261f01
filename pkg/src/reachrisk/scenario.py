"""Cut-in scenario simulation.

The surrounding vehicle starts in the adjacent right lane, accelerates
toward its desired free-flow speed under the intelligent driver model and
cuts into the ego lane along a smooth quintic lateral profile.  The ego
keeps its lane, switching to car-following once the intruder crosses far
enough into the lane.  Crash detection uses the combined bounding box of
the two vehicles.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .dynamics import VehicleGeometry


@dataclass(frozen=True)
class IdmParams:
    """Intelligent-driver-model parameters (car-following calibration)."""

    v0: float = 36.1     # desired speed, m/s
    headway: float = 0.8  # time headway T, s
    s0: float = 6.0      # minimum gap, m
    a_a: float = 1.0     # max acceleration, m/s^2
    a_b: float = 1.0     # comfortable deceleration, m/s^2
    a_min: float = -8.0  # braking floor, m/s^2

    def __post_init__(self):
        if min(self.v0, self.headway, self.s0, self.a_a, self.a_b) <= 0:
            raise ValueError("IDM parameters must be positive")
        if self.a_min >= 0:
            raise ValueError("a_min must be negative")


def idm_accel(
    v: float, dv: float = 0.0, gap: Optional[float] = None, params: IdmParams = IdmParams()
) -> float:
    """IDM acceleration for speed v, closing speed dv and bumper gap.

    gap=None means free flow (no leader): dv and 1/s are both taken as zero.
    dv is positive when approaching the leader.
    """
    if gap is None:
        interaction = 0.0
    else:
        if gap <= 0:
            raise ValueError("gap must be positive with a leader present")
        s_star = params.s0 + max(
            0.0, v * params.headway + v * dv / (2.0 * math.sqrt(params.a_a * params.a_b))
        )
        interaction = (s_star / gap) ** 2
    a = params.a_a * (1.0 - (v / params.v0) ** 4 - interaction)
    return max(a, params.a_min)


def lateral_profile(t: float, duration: float, width: float):
    """Quintic lane-change profile with zero end velocity and acceleration.

    Returns (offset, lateral velocity, lateral acceleration) at time t since
    maneuver start; clamped to the endpoints outside [0, duration].
    """
    if t <= 0.0:
        return 0.0, 0.0, 0.0
    if t >= duration:
        return width, 0.0, 0.0
    tau = t / duration
    y = width * (10 * tau**3 - 15 * tau**4 + 6 * tau**5)
    vy = width * (30 * tau**2 - 60 * tau**3 + 30 * tau**4) / duration
    ay = width * (60 * tau - 180 * tau**2 + 120 * tau**3) / duration**2
    return y, vy, ay


@dataclass(frozen=True)
class CutInConfig:
    """Two-vehicle cut-in event description.

    Speeds are held constant before maneuver_start (warm-up), with the
    initial gap chosen so the center-to-center distance equals
    gap_at_maneuver exactly when the lane change begins.
    """

    v_ego: float = 30.0
    v_sur: float = 25.0
    gap_at_maneuver: float = 15.0
    maneuver_start: float = 1.0
    maneuver_duration: float = 7.5
    lane_width: float = 3.75
    sim_dt: float = 0.1
    total_time: float = 10.0
    sur_desired_speed: float = 36.1
    idm: IdmParams = IdmParams()
    # fraction of lane width at which the intruder becomes the ego's leader
    leader_switch_fraction: float = 0.5
    geometry: VehicleGeometry = VehicleGeometry()

    @property
    def maneuver_direction(self) -> str:
        return "left"  # cut-in from the right lane, increasing y2


@dataclass
class SimTrace:
    """Simulated trajectories of both vehicles at the simulation rate.

    ego and sur are (n, 6) arrays with columns (y1, y2, v1, v2, a1, a2).
    """

    t: np.ndarray
    ego: np.ndarray
    sur: np.ndarray
    crashed: bool
    crash_time: Optional[float]
    config: Optional[CutInConfig] = None

    def index_at(self, t: float) -> int:
        i = int(np.searchsorted(self.t, t - 1e-9))
        if i >= len(self.t) or abs(self.t[i] - t) > 1e-6:
            raise ValueError(f"time {t} not on the simulation clock")
        return i

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "vehicle", "y1", "y2", "v1", "v2", "a1", "a2"])
            for i, t in enumerate(self.t):
                writer.writerow([f"{t:.3f}", "ego"] + [f"{x:.9g}" for x in self.ego[i]])
                writer.writerow([f"{t:.3f}", "sur"] + [f"{x:.9g}" for x in self.sur[i]])

    @classmethod
    def from_csv(cls, path) -> "SimTrace":
        rows = {"ego": [], "sur": []}
        times = {"ego": [], "sur": []}
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            required = {"t", "vehicle", "y1", "y2", "v1", "v2", "a1", "a2"}
            if reader.fieldnames is None or not required.issubset(reader.fieldnames):
                raise ValueError(f"trace CSV must have columns {sorted(required)}")
            for rec in reader:
                vid = rec["vehicle"].strip()
                if vid not in rows:
                    raise ValueError(f"unknown vehicle id {vid!r} (expected ego/sur)")
                times[vid].append(float(rec["t"]))
                rows[vid].append([float(rec[c]) for c in ("y1", "y2", "v1", "v2", "a1", "a2")])
        if not rows["ego"] or len(rows["ego"]) != len(rows["sur"]):
            raise ValueError("trace must contain matched ego/sur samples")
        t = np.asarray(times["ego"], dtype=float)
        if not np.allclose(t, times["sur"], atol=1e-9) or np.any(np.diff(t) <= 0):
            raise ValueError("ego/sur timestamps must match and strictly increase")
        return cls(
            t=t,
            ego=np.asarray(rows["ego"], dtype=float),
            sur=np.asarray(rows["sur"], dtype=float),
            crashed=False,
            crash_time=None,
        )


def _sur_lateral(cfg: CutInConfig, t: float):
    y, vy, ay = lateral_profile(t - cfg.maneuver_start, cfg.maneuver_duration, cfg.lane_width)
    return -cfg.lane_width + y, vy, ay


def simulate(cfg: CutInConfig) -> SimTrace:
    """Forward-Euler simulation of a cut-in event at cfg.sim_dt resolution."""
    n = int(round(cfg.total_time / cfg.sim_dt)) + 1
    t = cfg.sim_dt * np.arange(n)
    ego = np.zeros((n, 6))
    sur = np.zeros((n, 6))
    length = cfg.geometry.length
    half_box_y1 = length  # combined half-extent of two identical vehicles
    half_box_y2 = cfg.geometry.width

    x_e, v_e = 0.0, cfg.v_ego
    # place the intruder so the center gap is exact at maneuver start
    x_s = cfg.gap_at_maneuver + (cfg.v_ego - cfg.v_sur) * cfg.maneuver_start
    v_s = cfg.v_sur
    idm_ego = replace(cfg.idm, v0=cfg.v_ego)
    idm_sur = replace(cfg.idm, v0=cfg.sur_desired_speed)

    crashed = False
    crash_time = None
    last = n
    for i in range(n):
        ti = t[i]
        y2_s, v2_s, a2_s = _sur_lateral(cfg, ti)

        if abs(x_s - x_e) < half_box_y1 and abs(y2_s) < half_box_y2:
            crashed = True
            crash_time = float(ti)
            ego[i] = (x_e, 0.0, v_e, 0.0, 0.0, 0.0)
            sur[i] = (x_s, y2_s, v_s, v2_s, 0.0, a2_s)
            last = i + 1
            break

        if ti < cfg.maneuver_start:
            a_e = 0.0
            a_s = 0.0
        else:
            a_s = idm_accel(v_s, params=idm_sur)
            in_lane = abs(y2_s) < cfg.lane_width * cfg.leader_switch_fraction
            if in_lane and x_s > x_e:
                gap = (x_s - x_e) - length
                a_e = idm_accel(v_e, dv=v_e - v_s, gap=gap, params=idm_ego)
            else:
                a_e = idm_accel(v_e, params=idm_ego)

        ego[i] = (x_e, 0.0, v_e, 0.0, a_e, 0.0)
        sur[i] = (x_s, y2_s, v_s, v2_s, a_s, a2_s)

        x_e += v_e * cfg.sim_dt
        v_e += a_e * cfg.sim_dt
        x_s += v_s * cfg.sim_dt
        v_s += a_s * cfg.sim_dt

    return SimTrace(
        t=t[:last],
        ego=ego[:last],
        sur=sur[:last],
        crashed=crashed,
        crash_time=crash_time,
        config=cfg,
    )


def sweep(
    v_ego_values,
    v_sur_values,
    base: CutInConfig = CutInConfig(),
) -> list[dict]:
    """Simulate all speed combinations; returns one record per event."""
    events = []
    for v_e in v_ego_values:
        for v_s in v_sur_values:
            trace = simulate(replace(base, v_ego=float(v_e), v_sur=float(v_s)))
            events.append(
                {
                    "v_ego": float(v_e),
                    "v_sur": float(v_s),
                    "crashed": trace.crashed,
                    "crash_time": trace.crash_time,
                }
            )
    return events


def crash_band(events: list[dict]) -> list[int]:
    """Sorted integer speed differences v_ego - v_sur that produced a crash."""
    diffs = sorted({int(round(e["v_ego"] - e["v_sur"])) for e in events if e["crashed"]})
    return diffs


def timeliness(times, probs, crash_time: float, threshold: float) -> Optional[float]:
    """Time remaining to the crash when probability first reaches threshold."""
    times = np.asarray(times, dtype=float)
    probs = np.asarray(probs, dtype=float)
    hits = np.nonzero(probs >= threshold)[0]
    if len(hits) == 0:
        return None
    return float(crash_time - times[hits[0]])
