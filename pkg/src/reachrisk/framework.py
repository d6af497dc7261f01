"""Integrated three-step collision detection pipeline.

Per assessment tick: (1) query the cached backward-reachable-set table with
the current relative state; if it proves the interaction safe, stop with
zero collision probability.  (2) Otherwise forecast the surrounding
vehicle's accelerations, propagate its belief-weighted stochastic forward
reachable set over the prediction horizon and accumulate the collision
probability against the ego's planned positions.  (3) Alert when that
probability reaches the configured threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np

from . import brs
from .belief import BeliefVector, Observation, update as belief_update
from .dynamics import VehicleGeometry, wrap_angle
from .frs import FrsEngine, collision_probability, occupancy_set
from .predictor import AccelerationForecast, TrackHistory
from .scenario import SimTrace, timeliness

GATE_SAFE = "safe"
GATE_ESCALATED = "escalated"


class FrameworkError(RuntimeError):
    pass


@dataclass
class AssessmentRecord:
    """Outcome of one tick: gate result, collision probability, alert flag."""

    t: float
    gate: str
    p_col: float
    alert: bool
    step_sums: tuple[float, ...]
    belief: tuple[float, ...]

    def __post_init__(self):
        if self.gate == GATE_SAFE and self.p_col != 0.0:
            raise FrameworkError("gated-safe tick must report zero probability")


@dataclass
class EventResult:
    records: list[AssessmentRecord]
    crashed: bool
    crash_time: Optional[float]
    max_p_col: float
    first_alert_time: Optional[float]
    timeliness: Optional[float]
    false_positive: bool


def relative_state(ego_row, sur_row) -> np.ndarray:
    """(y1_rel, y2_rel, psi_rel, v_ego, v_sur) from two (y1,y2,v1,v2,...) rows."""
    e, s = np.asarray(ego_row, dtype=float), np.asarray(sur_row, dtype=float)
    psi_e = math.atan2(e[3], e[2])
    psi_s = math.atan2(s[3], s[2])
    return np.array(
        [
            s[0] - e[0],
            s[1] - e[1],
            wrap_angle(psi_s - psi_e),
            math.hypot(e[2], e[3]),
            math.hypot(s[2], s[3]),
        ]
    )


def gate_check(table: brs.ValueTable, x_rel) -> str:
    """BRS gate: safe beyond the far longitudinal boundary, conservative otherwise.

    A state clamped only on the upper y1_rel face lies beyond the enclosed
    unsafe area and is safe; clamping on any other face escalates.
    """
    vals, clamped = brs.interpolate(table, np.asarray(x_rel, dtype=float)[None, :])
    flags = clamped[0]
    if flags.any():
        other = flags.copy()
        other[0] = 0
        if flags[0] == 1 and not other.any():
            return GATE_SAFE
        return GATE_ESCALATED
    return GATE_SAFE if vals[0] > 0.0 else GATE_ESCALATED


@dataclass
class DetectionPipeline:
    """Stateful per-vehicle-pair assessment pipeline (belief carried across ticks)."""

    table: brs.ValueTable
    engine: FrsEngine
    predictor: object
    belief: Optional[BeliefVector] = None
    threshold: float = 0.05
    geometry: VehicleGeometry = VehicleGeometry()
    _observations: list[Observation] = dc_field(default_factory=list)
    _pending: Optional[tuple[AccelerationForecast, np.ndarray]] = None

    def observe(self, accel) -> None:
        """Update the belief with the acceleration realized over the last tick."""
        if self._pending is None or self.belief is None:
            return
        forecast, adm = self._pending
        cell = self.engine.input_grid.snap(float(accel[0]), float(accel[1]))
        if not adm[cell]:
            # snapped observation violates constraints; take the nearest admissible cell
            nodes = self.engine.input_grid.nodes()
            obs = np.array([float(accel[0]), float(accel[1])])
            dist = np.where(adm, np.linalg.norm(nodes - obs, axis=1), np.inf)
            cell = int(np.argmin(dist))
        self._observations.append(Observation(forecast, step=1, cell=cell, admissible=adm))
        self._observations = self._observations[-self.belief.kprime:]
        self.belief = belief_update(self.belief, self._observations, self.engine.input_grid)

    def assess(self, t: float, ego_row, sur_row, ego_plan, history: TrackHistory) -> AssessmentRecord:
        """One tick of the three-step pipeline.

        ego_plan holds the ego's planned absolute (y1, y2) at the next
        `engine horizon` ticks; history is the surrounding vehicle's recent
        track used by the predictor.
        """
        x_rel = relative_state(ego_row, sur_row)
        iv1 = self.engine.state_grid.v1.index_of(np.array([sur_row[2]]))[0]
        adm = self.engine.admissible_for_v1_index(
            int(np.clip(iv1, 0, self.engine.state_grid.v1.count - 1))
        )
        forecast = self.predictor.forecast(history)
        self._pending = (forecast, adm)

        belief_snapshot = tuple(self.belief.probs) if self.belief is not None else (1.0,)
        if gate_check(self.table, x_rel) == GATE_SAFE:
            return AssessmentRecord(t, GATE_SAFE, 0.0, False, (), belief_snapshot)

        # relative frame centered on the ego's current position
        init = np.array(
            [sur_row[0] - ego_row[0], sur_row[1] - ego_row[1], sur_row[2], sur_row[3]]
        )
        init = self._clamp_into_grid(init)
        fields = self.engine.propagate(self.engine.init_field(init), forecast, self.belief)
        ego_plan = np.asarray(ego_plan, dtype=float)
        if ego_plan.shape != (forecast.steps, 2):
            raise FrameworkError("ego plan must cover one position per prediction step")
        occupancy = [
            occupancy_set(
                k,
                ego_plan[k - 1, 0] - ego_row[0],
                ego_plan[k - 1, 1] - ego_row[1],
                self.engine.state_grid,
                self.geometry,
                self.geometry,
            )
            for k in range(1, forecast.steps + 1)
        ]
        p_col, sums = collision_probability(fields[1:], occupancy, self.engine.state_grid)
        return AssessmentRecord(
            t, GATE_ESCALATED, p_col, p_col >= self.threshold, tuple(sums), belief_snapshot
        )

    def _clamp_into_grid(self, state: np.ndarray) -> np.ndarray:
        out = state.copy()
        for i, axis in enumerate(self.engine.state_grid.axes):
            out[i] = np.clip(out[i], axis.min, axis.max)
        return out


def evaluate_event(
    trace: SimTrace,
    table: brs.ValueTable,
    engine: FrsEngine,
    predictor,
    belief: Optional[BeliefVector],
    *,
    threshold: float = 0.05,
    warmup: float = 2.0,
    tick: float = 0.4,
    history_span: float = 2.0,
    history_rate: float = 5.0,
) -> EventResult:
    """Run the pipeline at every tick of a simulated or imported trace.

    Ticks start after the warm-up and end strictly before a crash.  The
    ego's plan is its own future trajectory from the trace (extrapolated at
    constant velocity past the end).  The belief is updated before each
    assessment from the acceleration realized over the previous tick.
    """
    if trace.t[-1] < warmup + tick:
        raise FrameworkError("trace shorter than the warm-up window")
    sim_dt = float(trace.t[1] - trace.t[0])
    stride = int(round(tick / sim_dt))
    hist_stride = int(round(1.0 / history_rate / sim_dt))
    if abs(stride * sim_dt - tick) > 1e-9 or abs(hist_stride * sim_dt - 1.0 / history_rate) > 1e-9:
        raise FrameworkError("tick and history rate must be multiples of the trace step")

    pipeline = DetectionPipeline(
        table=table, engine=engine, predictor=predictor, belief=belief, threshold=threshold
    )
    steps = getattr(getattr(predictor, "config", None), "steps", 5)
    records: list[AssessmentRecord] = []
    end_time = trace.crash_time if trace.crashed else float(trace.t[-1])

    i = int(round(warmup / sim_dt))
    first = True
    while i < len(trace.t) and trace.t[i] < end_time - 1e-9:
        t = float(trace.t[i])
        if not first:
            j = i - stride
            accel = (trace.sur[i, 2:4] - trace.sur[j, 2:4]) / tick
            pipeline.observe(accel)
        first = False

        lo = max(0, i - int(round(history_span / sim_dt)))
        sel = np.arange(i, lo - 1, -hist_stride)[::-1]
        history = TrackHistory(trace.t[sel], trace.sur[sel, :4], trace.sur[sel, 4:6])

        plan = _ego_plan(trace, i, stride, steps)
        records.append(pipeline.assess(t, trace.ego[i], trace.sur[i], plan, history))
        i += stride

    alerts = [r.t for r in records if r.alert]
    probs = [r.p_col for r in records]
    times = [r.t for r in records]
    tl = None
    if trace.crashed and trace.crash_time is not None and records:
        tl = timeliness(times, probs, trace.crash_time, threshold)
    return EventResult(
        records=records,
        crashed=trace.crashed,
        crash_time=trace.crash_time,
        max_p_col=max(probs, default=0.0),
        first_alert_time=alerts[0] if alerts else None,
        timeliness=tl,
        false_positive=bool(alerts) and not trace.crashed,
    )


def _ego_plan(trace: SimTrace, i: int, stride: int, steps: int) -> np.ndarray:
    """Ego (y1, y2) at the next `steps` ticks, constant-velocity past the end."""
    plan = np.zeros((steps, 2))
    n = len(trace.t)
    for k in range(1, steps + 1):
        j = i + k * stride
        if j < n:
            plan[k - 1] = trace.ego[j, 0:2]
        else:
            dt_over = (j - (n - 1)) * (trace.t[1] - trace.t[0])
            plan[k - 1, 0] = trace.ego[n - 1, 0] + trace.ego[n - 1, 2] * dt_over
            plan[k - 1, 1] = trace.ego[n - 1, 1] + trace.ego[n - 1, 3] * dt_over
    return plan
