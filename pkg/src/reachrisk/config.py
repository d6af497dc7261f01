"""Run configuration: JSON with full defaulting and strict key validation."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np

from . import brs
from .belief import BeliefVector, init_uniform
from .dynamics import VehicleGeometry
from .frs import FrsEngine
from .grid import ConfigurationError, GridAxis, InputConstraints, InputGrid, StateGrid
from .predictor import (
    GenerativeConfig,
    GenerativePredictor,
    HeuristicConfig,
    HeuristicPredictor,
)
from .scenario import CutInConfig, IdmParams

DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "workers": 1,
    "threshold": 0.05,
    "field_export_min_p": 0.01,
    "state_grid": {
        "y1": {"min": -4.0, "max": 80.0, "step": 2.0},
        "y2": {"min": -4.0, "max": 4.0, "step": 1.0},
        "v1": {"min": 20.0, "max": 40.0, "step": 0.4},
        "v2": {"min": -2.5, "max": 2.5, "step": 0.2},
    },
    "input_grid": {
        "a1": {"min": -5.0, "max": 3.0, "step": 1.0},
        "a2": {"min": -1.5, "max": 1.5, "step": 0.5},
        "absorb_tails": False,
    },
    "constraints": {"a_max": 5.0, "omega_max": 0.15, "dt": 0.4},
    "horizon": {"steps": 5, "dt": 0.4},
    "belief": {"betas": [1 / 3, 0.5, 1.0, 2.0, 3.0], "kprime": 2},
    "predictor": {
        "type": "heuristic",
        "heuristic": {
            "v2_threshold": 0.2,
            "dominant_prob": 0.9,
            "sigma1": 1.0,
            "sigma2": 0.5,
            "rho": 0.0,
            "lateral_mu": 0.3,
        },
        "generative": {"sigma1": 0.5, "sigma2": 0.25, "rho": 0.0},
    },
    "geometry": {"length": 4.0, "width": 2.0, "l_f": 1.058, "l_r": 1.738},
    "scenario": {
        "v_ego": 30.0,
        "v_sur": 25.0,
        "gap_at_maneuver": 15.0,
        "maneuver_start": 1.0,
        "maneuver_duration": 7.5,
        "lane_width": 3.75,
        "sim_dt": 0.1,
        "total_time": 10.0,
        "sur_desired_speed": 36.1,
        "leader_switch_fraction": 0.5,
        "idm": {"headway": 0.8, "s0": 6.0, "a_a": 1.0, "a_b": 1.0, "a_min": -8.0},
    },
    "brs": {
        "scale": "desk",  # "desk" | "full" | "custom"
        "grid": {
            "y1_rel": {"min": -10.0, "max": 40.0, "step": 1.0},
            "y2_rel": {"min": -4.0, "max": 4.0, "step": 0.8},
            "psi_rel_deg": {"min": -45.0, "max": 45.0, "step": 15.0},
            "v_ego": {"min": 20.0, "max": 40.0, "step": 2.0},
            "v_sur": {"min": 20.0, "max": 40.0, "step": 2.0},
        },
        "horizon": 2.0,
        "cfl": 0.5,
        "beta_samples": 5,
    },
    "framework": {"warmup": 2.0, "tick": 0.4, "history_span": 2.0, "history_rate": 5.0},
}


def _merge(defaults: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(defaults)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigurationError(f"unknown config key: {where}")
        if isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                raise ConfigurationError(f"{where} must be an object")
            out[key] = _merge(defaults[key], value, where)
        else:
            out[key] = value
    return out


def _axis(spec: dict) -> GridAxis:
    return GridAxis(float(spec["min"]), float(spec["max"]), float(spec["step"]))


@dataclass
class RunConfig:
    """Validated configuration with builders for all toolkit objects."""

    raw: dict

    @classmethod
    def from_dict(cls, data: Optional[dict] = None) -> "RunConfig":
        cfg = cls(raw=_merge(DEFAULTS, data or {}))
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        with open(path) as fh:
            data = json.load(fh)
        return cls.from_dict(data)

    def validate(self) -> None:
        self.state_grid()
        self.input_grid()
        self.constraints()
        self.geometry()
        self.brs_grid()
        if self.raw["predictor"]["type"] not in ("heuristic", "generative"):
            raise ConfigurationError("predictor.type must be heuristic or generative")
        betas = self.raw["belief"]["betas"]
        if not betas or any(b <= 0 for b in betas):
            raise ConfigurationError("belief.betas must be positive")
        if not 0 < self.raw["threshold"] <= 1:
            raise ConfigurationError("threshold must be in (0, 1]")
        self.build_engine()  # rejects empty admissible sets at load time

    # -- builders -----------------------------------------------------------

    def state_grid(self) -> StateGrid:
        g = self.raw["state_grid"]
        return StateGrid(_axis(g["y1"]), _axis(g["y2"]), _axis(g["v1"]), _axis(g["v2"]))

    def input_grid(self) -> InputGrid:
        g = self.raw["input_grid"]
        return InputGrid(_axis(g["a1"]), _axis(g["a2"]), bool(g["absorb_tails"]))

    def constraints(self) -> InputConstraints:
        c = self.raw["constraints"]
        return InputConstraints(float(c["a_max"]), float(c["omega_max"]), float(c["dt"]))

    def geometry(self) -> VehicleGeometry:
        g = self.raw["geometry"]
        return VehicleGeometry(g["length"], g["width"], g["l_f"], g["l_r"])

    def build_engine(self, workers: Optional[int] = None) -> FrsEngine:
        return FrsEngine(
            state_grid=self.state_grid(),
            input_grid=self.input_grid(),
            constraints=self.constraints(),
            workers=workers if workers is not None else int(self.raw["workers"]),
        )

    def idm(self, v0: float) -> IdmParams:
        p = self.raw["scenario"]["idm"]
        return IdmParams(v0, p["headway"], p["s0"], p["a_a"], p["a_b"], p["a_min"])

    def scenario(self, v_ego: Optional[float] = None, v_sur: Optional[float] = None) -> CutInConfig:
        s = self.raw["scenario"]
        return CutInConfig(
            v_ego=float(v_ego if v_ego is not None else s["v_ego"]),
            v_sur=float(v_sur if v_sur is not None else s["v_sur"]),
            gap_at_maneuver=s["gap_at_maneuver"],
            maneuver_start=s["maneuver_start"],
            maneuver_duration=s["maneuver_duration"],
            lane_width=s["lane_width"],
            sim_dt=s["sim_dt"],
            total_time=s["total_time"],
            sur_desired_speed=s["sur_desired_speed"],
            idm=self.idm(s["sur_desired_speed"]),
            leader_switch_fraction=s["leader_switch_fraction"],
            geometry=self.geometry(),
        )

    def belief(self, betas: Optional[list] = None) -> BeliefVector:
        b = self.raw["belief"]
        return init_uniform(betas if betas is not None else b["betas"], int(b["kprime"]))

    def predictor(self, scenario: Optional[CutInConfig] = None, kind: Optional[str] = None):
        p = self.raw["predictor"]
        kind = kind or p["type"]
        steps = int(self.raw["horizon"]["steps"])
        dt = float(self.raw["horizon"]["dt"])
        if kind == "heuristic":
            h = p["heuristic"]
            return HeuristicPredictor(
                HeuristicConfig(
                    v2_threshold=h["v2_threshold"],
                    dominant_prob=h["dominant_prob"],
                    sigma1=h["sigma1"],
                    sigma2=h["sigma2"],
                    rho=h["rho"],
                    lateral_mu=h["lateral_mu"],
                    steps=steps,
                    dt=dt,
                )
            )
        if kind == "generative":
            g = p["generative"]
            return GenerativePredictor(
                scenario,
                GenerativeConfig(
                    sigma1=g["sigma1"], sigma2=g["sigma2"], rho=g["rho"], steps=steps, dt=dt
                ),
            )
        raise ConfigurationError(f"unknown predictor type {kind!r}")

    def brs_grid(self) -> brs.BrsGrid:
        b = self.raw["brs"]
        if b["scale"] == "full":
            return brs.BrsGrid.full_default()
        if b["scale"] == "desk":
            return brs.BrsGrid.desk_default()
        if b["scale"] != "custom":
            raise ConfigurationError("brs.scale must be desk, full or custom")
        g = b["grid"]
        psi = g["psi_rel_deg"]
        return brs.BrsGrid(
            axes=(
                _axis(g["y1_rel"]),
                _axis(g["y2_rel"]),
                GridAxis(
                    float(np.deg2rad(psi["min"])),
                    float(np.deg2rad(psi["max"])),
                    float(np.deg2rad(psi["step"])),
                ),
                _axis(g["v_ego"]),
                _axis(g["v_sur"]),
            )
        )
