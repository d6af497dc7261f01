"""Acceleration forecasting.

A forecast assigns, for each future step and each of three maneuver modes
(keep / left / right), a bivariate normal acceleration distribution plus
per-step mode probabilities.  Any predictor producing this contract can
drive the reachability engine; two reference predictors are provided, a
lateral-velocity heuristic and a scenario-backed generative one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import ndtr

from .dynamics import PointMassState, step_point_mass
from .grid import InputGrid
from .scenario import CutInConfig, idm_accel, lateral_profile

MODES = ("keep", "left", "right")
RHO_CLAMP = 0.999

# Gauss-Legendre nodes/weights, order 8, on [-1, 1]
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)
# standardized half-range beyond which normal tail mass is negligible (< 1e-18)
_Z_CUTOFF = 9.0
_N_PANELS = 24


@dataclass(frozen=True)
class BivariateNormal:
    """Bivariate normal over (a1, a2) with standard deviations and correlation."""

    mu1: float
    mu2: float
    sigma1: float
    sigma2: float
    rho: float = 0.0

    def __post_init__(self):
        if self.sigma1 <= 0 or self.sigma2 <= 0:
            raise ValueError("standard deviations must be positive")
        if not abs(self.rho) < 1:
            raise ValueError("|rho| must be < 1")


def pdf(d: BivariateNormal, a1, a2):
    """Density of d at (a1, a2); broadcasts over array inputs."""
    z1 = (np.asarray(a1, dtype=float) - d.mu1) / d.sigma1
    z2 = (np.asarray(a2, dtype=float) - d.mu2) / d.sigma2
    omr2 = 1.0 - d.rho**2
    q = (z1**2 + z2**2 - 2.0 * d.rho * z1 * z2) / omr2
    return np.exp(-0.5 * q) / (2.0 * math.pi * d.sigma1 * d.sigma2 * math.sqrt(omr2))


def scale_confidence(d: BivariateNormal, beta: float) -> BivariateNormal:
    """Widen (beta > 1) or sharpen (beta < 1) d by scaling both sigmas."""
    if beta <= 0:
        raise ValueError("confidence coefficient must be positive")
    return replace(d, sigma1=d.sigma1 * beta, sigma2=d.sigma2 * beta)


def propagate_sigma(sigma: float, dt: float) -> float:
    """Position standard deviation induced by an acceleration one: sigma*dt^2/2."""
    if sigma < 0 or dt <= 0:
        raise ValueError("sigma must be >= 0 and dt > 0")
    return sigma * dt**2 / 2.0


def propagate_correlation(rho: float, dt: float) -> float:
    """Propagated correlation rho*dt^2/2, clamped to a valid value."""
    scaled = rho * dt**2 / 2.0
    return float(np.clip(scaled, -RHO_CLAMP, RHO_CLAMP))


def rect_masses(d: BivariateNormal, lo1, hi1, lo2, hi2) -> np.ndarray:
    """Probability mass of d over axis-aligned rectangles (vectorized).

    The a1 axis is integrated by composite Gauss-Legendre panels in
    standardized coordinates (clipped to +/-9 sigma, where the discarded
    tail is < 1e-18); the a2 axis uses the exact conditional normal CDF, so
    infinite bounds are handled exactly.  Accurate to ~1e-12 for any sigma,
    including spike-like distributions much narrower than a cell.
    """
    z1lo = (np.asarray(lo1, dtype=float) - d.mu1) / d.sigma1
    z1hi = (np.asarray(hi1, dtype=float) - d.mu1) / d.sigma1
    z2lo = (np.asarray(lo2, dtype=float) - d.mu2) / d.sigma2
    z2hi = (np.asarray(hi2, dtype=float) - d.mu2) / d.sigma2

    a = np.clip(z1lo, -_Z_CUTOFF, _Z_CUTOFF)
    b = np.clip(z1hi, -_Z_CUTOFF, _Z_CUTOFF)
    half = 0.5 * (b - a) / _N_PANELS                      # (n,)
    edges = a[:, None] + 2.0 * half[:, None] * np.arange(_N_PANELS)  # (n, P)
    # (n, P, 8) quadrature nodes in z1
    z = edges[:, :, None] + half[:, None, None] * (_GL_NODES + 1.0)
    phi = np.exp(-0.5 * z**2) / math.sqrt(2.0 * math.pi)

    s = math.sqrt(1.0 - d.rho**2)
    inner = ndtr((z2hi[:, None, None] - d.rho * z) / s) - ndtr(
        (z2lo[:, None, None] - d.rho * z) / s
    )
    integrand = phi * inner
    return np.einsum("npk,k->n", integrand, _GL_WEIGHTS) * half


def cell_masses(d: BivariateNormal, grid: InputGrid) -> np.ndarray:
    """Mass of d in every input cell of the grid, in linear-index order."""
    lo1, hi1, lo2, hi2 = grid.bounds()
    return rect_masses(d, lo1, hi1, lo2, hi2)


@dataclass
class AccelerationForecast:
    """Per-step, per-mode acceleration distributions with mode probabilities.

    dists[k-1][mode] is the distribution for prediction step k (1-based,
    covering the interval ((k-1)*dt, k*dt]); mode_probs is (steps, 3) in
    MODES order and each row sums to one.
    """

    dt: float
    dists: list[dict[str, BivariateNormal]]
    mode_probs: np.ndarray

    def __post_init__(self):
        self.mode_probs = np.asarray(self.mode_probs, dtype=float)
        if self.mode_probs.shape != (len(self.dists), len(MODES)):
            raise ValueError("mode_probs shape mismatch")
        if np.any(self.mode_probs < 0):
            raise ValueError("mode probabilities must be non-negative")
        if not np.allclose(self.mode_probs.sum(axis=1), 1.0, atol=1e-9):
            raise ValueError("mode probabilities must sum to one at every step")
        for step in self.dists:
            if set(step) != set(MODES):
                raise ValueError(f"each step needs distributions for modes {MODES}")

    @property
    def steps(self) -> int:
        return len(self.dists)

    def dist(self, k: int, mode: str) -> BivariateNormal:
        return self.dists[k - 1][mode]

    def probs(self, k: int) -> np.ndarray:
        return self.mode_probs[k - 1]

    def to_jsonable(self) -> dict:
        return {
            "dt": self.dt,
            "modes": list(MODES),
            "steps": [
                {
                    "mode_probs": [float(p) for p in self.mode_probs[k]],
                    "dists": {
                        m: {
                            "mu1": d.mu1,
                            "mu2": d.mu2,
                            "sigma1": d.sigma1,
                            "sigma2": d.sigma2,
                            "rho": d.rho,
                        }
                        for m, d in self.dists[k].items()
                    },
                }
                for k in range(self.steps)
            ],
        }


def propagate_mean_trajectory(
    state: PointMassState, forecast: AccelerationForecast, mode: str
) -> list[PointMassState]:
    """States after each forecast step when following the mode's mean accelerations."""
    out = []
    cur = state
    for k in range(1, forecast.steps + 1):
        d = forecast.dist(k, mode)
        cur = step_point_mass(cur, (d.mu1, d.mu2), forecast.dt)
        out.append(cur)
    return out


@dataclass
class TrackHistory:
    """Observed samples of one vehicle: times, states (n,4) and accelerations (n,2)."""

    t: np.ndarray
    states: np.ndarray
    accels: np.ndarray

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        self.accels = np.asarray(self.accels, dtype=float)
        if len(self.t) == 0:
            raise ValueError("history must contain at least one sample")
        if self.states.shape != (len(self.t), 4) or self.accels.shape != (len(self.t), 2):
            raise ValueError("history arrays have inconsistent shapes")

    @property
    def current_time(self) -> float:
        return float(self.t[-1])

    @property
    def current_state(self) -> PointMassState:
        return PointMassState.from_array(self.states[-1])


@dataclass(frozen=True)
class HeuristicConfig:
    """Fixed-parameter forecast settings for the heuristic predictor."""

    v2_threshold: float = 0.2    # |v2| below this means lane keeping
    dominant_prob: float = 0.9
    sigma1: float = 1.0
    sigma2: float = 0.5
    rho: float = 0.0
    lateral_mu: float = 0.3      # signed mean lateral acceleration of turn modes
    steps: int = 5
    dt: float = 0.4


class HeuristicPredictor:
    """Rule-based baseline: mode from current lateral velocity, fixed normals."""

    def __init__(self, config: HeuristicConfig = HeuristicConfig()):
        self.config = config

    def forecast(self, history: TrackHistory) -> AccelerationForecast:
        cfg = self.config
        v2 = history.states[-1, 3]
        if abs(v2) < cfg.v2_threshold:
            dominant = "keep"
        elif v2 > 0:
            dominant = "left"
        else:
            dominant = "right"
        rest = (1.0 - cfg.dominant_prob) / 2.0
        probs = np.full(3, rest)
        probs[MODES.index(dominant)] = cfg.dominant_prob

        mode_mu2 = {"keep": 0.0, "left": cfg.lateral_mu, "right": -cfg.lateral_mu}
        step_dists = {
            m: BivariateNormal(0.0, mode_mu2[m], cfg.sigma1, cfg.sigma2, cfg.rho)
            for m in MODES
        }
        return AccelerationForecast(
            dt=cfg.dt,
            dists=[dict(step_dists) for _ in range(cfg.steps)],
            mode_probs=np.tile(probs, (cfg.steps, 1)),
        )


@dataclass(frozen=True)
class GenerativeConfig:
    sigma1: float = 0.5
    sigma2: float = 0.25
    rho: float = 0.0
    steps: int = 5
    dt: float = 0.4


class GenerativePredictor:
    """Scenario-backed predictor standing in for a learned acceleration model.

    Mean accelerations come from rolling the scenario's own longitudinal
    car-following law and lateral profile forward from the vehicle's current
    state; the spread is a configured noise level.  The scripted maneuver
    mode gets probability one after maneuver onset, uniform before.
    """

    def __init__(self, scenario: CutInConfig, config: GenerativeConfig = GenerativeConfig()):
        if not isinstance(scenario, CutInConfig):
            raise ValueError("generative predictor needs a cut-in scenario handle")
        self.scenario = scenario
        self.config = config
        self._idm = replace(scenario.idm, v0=scenario.sur_desired_speed)

    def rollout_accels(self, history: TrackHistory) -> np.ndarray:
        """(steps, 2) mean accelerations from the scenario models."""
        cfg = self.config
        sc = self.scenario
        t = history.current_time
        v1 = history.states[-1, 2]
        out = np.zeros((cfg.steps, 2))
        for k in range(cfg.steps):
            t0 = t + k * cfg.dt
            t1 = t0 + cfg.dt
            if t1 <= sc.maneuver_start:
                a1 = 0.0
            else:
                a1 = idm_accel(v1, params=self._idm)
            _, vy0, _ = lateral_profile(t0 - sc.maneuver_start, sc.maneuver_duration, sc.lane_width)
            _, vy1, _ = lateral_profile(t1 - sc.maneuver_start, sc.maneuver_duration, sc.lane_width)
            out[k] = (a1, (vy1 - vy0) / cfg.dt)
            v1 += a1 * cfg.dt
        return out

    def forecast(self, history: TrackHistory) -> AccelerationForecast:
        cfg = self.config
        sc = self.scenario
        accels = self.rollout_accels(history)
        dists = []
        for k in range(cfg.steps):
            d = BivariateNormal(accels[k, 0], accels[k, 1], cfg.sigma1, cfg.sigma2, cfg.rho)
            dists.append({m: d for m in MODES})
        if history.current_time >= sc.maneuver_start:
            probs = np.zeros(3)
            probs[MODES.index(sc.maneuver_direction)] = 1.0
        else:
            probs = np.full(3, 1.0 / 3.0)
        return AccelerationForecast(
            dt=cfg.dt,
            dists=dists,
            mode_probs=np.tile(probs, (cfg.steps, 1)),
        )
