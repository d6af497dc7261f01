"""Confidence-coefficient belief tracking.

A belief vector holds probabilities over a discrete set of confidence
coefficients beta (multipliers on forecast standard deviations).  It is
Bayes-updated online from the likelihood of recently observed acceleration
cells under each beta-scaled forecast, over a sliding window of the last
k' observations.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .grid import InputGrid
from .predictor import AccelerationForecast, cell_masses, scale_confidence

log = logging.getLogger(__name__)

BETA_PRESETS = {
    1: (1.0,),
    3: (0.5, 1.0, 2.0),
    5: (1.0 / 3.0, 0.5, 1.0, 2.0, 3.0),
}


@dataclass
class BeliefVector:
    """Probabilities over confidence coefficients, with update window k'."""

    betas: tuple[float, ...]
    probs: np.ndarray
    kprime: int = 2

    def __post_init__(self):
        self.betas = tuple(float(b) for b in self.betas)
        self.probs = np.asarray(self.probs, dtype=float)
        if len(self.betas) == 0 or any(b <= 0 for b in self.betas):
            raise ValueError("betas must be non-empty and positive")
        if len(set(self.betas)) != len(self.betas):
            raise ValueError("duplicate beta values")
        if self.probs.shape != (len(self.betas),):
            raise ValueError("belief shape mismatch")
        if np.any(self.probs < 0) or abs(self.probs.sum() - 1.0) > 1e-9:
            raise ValueError("belief must be a probability vector")
        if self.kprime < 1:
            raise ValueError("window length must be >= 1")

    def prob_of(self, beta: float) -> float:
        return float(self.probs[self.betas.index(beta)])


def init_uniform(betas, kprime: int = 2) -> BeliefVector:
    """Uniform belief over the given beta set."""
    betas = tuple(float(b) for b in betas)
    return BeliefVector(betas, np.full(len(betas), 1.0 / len(betas)), kprime)


@dataclass(frozen=True)
class Observation:
    """One realized acceleration cell with the forecast that predicted it."""

    forecast: AccelerationForecast
    step: int            # 1-based prediction step the observation realizes
    cell: int            # linear input-cell index of the snapped acceleration
    admissible: np.ndarray  # boolean mask of admissible input cells


def observation_likelihoods(
    obs: Observation, betas, grid: InputGrid
) -> np.ndarray:
    """Normalized probability of the observed input cell under each beta.

    For each beta the mode-mixture cell masses are scaled, then normalized
    over the admissible input cells; the observed cell's share is returned.
    """
    if not obs.admissible[obs.cell]:
        raise ValueError("observed acceleration cell is not admissible")
    lam = obs.forecast.probs(obs.step)
    out = np.empty(len(betas))
    for j, beta in enumerate(betas):
        masses = np.zeros(grid.size)
        for m, mode in enumerate(("keep", "left", "right")):
            if lam[m] == 0.0:
                continue
            d = scale_confidence(obs.forecast.dist(obs.step, mode), beta)
            masses += lam[m] * cell_masses(d, grid)
        masses = np.where(obs.admissible, masses, 0.0)
        total = masses.sum()
        if total <= 0.0:
            out[j] = 1.0 / obs.admissible.sum()
        else:
            out[j] = masses[obs.cell] / total
    return out


def update(
    belief: BeliefVector, observations: list[Observation], grid: InputGrid
) -> BeliefVector:
    """Bayes update from the last k' observations (older entries ignored).

    Degenerate evidence (all posteriors zero) keeps the prior and logs a
    diagnostic instead of resetting.
    """
    window = observations[-belief.kprime:]
    if not window:
        raise ValueError("at least one observation is required")
    likelihood = np.ones(len(belief.betas))
    for obs in window:
        likelihood *= observation_likelihoods(obs, belief.betas, grid)
    posterior = belief.probs * likelihood
    total = posterior.sum()
    if total <= 0.0 or not np.isfinite(total):
        log.warning("degenerate belief evidence; keeping prior")
        return BeliefVector(belief.betas, belief.probs.copy(), belief.kprime)
    return BeliefVector(belief.betas, posterior / total, belief.kprime)
