"""Stochastic forward-reachable-set engine.

Occupancy probabilities over the state grid are pushed forward one
prediction step at a time: every sufficiently probable source cell spreads
its mass over the successors of its admissible acceleration inputs, with
input probabilities given by the (belief-weighted) forecast cell masses.
Transition matrices are never materialized; the transition operator is
rebuilt from the forecast at every step.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np

from .belief import BeliefVector
from .dynamics import VehicleGeometry
from .grid import (
    InputConstraints,
    InputGrid,
    StateGrid,
    admissible_mask,
    validate_admissibility,
)
from .predictor import MODES, AccelerationForecast, cell_masses, scale_confidence

log = logging.getLogger(__name__)


@dataclass
class ProbabilityField:
    """Occupancy probabilities over state-grid cells at prediction step k.

    oob accumulates mass absorbed outside the grid, so p.sum() + oob is
    conserved across propagation steps.
    """

    k: int
    p: np.ndarray
    oob: float = 0.0

    def total(self) -> float:
        return float(self.p.sum() + self.oob)

    def position_marginal(self, grid: StateGrid) -> np.ndarray:
        """(n_y1, n_y2) probability marginalized over both velocity axes."""
        return self.p.reshape(grid.shape).sum(axis=(2, 3))


@dataclass(frozen=True)
class OccupancySet:
    """Position cells covered by the ego footprint at prediction step k."""

    k: int
    y1_indices: np.ndarray
    y2_indices: np.ndarray

    @property
    def cells(self) -> list[tuple[int, int]]:
        return [(int(i), int(j)) for i in self.y1_indices for j in self.y2_indices]


def normalize_inputs(masses: np.ndarray) -> np.ndarray:
    """Input-cell probabilities from raw masses; uniform fallback if all zero."""
    masses = np.asarray(masses, dtype=float)
    total = masses.sum()
    if total <= 0.0:
        log.warning("all input-cell masses are zero; falling back to uniform")
        return np.full(masses.shape, 1.0 / masses.size)
    return masses / total


def occupancy_set(
    k: int,
    ego_y1: float,
    ego_y2: float,
    grid: StateGrid,
    ego_geom: VehicleGeometry = VehicleGeometry(),
    sur_geom: VehicleGeometry = VehicleGeometry(),
) -> OccupancySet:
    """Cells whose centers lie in the Minkowski-inflated ego box (tie-inclusive)."""
    ext1 = 0.5 * (ego_geom.length + sur_geom.length)
    ext2 = 0.5 * (ego_geom.width + sur_geom.width)
    i1 = np.nonzero(np.abs(grid.y1.nodes() - ego_y1) <= ext1 + 1e-9)[0]
    i2 = np.nonzero(np.abs(grid.y2.nodes() - ego_y2) <= ext2 + 1e-9)[0]
    if len(i1) == 0 or len(i2) == 0:
        return OccupancySet(k, np.empty(0, dtype=int), np.empty(0, dtype=int))
    return OccupancySet(k, i1, i2)


def collision_probability(
    fields: list[ProbabilityField],
    occupancy: list[OccupancySet],
    grid: StateGrid,
) -> tuple[float, list[float]]:
    """Collision probability over the horizon and the per-step overlap sums.

    P = 1 - prod_k (1 - sum of field mass on the ego-occupied cells at k).
    Per-step sums exceeding one (numerically) are clamped with a diagnostic.
    """
    if len(fields) != len(occupancy):
        raise ValueError("one occupancy set is required per field")
    sums = []
    survival = 1.0
    for fld, occ in zip(fields, occupancy):
        if fld.k != occ.k:
            raise ValueError("field/occupancy step mismatch")
        marg = fld.position_marginal(grid)
        s = float(marg[np.ix_(occ.y1_indices, occ.y2_indices)].sum()) if len(occ.y1_indices) else 0.0
        if s > 1.0:
            log.warning("per-step collision sum %.3e > 1; clamping", s)
            s = 1.0
        sums.append(s)
        survival *= 1.0 - s
    return 1.0 - survival, sums


def position_accuracy(field: ProbabilityField, state, grid: StateGrid) -> float:
    """Mass on the actual position cell and its 4 axis neighbors."""
    state = np.asarray(state, dtype=float)
    i1 = grid.y1.index_of(state[0:1])[0]
    i2 = grid.y2.index_of(state[1:2])[0]
    if i1 < 0 or i2 < 0:
        return 0.0
    marg = field.position_marginal(grid)
    acc = marg[i1, i2]
    for di, dj in ((-1, 0), (1, 0), (0, -1), (0, 1)):
        a, b = i1 + di, i2 + dj
        if 0 <= a < grid.y1.count and 0 <= b < grid.y2.count:
            acc += marg[a, b]
    return float(acc)


def field_rows(field: ProbabilityField, grid: StateGrid, min_p: float = 0.01):
    """(y1, y2, probability) rows of the position marginal, strictly above min_p."""
    marg = field.position_marginal(grid)
    y1n, y2n = grid.y1.nodes(), grid.y2.nodes()
    rows = []
    for i, j in zip(*np.nonzero(marg > min_p)):
        rows.append((float(y1n[i]), float(y2n[j]), float(marg[i, j])))
    return rows


@dataclass
class FrsEngine:
    """Propagation engine bound to a grid pair and input constraints.

    The engine is immutable during a step and safe to share across threads.
    Work is split into fixed-size chunks of source cells whose partial
    results are reduced in a fixed order, so output is bit-identical for
    any worker count.
    """

    state_grid: StateGrid = dc_field(default_factory=StateGrid.default)
    input_grid: InputGrid = dc_field(default_factory=InputGrid.default)
    constraints: InputConstraints = InputConstraints()
    mass_threshold: float = 1e-9
    workers: int = 1
    chunk_cells: int = 4096

    def __post_init__(self):
        validate_admissibility(self.input_grid, self.constraints, self.state_grid)
        self._nodes = self.input_grid.nodes()
        v1_nodes = self.state_grid.v1.nodes()
        self._adm = np.stack(
            [
                admissible_mask(self.input_grid, v1, self.constraints, self.state_grid.v1.min)
                for v1 in v1_nodes
            ]
        )
        self._strides = np.array(self.state_grid.strides, dtype=np.int64)

    # -- input distribution ------------------------------------------------

    def input_cell_masses(
        self,
        forecast: AccelerationForecast,
        belief: Optional[BeliefVector],
        k: int,
    ) -> np.ndarray:
        """Raw belief-weighted mixture mass of every input cell at step k."""
        pairs = [(1.0, 1.0)] if belief is None else list(zip(belief.betas, belief.probs))
        lam = forecast.probs(k)
        masses = np.zeros(self.input_grid.size)
        for m, mode in enumerate(MODES):
            if lam[m] == 0.0:
                continue
            base = forecast.dist(k, mode)
            for beta, b in pairs:
                if b == 0.0:
                    continue
                masses += lam[m] * b * cell_masses(scale_confidence(base, beta), self.input_grid)
        return masses

    def input_cell_mass(
        self,
        forecast: AccelerationForecast,
        belief: Optional[BeliefVector],
        k: int,
        cell: int,
    ) -> float:
        return float(self.input_cell_masses(forecast, belief, k)[cell])

    def admissible_for_v1_index(self, iv1: int) -> np.ndarray:
        return self._adm[iv1]

    # -- propagation -------------------------------------------------------

    def init_field(self, state) -> ProbabilityField:
        idx = self.state_grid.index_of(np.asarray(state, dtype=float))
        if idx < 0:
            raise ValueError("initial state outside the grid domain")
        p = np.zeros(self.state_grid.size)
        p[idx] = 1.0
        return ProbabilityField(k=0, p=p)

    def _transfer_chunk(self, centers, probs, iv1, input_probs):
        """Successor deposits for one chunk of source cells sharing a v1 node.

        Returns a dense partial field and the out-of-domain mass.
        """
        grid = self.state_grid
        dt = self.constraints.dt
        sel = self._adm[iv1]
        acc = self._nodes[sel]
        pu = input_probs

        v1 = grid.v1.node(iv1)
        v1n = v1 + acc[:, 0] * dt                               # (m,)
        v2n = centers[:, 3, None] + acc[None, :, 1] * dt        # (n, m)
        y1n = centers[:, 0, None] + 0.5 * (v1 + v1n)[None, :] * dt
        y2n = centers[:, 1, None] + 0.5 * (centers[:, 3, None] + v2n) * dt

        n, m = v2n.shape
        lin = np.zeros((n, m), dtype=np.int64)
        valid = np.ones((n, m), dtype=bool)
        for axis, stride, coords in (
            (grid.y1, self._strides[0], y1n),
            (grid.y2, self._strides[1], y2n),
            (grid.v1, self._strides[2], np.broadcast_to(v1n, (n, m))),
            (grid.v2, self._strides[3], v2n),
        ):
            idx = axis.index_of(coords.ravel()).reshape(n, m)
            valid &= idx >= 0
            lin += stride * idx

        weights = probs[:, None] * pu[None, :]
        ok = valid.ravel()
        partial = np.bincount(
            lin.ravel()[ok], weights=weights.ravel()[ok], minlength=grid.size
        )
        return partial, float(weights.ravel()[~ok].sum())

    def step(
        self,
        field: ProbabilityField,
        forecast: AccelerationForecast,
        belief: Optional[BeliefVector] = None,
    ) -> ProbabilityField:
        """One transition step; sub-threshold source mass is carried in place."""
        grid = self.state_grid
        k_next = field.k + 1
        masses = self.input_cell_masses(forecast, belief, k_next)

        active = np.nonzero(field.p > self.mass_threshold)[0]
        new_p = np.where(field.p > self.mass_threshold, 0.0, field.p)
        oob = field.oob
        if len(active):
            mi = grid.multi_index(active)
            centers = grid.centers(active)
            probs = field.p[active]

            jobs = []
            for iv1 in np.unique(mi[:, 2]):
                rows = np.nonzero(mi[:, 2] == iv1)[0]
                pu = normalize_inputs(masses[self._adm[iv1]])
                for lo in range(0, len(rows), self.chunk_cells):
                    sl = rows[lo : lo + self.chunk_cells]
                    jobs.append((centers[sl], probs[sl], int(iv1), pu))

            if self.workers > 1 and len(jobs) > 1:
                with ThreadPoolExecutor(max_workers=self.workers) as pool:
                    results = list(pool.map(lambda j: self._transfer_chunk(*j), jobs))
            else:
                results = [self._transfer_chunk(*j) for j in jobs]
            for partial, oob_part in results:
                new_p += partial
                oob += oob_part

        out = ProbabilityField(k=k_next, p=new_p, oob=oob)
        if abs(out.total() - field.total()) > 1e-9 * max(1.0, field.total()):
            raise RuntimeError("probability mass not conserved in step")
        return out

    def propagate(
        self,
        initial: ProbabilityField,
        forecast: AccelerationForecast,
        belief: Optional[BeliefVector] = None,
    ) -> list[ProbabilityField]:
        """Fields at steps 0..e, starting from the given initial field."""
        fields = [initial]
        for _ in range(forecast.steps):
            fields.append(self.step(fields[-1], forecast, belief))
        return fields
