"""Discretized state and input spaces for the forward-reachability engine.

The surrounding vehicle's state lives on a 4-D grid (longitudinal/lateral
position and velocity); its control input on a 2-D acceleration grid.  Grid
nodes are cell centers with half-step extents, so a value maps to the cell
whose center is nearest.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Sentinel linear index for states outside the grid domain.
OUT_OF_DOMAIN = -1


class ConfigurationError(ValueError):
    """Raised when grid or constraint configuration is inconsistent."""


@dataclass(frozen=True)
class GridAxis:
    """Uniform axis with nodes at ``min + i*step`` for ``i in [0, count)``."""

    min: float
    max: float
    step: float

    def __post_init__(self):
        if not (np.isfinite(self.min) and np.isfinite(self.max) and np.isfinite(self.step)):
            raise ConfigurationError("axis parameters must be finite")
        # max == min makes a singleton axis (one node), used by reduced grids
        if self.step <= 0 or self.max < self.min:
            raise ConfigurationError(
                f"invalid axis [{self.min}, {self.max}] step {self.step}"
            )
        n = (self.max - self.min) / self.step
        if abs(n - round(n)) > 1e-6:
            raise ConfigurationError(
                f"axis span [{self.min}, {self.max}] is not a multiple of step {self.step}"
            )

    @property
    def count(self) -> int:
        return int(round((self.max - self.min) / self.step)) + 1

    def nodes(self) -> np.ndarray:
        return self.min + self.step * np.arange(self.count)

    def node(self, i: int) -> float:
        return self.min + self.step * i

    def index_of(self, values) -> np.ndarray:
        """Nearest-node index; ties between two nodes go to the lower index.

        Values outside ``[min - step/2, max + step/2]`` map to OUT_OF_DOMAIN.
        """
        v = np.asarray(values, dtype=float)
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite coordinate")
        t = (v - self.min) / self.step
        # ceil(t - 0.5) rounds half-down, i.e. exact midpoints pick the lower node
        idx = np.ceil(t - 0.5).astype(np.int64)
        ood = (v < self.min - 0.5 * self.step) | (v > self.max + 0.5 * self.step)
        np.clip(idx, 0, self.count - 1, out=idx)
        idx[ood] = OUT_OF_DOMAIN
        return idx


@dataclass(frozen=True)
class StateGrid:
    """4-D state grid: longitudinal/lateral position (m), velocities (m/s)."""

    y1: GridAxis
    y2: GridAxis
    v1: GridAxis
    v2: GridAxis

    @classmethod
    def default(cls) -> "StateGrid":
        return cls(
            y1=GridAxis(-4.0, 80.0, 2.0),
            y2=GridAxis(-4.0, 4.0, 1.0),
            v1=GridAxis(20.0, 40.0, 0.4),
            v2=GridAxis(-2.5, 2.5, 0.2),
        )

    @property
    def axes(self) -> tuple[GridAxis, GridAxis, GridAxis, GridAxis]:
        return (self.y1, self.y2, self.v1, self.v2)

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return tuple(a.count for a in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def strides(self) -> tuple[int, int, int, int]:
        n1, n2, n3, n4 = self.shape
        return (n2 * n3 * n4, n3 * n4, n4, 1)

    def index_many(self, states: np.ndarray) -> np.ndarray:
        """Linear cell indices for an (n, 4) array; OUT_OF_DOMAIN where outside."""
        states = np.asarray(states, dtype=float)
        if states.ndim == 1:
            states = states[None, :]
        out = np.zeros(states.shape[0], dtype=np.int64)
        ood = np.zeros(states.shape[0], dtype=bool)
        for axis, stride, col in zip(self.axes, self.strides, range(4)):
            idx = axis.index_of(states[:, col])
            ood |= idx == OUT_OF_DOMAIN
            out += stride * idx
        out[ood] = OUT_OF_DOMAIN
        return out

    def index_of(self, state) -> int:
        return int(self.index_many(np.asarray(state, dtype=float)[None, :])[0])

    def multi_index(self, linear: np.ndarray) -> np.ndarray:
        """(n, 4) per-axis indices for valid linear indices."""
        linear = np.asarray(linear, dtype=np.int64)
        out = np.empty(linear.shape + (4,), dtype=np.int64)
        rem = linear
        for col, stride in enumerate(self.strides):
            out[..., col] = rem // stride
            rem = rem % stride
        return out

    def centers(self, linear: np.ndarray) -> np.ndarray:
        """(n, 4) cell-center coordinates for valid linear indices."""
        mi = self.multi_index(linear)
        out = np.empty(mi.shape, dtype=float)
        for col, axis in enumerate(self.axes):
            out[..., col] = axis.min + axis.step * mi[..., col]
        return out


@dataclass(frozen=True)
class InputGrid:
    """2-D acceleration grid with per-cell integration bounds.

    By default cells integrate over ``node +/- step/2`` on both axes.  With
    ``absorb_tails`` the outermost cells extend to infinity on their outer
    side so no probability mass is lost before input normalization; this
    skews the uniform-confidence limit and is therefore off by default.
    """

    a1: GridAxis
    a2: GridAxis
    absorb_tails: bool = False

    @classmethod
    def default(cls) -> "InputGrid":
        return cls(a1=GridAxis(-5.0, 3.0, 1.0), a2=GridAxis(-1.5, 1.5, 0.5))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.a1.count, self.a2.count)

    @property
    def size(self) -> int:
        return self.a1.count * self.a2.count

    def nodes(self) -> np.ndarray:
        """(size, 2) acceleration node values, a1-major ordering."""
        g1, g2 = np.meshgrid(self.a1.nodes(), self.a2.nodes(), indexing="ij")
        return np.column_stack([g1.ravel(), g2.ravel()])

    def _axis_bounds(self, axis: GridAxis) -> tuple[np.ndarray, np.ndarray]:
        nodes = axis.nodes()
        lo = nodes - 0.5 * axis.step
        hi = nodes + 0.5 * axis.step
        if self.absorb_tails:
            lo[0] = -np.inf
            hi[-1] = np.inf
        return lo, hi

    def bounds(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Per-cell integration bounds (lo1, hi1, lo2, hi2), each (size,)."""
        lo1, hi1 = self._axis_bounds(self.a1)
        lo2, hi2 = self._axis_bounds(self.a2)
        n2 = self.a2.count
        return (
            np.repeat(lo1, n2),
            np.repeat(hi1, n2),
            np.tile(lo2, self.a1.count),
            np.tile(hi2, self.a1.count),
        )

    def snap(self, a1: float, a2: float) -> int:
        """Linear index of the nearest cell, clamping out-of-range values."""
        i1 = self.a1.index_of(np.array([a1]))[0]
        i2 = self.a2.index_of(np.array([a2]))[0]
        if i1 == OUT_OF_DOMAIN:
            i1 = 0 if a1 < self.a1.min else self.a1.count - 1
        if i2 == OUT_OF_DOMAIN:
            i2 = 0 if a2 < self.a2.min else self.a2.count - 1
        return int(i1 * self.a2.count + i2)


@dataclass(frozen=True)
class InputConstraints:
    """Admissibility limits on acceleration inputs.

    a_max bounds the Euclidean acceleration magnitude; omega_max is a
    steering-rate proxy bounding lateral acceleration as ``|a2| <= v1 *
    omega_max``; dt is the propagation step used by the forward-motion rule
    ``v1 + a1*dt >= v1_min``.
    """

    a_max: float = 5.0
    omega_max: float = 0.15
    dt: float = 0.4

    def __post_init__(self):
        if self.a_max <= 0 or self.omega_max < 0 or self.dt <= 0:
            raise ConfigurationError("invalid input constraints")


def admissible_mask(
    grid: InputGrid, v1: float, limits: InputConstraints, v1_min: float
) -> np.ndarray:
    """Boolean mask over input cells admissible at longitudinal speed v1."""
    nodes = grid.nodes()
    a1, a2 = nodes[:, 0], nodes[:, 1]
    mask = np.hypot(a1, a2) <= limits.a_max + 1e-12
    mask &= v1 + a1 * limits.dt >= v1_min - 1e-12
    mask &= np.abs(a2) <= v1 * limits.omega_max + 1e-12
    return mask


def admissible_inputs(
    grid: InputGrid, state, limits: InputConstraints, state_grid: StateGrid
) -> np.ndarray:
    """Linear indices of admissible input cells for a state on the grid."""
    v1 = float(np.asarray(state, dtype=float)[2])
    return np.nonzero(admissible_mask(grid, v1, limits, state_grid.v1.min))[0]


def validate_admissibility(
    grid: InputGrid, limits: InputConstraints, state_grid: StateGrid
) -> None:
    """Reject configurations with an empty admissible set at some speed node."""
    for v1 in state_grid.v1.nodes():
        if not admissible_mask(grid, v1, limits, state_grid.v1.min).any():
            raise ConfigurationError(
                f"no admissible inputs at v1={v1}: relax constraints or grid"
            )
