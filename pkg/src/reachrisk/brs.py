"""Backward-reachable-set solver and cached value-table lookup.

The value function over the 5-D relative state (relative position, relative
heading, both speeds) is integrated backward from the collision-box signed
distance with a first-order Lax-Friedrichs scheme and the min-over-time
freeze, so the unsafe set only grows with horizon.  The ego maximizes the
Hamiltonian (evading), the surrounding vehicle minimizes it (pursuing).
Control-affine inputs are optimized at interval endpoints; the slip angle,
entering through sin/cos, is optimized over a fixed sample of its range.

Solved tables are cached in a small versioned binary format and queried
online by 5-D multilinear interpolation.
"""

from __future__ import annotations

import logging
import struct
import time
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np

from .dynamics import (
    PointMassRanges,
    RelativeInputRanges,
    VehicleGeometry,
    derive_input_ranges,
)
from .grid import GridAxis

log = logging.getLogger(__name__)

_MAGIC = b"BRS1"
_VERSION = 1
AXIS_NAMES = ("y1_rel", "y2_rel", "psi_rel", "v_ego", "v_sur")


class BrsIoError(IOError):
    """Raised for malformed or truncated value-table files."""


@dataclass(frozen=True)
class BrsGrid:
    """Node-centered 5-D grid over the relative state (angles in radians)."""

    axes: tuple[GridAxis, GridAxis, GridAxis, GridAxis, GridAxis]

    @classmethod
    def full_default(cls) -> "BrsGrid":
        return cls(
            axes=(
                GridAxis(-10.0, 40.0, 0.5),
                GridAxis(-4.0, 4.0, 0.4),
                GridAxis(np.deg2rad(-45.0), np.deg2rad(45.0), np.deg2rad(9.0)),
                GridAxis(20.0, 40.0, 1.0),
                GridAxis(20.0, 40.0, 1.0),
            )
        )

    @classmethod
    def desk_default(cls) -> "BrsGrid":
        """Roughly half the node count per axis; keeps 0 on the symmetric axes."""
        return cls(
            axes=(
                GridAxis(-10.0, 40.0, 1.0),
                GridAxis(-4.0, 4.0, 0.8),
                GridAxis(np.deg2rad(-45.0), np.deg2rad(45.0), np.deg2rad(15.0)),
                GridAxis(20.0, 40.0, 2.0),
                GridAxis(20.0, 40.0, 2.0),
            )
        )

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(a.count for a in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def mesh(self) -> list[np.ndarray]:
        return list(np.meshgrid(*[a.nodes() for a in self.axes], indexing="ij"))


@dataclass
class ValueTable:
    """Cached value function on a BrsGrid (float32, signed-distance units)."""

    grid: BrsGrid
    values: np.ndarray
    horizon: float
    meta: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.shape != self.grid.shape:
            raise ValueError("value array does not match the grid shape")


def target_distance(y1_rel, y2_rel, geom_ego: VehicleGeometry = VehicleGeometry(),
                    geom_sur: VehicleGeometry = VehicleGeometry()):
    """Signed distance to the combined collision box (negative inside)."""
    ext1 = 0.5 * (geom_ego.length + geom_sur.length)
    ext2 = 0.5 * (geom_ego.width + geom_sur.width)
    return np.maximum(np.abs(y1_rel) - ext1, np.abs(y2_rel) - ext2)


def default_input_ranges(geom: VehicleGeometry = VehicleGeometry()) -> RelativeInputRanges:
    return derive_input_ranges(PointMassRanges(), geom)


def _beta_samples(ranges: RelativeInputRanges, n_beta: int) -> np.ndarray:
    if n_beta < 1:
        raise ValueError("need at least one slip-angle sample")
    if ranges.beta_ego.lo == ranges.beta_ego.hi:
        return np.array([ranges.beta_ego.lo])
    return np.linspace(ranges.beta_ego.lo, ranges.beta_ego.hi, n_beta)


def hamiltonian(
    x,
    q,
    ranges: Optional[RelativeInputRanges] = None,
    geom: VehicleGeometry = VehicleGeometry(),
    n_beta: int = 5,
):
    """max over ego inputs, min over surrounding inputs, of q . f(x, u).

    Broadcasts over leading dimensions of x and q (last axis length 5).
    """
    ranges = ranges or default_input_ranges(geom)
    x = np.asarray(x, dtype=float)
    q = np.asarray(q, dtype=float)
    y1, y2, psi = x[..., 0], x[..., 1], x[..., 2]
    v_e, v_s = x[..., 3], x[..., 4]
    q1, q2, q3, q4, q5 = (q[..., i] for i in range(5))

    # ego slip-angle bracket: sin(b)*A + cos(b)*B, maximized over samples
    a_coef = v_e / geom.l_r * (q1 * y2 - q2 * y1 - q3) - v_e * q2
    b_coef = -v_e * q1
    best = None
    for b in _beta_samples(ranges, n_beta):
        val = np.sin(b) * a_coef + np.cos(b) * b_coef
        best = val if best is None else np.maximum(best, val)

    h = best + q1 * v_s * np.cos(psi) + q2 * v_s * np.sin(psi)
    h = h + np.where(q3 > 0, q3 * ranges.omega_sur.lo, q3 * ranges.omega_sur.hi)
    h = h + np.where(q4 > 0, q4 * ranges.a_ego.hi, q4 * ranges.a_ego.lo)
    h = h + np.where(q5 > 0, q5 * ranges.a_sur.lo, q5 * ranges.a_sur.hi)
    return h


def _one_sided_gradients(v: np.ndarray, axis: int, dx: float):
    """Backward/forward difference arrays with copied edge stencils."""
    qm = np.empty_like(v)
    qp = np.empty_like(v)
    sl = [slice(None)] * v.ndim

    def at(s):
        out = list(sl)
        out[axis] = s
        return tuple(out)

    diff = np.diff(v, axis=axis) / dx
    qm[at(slice(1, None))] = diff
    qm[at(slice(0, 1))] = diff[at(slice(0, 1))]
    qp[at(slice(0, -1))] = diff
    qp[at(slice(-1, None))] = diff[at(slice(-1, None))]
    return qm, qp


def solve(
    grid: BrsGrid,
    horizon: float,
    *,
    ranges: Optional[RelativeInputRanges] = None,
    geom: VehicleGeometry = VehicleGeometry(),
    cfl: float = 0.5,
    n_beta: int = 5,
    checkpoints: tuple[float, ...] = (),
    progress: bool = False,
) -> tuple[ValueTable, dict[float, ValueTable]]:
    """Integrate the value function backward over the given horizon.

    Returns the table at the full horizon plus tables at any requested
    intermediate checkpoint horizons (from the same integration, so the
    min-over-time freeze guarantees pointwise monotonicity between them).
    """
    if horizon < 0:
        raise ValueError("horizon must be non-negative")
    if not 0 < cfl <= 1:
        raise ValueError("cfl must be in (0, 1]")
    ranges = ranges or default_input_ranges(geom)
    mesh = grid.mesh()
    y1, y2, psi, v_e, v_s = mesh

    v = np.asarray(target_distance(y1, y2), dtype=float)
    meta = {"cfl": cfl, "n_beta": n_beta, "steps": 0}

    def snapshot(h: float) -> ValueTable:
        return ValueTable(grid, v.astype(np.float32), h, dict(meta))

    marks = sorted({float(c) for c in checkpoints if 0.0 < c < horizon})
    if horizon == 0.0:
        return snapshot(0.0), {}

    betas = _beta_samples(ranges, n_beta)
    sin_b, cos_b = np.sin(betas), np.cos(betas)
    yaw_gain = v_e / geom.l_r  # multiplies sin(beta)

    # dissipation coefficients: per-axis bounds on |dH/dq_i|
    alpha1 = np.zeros_like(v)
    alpha2 = np.zeros_like(v)
    vs_cos = v_s * np.cos(psi)
    vs_sin = v_s * np.sin(psi)
    for sb, cb in zip(sin_b, cos_b):
        np.maximum(alpha1, np.abs(sb * yaw_gain * y2 - cb * v_e + vs_cos), out=alpha1)
        np.maximum(alpha2, np.abs(-sb * (yaw_gain * y1 + v_e) + vs_sin), out=alpha2)
    max_sin = float(np.max(np.abs(sin_b)))
    alpha3 = ranges.omega_sur.max_abs + yaw_gain * max_sin
    alpha4 = ranges.a_ego.max_abs
    alpha5 = ranges.a_sur.max_abs

    axes = grid.axes
    active = [i for i in range(5) if axes[i].count > 1]
    if not active:
        raise ValueError("grid must have at least one non-singleton axis")
    speed_sum = np.zeros_like(v)
    for i, alpha in enumerate((alpha1, alpha2, alpha3, alpha4, alpha5)):
        if axes[i].count > 1:
            speed_sum = speed_sum + alpha / axes[i].step
    dt_max = cfl / float(np.max(speed_sum))
    if not np.isfinite(dt_max) or dt_max <= 0:
        raise RuntimeError("dissipation estimate did not yield a usable time step")

    snapshots: dict[float, ValueTable] = {}
    tau = 0.0
    t_start = time.monotonic()
    targets = marks + [horizon]
    for target in targets:
        while tau < target - 1e-12:
            dt = min(dt_max, target - tau)
            grads = {}
            for i in active:
                grads[i] = _one_sided_gradients(v, i, axes[i].step)

            def qc(i):
                if i in grads:
                    qm, qp = grads[i]
                    return 0.5 * (qm + qp)
                return 0.0

            q1, q2, q3, q4, q5 = (qc(i) for i in range(5))
            a_coef = yaw_gain * (q1 * y2 - q2 * y1 - q3) - v_e * q2
            b_coef = -v_e * q1
            h = sin_b[0] * a_coef + cos_b[0] * b_coef
            for sb, cb in zip(sin_b[1:], cos_b[1:]):
                np.maximum(h, sb * a_coef + cb * b_coef, out=h)
            h += q1 * vs_cos + q2 * vs_sin
            h += np.where(q3 > 0, q3 * ranges.omega_sur.lo, q3 * ranges.omega_sur.hi)
            h += np.where(q4 > 0, q4 * ranges.a_ego.hi, q4 * ranges.a_ego.lo)
            h += np.where(q5 > 0, q5 * ranges.a_sur.lo, q5 * ranges.a_sur.hi)

            for i, alpha in ((0, alpha1), (1, alpha2), (2, alpha3), (3, alpha4), (4, alpha5)):
                if i in grads:
                    qm, qp = grads[i]
                    h -= 0.5 * alpha * (qp - qm)

            np.minimum(h, 0.0, out=h)
            v += dt * h
            tau += dt
            meta["steps"] += 1
        if target < horizon:
            snapshots[target] = snapshot(target)
        if progress:
            log.info(
                "BRS horizon %.3f s reached after %d steps (%.1f s wall)",
                target, meta["steps"], time.monotonic() - t_start,
            )

    meta["wall_seconds"] = time.monotonic() - t_start
    return snapshot(horizon), snapshots


# -- lookup ----------------------------------------------------------------

def interpolate(table: ValueTable, points) -> tuple[np.ndarray, np.ndarray]:
    """Multilinear interpolation at (n, 5) points.

    Out-of-range coordinates are clamped to the nearest face; the second
    return value flags, per point and axis, which faces were clamped
    (+1 above max, -1 below min, 0 inside).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = pts.shape[0]
    vals = np.zeros(n)
    clamped = np.zeros((n, 5), dtype=np.int8)
    base_idx = []
    weights = []
    for i, axis in enumerate(table.grid.axes):
        t = (pts[:, i] - axis.min) / axis.step
        clamped[:, i] = np.where(t < 0, -1, np.where(t > axis.count - 1, 1, 0))
        t = np.clip(t, 0.0, axis.count - 1)
        i0 = np.minimum(t.astype(np.int64), max(axis.count - 2, 0))
        base_idx.append(i0)
        weights.append(t - i0 if axis.count > 1 else np.zeros(n))

    values = table.values
    for corner in range(32):
        w = np.ones(n)
        idx = []
        for i in range(5):
            hi = (corner >> i) & 1
            if hi:
                w = w * weights[i]
                idx.append(np.minimum(base_idx[i] + 1, table.grid.axes[i].count - 1))
            else:
                w = w * (1.0 - weights[i])
                idx.append(base_idx[i])
        vals += w * values[tuple(idx)]
    return vals, clamped


def lookup(table: ValueTable, x) -> float:
    """Interpolated value at a single relative state (clamped if outside)."""
    vals, clamped = interpolate(table, np.asarray(x, dtype=float)[None, :])
    if clamped.any():
        log.debug("BRS lookup clamped to grid face: %s", clamped[0])
    return float(vals[0])


def is_unsafe(table: ValueTable, x) -> bool:
    """Zero-sublevel-set membership (boundary counts as unsafe)."""
    return lookup(table, x) <= 0.0


# -- forward-reachability comparison ---------------------------------------

def unsafe_region_frs(
    y1_values,
    y2_values,
    v_ego: float,
    v_sur: float,
    v2_sur: float = 0.0,
    horizon: float = 2.0,
    *,
    accel1=(-5.0, 3.0),
    accel2=(-1.5, 1.5),
    v1_bounds=(20.0, 40.0),
    v2_bounds=(-2.5, 2.5),
    geom: VehicleGeometry = VehicleGeometry(),
    tau_step: float = 0.005,
) -> np.ndarray:
    """Initial relative positions from which a collision is forward-reachable.

    Interval propagation of the point-mass model: the surrounding vehicle's
    velocity envelope follows the extreme admissible accelerations (clipped
    to the velocity bounds) while the ego holds constant speed.  A position
    is unsafe if at some time within the horizon its longitudinal and
    lateral intervals both intersect the collision box.  Returns a boolean
    (len(y1_values), len(y2_values)) mask.
    """
    y1v = np.asarray(y1_values, dtype=float)
    y2v = np.asarray(y2_values, dtype=float)
    tau = np.arange(0.0, horizon + tau_step / 2, tau_step)

    def envelope(v0, a, bounds):
        return np.clip(v0 + a * tau, bounds[0], bounds[1])

    def integrate(vel):
        disp = np.concatenate([[0.0], np.cumsum(0.5 * (vel[1:] + vel[:-1]) * tau_step)])
        return disp

    d1_lo = integrate(envelope(v_sur, accel1[0], v1_bounds)) - v_ego * tau
    d1_hi = integrate(envelope(v_sur, accel1[1], v1_bounds)) - v_ego * tau
    d2_lo = integrate(envelope(v2_sur, accel2[0], v2_bounds))
    d2_hi = integrate(envelope(v2_sur, accel2[1], v2_bounds))

    ext1 = 0.5 * (2 * geom.length)
    ext2 = 0.5 * (2 * geom.width)
    # (n1, t): longitudinal interval intersects the box at time t
    lon = (y1v[:, None] + d1_lo[None, :] <= ext1) & (y1v[:, None] + d1_hi[None, :] >= -ext1)
    lat = (y2v[:, None] + d2_lo[None, :] <= ext2) & (y2v[:, None] + d2_hi[None, :] >= -ext2)
    return (lon.astype(np.int32) @ lat.astype(np.int32).T) > 0


# -- serialization ----------------------------------------------------------

def save_table(table: ValueTable, path) -> None:
    """Write the versioned little-endian BRS1 cache format."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, 5))
        for axis in table.grid.axes:
            fh.write(struct.pack("<ddI", axis.min, axis.step, axis.count))
        fh.write(struct.pack("<d", table.horizon))
        fh.write(np.ascontiguousarray(table.values, dtype="<f4").tobytes())


def load_table(path) -> ValueTable:
    with open(path, "rb") as fh:
        blob = fh.read()
    header = struct.calcsize("<II")
    if len(blob) < 4 + header or blob[:4] != _MAGIC:
        raise BrsIoError("not a BRS1 value-table file")
    version, naxes = struct.unpack_from("<II", blob, 4)
    if version != _VERSION:
        raise BrsIoError(f"unsupported BRS1 format version {version}")
    if naxes != 5:
        raise BrsIoError(f"expected 5 axes, found {naxes}")
    off = 4 + header
    axes = []
    for _ in range(naxes):
        lo, step, count = struct.unpack_from("<ddI", blob, off)
        off += struct.calcsize("<ddI")
        if count < 1 or step <= 0:
            raise BrsIoError("corrupt axis header")
        axes.append(GridAxis(lo, lo + step * (count - 1), step))
    (horizon,) = struct.unpack_from("<d", blob, off)
    off += 8
    grid = BrsGrid(axes=tuple(axes))
    expected = grid.size * 4
    if len(blob) - off != expected:
        raise BrsIoError(
            f"value payload size mismatch: {len(blob) - off} bytes, expected {expected}"
        )
    values = np.frombuffer(blob, dtype="<f4", count=grid.size, offset=off).reshape(grid.shape)
    return ValueTable(grid, values.copy(), horizon)
