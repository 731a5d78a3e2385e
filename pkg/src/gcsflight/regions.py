"""Coverage disks at flight altitude and the directed intersection graph.

Each BS whose SNR meets the feasibility threshold somewhere induces a closed
coverage disk around its ground projection. Disks are kept unclipped here;
the airspace box is intersected in at constraint-assembly time. Overlaps, plus
start/goal inclusion, define a directed graph with distinguished source and
sink nodes.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from gcsflight import urllc
from gcsflight.channel import BaseStation, ChannelParams, snr_radial

log = logging.getLogger(__name__)

SOURCE = "s"
SINK = "g"

# Radial scan resolution and the absolute tolerance of the crossing bisection.
SCAN_STEP_M = 1.0
RADIUS_TOL_M = 1e-3
_MONOTONE_RTOL = 1e-9
_SCAN_CAP_M = 2.0**20


@dataclass(frozen=True)
class Airspace:
    """Axis-aligned flight box at a fixed altitude."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    altitude_m: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError("airspace box must have positive extent")
        if self.altitude_m <= 0:
            raise ValueError("altitude_m must be > 0")

    def contains_xy(self, x: float, y: float, tol: float = 0.0) -> bool:
        return (
            self.x_min - tol <= x <= self.x_max + tol
            and self.y_min - tol <= y <= self.y_max + tol
        )

    @property
    def diagonal_m(self) -> float:
        return math.hypot(self.x_max - self.x_min, self.y_max - self.y_min)


@dataclass(frozen=True)
class FeasibleDisk:
    """Closed coverage disk of one BS at flight altitude (unclipped radius)."""

    bs_id: int
    center: tuple[float, float]
    radius_m: float

    def __post_init__(self):
        if self.radius_m <= 0:
            raise ValueError("disk radius must be > 0")


@dataclass
class IntersectionGraph:
    """Directed overlap graph over surviving disks plus source/sink nodes.

    Internal edges come in both orientations; the source has only outgoing
    edges and the sink only incoming ones.
    """

    vertices: list[int]
    edges: list[tuple]
    source_xy: tuple[float, float]
    goal_xy: tuple[float, float]
    _out: dict = field(init=False, repr=False)
    _in: dict = field(init=False, repr=False)

    def __post_init__(self):
        self._out = {v: [] for v in self.vertices}
        self._out[SOURCE] = []
        self._in = {v: [] for v in self.vertices}
        self._in[SINK] = []
        for u, v in self.edges:
            self._out.setdefault(u, []).append(v)
            self._in.setdefault(v, []).append(u)

    def out_neighbors(self, u) -> list:
        return self._out.get(u, [])

    def in_neighbors(self, v) -> list:
        return self._in.get(v, [])


def _radial_crossing(
    bs_z_m: float,
    altitude_m: float,
    params: ChannelParams,
    gamma_min: float,
) -> tuple[Optional[float], bool]:
    """Locate the feasible-to-infeasible SNR crossing along the radius.

    Returns (radius, monotone_ok). The radius is the last point verified
    feasible, so every r <= radius meets the threshold even under the
    conservative fallback taken when the profile is not monotone.
    """
    dz = altitude_m - bs_z_m
    hi = 1024.0
    while hi < _SCAN_CAP_M and float(snr_radial(np.array([hi]), bs_z_m, altitude_m, params)[0]) >= gamma_min:
        hi *= 2.0
    if hi >= _SCAN_CAP_M:
        log.info("coverage extends beyond scan cap %.0f m (dz = %.0f m); returning cap", _SCAN_CAP_M, dz)
        return _SCAN_CAP_M, True

    grid = np.arange(0.0, hi + SCAN_STEP_M, SCAN_STEP_M)
    prof = snr_radial(grid, bs_z_m, altitude_m, params)
    rises = prof[1:] > prof[:-1] * (1.0 + _MONOTONE_RTOL)
    monotone_ok = not bool(np.any(rises))

    infeasible = np.nonzero(prof < gamma_min)[0]
    if infeasible.size == 0:
        # scan grid all feasible although hi itself was not; bisect the tail
        lo_r, hi_r = float(grid[-1]), hi
    else:
        first_bad = int(infeasible[0])
        if first_bad == 0:
            return None, monotone_ok
        lo_r, hi_r = float(grid[first_bad - 1]), float(grid[first_bad])

    while hi_r - lo_r > RADIUS_TOL_M:
        mid = 0.5 * (lo_r + hi_r)
        if float(snr_radial(np.array([mid]), bs_z_m, altitude_m, params)[0]) >= gamma_min:
            lo_r = mid
        else:
            hi_r = mid
    return (lo_r if lo_r > 0.0 else None), monotone_ok


def coverage_radius(
    bs: BaseStation,
    airspace: Airspace,
    channel_params: ChannelParams,
    gamma_min: float,
) -> Optional[float]:
    """Largest horizontal radius at flight altitude meeting the SNR threshold.

    Returns None when even the point above the BS is infeasible (or the disk
    degenerates to radius zero). A non-monotone SNR profile triggers a warning
    and the conservative first-crossing radius.
    """
    if gamma_min <= 0:
        raise ValueError("gamma_min must be > 0")
    radius, monotone_ok = _radial_crossing(bs.z_m, airspace.altitude_m, channel_params, gamma_min)
    if not monotone_ok:
        log.warning(
            "BS %d: SNR profile not monotone along the radius; using conservative first crossing",
            bs.id,
        )
    return radius


def build_disks(
    scenario,
    gamma_min: Optional[float] = None,
) -> list[FeasibleDisk]:
    """One coverage disk per BS with nonempty radius; empty-radius BSs are dropped."""
    if gamma_min is None:
        gamma_min = urllc.gamma_min(scenario.urllc)
    disks = []
    for bs in scenario.stations:
        rho = coverage_radius(bs, scenario.airspace, scenario.channel, gamma_min)
        if rho is not None:
            disks.append(FeasibleDisk(bs_id=bs.id, center=bs.ground_xy, radius_m=rho))
    return disks


def build_graph(
    disks: Sequence[FeasibleDisk],
    source_xy: Sequence[float],
    goal_xy: Sequence[float],
) -> IntersectionGraph:
    """Directed intersection graph with closed-set overlap convention.

    Tangency counts as overlap: a single shared point is enough for the
    continuity constraints downstream to be satisfiable.
    """
    sx, sy = float(source_xy[0]), float(source_xy[1])
    gx, gy = float(goal_xy[0]), float(goal_xy[1])
    by_id = {d.bs_id: d for d in disks}
    if len(by_id) != len(disks):
        raise ValueError("duplicate BS ids among disks")
    ids = sorted(by_id)
    edges: list[tuple] = []
    for i in ids:
        di = by_id[i]
        if math.hypot(sx - di.center[0], sy - di.center[1]) <= di.radius_m:
            edges.append((SOURCE, i))
    for i in ids:
        for j in ids:
            if i == j:
                continue
            di, dj = by_id[i], by_id[j]
            gap = math.hypot(di.center[0] - dj.center[0], di.center[1] - dj.center[1])
            if gap <= di.radius_m + dj.radius_m:
                edges.append((i, j))
    for i in ids:
        di = by_id[i]
        if math.hypot(gx - di.center[0], gy - di.center[1]) <= di.radius_m:
            edges.append((i, SINK))
    return IntersectionGraph(vertices=ids, edges=edges, source_xy=(sx, sy), goal_xy=(gx, gy))


def reachable(graph: IntersectionGraph) -> bool:
    """True iff a directed source-to-sink path exists (breadth-first search)."""
    frontier = [SOURCE]
    seen = {SOURCE}
    while frontier:
        nxt = []
        for u in frontier:
            for v in graph.out_neighbors(u):
                if v == SINK:
                    return True
                if v not in seen:
                    seen.add(v)
                    nxt.append(v)
        frontier = nxt
    return False
