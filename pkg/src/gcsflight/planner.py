"""End-to-end pipeline: scenarios, planning, validation, metrics, sweeps.

``plan`` chains threshold inversion, coverage-disk construction, graph
building, and the route optimizer, then assembles the handover schedule and
trajectory metrics. Infeasibility is a structured result naming the failing
stage, not an exception; solver breakdown still raises.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np

from gcsflight import bezier, gcs, regions, urllc
from gcsflight.channel import BaseStation, ChannelParams, snr_points
from gcsflight.regions import Airspace
from gcsflight.urllc import UrllcParams

log = logging.getLogger(__name__)

DEFAULT_SAMPLES_PER_SEGMENT = 1000

TABLE_CHANNEL_DEFAULTS = dict(
    fc_hz=3.3e9,
    a_logistic=12.08,
    b_logistic=0.11,
    eta_los_db=3.0,
    eta_nlos_db=25.0,
    tx_power_w=0.09,
    rx_gain=1.0,
    noise_w=7.21e-16,
)

TABLE_URLLC_DEFAULTS = dict(
    bandwidth_hz=180e3,
    tau_s=1e-3,
    latency_budget_s=1e-3,
    eps_max=1e-5,
    r_req=0.5,
)


@dataclass(frozen=True)
class Weights:
    """Objective weights: geometric effort, time, handover charge, smoothing."""

    alpha: float
    beta: float
    lambda_ho: float
    gamma_sm: float

    def __post_init__(self):
        for name in ("alpha", "beta", "lambda_ho", "gamma_sm"):
            if getattr(self, name) < 0:
                raise ValueError(f"weight {name} must be >= 0")


@dataclass(frozen=True)
class Scenario:
    """One complete problem instance."""

    airspace: Airspace
    start: tuple[float, float, float]
    goal: tuple[float, float, float]
    stations: tuple[BaseStation, ...]
    channel: ChannelParams
    urllc: UrllcParams
    weights: Weights
    v_max_mps: float = 20.0
    degree: int = 6
    continuity_order: int = 2

    def __post_init__(self):
        if self.v_max_mps <= 0:
            raise ValueError("v_max_mps must be > 0")
        if not 1 <= self.continuity_order <= self.degree:
            raise ValueError("need 1 <= continuity_order <= degree")
        if self.degree < 2:
            raise ValueError("degree must be >= 2 for boundary and continuity conditions")
        for name, q in (("start", self.start), ("goal", self.goal)):
            if len(q) != 3:
                raise ValueError(f"{name} must be a 3-point")
            if not self.airspace.contains_xy(q[0], q[1]):
                raise ValueError(f"{name} lies outside the airspace box")
            if abs(q[2] - self.airspace.altitude_m) > 1e-9:
                raise ValueError(f"{name} altitude must equal the flight altitude")
        ids = [bs.id for bs in self.stations]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate BS ids")
        object.__setattr__(self, "start", tuple(float(v) for v in self.start))
        object.__setattr__(self, "goal", tuple(float(v) for v in self.goal))
        object.__setattr__(self, "stations", tuple(self.stations))


@dataclass
class CostReport:
    geometric: float
    time: float
    handover: float
    smoothing: float
    total: float


@dataclass
class PlanResult:
    """A feasible plan: serving sequence, segments, schedule, and metrics."""

    feasible: bool
    sequence: tuple[int, ...]
    segments: tuple[bezier.SegmentPair, ...]
    handover_schedule: tuple[tuple[float, int, int], ...]
    handover_count: int
    total_time_s: float
    path_length_m: float
    cost: CostReport
    lower_bound: float
    gap: float
    solve_time_s: float
    stats: dict = field(default_factory=dict)


@dataclass
class PlanInfeasible:
    """Structured infeasibility: which pipeline stage ruled the instance out."""

    feasible: bool
    stage: str  # coverage | graph | relaxation | rounding | refinement
    detail: str


PlanOutcome = Union[PlanResult, PlanInfeasible]


def default_weights() -> Weights:
    return Weights(alpha=0.5, beta=1.0, lambda_ho=0.1, gamma_sm=0.005)


def default_channel() -> ChannelParams:
    return ChannelParams.from_db(**TABLE_CHANNEL_DEFAULTS)


def default_urllc() -> UrllcParams:
    return UrllcParams(**TABLE_URLLC_DEFAULTS)


def generate_scenario(
    seed: int,
    num_bs: int = 30,
    box: tuple[float, float, float, float] = (0.0, 5000.0, 0.0, 5000.0),
    height_range: tuple[float, float] = (0.0, 200.0),
    altitude_m: float = 300.0,
    start_xy: tuple[float, float] = (250.0, 2250.0),
    goal_xy: tuple[float, float] = (4000.0, 4000.0),
    channel: Optional[ChannelParams] = None,
    urllc_params: Optional[UrllcParams] = None,
    weights: Optional[Weights] = None,
    v_max_mps: float = 20.0,
    degree: int = 6,
    continuity_order: int = 2,
) -> Scenario:
    """Seeded random deployment: BS positions uniform over the box, heights
    uniform over ``height_range``; everything else takes the stated defaults."""
    if num_bs < 1:
        raise ValueError("num_bs must be >= 1")
    rng = np.random.default_rng(seed)
    x_min, x_max, y_min, y_max = box
    xs = rng.uniform(x_min, x_max, num_bs)
    ys = rng.uniform(y_min, y_max, num_bs)
    zs = rng.uniform(height_range[0], height_range[1], num_bs)
    stations = tuple(
        BaseStation(id=i, x_m=float(xs[i]), y_m=float(ys[i]), z_m=float(zs[i]))
        for i in range(num_bs)
    )
    return Scenario(
        airspace=Airspace(x_min, x_max, y_min, y_max, altitude_m),
        start=(start_xy[0], start_xy[1], altitude_m),
        goal=(goal_xy[0], goal_xy[1], altitude_m),
        stations=stations,
        channel=channel or default_channel(),
        urllc=urllc_params or default_urllc(),
        weights=weights or default_weights(),
        v_max_mps=v_max_mps,
        degree=degree,
        continuity_order=continuity_order,
    )


def plan(
    scenario: Scenario,
    seed: int = 0,
    trials: int = gcs.DEFAULT_TRIALS,
    time_limit: Optional[float] = None,
) -> PlanOutcome:
    """Run the full pipeline and collect metrics; deterministic given the seed."""
    t0 = time.perf_counter()
    gamma_min = urllc.gamma_min(scenario.urllc)
    disks = regions.build_disks(scenario, gamma_min)
    if not disks:
        return PlanInfeasible(False, "coverage", "no BS has a nonempty coverage disk")
    graph = regions.build_graph(disks, scenario.start[:2], scenario.goal[:2])
    if not regions.reachable(graph):
        return PlanInfeasible(
            False,
            "graph",
            "intersection graph has no directed source-sink path "
            "(endpoints uncovered or coverage disconnected)",
        )
    problem = gcs.build_gcs(graph, disks, scenario)
    options = gcs.RouteOptions(seed=seed, trials=trials, time_limit=time_limit)
    try:
        route = gcs.plan_route(problem, options)
    except gcs.RelaxationInfeasible as exc:
        return PlanInfeasible(False, "relaxation", str(exc))
    except gcs.NoCandidatePaths as exc:
        return PlanInfeasible(False, "rounding", str(exc))
    except gcs.RefinementFailed as exc:
        return PlanInfeasible(False, "refinement", str(exc))
    elapsed = time.perf_counter() - t0

    best = route.best
    serving = best.serving
    schedule = []
    for j in range(len(serving) - 1):
        t_ho = best.segments[j].end_time
        schedule.append((float(t_ho), int(serving[j]), int(serving[j + 1])))
    length = sum(bezier.arc_length(seg.shape, 1e-6) for seg in best.segments)
    total_time = best.segments[-1].end_time
    cost = CostReport(
        geometric=best.breakdown.geometric,
        time=best.breakdown.time,
        handover=best.breakdown.handover,
        smoothing=best.breakdown.smoothing,
        total=best.cost,
    )
    return PlanResult(
        feasible=True,
        sequence=tuple(int(v) for v in serving),
        segments=best.segments,
        handover_schedule=tuple(schedule),
        handover_count=len(schedule),
        total_time_s=float(total_time),
        path_length_m=float(length),
        cost=cost,
        lower_bound=float(route.lower_bound),
        gap=float(route.gap),
        solve_time_s=elapsed,
        stats={
            "num_disks": len(disks),
            "num_edges": len(graph.edges),
            "candidates": [tuple(str(v) for v in c) for c in route.candidates],
            "relaxation_iterations": route.relaxation.solution.info.get("iterations"),
            "max_flow_residual": route.relaxation.max_flow_residual,
            "gamma_min": gamma_min,
        },
    )


@dataclass
class ValidationReport:
    """Sampled feasibility audit of a plan against its scenario."""

    min_snr_margin_rel: float
    max_speed_mps: float
    continuity_residuals: dict[int, float]
    timing_monotone: bool
    endpoint_error_m: float
    boundary_speed_mps: float
    checks: dict[str, bool]
    passed: bool


SNR_MARGIN_RTOL = 1e-6
SPEED_RTOL = 1e-6
CONTINUITY_TOL = 1e-6
ENDPOINT_TOL_M = 1e-6
BOUNDARY_SPEED_TOL = 1e-6


def validate(
    scenario: Scenario,
    result: PlanResult,
    samples_per_segment: int = DEFAULT_SAMPLES_PER_SEGMENT,
) -> ValidationReport:
    """Sample every segment and audit SNR margin, speed, continuity, timing,
    endpoints, and boundary velocities against the scenario's tolerances."""
    if samples_per_segment < 100:
        raise ValueError("samples_per_segment must be >= 100")
    gamma_min = urllc.gamma_min(scenario.urllc)
    by_id = {bs.id: bs for bs in scenario.stations}
    xi = np.linspace(0.0, 1.0, samples_per_segment)

    min_margin = np.inf
    max_speed = 0.0
    timing_ok = True
    for seg, bs_id in zip(result.segments, result.sequence):
        t, pos, vel, _ = bezier.kinematics_many(seg, xi)
        gam = snr_points(pos, scenario.airspace.altitude_m, by_id[bs_id], scenario.channel)
        min_margin = min(min_margin, float(np.min((gam - gamma_min) / gamma_min)))
        max_speed = max(max_speed, float(np.max(np.hypot(vel[:, 0], vel[:, 1]))))
        rate = bezier.derivative_ctrl(seg.timing, 1).control_points
        if np.min(rate) < bezier.MIN_TIMING_RATE - 1e-9 or np.any(np.diff(t) < 0):
            timing_ok = False
    if result.segments[0].start_time > 1e-9:
        timing_ok = False

    continuity = {p: 0.0 for p in range(scenario.continuity_order + 1)}
    for left, right in zip(result.segments[:-1], result.segments[1:]):
        for p in range(scenario.continuity_order + 1):
            for curve_l, curve_r in ((left.shape, right.shape), (left.timing, right.timing)):
                dl = bezier.derivative_ctrl(curve_l, p).control_points[-1]
                dr = bezier.derivative_ctrl(curve_r, p).control_points[0]
                continuity[p] = max(continuity[p], float(np.max(np.abs(dl - dr))))

    first, last = result.segments[0], result.segments[-1]
    start_err = float(np.linalg.norm(bezier.evaluate(first.shape, 0.0) - np.asarray(scenario.start[:2])))
    goal_err = float(np.linalg.norm(bezier.evaluate(last.shape, 1.0) - np.asarray(scenario.goal[:2])))
    endpoint_err = max(start_err, goal_err)

    _, _, v0, _ = bezier.kinematics(first, 0.0)
    _, _, v1, _ = bezier.kinematics(last, 1.0)
    boundary_speed = max(float(np.linalg.norm(v0)), float(np.linalg.norm(v1)))

    checks = {
        "snr_margin": min_margin >= -SNR_MARGIN_RTOL,
        "speed": max_speed <= scenario.v_max_mps * (1.0 + SPEED_RTOL),
        "continuity": all(r <= CONTINUITY_TOL for r in continuity.values()),
        "timing_monotone": timing_ok,
        "endpoints": endpoint_err <= ENDPOINT_TOL_M,
        "boundary_velocity": boundary_speed <= BOUNDARY_SPEED_TOL,
    }
    return ValidationReport(
        min_snr_margin_rel=min_margin,
        max_speed_mps=max_speed,
        continuity_residuals=continuity,
        timing_monotone=timing_ok,
        endpoint_error_m=endpoint_err,
        boundary_speed_mps=boundary_speed,
        checks=checks,
        passed=all(checks.values()),
    )


@dataclass
class SweepRow:
    parameter: str
    value: float
    feasible: bool
    stage: Optional[str]
    handovers: Optional[int]
    total_time_s: Optional[float]
    path_length_m: Optional[float]
    peak_acceleration_mps2: Optional[float]
    cost_total: Optional[float]
    gap: Optional[float]


_SWEEPABLE = ("alpha", "beta", "lambda_ho", "gamma_sm")


def peak_acceleration(result: PlanResult, samples_per_segment: int = DEFAULT_SAMPLES_PER_SEGMENT) -> float:
    xi = np.linspace(0.0, 1.0, samples_per_segment)
    peak = 0.0
    for seg in result.segments:
        _, _, _, acc = bezier.kinematics_many(seg, xi)
        peak = max(peak, float(np.max(np.hypot(acc[:, 0], acc[:, 1]))))
    return peak


def sweep(
    scenario: Scenario,
    parameter_grid: dict[str, list[float]],
    seed: int = 0,
    trials: int = gcs.DEFAULT_TRIALS,
) -> list[SweepRow]:
    """Re-plan per grid point with a shared seed; infeasible points stay in the table."""
    if not parameter_grid or not all(vs for vs in parameter_grid.values()):
        raise ValueError("parameter_grid must map parameter names to nonempty value lists")
    rows = []
    for name, values in parameter_grid.items():
        if name not in _SWEEPABLE:
            raise ValueError(f"unknown sweep parameter {name!r}; pick one of {_SWEEPABLE}")
        for value in values:
            sc = replace(scenario, weights=replace(scenario.weights, **{name: float(value)}))
            outcome = plan(sc, seed=seed, trials=trials)
            if isinstance(outcome, PlanInfeasible):
                rows.append(
                    SweepRow(name, float(value), False, outcome.stage, None, None, None, None, None, None)
                )
                continue
            rows.append(
                SweepRow(
                    parameter=name,
                    value=float(value),
                    feasible=True,
                    stage=None,
                    handovers=outcome.handover_count,
                    total_time_s=outcome.total_time_s,
                    path_length_m=outcome.path_length_m,
                    peak_acceleration_mps2=peak_acceleration(outcome),
                    cost_total=outcome.cost.total,
                    gap=outcome.gap,
                )
            )
    return rows
