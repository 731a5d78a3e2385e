"""Scenario files, plan artifacts, and their round-trip loaders.

Formats: JSON for scenarios and metrics (human-diffable), CSV for the dense
sampled trajectory and the handover schedule. ``metrics.json`` contains only
deterministic fields; wall-clock timing and solver chatter go to a separate
``run_info.json`` so repeated runs with the same seed produce byte-identical
metrics.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass
from typing import Optional

import jsonschema
import numpy as np

from gcsflight import bezier, planner, urllc
from gcsflight.channel import BaseStation, ChannelParams, snr_points
from gcsflight.regions import Airspace

METRICS_FILE = "metrics.json"
TRAJECTORY_FILE = "trajectory.csv"
HANDOVER_FILE = "handovers.csv"
SEGMENTS_FILE = "segments.json"
RUN_INFO_FILE = "run_info.json"

TRAJECTORY_HEADER = [
    "t_s",
    "x_m",
    "y_m",
    "z_m",
    "vx_mps",
    "vy_mps",
    "speed_mps",
    "ax_mps2",
    "ay_mps2",
    "serving_bs",
    "snr_db",
    "snr_margin_db",
]


class ScenarioFormatError(ValueError):
    """The scenario document does not match the schema."""


_NUM = {"type": "number"}

SCENARIO_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": [
        "area",
        "altitude_m",
        "start",
        "goal",
        "v_max_mps",
        "bezier_degree",
        "continuity_order",
        "weights",
        "channel",
        "urllc",
        "bs",
    ],
    "properties": {
        "area": {
            "type": "object",
            "additionalProperties": False,
            "required": ["x_min", "x_max", "y_min", "y_max"],
            "properties": {"x_min": _NUM, "x_max": _NUM, "y_min": _NUM, "y_max": _NUM},
        },
        "altitude_m": _NUM,
        "start": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
        "goal": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
        "v_max_mps": _NUM,
        "bezier_degree": {"type": "integer"},
        "continuity_order": {"type": "integer"},
        "weights": {
            "type": "object",
            "additionalProperties": False,
            "required": ["alpha", "beta", "lambda_ho", "gamma_sm"],
            "properties": {"alpha": _NUM, "beta": _NUM, "lambda_ho": _NUM, "gamma_sm": _NUM},
        },
        "channel": {
            "type": "object",
            "additionalProperties": False,
            "required": [
                "fc_hz",
                "c_mps",
                "a",
                "b",
                "eta_los_db",
                "eta_nlos_db",
                "tx_power_w",
                "rx_gain",
                "noise_w",
            ],
            "properties": {
                "fc_hz": _NUM,
                "c_mps": _NUM,
                "a": _NUM,
                "b": _NUM,
                "eta_los_db": _NUM,
                "eta_nlos_db": _NUM,
                "tx_power_w": _NUM,
                "rx_gain": _NUM,
                "noise_w": _NUM,
            },
        },
        "urllc": {
            "type": "object",
            "additionalProperties": False,
            "required": ["bandwidth_hz", "tau_s", "latency_budget_s", "eps_max", "r_req"],
            "properties": {
                "bandwidth_hz": _NUM,
                "tau_s": _NUM,
                "latency_budget_s": _NUM,
                "eps_max": _NUM,
                "r_req": _NUM,
            },
        },
        "bs": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["id", "x", "y", "z"],
                "properties": {"id": {"type": "integer"}, "x": _NUM, "y": _NUM, "z": _NUM},
            },
        },
    },
}


def scenario_to_dict(scenario: planner.Scenario) -> dict:
    ch = scenario.channel
    ur = scenario.urllc
    w = scenario.weights
    a = scenario.airspace
    return {
        "area": {"x_min": a.x_min, "x_max": a.x_max, "y_min": a.y_min, "y_max": a.y_max},
        "altitude_m": a.altitude_m,
        "start": [scenario.start[0], scenario.start[1]],
        "goal": [scenario.goal[0], scenario.goal[1]],
        "v_max_mps": scenario.v_max_mps,
        "bezier_degree": scenario.degree,
        "continuity_order": scenario.continuity_order,
        "weights": {"alpha": w.alpha, "beta": w.beta, "lambda_ho": w.lambda_ho, "gamma_sm": w.gamma_sm},
        "channel": {
            "fc_hz": ch.fc_hz,
            "c_mps": ch.c_mps,
            "a": ch.a_logistic,
            "b": ch.b_logistic,
            "eta_los_db": 10.0 * math.log10(ch.eta_los),
            "eta_nlos_db": 10.0 * math.log10(ch.eta_nlos),
            "tx_power_w": ch.tx_power_w,
            "rx_gain": ch.rx_gain,
            "noise_w": ch.noise_w,
        },
        "urllc": {
            "bandwidth_hz": ur.bandwidth_hz,
            "tau_s": ur.tau_s,
            "latency_budget_s": ur.latency_budget_s,
            "eps_max": ur.eps_max,
            "r_req": ur.r_req,
        },
        "bs": [{"id": bs.id, "x": bs.x_m, "y": bs.y_m, "z": bs.z_m} for bs in scenario.stations],
    }


def scenario_from_dict(doc: dict) -> planner.Scenario:
    try:
        jsonschema.validate(doc, SCENARIO_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ScenarioFormatError(f"scenario schema violation at {path}: {exc.message}") from None
    area = doc["area"]
    ch = doc["channel"]
    ur = doc["urllc"]
    w = doc["weights"]
    try:
        return planner.Scenario(
            airspace=Airspace(area["x_min"], area["x_max"], area["y_min"], area["y_max"], doc["altitude_m"]),
            start=(doc["start"][0], doc["start"][1], doc["altitude_m"]),
            goal=(doc["goal"][0], doc["goal"][1], doc["altitude_m"]),
            stations=tuple(
                BaseStation(id=e["id"], x_m=e["x"], y_m=e["y"], z_m=e["z"]) for e in doc["bs"]
            ),
            channel=ChannelParams.from_db(
                fc_hz=ch["fc_hz"],
                a_logistic=ch["a"],
                b_logistic=ch["b"],
                eta_los_db=ch["eta_los_db"],
                eta_nlos_db=ch["eta_nlos_db"],
                tx_power_w=ch["tx_power_w"],
                rx_gain=ch["rx_gain"],
                noise_w=ch["noise_w"],
                c_mps=ch["c_mps"],
            ),
            urllc=urllc.UrllcParams(
                bandwidth_hz=ur["bandwidth_hz"],
                tau_s=ur["tau_s"],
                latency_budget_s=ur["latency_budget_s"],
                eps_max=ur["eps_max"],
                r_req=ur["r_req"],
            ),
            weights=planner.Weights(w["alpha"], w["beta"], w["lambda_ho"], w["gamma_sm"]),
            v_max_mps=doc["v_max_mps"],
            degree=doc["bezier_degree"],
            continuity_order=doc["continuity_order"],
        )
    except ValueError as exc:
        raise ScenarioFormatError(f"invalid scenario values: {exc}") from None


def _dump_json(doc: dict, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def save_scenario(scenario: planner.Scenario, path: str) -> None:
    _dump_json(scenario_to_dict(scenario), path)


def load_scenario(path: str) -> planner.Scenario:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ScenarioFormatError(f"{path} is not valid JSON: {exc}") from None
    return scenario_from_dict(doc)


# ---------------------------------------------------------------------------
# plan artifacts


def sample_trajectory(
    scenario: planner.Scenario,
    result: planner.PlanResult,
    samples_per_segment: int,
) -> list[list]:
    """Dense kinematic and link samples along the plan, one row per time."""
    gamma_min = urllc.gamma_min(scenario.urllc)
    by_id = {bs.id: bs for bs in scenario.stations}
    rows = []
    for j, (seg, bs_id) in enumerate(zip(result.segments, result.sequence)):
        xi = np.linspace(0.0, 1.0, samples_per_segment)
        if j > 0:
            xi = xi[1:]  # junction sample belongs to the previous segment
        t, pos, vel, acc = bezier.kinematics_many(seg, xi)
        gam = snr_points(pos, scenario.airspace.altitude_m, by_id[bs_id], scenario.channel)
        snr_db = 10.0 * np.log10(gam)
        margin_db = snr_db - 10.0 * math.log10(gamma_min)
        speed = np.hypot(vel[:, 0], vel[:, 1])
        for i in range(len(t)):
            rows.append(
                [
                    t[i],
                    pos[i, 0],
                    pos[i, 1],
                    scenario.airspace.altitude_m,
                    vel[i, 0],
                    vel[i, 1],
                    speed[i],
                    acc[i, 0],
                    acc[i, 1],
                    bs_id,
                    snr_db[i],
                    margin_db[i],
                ]
            )
    return rows


def write_trajectory_csv(rows: list[list], path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRAJECTORY_HEADER)
        for row in rows:
            writer.writerow([f"{v:.6f}" if not isinstance(v, (int, np.integer)) else str(v) for v in row])


def write_handover_csv(result: planner.PlanResult, path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t_s", "from_bs", "to_bs"])
        for t, a, b in result.handover_schedule:
            writer.writerow([f"{t:.6f}", a, b])


def metrics_dict(
    outcome: planner.PlanOutcome,
    seed: int,
    trials: int,
    scenario: planner.Scenario,
    samples_per_segment: Optional[int] = None,
) -> dict:
    base = {
        "seed": seed,
        "trials": trials,
        "num_bs": len(scenario.stations),
    }
    if samples_per_segment is not None:
        base["samples_per_segment"] = samples_per_segment
    if isinstance(outcome, planner.PlanInfeasible):
        base.update(
            {
                "feasible": False,
                "stage": outcome.stage,
                "detail": outcome.detail,
            }
        )
        return base
    base.update(
        {
            "feasible": True,
            "stage": None,
            "sequence": list(outcome.sequence),
            "handover_count": outcome.handover_count,
            "handover_schedule": [[t, a, b] for t, a, b in outcome.handover_schedule],
            "total_time_s": outcome.total_time_s,
            "path_length_m": outcome.path_length_m,
            "cost": {
                "geometric": outcome.cost.geometric,
                "time": outcome.cost.time,
                "handover": outcome.cost.handover,
                "smoothing": outcome.cost.smoothing,
                "total": outcome.cost.total,
            },
            "lower_bound": outcome.lower_bound,
            "gap": outcome.gap,
        }
    )
    return base


def segments_dict(result: planner.PlanResult) -> dict:
    return {
        "bezier_degree": result.segments[0].degree if result.segments else None,
        "sequence": list(result.sequence),
        "handover_schedule": [[t, a, b] for t, a, b in result.handover_schedule],
        "segments": [
            {
                "bs_id": bs_id,
                "shape": seg.shape.control_points.tolist(),
                "timing": seg.timing.control_points[:, 0].tolist(),
            }
            for bs_id, seg in zip(result.sequence, result.segments)
        ],
    }


def write_plan_artifacts(
    out_dir: str,
    scenario: planner.Scenario,
    outcome: planner.PlanOutcome,
    seed: int,
    trials: int,
    samples_per_segment: int,
    run_info: Optional[dict] = None,
) -> None:
    os.makedirs(out_dir, exist_ok=True)
    _dump_json(
        metrics_dict(outcome, seed, trials, scenario, samples_per_segment),
        os.path.join(out_dir, METRICS_FILE),
    )
    if run_info is not None:
        _dump_json(run_info, os.path.join(out_dir, RUN_INFO_FILE))
    if isinstance(outcome, planner.PlanInfeasible):
        return
    _dump_json(segments_dict(outcome), os.path.join(out_dir, SEGMENTS_FILE))
    rows = sample_trajectory(scenario, outcome, samples_per_segment)
    write_trajectory_csv(rows, os.path.join(out_dir, TRAJECTORY_FILE))
    write_handover_csv(outcome, os.path.join(out_dir, HANDOVER_FILE))


@dataclass
class PlanArtifacts:
    metrics: dict
    segments: Optional[list[bezier.SegmentPair]]
    sequence: Optional[tuple[int, ...]]
    handover_schedule: Optional[list[tuple[float, int, int]]]
    trajectory: Optional[list[dict]]


def load_plan_artifacts(plan_dir: str) -> PlanArtifacts:
    """Rebuild exact segments and sampled rows from an output directory."""
    with open(os.path.join(plan_dir, METRICS_FILE)) as fh:
        metrics = json.load(fh)
    if not metrics.get("feasible", False):
        return PlanArtifacts(metrics, None, None, None, None)
    with open(os.path.join(plan_dir, SEGMENTS_FILE)) as fh:
        segdoc = json.load(fh)
    segments = [
        bezier.SegmentPair(
            shape=bezier.BezierCurve(np.asarray(e["shape"], dtype=np.float64)),
            timing=bezier.BezierCurve(np.asarray(e["timing"], dtype=np.float64)[:, None]),
        )
        for e in segdoc["segments"]
    ]
    sequence = tuple(int(v) for v in segdoc["sequence"])
    schedule = [(float(t), int(a), int(b)) for t, a, b in segdoc["handover_schedule"]]
    trajectory = []
    with open(os.path.join(plan_dir, TRAJECTORY_FILE), newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != TRAJECTORY_HEADER:
            raise ScenarioFormatError(f"unexpected trajectory columns: {reader.fieldnames}")
        for raw in reader:
            row = {k: float(raw[k]) for k in TRAJECTORY_HEADER if k != "serving_bs"}
            row["serving_bs"] = int(raw["serving_bs"])
            trajectory.append(row)
    return PlanArtifacts(metrics, segments, sequence, schedule, trajectory)


def result_from_artifacts(artifacts: PlanArtifacts) -> planner.PlanResult:
    """A PlanResult carrying exactly the exported segments and metrics."""
    m = artifacts.metrics
    return planner.PlanResult(
        feasible=True,
        sequence=artifacts.sequence,
        segments=tuple(artifacts.segments),
        handover_schedule=tuple(artifacts.handover_schedule),
        handover_count=int(m["handover_count"]),
        total_time_s=float(m["total_time_s"]),
        path_length_m=float(m["path_length_m"]),
        cost=planner.CostReport(**m["cost"]),
        lower_bound=float(m["lower_bound"]),
        gap=float(m["gap"]),
        solve_time_s=float("nan"),
    )
