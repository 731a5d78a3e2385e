import dataclasses
import math

import numpy as np
import pytest

from gcsflight import bezier, planner
from gcsflight.channel import snr
from gcsflight.planner import (
    PlanInfeasible,
    PlanResult,
    Scenario,
    Weights,
    generate_scenario,
    peak_acceleration,
    plan,
    sweep,
    validate,
)

from conftest import sparse_scenario, table_channel


class TestGenerateScenario:
    def test_deterministic(self):
        a = generate_scenario(seed=4, num_bs=12)
        b = generate_scenario(seed=4, num_bs=12)
        assert a == b

    def test_ranges(self):
        sc = generate_scenario(seed=0, num_bs=30)
        assert len(sc.stations) == 30
        for bs in sc.stations:
            assert 0.0 <= bs.x_m <= 5000.0
            assert 0.0 <= bs.y_m <= 5000.0
            assert 0.0 <= bs.z_m <= 200.0
        assert sc.start == (250.0, 2250.0, 300.0)
        assert sc.goal == (4000.0, 4000.0, 300.0)

    def test_different_seeds_differ(self):
        assert generate_scenario(seed=1) != generate_scenario(seed=2)

    def test_num_bs_validated(self):
        with pytest.raises(ValueError):
            generate_scenario(seed=0, num_bs=0)

    def test_table_defaults(self):
        sc = generate_scenario(seed=0)
        assert sc.urllc.n == 180
        assert sc.urllc.eps_max == 1e-5
        assert sc.channel.tx_power_w == 0.09
        assert sc.weights == Weights(0.5, 1.0, 0.1, 0.005)
        assert sc.v_max_mps == 20.0 and sc.degree == 6 and sc.continuity_order == 2


class TestScenarioValidation:
    def test_start_outside_box_rejected(self):
        with pytest.raises(ValueError):
            generate_scenario(seed=0, num_bs=2, start_xy=(-10.0, 0.0))

    def test_weights_nonnegative(self):
        with pytest.raises(ValueError):
            Weights(-0.1, 1.0, 0.0, 0.0)

    def test_continuity_order_bounds(self):
        with pytest.raises(ValueError):
            generate_scenario(seed=0, num_bs=2, degree=3, continuity_order=4)


class TestPlan:
    def test_single_bs_covers_everything(self):
        sc = generate_scenario(seed=5, num_bs=1, box=(0, 2000, 0, 2000),
                               start_xy=(200, 1000), goal_xy=(1800, 1000))
        out = plan(sc, seed=0, trials=4)
        assert isinstance(out, PlanResult)
        assert out.handover_count == 0
        assert len(out.segments) == 1
        assert out.sequence == (sc.stations[0].id,)
        assert out.handover_schedule == ()

    def test_goal_outside_coverage(self):
        sc = generate_scenario(
            seed=5, num_bs=1, box=(0, 20000, 0, 20000),
            start_xy=(100, 100), goal_xy=(19900, 19900),
            channel=table_channel(5e-5),
        )
        out = plan(sc, seed=0, trials=4)
        assert isinstance(out, PlanInfeasible)
        assert out.stage in ("coverage", "graph")

    def test_deterministic_given_seed(self, planned_small):
        sc, first = planned_small
        second = plan(sc, seed=0, trials=16)
        assert isinstance(second, PlanResult)
        assert second.sequence == first.sequence
        assert second.cost.total == first.cost.total
        assert second.total_time_s == first.total_time_s

    def test_time_is_final_timing_endpoint(self, planned_small):
        _, out = planned_small
        assert out.total_time_s == pytest.approx(out.segments[-1].end_time, abs=1e-9)
        total = sum(seg.duration for seg in out.segments)
        assert out.total_time_s == pytest.approx(total, abs=1e-9)
        assert out.segments[0].start_time == pytest.approx(0.0, abs=1e-7)

    def test_schedule_matches_junction_times(self, planned_small):
        _, out = planned_small
        assert out.handover_count == len(out.handover_schedule)
        for j, (t, from_bs, to_bs) in enumerate(out.handover_schedule):
            assert from_bs == out.sequence[j]
            assert to_bs == out.sequence[j + 1]
            assert t == pytest.approx(out.segments[j].end_time, abs=1e-9)
        times = [t for t, _, _ in out.handover_schedule]
        assert all(b > a for a, b in zip(times, times[1:]))

    def test_path_length_at_least_straight_line(self, planned_small):
        sc, out = planned_small
        straight = math.dist(sc.start[:2], sc.goal[:2])
        assert out.path_length_m >= straight - 1e-6

    def test_lower_bound_below_cost(self, planned_small):
        _, out = planned_small
        assert out.lower_bound <= out.cost.total * (1 + 1e-6)
        assert out.gap >= -1e-6


class TestValidate:
    def test_returned_plan_passes(self, planned_small):
        sc, out = planned_small
        report = validate(sc, out, samples_per_segment=400)
        assert report.passed, report.checks
        assert report.min_snr_margin_rel >= -1e-6
        assert report.max_speed_mps <= sc.v_max_mps * (1 + 1e-6)

    def test_corrupted_control_point_fails_snr(self, planned_small):
        sc, out = planned_small
        bad_segments = list(out.segments)
        seg = bad_segments[0]
        pts = seg.shape.control_points.copy()
        pts[3] += 8000.0  # push one interior control point far outside its disk
        bad_segments[0] = bezier.SegmentPair(bezier.BezierCurve(pts), seg.timing)
        bad = dataclasses.replace(out, segments=tuple(bad_segments))
        report = validate(sc, bad, samples_per_segment=400)
        assert not report.checks["snr_margin"]
        assert not report.passed

    def test_speed_against_finite_differences(self, planned_small):
        sc, out = planned_small
        seg = out.segments[0]
        # the difference step must be fine enough that truncation stays
        # below the 1e-4 comparison level over a tens-of-seconds segment
        xi = np.linspace(0.02, 0.98, 4001)
        t, pos, vel, _ = bezier.kinematics_many(seg, xi)
        speed = np.hypot(vel[:, 0], vel[:, 1])
        # independent: central differences of position against time
        fd = np.hypot(*((pos[2:] - pos[:-2]) / (t[2:] - t[:-2])[:, None]).T)
        mask = speed[1:-1] > 1e-2
        rel = np.abs(fd[mask] - speed[1:-1][mask]) / speed[1:-1][mask]
        assert np.max(rel) < 1e-4

    def test_samples_floor(self, planned_small):
        sc, out = planned_small
        with pytest.raises(ValueError):
            validate(sc, out, samples_per_segment=50)


class TestSweep:
    def test_single_point_matches_plan(self, planned_small):
        sc, out = planned_small
        rows = sweep(sc, {"lambda_ho": [sc.weights.lambda_ho]}, seed=0, trials=16)
        assert len(rows) == 1
        row = rows[0]
        assert row.feasible
        assert row.handovers == out.handover_count
        assert row.total_time_s == pytest.approx(out.total_time_s, rel=1e-12)
        assert row.cost_total == pytest.approx(out.cost.total, rel=1e-12)

    def test_infeasible_point_recorded(self):
        sc = generate_scenario(
            seed=5, num_bs=1, box=(0, 20000, 0, 20000),
            start_xy=(100, 100), goal_xy=(19900, 19900),
            channel=table_channel(5e-5),
        )
        rows = sweep(sc, {"gamma_sm": [0.0, 0.01]}, seed=0, trials=4)
        assert len(rows) == 2
        assert all(not r.feasible and r.stage for r in rows)

    def test_unknown_parameter_rejected(self, planned_small):
        sc, _ = planned_small
        with pytest.raises(ValueError):
            sweep(sc, {"v_max": [1.0]})
        with pytest.raises(ValueError):
            sweep(sc, {})

    def test_peak_acceleration_positive(self, planned_small):
        _, out = planned_small
        assert peak_acceleration(out, 200) > 0.0
