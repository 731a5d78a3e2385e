import csv
import json
import os

import numpy as np
import pytest

from gcsflight import cli, fileio, planner

from conftest import SPARSE_TX_POWER_W, sparse_scenario


@pytest.fixture(scope="module")
def scenario_file(tmp_path_factory):
    """A small feasible scenario written through the real save path."""
    path = tmp_path_factory.mktemp("scen") / "scenario.json"
    for seed in range(40):
        sc = sparse_scenario(seed, num_bs=12)
        out = planner.plan(sc, seed=0, trials=8)
        if isinstance(out, planner.PlanResult) and out.handover_count >= 1:
            fileio.save_scenario(sc, str(path))
            return str(path)
    raise RuntimeError("no feasible scenario found")


@pytest.fixture(scope="module")
def plan_dir(scenario_file, tmp_path_factory):
    out_dir = str(tmp_path_factory.mktemp("plan"))
    code = cli.main(
        ["plan", "--scenario", scenario_file, "--seed", "0", "--trials", "8",
         "--samples", "200", "--out-dir", out_dir, "--log-level", "quiet"]
    )
    assert code == cli.EXIT_OK
    return out_dir


class TestGen:
    def test_writes_schema_valid_scenario(self, tmp_path):
        out = tmp_path / "s.json"
        assert cli.main(["gen", "--seed", "0", "--num-bs", "30", "--out", str(out)]) == 0
        sc = fileio.load_scenario(str(out))
        assert len(sc.stations) == 30
        assert all(0 <= bs.z_m <= 200 for bs in sc.stations)

    def test_byte_identical_reruns(self, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        cli.main(["gen", "--seed", "3", "--num-bs", "10", "--out", str(a)])
        cli.main(["gen", "--seed", "3", "--num-bs", "10", "--out", str(b)])
        assert a.read_bytes() == b.read_bytes()

    def test_zero_bs_rejected(self, tmp_path):
        code = cli.main(["gen", "--seed", "0", "--num-bs", "0", "--out", str(tmp_path / "x.json")])
        assert code == cli.EXIT_INPUT


class TestPlan:
    def test_artifacts_written(self, plan_dir):
        for name in (fileio.METRICS_FILE, fileio.TRAJECTORY_FILE, fileio.HANDOVER_FILE,
                     fileio.SEGMENTS_FILE, fileio.RUN_INFO_FILE):
            assert os.path.exists(os.path.join(plan_dir, name))
        metrics = json.load(open(os.path.join(plan_dir, fileio.METRICS_FILE)))
        assert metrics["feasible"] is True
        assert {"handover_count", "total_time_s", "path_length_m", "cost",
                "lower_bound", "gap"} <= metrics.keys()
        assert "wall_clock" not in json.dumps(metrics)

    def test_infeasible_exit_and_stage(self, tmp_path):
        sc = planner.generate_scenario(
            seed=5, num_bs=1, box=(0, 40000, 0, 40000),
            start_xy=(100, 100), goal_xy=(39000, 39000),
        )
        path = tmp_path / "inf.json"
        fileio.save_scenario(sc, str(path))
        out_dir = str(tmp_path / "run")
        code = cli.main(["plan", "--scenario", str(path), "--out-dir", out_dir, "--log-level", "quiet"])
        assert code == cli.EXIT_INFEASIBLE
        metrics = json.load(open(os.path.join(out_dir, fileio.METRICS_FILE)))
        assert metrics["feasible"] is False
        assert metrics["stage"] in ("coverage", "graph")

    def test_schema_violation_exit(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"area": {}}))
        code = cli.main(["plan", "--scenario", str(bad), "--out-dir", str(tmp_path / "o")])
        assert code == cli.EXIT_INPUT

    def test_unknown_key_rejected(self, tmp_path, scenario_file):
        doc = json.load(open(scenario_file))
        doc["extra_knob"] = 1
        bad = tmp_path / "extra.json"
        bad.write_text(json.dumps(doc))
        code = cli.main(["plan", "--scenario", str(bad), "--out-dir", str(tmp_path / "o")])
        assert code == cli.EXIT_INPUT

    def test_weight_override_changes_cost(self, scenario_file, tmp_path):
        out_dir = str(tmp_path / "zero_smooth")
        code = cli.main(
            ["plan", "--scenario", scenario_file, "--trials", "8", "--samples", "200",
             "--out-dir", out_dir, "--gamma-sm", "0", "--log-level", "quiet"]
        )
        assert code == cli.EXIT_OK
        metrics = json.load(open(os.path.join(out_dir, fileio.METRICS_FILE)))
        assert metrics["cost"]["smoothing"] == 0.0


class TestValidateCommand:
    def test_untouched_artifacts_pass(self, scenario_file, plan_dir, capsys):
        code = cli.main(["validate", "--scenario", scenario_file, "--plan-dir", plan_dir,
                         "--log-level", "quiet"])
        out = capsys.readouterr().out
        assert code == cli.EXIT_OK
        assert "PASS" in out

    def test_tampered_speed_fails(self, scenario_file, plan_dir, tmp_path, capsys):
        import shutil

        tampered = tmp_path / "tampered"
        shutil.copytree(plan_dir, tampered)
        traj = tampered / fileio.TRAJECTORY_FILE
        rows = traj.read_text().splitlines()
        head, first, rest = rows[0], rows[1], rows[2:]
        cells = first.split(",")
        cells[6] = "99.000000"  # speed_mps column
        traj.write_text("\n".join([head, ",".join(cells), *rest]) + "\n")
        code = cli.main(["validate", "--scenario", scenario_file, "--plan-dir", str(tampered),
                         "--log-level", "quiet"])
        out = capsys.readouterr().out
        assert code == cli.EXIT_INFEASIBLE
        assert "csv" in out and "FAIL" in out

    def test_missing_artifacts(self, scenario_file, tmp_path):
        code = cli.main(["validate", "--scenario", scenario_file, "--plan-dir", str(tmp_path)])
        assert code == cli.EXIT_INPUT

    def test_report_matches_library_validate(self, scenario_file, plan_dir):
        sc = fileio.load_scenario(scenario_file)
        artifacts = fileio.load_plan_artifacts(plan_dir)
        rebuilt = fileio.result_from_artifacts(artifacts)
        report = planner.validate(sc, rebuilt, samples_per_segment=200)
        # full-precision round trip through segments.json: bitwise segments
        direct = planner.plan(sc, seed=0, trials=8)
        ref = planner.validate(sc, direct, samples_per_segment=200)
        assert report.min_snr_margin_rel == pytest.approx(ref.min_snr_margin_rel, abs=1e-9)
        assert report.max_speed_mps == pytest.approx(ref.max_speed_mps, abs=1e-9)
        for p, v in ref.continuity_residuals.items():
            assert report.continuity_residuals[p] == pytest.approx(v, abs=1e-9)


class TestOracleCommand:
    def test_small_instance(self, scenario_file, capsys):
        code = cli.main(["oracle", "--scenario", scenario_file, "--max-paths", "4000",
                         "--trials", "8", "--log-level", "quiet"])
        out = capsys.readouterr().out
        assert code == cli.EXIT_OK
        assert "relative gap to oracle" in out
        gap = float(out.split("relative gap to oracle:")[1].strip())
        assert gap <= 0.01 + 1e-9

    def test_guard_exceeded(self, scenario_file, capsys):
        code = cli.main(["oracle", "--scenario", scenario_file, "--max-paths", "1",
                         "--log-level", "quiet"])
        out = capsys.readouterr().out
        assert code == cli.EXIT_INPUT
        assert "simple paths" in out


class TestSweepCommand:
    def test_rows_and_format(self, scenario_file, tmp_path, capsys):
        out_csv = tmp_path / "sweep.csv"
        code = cli.main(
            ["sweep", "--scenario", scenario_file, "--param", "gamma_sm",
             "--values", "0,0.005,0.01", "--out", str(out_csv), "--trials", "8",
             "--log-level", "quiet"]
        )
        assert code == cli.EXIT_OK
        with open(out_csv) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 3
        accs = [float(r["peak_acc_mps2"]) for r in rows]
        lens = [float(r["length_m"]) for r in rows]
        assert all(b <= a * (1 + 1e-9) for a, b in zip(accs, accs[1:]))
        assert all(b >= a * (1 - 1e-9) for a, b in zip(lens, lens[1:]))

    def test_bad_values_rejected(self, scenario_file, tmp_path):
        code = cli.main(["sweep", "--scenario", scenario_file, "--param", "gamma_sm",
                         "--values", "a,b", "--out", str(tmp_path / "x.csv")])
        assert code == cli.EXIT_INPUT

    def test_bad_param_rejected(self, scenario_file, tmp_path):
        code = cli.main(["sweep", "--scenario", scenario_file, "--param", "alpha",
                         "--values", "1", "--out", str(tmp_path / "x.csv")])
        assert code == cli.EXIT_INPUT


class TestDeterminism:
    def test_metrics_byte_identical_across_runs(self, scenario_file, tmp_path):
        d1, d2 = str(tmp_path / "r1"), str(tmp_path / "r2")
        for d in (d1, d2):
            code = cli.main(["plan", "--scenario", scenario_file, "--seed", "7",
                             "--trials", "8", "--samples", "150", "--out-dir", d,
                             "--log-level", "quiet"])
            assert code == cli.EXIT_OK
        m1 = open(os.path.join(d1, fileio.METRICS_FILE), "rb").read()
        m2 = open(os.path.join(d2, fileio.METRICS_FILE), "rb").read()
        assert m1 == m2
        t1 = open(os.path.join(d1, fileio.TRAJECTORY_FILE), "rb").read()
        t2 = open(os.path.join(d2, fileio.TRAJECTORY_FILE), "rb").read()
        assert t1 == t2


class TestRoundTrip:
    def test_scenario_save_load_identity(self, tmp_path):
        sc = planner.generate_scenario(seed=9, num_bs=7)
        p = tmp_path / "sc.json"
        fileio.save_scenario(sc, str(p))
        loaded = fileio.load_scenario(str(p))
        assert loaded.start == sc.start and loaded.goal == sc.goal
        assert loaded.stations == sc.stations
        assert loaded.weights == sc.weights
        assert loaded.urllc == sc.urllc
        assert loaded.channel.eta_los == pytest.approx(sc.channel.eta_los, rel=1e-12)
        assert loaded.channel.eta_nlos == pytest.approx(sc.channel.eta_nlos, rel=1e-12)

    def test_csv_reparse_matches_formatting_precision(self, plan_dir, scenario_file):
        sc = fileio.load_scenario(scenario_file)
        artifacts = fileio.load_plan_artifacts(plan_dir)
        rebuilt = fileio.result_from_artifacts(artifacts)
        samples = int(artifacts.metrics["samples_per_segment"])
        expected = fileio.sample_trajectory(sc, rebuilt, samples)
        assert len(expected) == len(artifacts.trajectory)
        for exp, got in zip(expected[:100], artifacts.trajectory[:100]):
            for k, key in enumerate(fileio.TRAJECTORY_HEADER):
                if key == "serving_bs":
                    assert int(exp[k]) == got[key]
                else:
                    assert abs(float(exp[k]) - got[key]) <= 5.0000001e-7
