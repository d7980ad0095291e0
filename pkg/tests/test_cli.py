"""Command-line front end tests: artifact generation, exit codes,
determinism, and error diagnostics."""

import json
import subprocess
import sys
from pathlib import Path

import pytest

from emnav.cli import main
from emnav.control import SynthesisError

SCENARIO_DIR = Path(__file__).resolve().parents[1] / "scenarios"


def write_json(path: Path, payload: dict) -> Path:
    path.write_text(json.dumps(payload, indent=2))
    return path


@pytest.fixture()
def short_torque(tmp_path):
    data = json.loads((SCENARIO_DIR / "single_torque.json").read_text())
    data["duration"] = 0.5
    return write_json(tmp_path / "short_torque.json", data)


@pytest.fixture()
def small_workspace(tmp_path):
    return write_json(
        tmp_path / "ws.json",
        {
            "kind": "workspace",
            "name": "small",
            "model": "octomag8",
            "current_limit": 16.0,
            "grid": {
                "x": [0.01, 0.05], "y": [-0.02, 0.02], "z": [0.0, 0.0],
                "spacing": 0.01,
            },
            "tasks": {
                "torque-box": {"tau_bar": 0.002},
                "fixed-field": {"field_magnitude": 0.025},
            },
            "plant": {"dipole_magnitude": 2.0, "magnet_offset": 0.02},
            "second_agent": [-0.0325, 0.0, 0.0],
        },
    )


class TestSimulate:
    def test_success_writes_trace_and_summary(self, short_torque, tmp_path):
        out = tmp_path / "out"
        code = main(["simulate", "--config", str(short_torque), "--out", str(out)])
        assert code == 0
        trace = out / "single_torque_trace.csv"
        summary = json.loads((out / "single_torque_summary.json").read_text())
        assert trace.exists()
        assert summary["failure"] is None
        assert summary["metrics"]["max_current"] > 0.0
        assert "settling_time" in summary["metrics"]

    def test_rerun_byte_identical(self, short_torque, tmp_path):
        outs = [tmp_path / "a", tmp_path / "b"]
        blobs = []
        for out in outs:
            assert main(["simulate", "--config", str(short_torque),
                         "--out", str(out)]) == 0
            blobs.append((out / "single_torque_trace.csv").read_bytes())
        assert blobs[0] == blobs[1]

    def test_seed_flag_controls_noise(self, tmp_path):
        data = json.loads((SCENARIO_DIR / "single_torque.json").read_text())
        data["duration"] = 0.5
        data["measurement_noise_std"] = 1e-4
        cfg = write_json(tmp_path / "noisy.json", data)

        def run(seed, tag):
            out = tmp_path / tag
            assert main(["simulate", "--config", str(cfg), "--out", str(out),
                         "--seed", str(seed)]) == 0
            return (out / "single_torque_trace.csv").read_bytes()

        assert run(5, "s5a") == run(5, "s5b")
        assert run(5, "s5c") != run(6, "s6")

    def test_malformed_json_reports_position(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text('{"name": "x",\n  broken')
        code = main(["simulate", "--config", str(bad), "--out",
                     str(tmp_path / "o")])
        assert code == 1
        err = capsys.readouterr().err
        assert "line 2" in err and "column" in err

    def test_missing_config(self, tmp_path):
        code = main(["simulate", "--config", str(tmp_path / "none.json"),
                     "--out", str(tmp_path / "o")])
        assert code == 1

    def test_kind_mismatch(self, small_workspace, tmp_path):
        code = main(["simulate", "--config", str(small_workspace),
                     "--out", str(tmp_path / "o")])
        assert code == 1

    def test_invalid_scenario_schema(self, tmp_path):
        cfg = write_json(tmp_path / "bad.json", {"name": "x", "paradigm": "torque"})
        assert main(["simulate", "--config", str(cfg),
                     "--out", str(tmp_path / "o")]) == 1

    def test_runtime_config_error_is_exit_1(self, short_torque, tmp_path):
        data = json.loads(short_torque.read_text())
        data["agents"][0]["controller"]["q_diag"] = [20.0, 1.0]  # wrong length
        cfg = write_json(tmp_path / "badq.json", data)
        assert main(["simulate", "--config", str(cfg),
                     "--out", str(tmp_path / "o")]) == 1

    def test_allocation_failure_exit_2_with_record(self, short_torque, tmp_path):
        data = json.loads(short_torque.read_text())
        data["model"] = {
            "name": "one",
            "coils": [
                {"position": [0.0, 0.0, -0.2], "axis": [0.0, 0.0, 1.0],
                 "moment_per_ampere": 50.0}
            ],
        }
        cfg = write_json(tmp_path / "rankfail.json", data)
        out = tmp_path / "o"
        assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 2
        summary = json.loads((out / "single_torque_summary.json").read_text())
        assert summary["failure"]["tick"] == 0
        assert "rank" in summary["failure"]["error"]

    def test_synthesis_failure_exit_2_with_record(
        self, short_torque, tmp_path, monkeypatch
    ):
        import emnav.cli as cli_mod

        def boom(scenario):
            raise SynthesisError("fixed point not reached")

        monkeypatch.setattr(cli_mod, "run_scenario", boom)
        out = tmp_path / "o"
        assert main(["simulate", "--config", str(short_torque),
                     "--out", str(out)]) == 2
        record = json.loads((out / "single_torque_failure.json").read_text())
        assert record["stage"] == "synthesis"
        assert "fixed point" in record["error"]


class TestWorkspaceCommand:
    def test_paired_run_outputs(self, small_workspace, tmp_path):
        out = tmp_path / "out"
        assert main(["workspace", "--config", str(small_workspace),
                     "--out", str(out)]) == 0
        for stem in ("small_torque", "small_field"):
            assert (out / f"{stem}.csv").exists()
            meta = json.loads((out / f"{stem}_meta.json").read_text())
            assert meta["model"] == "octomag8"
        comparison = json.loads((out / "small_comparison.json").read_text())
        assert comparison["field_contained_in_torque"] is True
        assert (
            comparison["feasible_count"]["torque"]
            >= comparison["feasible_count"]["field"]
        )

    def test_rerun_and_workers_byte_identical(self, small_workspace, tmp_path):
        blobs = []
        for tag, workers in (("a", 1), ("b", 1), ("c", 2)):
            out = tmp_path / tag
            assert main(["workspace", "--config", str(small_workspace),
                         "--out", str(out), "--workers", str(workers)]) == 0
            blobs.append((out / "small_torque.csv").read_bytes())
        assert blobs[0] == blobs[1] == blobs[2]

    def test_missing_required_key(self, tmp_path):
        cfg = write_json(tmp_path / "ws.json", {"kind": "workspace", "name": "x"})
        assert main(["workspace", "--config", str(cfg),
                     "--out", str(tmp_path / "o")]) == 1

    def test_empty_grid_header_only(self, small_workspace, tmp_path):
        data = json.loads(small_workspace.read_text())
        data["grid"]["x"] = [0.05, 0.01]
        cfg = write_json(tmp_path / "empty.json", data)
        out = tmp_path / "o"
        assert main(["workspace", "--config", str(cfg), "--out", str(out)]) == 0
        lines = (out / "small_torque.csv").read_text().splitlines()
        assert lines == ["x,y,z,fm,feasible,flag"]


class TestAllocBench:
    def make_config(self, tmp_path, samples=50):
        return write_json(
            tmp_path / "bench.json",
            {
                "kind": "alloc_bench",
                "name": "bench",
                "model": "octomag8",
                "samples": samples,
                "seed": 0,
                "tau_bar": 0.002,
                "position_radius": 0.04,
                "max_tilt": 0.3,
                "dipole_magnitude": 0.5,
            },
        )

    def test_norm_orderings_hold(self, tmp_path):
        cfg = self.make_config(tmp_path)
        out = tmp_path / "out"
        assert main(["alloc-bench", "--config", str(cfg), "--out", str(out)]) == 0
        summary = json.loads((out / "bench_summary.json").read_text())
        assert summary["violation_count"] == 0
        lines = (out / "bench.csv").read_text().splitlines()
        assert lines[0].startswith("sample,norm_i_one_step,norm_i_two_step")
        assert len(lines) == 1 + 50
        header = lines[0].split(",")
        angle_idx = header.index("angle_two_step_deg")
        one_idx = header.index("norm_i_one_step")
        two_idx = header.index("norm_i_two_step")
        for line in lines[1:]:
            cols = line.split(",")
            assert abs(float(cols[angle_idx]) - 90.0) < 1e-6
            assert float(cols[one_idx]) <= float(cols[two_idx]) + 1e-9

    def test_one_step_angle_not_identically_90(self, tmp_path):
        cfg = self.make_config(tmp_path)
        out = tmp_path / "out"
        main(["alloc-bench", "--config", str(cfg), "--out", str(out)])
        lines = (out / "bench.csv").read_text().splitlines()
        header = lines[0].split(",")
        idx = header.index("angle_one_step_deg")
        angles = [float(line.split(",")[idx]) for line in lines[1:]]
        assert any(abs(a - 90.0) > 1e-3 for a in angles)

    def test_seed_changes_samples(self, tmp_path):
        cfg = self.make_config(tmp_path)

        def run(seed, tag):
            out = tmp_path / tag
            assert main(["alloc-bench", "--config", str(cfg), "--out", str(out),
                         "--seed", str(seed)]) == 0
            return (out / "bench.csv").read_bytes()

        assert run(0, "a") == run(0, "b")
        assert run(0, "c") != run(1, "d")

    def test_bad_sample_count(self, tmp_path):
        cfg = write_json(
            tmp_path / "bench.json",
            {"kind": "alloc_bench", "name": "b", "samples": 0},
        )
        assert main(["alloc-bench", "--config", str(cfg),
                     "--out", str(tmp_path / "o")]) == 1


class TestEntryPoint:
    def test_usage_error_exit_1(self):
        assert pytest.raises(SystemExit, main, ["frobnicate"]).value.code == 1

    def test_module_invocation(self, tmp_path):
        cfg = tmp_path / "ws.json"
        cfg.write_text(json.dumps({
            "kind": "workspace",
            "name": "tiny",
            "model": "navion3",
            "current_limit": 25.0,
            "grid": {"x": [0.0, 0.0], "y": [0.0, 0.0], "z": [0.1, 0.12],
                     "spacing": 0.01},
            "tasks": {"fixed-field": {"field_magnitude": 0.025}},
        }))
        proc = subprocess.run(
            [sys.executable, "-m", "emnav", "workspace",
             "--config", str(cfg), "--out", str(tmp_path / "o")],
            capture_output=True,
        )
        assert proc.returncode == 0
        assert (tmp_path / "o" / "tiny_field.csv").exists()
