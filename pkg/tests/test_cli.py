import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

PKG_ROOT = Path(__file__).resolve().parent.parent


def run_cli(args, out_dir):
    env = dict(os.environ, EVRESIL_OUT_DIR=str(out_dir))
    return subprocess.run(
        [sys.executable, "-m", "evresil.cli", *args],
        capture_output=True, text=True, env=env, cwd=PKG_ROOT)


def run_pipeline(out_dir):
    steps = [
        ["generate"],
        ["fit-lut", "--telemetry", str(out_dir / "telemetry.csv")],
        ["inject", "--panel", str(out_dir / "panel.csv"), "--zones", str(out_dir / "zones.csv"),
         "--mode", "a1", "--lut", str(out_dir / "lut.csv"),
         "--telemetry", str(out_dir / "telemetry.csv")],
        ["forecast", "--panel", str(out_dir / "panel_injected_a1.csv"),
         "--zones", str(out_dir / "zones.csv"), "--lut", str(out_dir / "lut.csv"),
         "--aligner", str(out_dir / "aligner.json")],
        ["simulate", "--panel", str(out_dir / "panel_injected_a1.csv"),
         "--zones", str(out_dir / "zones.csv"), "--lut", str(out_dir / "lut.csv"),
         "--aligner", str(out_dir / "aligner.json")],
        ["grid", "--panel", str(out_dir / "panel_injected_a1.csv"),
         "--zones", str(out_dir / "zones.csv"), "--lut", str(out_dir / "lut.csv"),
         "--aligner", str(out_dir / "aligner.json")],
    ]
    for step in steps:
        proc = run_cli(step, out_dir)
        assert proc.returncode == 0, f"{step[0]} failed: {proc.stderr}"


@pytest.fixture(scope="module")
def pipeline_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("pipeline")
    run_pipeline(out)
    return out


class TestPipeline:
    def test_artifacts_exist(self, pipeline_dir):
        for name in ("telemetry.csv", "panel.csv", "zones.csv", "lut.csv", "lut.json",
                     "aligner.json", "panel_injected_a1.csv", "forecasts.npz",
                     "forecast_metrics.json", "policy_suite.json",
                     "grid_report.json", "load_series.csv"):
            assert (pipeline_dir / name).exists(), name

    def test_policy_suite_has_all_policies(self, pipeline_dir):
        suite = json.loads((pipeline_dir / "policy_suite.json").read_text())
        assert set(suite) == {"none", "price", "capboost", "hybrid"}

    def test_missing_file_exits_nonzero(self, tmp_path):
        proc = run_cli(["fit-lut", "--telemetry", str(tmp_path / "nope.csv")], tmp_path)
        assert proc.returncode == 1
        assert proc.stderr.strip()


class TestDeterminism:
    def test_reruns_byte_identical(self, pipeline_dir, tmp_path_factory):
        other = tmp_path_factory.mktemp("pipeline_rerun")
        run_pipeline(other)
        for name in ("telemetry.csv", "panel.csv", "zones.csv", "lut.csv", "lut.json",
                     "aligner.json", "panel_injected_a1.csv", "forecasts.npz",
                     "forecast_metrics.json", "policy_suite.json",
                     "grid_report.json", "load_series.csv"):
            assert (pipeline_dir / name).read_bytes() == (other / name).read_bytes(), name

    def test_seed_changes_output(self, pipeline_dir, tmp_path_factory):
        other = tmp_path_factory.mktemp("pipeline_seed9")
        proc = run_cli(["--seed", "9", "generate"], other)
        assert proc.returncode == 0
        assert (other / "panel.csv").read_bytes() != (pipeline_dir / "panel.csv").read_bytes()
