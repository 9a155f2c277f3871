import os
import re
import subprocess
from pathlib import Path

import pytest

import icisense as ic

CLI = os.environ.get("ICISENSE_CLI")
pytestmark = pytest.mark.skipif(not CLI, reason="ICISENSE_CLI not set")


def run(out, *args):
    subprocess.run([CLI, "--out", str(out), *args], check=True, capture_output=True, text=True)


def test_fig5_writes_one_cfo_csv_per_iteration(tmp_path):
    run(tmp_path, "--seed", "1", "reproduce", "fig5")
    per_angle = {}
    for f in tmp_path.glob("fig5_cfo_*_iter*.csv"):
        m = re.fullmatch(r"fig5_cfo_([mp])(\d+\.\d)_iter(\d+)\.csv", f.name)
        assert m, f.name
        angle = float(m.group(2)) * (-1 if m.group(1) == "m" else 1)
        per_angle.setdefault(angle, []).append(int(m.group(3)))
        lines = f.read_text().splitlines()
        assert re.fullmatch(r"# config_hash=[0-9a-f]{16} seed=1", lines[0])
        assert lines[1] == "velocity_mps,glrt_norm"
    assert sorted(per_angle) == [-35.0, -25.0]

    # iteration count from the library on the same data
    s = ic.demo_scenario("desk", seed=1)
    x, cube = ic.simulate(s)
    for angle, iters in per_angle.items():
        state = ic.omp_detect(cube, x, s.params, angle)
        assert sorted(iters) == list(range(len(state.spectra)))
    assert (tmp_path / "fig5_detections.csv").exists()
    assert (tmp_path / "fig5_cfo_m35.0.svg").exists()


def test_outputs_are_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    args = ["--seed", "7", "--pipelines", "fft,fft_ici_free", "montecarlo", "--trials", "2", "--snr", "0,10"]
    run(a, *args)
    run(b, *args)
    files = sorted(p.name for p in a.iterdir())
    assert "pd.csv" in files
    assert files == sorted(p.name for p in b.iterdir())
    for name in files:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    lines = (a / "pd.csv").read_text().splitlines()
    assert lines[0].startswith("# config_hash=") and lines[0].endswith(" seed=7")
    assert lines[1] == "snr_db,velocity_mps,pipeline,pd,fdr,rmse_range_m,rmse_vel_mps,n_trials"
    assert len(lines) == 2 + 4


def test_detect_with_config_file(tmp_path):
    s = ic.table2_scenario(ic.preset_params("desk"), 20.0, 10.0)
    cfg = tmp_path / "scene.json"
    cfg.write_text(s.to_json())
    run(tmp_path, "--config", str(cfg), "--pipelines", "fft", "detect")
    lines = (tmp_path / "detections.csv").read_text().splitlines()
    assert lines[1] == "source,range_m,vel_amb_mps,vel_res_mps,angle_deg,gain_abs,gain_phase"
    assert all(line.startswith("fft,") for line in lines[2:])


def test_bad_arguments_fail(tmp_path):
    r = subprocess.run([CLI, "--out", str(tmp_path), "--pipelines", "music", "detect"], capture_output=True)
    assert r.returncode != 0
    r = subprocess.run([CLI, "--out", str(tmp_path), "reproduce", "fig2"], capture_output=True)
    assert r.returncode != 0
