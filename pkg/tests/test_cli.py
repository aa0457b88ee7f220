import json
import subprocess
import sys

import pytest

from tdmcluster.cli import build_config, main, make_parser


def test_nullifiers_command(capsys):
    assert main(["nullifiers", "3"]) == 0
    out = capsys.readouterr().out
    for line in ("X_0 = x[A,0] + x[B,0] + x[A,1] - x[B,1]",
                 "P_2 = p[A,2] + p[B,2] - p[A,3] + p[B,3]",
                 "H_A,1 = x[A,0] + x[B,0] + 2*p[A,1] + x[A,2] - x[B,2]"):
        assert line in out
    rows = out.split("Commutators")[1].splitlines()[2:8]
    assert len(rows) == 6 and all(set(r.split()[1:]) == {"0"} for r in rows)


def test_flags_override_config(tmp_path):
    conf = tmp_path / "c.conf"
    conf.write_text("run.n_frames = 50\n")
    args = make_parser().parse_args(["run", "--config", str(conf), "--seed", "5", "--frames", "3",
                                     "--out", str(tmp_path), "--no-filter", "--shot-noise-only"])
    cfg = build_config(args)
    assert (cfg.run.n_frames, cfg.run.master_seed, cfg.filter.enabled, cfg.run.shot_noise_only) == (3, 5, False, True)
    smoke = build_config(make_parser().parse_args(["run", "--smoke"]))
    assert smoke.run.n_frames == 10 and smoke.run.frame_duration == 1e-3


def test_config_error_exit_code(tmp_path, capsys):
    conf = tmp_path / "c.conf"
    conf.write_text("network.fiber_loss = nope\n")
    assert main(["run", "--config", str(conf)]) == 2
    assert "network.fiber_loss" in capsys.readouterr().err


def test_run_and_determinism(tmp_path):
    for d in ("a", "b"):
        assert main(["run", "--frames", "3", "--out", str(tmp_path / d), "--seed", "11"]) == 0
    ma = json.loads((tmp_path / "a" / "manifest.json").read_text())
    mb = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert ma == mb
    assert ma["master_seed"] == 11 and "variance.csv" in ma["artifacts"]


def test_simulate_then_analyze(tmp_path):
    out = str(tmp_path)
    assert main(["simulate", "--frames", "2", "--out", out]) == 0
    assert (tmp_path / "traces" / "signal_00001.trc").exists()
    assert (tmp_path / "traces" / "shot_00000.trc").exists()
    assert main(["analyze", "--frames", "2", "--out", out]) == 0
    assert (tmp_path / "variance.csv").exists()


def test_scan_tc(tmp_path, capsys):
    assert main(["scan-tc", "--frames", "3", "--out", str(tmp_path), "--range", "0", "4", "--step", "2"]) == 0
    assert "minimizer" in capsys.readouterr().out
    lines = (tmp_path / "scan_tc.csv").read_text().splitlines()
    assert lines[1] == "t_c_ns,max_abs_c,stat_err" and len(lines) == 5
    assert main(["scan-tc", "--frames", "2", "--out", str(tmp_path), "--range", "4", "0"]) == 2


def test_spectra_command(tmp_path):
    assert main(["spectra", "--frames", "2", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "spectra_shot.csv").exists()
    assert not (tmp_path / "variance.csv").exists()


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "tdmcluster", "nullifiers", "2"], capture_output=True, text=True)
    assert r.returncode == 0 and "all checks passed" in r.stdout
