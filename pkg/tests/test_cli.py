from __future__ import annotations

import json

import numpy as np
import pytest
import yaml

from memfpk import config
from memfpk.cli import EXIT_CONFIG, EXIT_MISSING, EXIT_NUMERIC, EXIT_OK, main


def _write(tmp_path, example, edits, name="c.yaml"):
    doc = yaml.safe_load(config.example_text(example))
    for path, value in edits.items():
        node = doc
        keys = path.split(".")
        for k in keys[:-1]:
            node = node.setdefault(k, {})
        node[keys[-1]] = value
    p = tmp_path / name
    p.write_text(yaml.safe_dump(doc))
    return p


SMALL_DUFFING = {
    "sim.n_samples": 40, "sim.n_steps": 400, "sim.dt": 0.005, "sim.snapshot_stride": 20,
    "solver.t_final": 2.0, "outputs.report_times": [1.0, 2.0], "reference.kind": "none",
}


def _tree(d):
    return {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


def test_show_config(capsys):
    assert main(["show-config", "ex3"]) == EXIT_OK
    assert "vdp" in capsys.readouterr().out


def test_fgn_subcommand(tmp_path):
    out = tmp_path / "f.csv"
    assert main(["fgn", "--hurst", "0.7", "--n", "64", "--seed", "3", "--out", str(out)]) == EXIT_OK
    tab = np.loadtxt(out, delimiter=",", skiprows=1)
    assert tab.shape == (64, 2)
    assert main(["fgn", "--hurst", "1.2", "--n", "64", "--out", str(out)]) == EXIT_CONFIG


def test_simulate_is_byte_deterministic(tmp_path):
    cfg = _write(tmp_path, "ex2", SMALL_DUFFING)
    for name, threads in (("a", "1"), ("b", "2")):
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / name),
                     "--threads", threads]) == EXIT_OK
    a, b = _tree(tmp_path / "a"), _tree(tmp_path / "b")
    assert a.keys() == b.keys()
    for k in a:
        if k != "manifest.json":
            assert a[k] == b[k], k
    # rerunning in place overwrites with identical bytes
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "a")]) == EXIT_OK
    assert _tree(tmp_path / "a") == a


def test_stride_snapshot_files(tmp_path):
    cfg = _write(tmp_path, "ex2", {"sim.n_samples": 3, "reference.kind": "none"})
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_OK
    meta = json.loads((tmp_path / "ensemble" / "ensemble.json").read_text())
    snaps = sorted((tmp_path / "ensemble").glob("snapshot_*.csv"))
    assert len(snaps) == 8000 // 50 + 1 == meta["n_snapshots"]
    last = np.loadtxt(snaps[-1], delimiter=",", skiprows=1)
    assert last[0, 1] == pytest.approx(8.0)


def test_seed_override_and_manifest(tmp_path):
    cfg = _write(tmp_path, "ex2", SMALL_DUFFING)
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "r"), "--seed", "11"]) == EXIT_OK
    man = json.loads((tmp_path / "r" / "manifest.json").read_text())
    assert man["seeds"]["sim"] == 11
    assert man["config"]["sim"]["seed"] == 11
    assert set(man["schemes"]) == {"simulator", "solver"}
    assert len(man["config_sha256"]) == 64
    assert "simulate" in man["stages"]


def test_dlmm_pipeline_stages(tmp_path):
    cfg = _write(tmp_path, "ex2", SMALL_DUFFING)
    out = tmp_path / "run"
    assert main(["estimate", "--config", str(cfg), "--out", str(out)]) == EXIT_MISSING
    assert main(["solve", "--config", str(cfg), "--out", str(out)]) == EXIT_MISSING
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    assert main(["estimate", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    assert main(["solve", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    assert (out / "pdf" / "pdf_t0002.000.csv").exists()
    assert (out / "analysis" / "moments.csv").exists()
    diag = json.loads((out / "diagnostics.json").read_text())
    assert len(diag["report"]) == 2
    assert main(["compare", "--config", str(cfg), "--out", str(out)]) == EXIT_MISSING


def test_analytic_solve_writes_metrics(tmp_path):
    cfg = _write(tmp_path, "ex1", {"solver.t_final": 1.0, "outputs.report_times": [0.5, 1.0],
                                   "outputs.formats": ["csv", "binary", "gnuplot"]})
    out = tmp_path / "run"
    assert main(["solve", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    metrics = json.loads((out / "metrics.json").read_text())
    assert [m["time"] for m in metrics["metrics"]] == [0.5, 1.0]
    assert all(m["max_abs"] <= 5e-3 for m in metrics["metrics"])
    for ext in ("csv", "bin", "dat"):
        assert (out / "pdf" / f"pdf_t0001.000.{ext}").exists()
    assert main(["analytic", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    assert (out / "analytic" / "summary.csv").exists()


def test_gwn_mode_needs_no_ensemble(tmp_path):
    cfg = _write(tmp_path, "ex1", {"solver.coefficients": "gwn", "solver.t_final": 0.5,
                                   "outputs.report_times": [0.5], "reference.kind": "none"})
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path / "g")]) == EXIT_OK


def test_config_errors_exit_2(tmp_path, capsys):
    cfg = _write(tmp_path, "ex2", {"sim.n_samples": 0})
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "sim.n_samples" in capsys.readouterr().err
    cfg = _write(tmp_path, "ex1", {"solver.coefficients": "spectral"})
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_missing_config_file_exit_4(tmp_path):
    assert main(["solve", "--config", str(tmp_path / "nope.yaml"), "--out", str(tmp_path)]) == EXIT_MISSING


def test_cfl_failure_exit_3(tmp_path, capsys):
    cfg = _write(tmp_path, "ex1", {"solver.dt": 0.05, "solver.t_final": 0.5,
                                   "outputs.report_times": [0.5], "reference.kind": "none"})
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_NUMERIC
    assert "CFL" in capsys.readouterr().err
