"""Command-line interface: exit codes, artifacts, and reproducibility."""

import json

import pytest

from qgflow.cli import main


def _read(path):
    return path.read_bytes()


def test_validate_bundled_scenario(capsys):
    assert main(["validate", "--scenario", "chain2"]) == 0
    out = capsys.readouterr().out
    assert "chain2" in out or "vertices" in out


def test_validate_unknown_scenario_fails(capsys):
    assert main(["validate", "--scenario", "no-such-scenario"]) == 1
    assert "error:" in capsys.readouterr().err


def test_validate_malformed_file(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"graph": {}}')
    assert main(["validate", "--scenario", str(bad)]) == 1
    assert "error:" in capsys.readouterr().err


def test_ensemble_zero_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["sample", "--scenario", "interval", "--out", str(tmp_path), "--ensemble", "0"])
    assert exc.value.code == 2


def test_epsilon_ladder_zero_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["bell", "--scenario", "interval", "--out", str(tmp_path), "--epsilon-ladder", "0"])
    assert exc.value.code == 2


def test_evolve_writes_states_and_manifest(tmp_path):
    assert main(["evolve", "--scenario", "interval", "--out", str(tmp_path)]) == 0
    states = (tmp_path / "states.csv").read_text().splitlines()
    assert states[0].startswith("# schema_version=")
    assert states[1].split(",")[:3] == ["t", "edge_id", "x"]
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["tool"] == "qgflow"
    assert manifest["subcommand"] == "evolve"


def test_sample_is_reproducible(tmp_path):
    args = ["sample", "--scenario", "interval", "--ensemble", "40", "--seed", "3"]
    d1, d2 = tmp_path / "a", tmp_path / "b"
    assert main(args + ["--out", str(d1)]) == 0
    assert main(args + ["--out", str(d2)]) == 0
    for name in ("stats.csv", "hist.csv", "paths.csv"):
        assert _read(d1 / name) == _read(d2 / name)
    rep = json.loads((d1 / "equivariance.json").read_text())
    assert rep["ensemble"] == 40 and rep["seed"] == 3
    assert rep["equivariance"]


def test_sample_worker_count_does_not_change_stats(tmp_path):
    base = ["sample", "--scenario", "interval", "--ensemble", "30", "--seed", "5"]
    d1, d2 = tmp_path / "w1", tmp_path / "w2"
    assert main(base + ["--out", str(d1), "--workers", "1"]) == 0
    assert main(base + ["--out", str(d2), "--workers", "2"]) == 0
    assert _read(d1 / "stats.csv") == _read(d2 / "stats.csv")


def test_flux_ladder_artifacts(tmp_path):
    assert main(["flux", "--scenario", "chain2", "--out", str(tmp_path), "--ladder", "3"]) == 0
    report = json.loads((tmp_path / "flux.json").read_text())
    ladder = report["ladder"]
    assert len(ladder["residuals"]) == 3
    # finest rung is the scenario's own spacing
    assert ladder["h"][-1] == pytest.approx(0.01)
    assert (tmp_path / "ladder_residual.csv").exists()


def test_markovize_reports_identity_gap(tmp_path):
    assert main(["markovize", "--scenario", "chain2", "--out", str(tmp_path),
                 "--kernels", "5"]) == 0
    report = json.loads((tmp_path / "markovize.json").read_text())
    assert report["max_identity_gap"] <= 1e-12
    assert (tmp_path / "markovize.csv").exists()


def test_reverse_reports_swap_residual(tmp_path):
    assert main(["reverse", "--scenario", "chain2", "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "reverse.json").read_text())
    assert report["swap_residual"] <= 1e-13
    assert (tmp_path / "reverse.csv").exists()


def test_bell_small_ladder(tmp_path):
    assert main(["bell", "--scenario", "chain2", "--out", str(tmp_path),
                 "--ensemble", "25", "--epsilon-ladder", "2", "--epsilon", "0.04"]) == 0
    report = json.loads((tmp_path / "bell.json").read_text())
    assert report["epsilons"] == [0.04, 0.02]
    assert len(report["errors"]) == 2
    assert (tmp_path / "ladder.csv").exists()
    assert (tmp_path / "bell_paths.csv").exists()


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert "qgflow" in capsys.readouterr().out
