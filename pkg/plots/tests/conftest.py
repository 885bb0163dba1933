"""Shared artifacts: produced once per session by the qgflow CLI."""

import json
import shutil
import subprocess

import pytest

QGFLOW = shutil.which("qgflow")


def run_tool(args):
    if QGFLOW is None:
        pytest.skip("qgflow CLI is not installed")
    proc = subprocess.run([QGFLOW, *args], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    return proc


@pytest.fixture(scope="session")
def sample_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sample")
    run_tool(["sample", "--scenario", "interval", "--out", str(out),
              "--ensemble", "60", "--seed", "3"])
    return out


@pytest.fixture(scope="session")
def flux_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("flux")
    run_tool(["flux", "--scenario", "chain2", "--out", str(out), "--ladder", "3"])
    return out


@pytest.fixture(scope="session")
def bell_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("bell")
    run_tool(["bell", "--scenario", "star3-asym", "--out", str(out),
              "--ensemble", "30"])
    return out


@pytest.fixture(scope="session")
def bell_report(bell_dir):
    return json.loads((bell_dir / "bell.json").read_text())
