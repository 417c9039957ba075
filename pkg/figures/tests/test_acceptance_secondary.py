"""Secondary acceptance: every plot script consumes CSVs emitted by the
reconstruction CLI and produces non-empty PNGs; the stationarity-collapse
overlay shows coincident curves."""

import json
import shutil
import subprocess

import numpy as np
import pytest

pytestmark = pytest.mark.skipif(shutil.which("kvrecon") is None,
                                reason="kvrecon CLI not installed")


def run(cmd):
    proc = subprocess.run(cmd, capture_output=True, text=True)
    assert proc.returncode == 0, f"{cmd}: {proc.stderr}"
    return proc


@pytest.fixture(scope="module")
def example_81_outputs(tmp_path_factory):
    """Desk-scale Example 8.1 reconstruction through the CLI."""
    td = tmp_path_factory.mktemp("ex81")
    cfg = td / "cfg.json"
    cfg.write_text(json.dumps({
        "dim": 1, "n_cells": 90, "n_steps": 71, "alpha": 0.45,
        "rho": 1e-5, "q_true": "linear", "q0": 1.0,
        "neumann_expr": "20*t**2", "max_it": 200, "seed": 42,
    }))
    out = td / "run"
    run(["kvrecon", "invert", str(cfg), "--out", str(out)])
    return out


def test_potential_script_on_cli_output(example_81_outputs, tmp_path):
    png = tmp_path / "overlay.png"
    run(["kvfig-potential", str(example_81_outputs / "potential.csv"), str(png)])
    assert png.stat().st_size > 0


def test_history_script_on_cli_output(example_81_outputs, tmp_path):
    png = tmp_path / "history.png"
    run(["kvfig-history", str(example_81_outputs / "history.csv"), str(png)])
    assert png.stat().st_size > 0


def test_heatmap_script_on_cli_output(tmp_path):
    cfg = tmp_path / "cfg2d.json"
    cfg.write_text(json.dumps({
        "dim": 2, "n_cells": 10, "n_steps": 6, "alpha": 0.5,
        "rho": 1e-5, "q_true": "disk2d",
        "neumann_expr": "10*(t**0.5*sin(pi*x) + sin(pi*y))",
        "max_it": 2, "seed": 42,
    }))
    out = tmp_path / "run2d"
    run(["kvrecon", "invert", str(cfg), "--out", str(out)])
    png = tmp_path / "heat.png"
    run(["kvfig-heatmap", str(out / "potential.csv"), str(png)])
    assert png.stat().st_size > 0


def test_stationarity_collapse_overlay_coincides(tmp_path):
    """Started at the exact potential the recorded curves coincide below
    plot resolution."""
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "dim": 1, "n_cells": 40, "n_steps": 16, "alpha": 0.45,
        "rho": 0.0, "q_true": "1 + 0.4*x", "q0": "1 + 0.4*x",
        "neumann_expr": "20*t**2", "max_it": 10, "seed": 42,
    }))
    out = tmp_path / "run"
    run(["kvrecon", "invert", str(cfg), "--out", str(out)])
    data = np.genfromtxt(out / "potential.csv", delimiter=",", names=True)
    gap = np.abs(data["q_true"] - data["q_final"]).max()
    scale = np.abs(data["q_true"]).max()
    assert gap <= 1e-6 * scale  # far below one pixel at plot scale
    png = tmp_path / "overlay.png"
    run(["kvfig-potential", str(out / "potential.csv"), str(png)])
    assert png.stat().st_size > 0
