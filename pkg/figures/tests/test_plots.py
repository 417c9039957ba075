import numpy as np
import pytest

from kvfigures import plot_error_history, plot_heatmap_2d, plot_potential
from kvfigures.heatmap import main as heatmap_main
from kvfigures.history import main as history_main
from kvfigures.io import FigureInputError
from kvfigures.potential import main as potential_main


def write_potential_csv(path, x, q_true, q_final):
    with open(path, "w") as fh:
        fh.write("x,q_true,q_final\n")
        for row in zip(x, q_true, q_final):
            fh.write(",".join(map(str, row)) + "\n")
    return str(path)


def write_history_csv(path, errors):
    with open(path, "w") as fh:
        fh.write("iter,k_rho,grad_norm,beta,gamma,rel_error\n")
        for i, e in enumerate(errors):
            fh.write(f"{i},1e-3,1e-4,1.0,0.0,{e}\n")
    return str(path)


def write_grid_csv(path, n, hole=False):
    with open(path, "w") as fh:
        fh.write("x,y,q_true,q_final\n")
        for i, x in enumerate(np.linspace(0, 1, n)):
            for j, y in enumerate(np.linspace(0, 1, n)):
                if hole and i == 1 and j == 1:
                    continue
                inside = (x - .5) ** 2 + (y - .5) ** 2 <= 0.03
                fh.write(f"{x},{y},{1 + float(inside)},{1 + .8 * float(inside)}\n")
    return str(path)


# ---- potential overlay ------------------------------------------------------

def test_potential_overlay_written(tmp_path):
    x = np.linspace(0, 2, 25)
    csv = write_potential_csv(tmp_path / "p.csv", x, x, 1.05 * x)
    out = plot_potential(csv, str(tmp_path / "p.png"))
    assert (tmp_path / "p.png").stat().st_size > 0


def test_potential_identical_columns(tmp_path):
    x = np.linspace(0, 2, 25)
    csv = write_potential_csv(tmp_path / "p.csv", x, x, x)
    plot_potential(csv, str(tmp_path / "p.png"))
    assert (tmp_path / "p.png").stat().st_size > 0


def test_potential_two_rows(tmp_path):
    csv = write_potential_csv(tmp_path / "p.csv", [0.0, 1.0], [1, 2], [1, 2])
    plot_potential(csv, str(tmp_path / "p.png"))
    assert (tmp_path / "p.png").stat().st_size > 0


def test_potential_missing_column_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("x,q_true\n0,1\n1,2\n")
    with pytest.raises(FigureInputError):
        plot_potential(str(p), str(tmp_path / "x.png"))
    assert potential_main([str(p), str(tmp_path / "x.png")]) == 1


def test_potential_cli_default_output(tmp_path):
    x = np.linspace(0, 2, 10)
    csv = write_potential_csv(tmp_path / "run.csv", x, x, x)
    assert potential_main([csv]) == 0
    assert (tmp_path / "run_overlay.png").exists()


# ---- error history ----------------------------------------------------------

def test_history_monotone_curve(tmp_path):
    csv = write_history_csv(tmp_path / "h.csv", 0.5 * 2.0 ** -np.arange(9))
    plot_error_history(csv, str(tmp_path / "h.png"))
    assert (tmp_path / "h.png").stat().st_size > 0


def test_history_single_row_point(tmp_path):
    csv = write_history_csv(tmp_path / "h.csv", [0.25])
    plot_error_history(csv, str(tmp_path / "h.png"))
    assert (tmp_path / "h.png").stat().st_size > 0


def test_history_empty_file_errors(tmp_path):
    p = tmp_path / "empty.csv"
    p.write_text("")
    with pytest.raises(FigureInputError):
        plot_error_history(str(p), str(tmp_path / "x.png"))
    assert history_main([str(p), str(tmp_path / "x.png")]) == 1


def test_history_header_only_errors(tmp_path):
    p = tmp_path / "h.csv"
    p.write_text("iter,k_rho,grad_norm,beta,gamma,rel_error\n")
    with pytest.raises(FigureInputError):
        plot_error_history(str(p), str(tmp_path / "x.png"))


# ---- 2D heatmaps -------------------------------------------------------------

def test_heatmap_written(tmp_path):
    csv = write_grid_csv(tmp_path / "g.csv", 12)
    plot_heatmap_2d(csv, str(tmp_path / "g.png"))
    assert (tmp_path / "g.png").stat().st_size > 0


def test_heatmap_constant_field(tmp_path):
    p = tmp_path / "c.csv"
    with open(p, "w") as fh:
        fh.write("x,y,q_true,q_final\n")
        for x in np.linspace(0, 1, 5):
            for y in np.linspace(0, 1, 5):
                fh.write(f"{x},{y},1.0,1.0\n")
    plot_heatmap_2d(str(p), str(tmp_path / "c.png"))
    assert (tmp_path / "c.png").stat().st_size > 0


def test_heatmap_grid_hole_errors(tmp_path):
    csv = write_grid_csv(tmp_path / "g.csv", 8, hole=True)
    with pytest.raises(FigureInputError):
        plot_heatmap_2d(csv, str(tmp_path / "g.png"))
    assert heatmap_main([csv, str(tmp_path / "g.png")]) == 1


def test_heatmap_reshapes_disk(tmp_path):
    # the disk indicator must survive the reshape (value 2 at center)
    from kvfigures.heatmap import _to_grid
    from kvfigures.io import read_columns
    csv = write_grid_csv(tmp_path / "g.csv", 21)
    cols = read_columns(csv, ["x", "y", "q_true", "q_final"])
    xs, ys, grid = _to_grid(cols["x"], cols["y"], cols["q_true"])
    assert grid[10, 10] == 2.0
    assert grid[0, 0] == 1.0
