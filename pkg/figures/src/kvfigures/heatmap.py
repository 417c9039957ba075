"""Side-by-side heatmaps of exact and reconstructed 2D potentials."""

import argparse
import sys

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .io import FigureInputError, default_output, read_columns


def _to_grid(x, y, values):
    xs = np.unique(x)
    ys = np.unique(y)
    if xs.size * ys.size != x.size:
        raise FigureInputError(
            f"nodes do not form a full rectangular grid: {xs.size} x {ys.size}"
            f" != {x.size}")
    ix = np.searchsorted(xs, x)
    iy = np.searchsorted(ys, y)
    grid = np.full((xs.size, ys.size), np.nan)
    grid[ix, iy] = values
    if np.any(np.isnan(grid)):
        raise FigureInputError("grid has holes (duplicate or missing nodes)")
    return xs, ys, grid


def plot_heatmap_2d(potential_csv, out_png) -> str:
    """Two heatmaps (exact | reconstructed) sharing the color scale."""
    cols = read_columns(potential_csv, ["x", "y", "q_true", "q_final"])
    xs, ys, q_true = _to_grid(cols["x"], cols["y"], cols["q_true"])
    _, _, q_final = _to_grid(cols["x"], cols["y"], cols["q_final"])

    vmin = min(q_true.min(), q_final.min())
    vmax = max(q_true.max(), q_final.max())
    extent = (xs[0], xs[-1], ys[0], ys[-1])
    fig, axes = plt.subplots(1, 2, figsize=(9.6, 4.2), sharey=True)
    for ax, field, title in ((axes[0], q_true, "exact"),
                             (axes[1], q_final, "reconstructed")):
        im = ax.imshow(field.T, origin="lower", extent=extent, vmin=vmin,
                       vmax=vmax, cmap="viridis", aspect="equal")
        ax.set_title(title)
        ax.set_xlabel("x")
    axes[0].set_ylabel("y")
    fig.colorbar(im, ax=axes, shrink=0.85)
    fig.savefig(out_png, dpi=150)
    plt.close(fig)
    return out_png


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        description="heatmap pair of exact vs reconstructed 2D potential")
    parser.add_argument("potential_csv")
    parser.add_argument("out_png", nargs="?", default=None)
    args = parser.parse_args(argv)
    out = args.out_png or default_output(args.potential_csv, "_heatmap")
    try:
        plot_heatmap_2d(args.potential_csv, out)
    except FigureInputError as err:
        print(err, file=sys.stderr)
        return 1
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
