"""Relative-error-vs-iteration curve (log scale)."""

import argparse
import sys

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .io import FigureInputError, default_output, read_columns


def plot_error_history(history_csv, out_png) -> str:
    """Semilog plot of the relative error column of a history CSV; a single
    recorded iterate is drawn as a point."""
    cols = read_columns(history_csv, ["iter", "rel_error"])
    it = cols["iter"]
    err = cols["rel_error"]

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    style = "o" if it.size == 1 else "-o"
    positive = np.all(err > 0)
    (ax.semilogy if positive else ax.plot)(it, err, style, ms=3, lw=1.4)
    ax.set_xlabel("iteration")
    ax.set_ylabel("relative error")
    ax.grid(alpha=0.3, which="both")
    fig.tight_layout()
    fig.savefig(out_png, dpi=150)
    plt.close(fig)
    return out_png


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        description="relative error history on a log scale")
    parser.add_argument("history_csv")
    parser.add_argument("out_png", nargs="?", default=None)
    args = parser.parse_args(argv)
    out = args.out_png or default_output(args.history_csv, "_error")
    try:
        plot_error_history(args.history_csv, out)
    except FigureInputError as err:
        print(err, file=sys.stderr)
        return 1
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
