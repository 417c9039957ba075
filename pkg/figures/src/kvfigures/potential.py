"""Exact-vs-reconstructed potential overlay for 1D runs."""

import argparse
import sys

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .io import FigureInputError, default_output, read_columns


def plot_potential(potential_csv, out_png) -> str:
    """Overlay line plot of q_true and q_final against x."""
    cols = read_columns(potential_csv, ["x", "q_true", "q_final"])
    order = cols["x"].argsort()
    x = cols["x"][order]

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(x, cols["q_true"][order], "k-", lw=1.8, label="exact")
    ax.plot(x, cols["q_final"][order], "r--", lw=1.6, label="reconstructed")
    ax.set_xlabel("x")
    ax.set_ylabel("q(x)")
    ax.legend(frameon=False)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_png, dpi=150)
    plt.close(fig)
    return out_png


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        description="overlay plot of exact vs reconstructed potential")
    parser.add_argument("potential_csv")
    parser.add_argument("out_png", nargs="?", default=None)
    args = parser.parse_args(argv)
    out = args.out_png or default_output(args.potential_csv, "_overlay")
    try:
        plot_potential(args.potential_csv, out)
    except FigureInputError as err:
        print(err, file=sys.stderr)
        return 1
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
