"""Overlay double- and single-pass <fz>(t) with variance bands."""

from __future__ import annotations

import argparse
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .csvio import TRAJECTORY_COLUMNS, SchemaError, load_columns


def build_figure(data):
    fig, ax = plt.subplots(figsize=(7, 4.5))
    t = data["t"]
    for tag, color in (("double", "C0"), ("single", "C1")):
        fz = data[f"fz_{tag}"]
        sig = np.sqrt(data[f"var_fz_{tag}"])
        ax.plot(t, fz, color=color, label=f"{tag}-pass", zorder=3)
        ax.fill_between(t, fz - sig, fz + sig, color=color, alpha=0.25, lw=0)
    ax.set_xlabel(r"$t/\tau$")
    ax.set_ylabel(r"$\langle F_z \rangle$")
    ax.legend()
    fig.tight_layout()
    return fig, ax


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--input", required=True, help="trajectory.csv")
    ap.add_argument("--output", required=True, help="image file (png/pdf/svg)")
    args = ap.parse_args(argv)
    try:
        data = load_columns(args.input, TRAJECTORY_COLUMNS)
    except SchemaError as e:
        print(f"figplot-trajectory: {e}", file=sys.stderr)
        return 1
    fig, _ = build_figure(data)
    fig.savefig(args.output, dpi=150)
    plt.close(fig)
    return 0


if __name__ == "__main__":
    sys.exit(main())
