"""deltaB versus F with error bars and the three reference bounds, log-log."""

from __future__ import annotations

import argparse
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .csvio import SWEEP_COLUMNS, SchemaError, load_columns

REF_STYLES = (("shotnoise_ref", "shotnoise", "--"),
              ("heisenberg_ref", "Heisenberg", ":"),
              ("twobody_ref", r"$F^{-3/2}$ two-body", "-."))


def build_figure(data):
    """Returns (fig, ax, main_line, ref_lines) so callers can join the drawn
    data back to the CSV columns."""
    fig, ax = plt.subplots(figsize=(6, 4.5))
    container = ax.errorbar(data["F"], data["deltaB"], yerr=data["deltaB_err"],
                            fmt="o", color="C0", capsize=3,
                            label=r"$\delta\tilde{B}_\tau$", zorder=3)
    main = container.lines[0]
    refs = {}
    for col, label, style in REF_STYLES:
        refs[col], = ax.plot(data["F"], data[col], style, color="0.4", label=label)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel(r"$F$")
    ax.set_ylabel(r"$\delta\tilde{B}_\tau$")
    ax.legend(fontsize=9)
    fig.tight_layout()
    return fig, ax, main, refs


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--input", required=True, help="sweep.csv")
    ap.add_argument("--output", required=True, help="image file")
    args = ap.parse_args(argv)
    try:
        data = load_columns(args.input, SWEEP_COLUMNS)
    except SchemaError as e:
        print(f"figplot-sweep: {e}", file=sys.stderr)
        return 1
    fig, _, _, _ = build_figure(data)
    fig.savefig(args.output, dpi=150)
    plt.close(fig)
    return 0


if __name__ == "__main__":
    sys.exit(main())
