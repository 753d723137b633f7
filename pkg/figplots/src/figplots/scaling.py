"""Log-log scaling figure: ensemble means with error bars, optional
per-trajectory scatter, and the fitted power law with its slope annotation."""

from __future__ import annotations

import argparse
import json
import sys
import warnings

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .csvio import SAMPLES_COLUMNS, SWEEP_COLUMNS, SchemaError, load_columns


def parse_sample_specs(specs):
    """['F=path', ...] -> [(F, samples.csv path), ...]."""
    out = []
    for spec in specs or ():
        if "=" not in spec:
            raise SchemaError(f"--samples expects F=path, got {spec!r}")
        f, path = spec.split("=", 1)
        out.append((float(f), path))
    return out


def build_figure(data, fit=None, samples=()):
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for f_val, path in samples:
        cols = load_columns(path, SAMPLES_COLUMNS)
        q = cols["conditional_qfi"]
        q = q[q > 0]
        # per-realization uncertainty deltaB|Z = qfi^(-1/2)
        ax.plot(np.full(q.size, f_val), q ** -0.5, ".", color="0.6", ms=3,
                alpha=0.5, zorder=1)
    container = ax.errorbar(data["F"], data["deltaB"], yerr=data["deltaB_err"],
                            fmt="o", color="C0", capsize=3,
                            label=r"$\delta\tilde{B}_\tau$", zorder=3)
    main = container.lines[0]
    line = None
    if fit is not None:
        slope, intercept = fit["slope"], fit["intercept"]
        Fs = np.array([data["F"].min(), data["F"].max()])
        line, = ax.plot(Fs, 10.0**intercept * Fs**slope, "-", color="C3",
                        label="power-law fit", zorder=2)
        ax.annotate(f"slope = {slope:.2f}", xy=(0.05, 0.08),
                    xycoords="axes fraction", color="C3")
    else:
        warnings.warn("no fit summary supplied; drawing points only")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel(r"$F$")
    ax.set_ylabel(r"$\delta\tilde{B}_\tau$")
    ax.legend(fontsize=9)
    fig.tight_layout()
    return fig, ax, main, line


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--input", required=True, help="sweep.csv (scaling-law run)")
    ap.add_argument("--output", required=True, help="image file")
    ap.add_argument("--fit", help="fit.json with slope/intercept")
    ap.add_argument("--samples", action="append", metavar="F=path",
                    help="qfi_samples.csv for one F; repeatable")
    args = ap.parse_args(argv)
    try:
        data = load_columns(args.input, SWEEP_COLUMNS)
        fit = None
        if args.fit:
            with open(args.fit) as fh:
                fit = json.load(fh)
            if "slope" not in fit or "intercept" not in fit:
                raise SchemaError(f"{args.fit}: need slope and intercept")
        samples = parse_sample_specs(args.samples)
        fig, _, _, _ = build_figure(data, fit, samples)
    except (SchemaError, OSError, json.JSONDecodeError) as e:
        print(f"figplot-scaling: {e}", file=sys.stderr)
        return 1
    fig.savefig(args.output, dpi=150)
    plt.close(fig)
    return 0


if __name__ == "__main__":
    sys.exit(main())
