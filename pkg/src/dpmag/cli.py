"""Command-line entry point.

Subcommands: trajectory, qfi, sweep, optimize-k, fit.  Configuration comes
from a flat `key = value` file (or a previous run's manifest.json) with
`--key value` overrides winning.  Exit codes: 0 success, 2 configuration
error, 3 numerical-validity failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .experiments import (
    ExperimentError,
    SweepConfig,
    optimize_K,
    powerlaw_fit,
    qfi_point,
    run_sweep,
)
from .filtering import FilterError, FilterParams
from .fisher import FisherError
from .runio import ConfigError, fmt, load_config, output_dir, parse_overrides, write_csv, write_manifest
from .spin import SpinError, build_spin_operators, coherent_state_x
from .trajectories import NoiseSource, TrajectoryError, generate_record

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_VALIDITY = 3

TRAJECTORY_HEADER = ["t", "fz_double", "var_fz_double", "fz_single",
                     "var_fz_single", "purity_double", "purity_single"]
SAMPLES_HEADER = ["stream_index", "conditional_qfi", "purity", "valid"]
SUMMARY_HEADER = ["mean", "sem", "deltaB", "deltaB_err_sem", "deltaB_err_raw"]
SWEEP_HEADER = ["F", "N", "M", "K", "qfi_mean", "qfi_sem", "deltaB", "deltaB_err",
                "shotnoise_ref", "heisenberg_ref", "twobody_ref", "excluded"]


class ValidityFailure(RuntimeError):
    pass


def _get(cfg: dict, key: str, default=None, required: bool = False):
    if key in cfg:
        return cfg[key]
    if required:
        raise ConfigError(f"missing config key: {key}")
    return default


def _common(cfg):
    return dict(
        seed=int(_get(cfg, "seed", 42)),
        gamma=float(_get(cfg, "gamma", 1.0)),
        tau=float(_get(cfg, "tau", 1.0)),
        n_steps=int(_get(cfg, "n_steps", 1000)),
        noise_mode=str(_get(cfg, "noise_mode", "record")),
        integrator=str(_get(cfg, "integrator", "auto")),
        workers=int(_get(cfg, "workers", 1)),
    )


def _filter_params(cfg, B, M, K):
    c = _common(cfg)
    return FilterParams(B=B, M=M, K=K, gamma=c["gamma"], tau=c["tau"],
                        n_steps=c["n_steps"])


def cmd_trajectory(cfg: dict, outdir: Path) -> int:
    c = _common(cfg)
    F = float(_get(cfg, "F", required=True))
    B = float(_get(cfg, "B", required=True))
    M = float(_get(cfg, "M", required=True))
    K = float(_get(cfg, "K", required=True))
    stream = int(_get(cfg, "stream_index", 0))
    ops = build_spin_operators(F)
    rho0 = coherent_state_x(ops)
    noise = NoiseSource(c["seed"], stream)
    p_double = _filter_params(cfg, B, M, K)
    p_single = _filter_params(cfg, B, M, 0.0)
    _, double = generate_record(rho0, ops, p_double, noise,
                                integrator=c["integrator"])
    _, single = generate_record(rho0, ops, p_single, noise,
                                integrator=c["integrator"])
    rows = zip(double.times, double.fz, double.var_fz, single.fz,
               single.var_fz, double.purity, single.purity)
    write_csv(outdir / "trajectory.csv", TRAJECTORY_HEADER, rows)
    write_manifest(outdir, "trajectory", cfg, __version__)
    if not (double.valid and single.valid):
        raise ValidityFailure("positivity flag tripped; reduce dt")
    return EXIT_OK


def cmd_qfi(cfg: dict, outdir: Path) -> int:
    c = _common(cfg)
    F = float(_get(cfg, "F", required=True))
    B = float(_get(cfg, "B", required=True))
    M = float(_get(cfg, "M", required=True))
    K = float(_get(cfg, "K", required=True))
    dB = float(_get(cfg, "dB", 1e-6))
    n = int(_get(cfg, "n_trajectories", required=True))
    if n < 2:
        raise ConfigError("n_trajectories must be at least 2")
    p = _filter_params(cfg, B, M, K)
    est, samples = qfi_point(F, p, dB, c["seed"], n, c["noise_mode"],
                             c["integrator"], c["workers"])
    write_csv(outdir / "qfi_samples.csv", SAMPLES_HEADER,
              [(s.stream_index, s.qfi, s.purity, s.valid) for s in samples])
    write_csv(outdir / "qfi_summary.csv", SUMMARY_HEADER,
              [(est.mean, est.sem, est.deltaB, est.deltaB_err, est.deltaB_err_raw)])
    write_manifest(outdir, "qfi", cfg, __version__, {str(F): est.n_excluded})
    if est.exclusion_rate > 0.01:
        raise ValidityFailure(f"exclusion rate {est.exclusion_rate:.1%} above 1%")
    return EXIT_OK


def cmd_sweep(cfg: dict, outdir: Path) -> int:
    c = _common(cfg)
    fv = _get(cfg, "F_values", required=True)
    if not isinstance(fv, (list, tuple)):
        fv = [fv]
    sweep_cfg = SweepConfig(
        F_values=tuple(float(f) for f in fv),
        n_trajectories=int(_get(cfg, "n_trajectories", 100)),
        dB=float(_get(cfg, "dB", 1e-6)),
        tau=c["tau"], gamma=c["gamma"],
        B_true=float(_get(cfg, "B", 0.1)),
        n_steps=c["n_steps"],
        mode=str(_get(cfg, "mode", "fixed-mk")),
        M=_maybe_float(_get(cfg, "M")), K=_maybe_float(_get(cfg, "K")),
        c=_maybe_float(_get(cfg, "c")), alpha=_maybe_float(_get(cfg, "alpha")),
        seed=c["seed"], noise_mode=c["noise_mode"], integrator=c["integrator"],
        f_atom=float(_get(cfg, "f_atom", 0.5)), workers=c["workers"])
    rows = run_sweep(sweep_cfg)
    write_csv(outdir / "sweep.csv", SWEEP_HEADER,
              [(r.F, r.N, r.M, r.K, r.qfi_mean, r.qfi_sem, r.deltaB, r.deltaB_err,
                r.shotnoise_ref, r.heisenberg_ref, r.twobody_ref, r.excluded)
               for r in rows])
    write_manifest(outdir, "sweep", cfg, __version__,
                   {fmt(r.F): r.excluded for r in rows})
    if any(not r.valid for r in rows):
        raise ValidityFailure("one or more sweep rows invalid (exclusions above 1%)")
    return EXIT_OK


def cmd_optimize_k(cfg: dict, outdir: Path) -> int:
    c = _common(cfg)
    F = float(_get(cfg, "F", required=True))
    M = float(_get(cfg, "M", required=True))
    sweep_cfg = SweepConfig(
        F_values=(F,), n_trajectories=int(_get(cfg, "n_trajectories", 100)),
        dB=float(_get(cfg, "dB", 1e-6)), tau=c["tau"], gamma=c["gamma"],
        B_true=float(_get(cfg, "B", 0.1)), n_steps=c["n_steps"],
        mode="fixed-mk", M=M, K=0.0, seed=c["seed"], noise_mode=c["noise_mode"],
        integrator=c["integrator"], workers=c["workers"])
    grid = (float(_get(cfg, "k_grid_min", 1e-6)),
            float(_get(cfg, "k_grid_max", 1.0)),
            int(_get(cfg, "k_grid_points", 13)))
    res = optimize_K(F, M, sweep_cfg, k_grid=grid,
                     refine_iters=int(_get(cfg, "refine_iters", 8)))
    payload = {
        "k_star": res.k_star, "qfi_at_k_star": res.qfi_at_k_star,
        "warned": res.warned,
        "grid": [{"K": float(k), "qfi_mean": float(q), "qfi_sem": float(s)}
                 for k, q, s in zip(res.grid_k, res.grid_qfi, res.grid_sem)],
    }
    (outdir / "optimize_k.json").write_text(json.dumps(payload, indent=2) + "\n")
    write_manifest(outdir, "optimize-k", cfg, __version__)
    return EXIT_OK


def cmd_fit(cfg: dict, outdir: Path) -> int:
    src = _get(cfg, "input", required=True)
    path = Path(src)
    if not path.is_file():
        raise ConfigError(f"input CSV not found: {path}")
    lines = path.read_text().strip().splitlines()
    header = lines[0].split(",")
    try:
        fi, di = header.index("F"), header.index("deltaB")
        ei = header.index("deltaB_err")
    except ValueError as e:
        raise ConfigError(f"input lacks F/deltaB columns: {e}") from e
    pts = []
    for line in lines[1:]:
        parts = line.split(",")
        f, d, err = float(parts[fi]), float(parts[di]), float(parts[ei])
        if np.isfinite(d):
            pts.append((f, d, err))
    fit = powerlaw_fit(pts)
    (outdir / "fit.json").write_text(json.dumps(
        {"slope": fit.slope, "intercept": fit.intercept,
         "residual_rms": fit.residual_rms}, indent=2) + "\n")
    write_manifest(outdir, "fit", cfg, __version__)
    return EXIT_OK


def _maybe_float(v):
    return None if v is None else float(v)


COMMANDS = {
    "trajectory": cmd_trajectory,
    "qfi": cmd_qfi,
    "sweep": cmd_sweep,
    "optimize-k": cmd_optimize_k,
    "fit": cmd_fit,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="dpmag",
        description="Double-pass atomic magnetometer simulator and QFI toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="flat key=value file or a manifest.json")
    parser.add_argument("--out", help="output directory (default $DPMAG_OUTPUT_DIR or .)")
    args, rest = parser.parse_known_args(argv)
    try:
        cfg = load_config(args.config) if args.config else {}
        cfg.update(parse_overrides(rest))
        outdir = output_dir(args.out)
        return COMMANDS[args.command](cfg, outdir)
    except (ConfigError, ExperimentError, FilterError, FisherError, SpinError,
            TrajectoryError, ValueError) as e:
        print(f"dpmag: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ValidityFailure as e:
        print(f"dpmag: numerical validity failure: {e}", file=sys.stderr)
        return EXIT_VALIDITY


if __name__ == "__main__":
    sys.exit(main())
