"""Ensemble studies: trajectory comparison, QFI points, F sweeps with
saturation detection, K optimization, and the M = K = c / (tau F^alpha)
scaling law with its log-log power-law fit.

All ensembles use counter-based noise streams, so a (seed, stream) pair
pins every trajectory regardless of worker scheduling; stream indices are
shared across F and K points (common random numbers), which smooths sweep
curves and K profiles without biasing any single point.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .fisher import conditional_qfi, ensemble_qfi, reference_bounds, sld_finite_difference
from .filtering import FilterParams
from .spin import build_spin_operators, coherent_state_x
from .trajectories import CoupledTriple, NoiseSource, coupled_triple

MAX_EXCLUSION_RATE = 0.01
PURITY_FLAG_THRESHOLD = 0.999
DEFAULT_K_GRID = (1e-6, 1.0, 13)


class ExperimentError(ValueError):
    pass


@dataclass(frozen=True)
class SweepConfig:
    """One sweep or QFI-point configuration.

    mode "fixed-mk" uses the given M, K at every F; mode "scaling-law" sets
    M = K = c / (tau F^alpha) per point.
    """

    F_values: tuple
    n_trajectories: int = 100
    dB: float = 1e-6
    tau: float = 1.0
    gamma: float = 1.0
    B_true: float = 0.1
    n_steps: int = 1000
    dt: float = None
    mode: str = "fixed-mk"
    M: float = None
    K: float = None
    c: float = None
    alpha: float = None
    seed: int = 42
    noise_mode: str = "record"
    integrator: str = "auto"
    f_atom: float = 0.5
    workers: int = 1

    def __post_init__(self):
        fv = tuple(float(f) for f in self.F_values)
        if any(b <= a for a, b in zip(fv, fv[1:])):
            raise ExperimentError("F_values must be strictly increasing")
        if self.n_trajectories < 2:
            raise ExperimentError("n_trajectories must be at least 2")
        if self.mode not in ("fixed-mk", "scaling-law"):
            raise ExperimentError(f"unknown mode {self.mode!r}")
        if self.mode == "fixed-mk" and (self.M is None or self.K is None):
            raise ExperimentError("fixed-mk mode requires M and K")
        if self.mode == "scaling-law" and (self.c is None or self.alpha is None):
            raise ExperimentError("scaling-law mode requires c and alpha")
        object.__setattr__(self, "F_values", fv)

    def rates_for(self, F: float):
        if self.mode == "fixed-mk":
            return float(self.M), float(self.K)
        return scaling_params(F, self.c, self.alpha, self.tau)

    def params_for(self, F: float) -> FilterParams:
        M, K = self.rates_for(F)
        return FilterParams(B=self.B_true, M=M, K=K, gamma=self.gamma,
                            tau=self.tau, dt=self.dt,
                            n_steps=None if self.dt is not None else self.n_steps)


@dataclass
class QfiSample:
    stream_index: int
    qfi: float
    purity: float
    valid: bool

    @property
    def purity_flagged(self) -> bool:
        return self.purity < PURITY_FLAG_THRESHOLD


@dataclass
class SweepRow:
    F: float
    N: float
    M: float
    K: float
    qfi_mean: float
    qfi_sem: float
    deltaB: float
    deltaB_err: float
    shotnoise_ref: float
    heisenberg_ref: float
    twobody_ref: float
    excluded: int
    valid: bool


@dataclass
class ScalingFit:
    """OLS fit of log10(deltaB) against log10(F)."""

    slope: float
    intercept: float
    residual_rms: float
    points: list  # (F, deltaB, err) rows that entered the fit


@dataclass
class KOptResult:
    k_star: float
    qfi_at_k_star: float
    warned: bool
    grid_k: np.ndarray
    grid_qfi: np.ndarray
    grid_sem: np.ndarray


def scaling_params(F: float, c: float, alpha: float, tau: float):
    """M = K = c / (tau F^alpha)."""
    if F <= 0 or c <= 0 or tau <= 0:
        raise ExperimentError("F, c and tau must be positive")
    mk = c / (tau * F**alpha)
    return mk, mk


def triple_qfi_sample(ops, rho0, p: FilterParams, dB: float, noise: NoiseSource,
                      noise_mode: str = "record", integrator: str = "auto") -> QfiSample:
    """One conditional QFI sample from a coupled triple."""
    trip = coupled_triple(rho0, ops, p, dB, noise, noise_mode=noise_mode,
                          integrator=integrator)
    if not trip.valid:
        return QfiSample(noise.stream_index, float("nan"),
                         float(trip.ref.purity[-1]), False)
    L = sld_finite_difference(trip.plus.final_state, trip.minus.final_state, dB)
    q = conditional_qfi(L, trip.ref.final_state)
    return QfiSample(noise.stream_index, q, float(trip.ref.purity[-1]), True)


def qfi_time_series(trip: CoupledTriple):
    """Conditional QFI at every stored snapshot (diagnostic stride)."""
    if not trip.ref.states:
        raise ExperimentError("triple was run without snapshots")
    out = []
    for (k, ref), (_, plus), (_, minus) in zip(trip.ref.states, trip.plus.states,
                                               trip.minus.states):
        L = sld_finite_difference(plus, minus, trip.dB)
        out.append((ref.time, conditional_qfi(L, ref)))
    return out


# -- worker plumbing ---------------------------------------------------------

_WORKER_CACHE: dict = {}


def _point_key(F, p: FilterParams, dB, seed, noise_mode, integrator):
    return (F, p.B, p.M, p.K, p.gamma, p.tau, p.n_steps, dB, seed, noise_mode,
            integrator)


def _run_streams(args):
    (F, pdict, dB, seed, streams, noise_mode, integrator) = args
    cached = _WORKER_CACHE.get(F)
    if cached is None:
        ops = build_spin_operators(F)
        rho0 = coherent_state_x(ops)
        _WORKER_CACHE[F] = (ops, rho0)
    else:
        ops, rho0 = cached
    p = FilterParams(**pdict)
    out = []
    for s in streams:
        smp = triple_qfi_sample(ops, rho0, p, dB, NoiseSource(seed, s),
                                noise_mode, integrator)
        out.append((smp.stream_index, smp.qfi, smp.purity, smp.valid))
    return out


def qfi_point(F: float, p: FilterParams, dB: float, seed: int, n_trajectories: int,
              noise_mode: str = "record", integrator: str = "auto",
              workers: int = 1, ops=None, rho0=None):
    """Ensemble of coupled triples at one (F, M, K) point.

    Returns (QfiEstimate, list[QfiSample]) with samples ordered by stream
    index; invalid triples are excluded from the estimate and counted.
    """
    pdict = dict(B=p.B, M=p.M, K=p.K, gamma=p.gamma, tau=p.tau, n_steps=p.n_steps)
    streams = list(range(n_trajectories))
    if workers > 1 and n_trajectories >= 2 * workers:
        chunks = [streams[i::workers] for i in range(workers)]
        jobs = [(F, pdict, dB, seed, ch, noise_mode, integrator) for ch in chunks]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = [r for chunk in pool.map(_run_streams, jobs) for r in chunk]
    else:
        if ops is None:
            ops = build_spin_operators(F)
            rho0 = coherent_state_x(ops)
        results = []
        for s in streams:
            smp = triple_qfi_sample(ops, rho0, p, dB, NoiseSource(seed, s),
                                    noise_mode, integrator)
            results.append((smp.stream_index, smp.qfi, smp.purity, smp.valid))
    results.sort(key=lambda r: r[0])
    samples = [QfiSample(*r) for r in results]
    good = [s.qfi for s in samples if s.valid]
    n_exc = sum(1 for s in samples if not s.valid)
    if n_exc / max(len(samples), 1) > MAX_EXCLUSION_RATE:
        warnings.warn(f"exclusion rate {n_exc}/{len(samples)} exceeds "
                      f"{MAX_EXCLUSION_RATE:.0%} at F={F}", stacklevel=2)
    est = ensemble_qfi(good, n_excluded=n_exc)
    return est, samples


def run_sweep(cfg: SweepConfig):
    """One row per F: operators, coherent state, n coupled triples, ensemble.

    Rows whose exclusion rate exceeds 1% are marked invalid (NaN estimates);
    rows are emitted in F order and are reproducible bit for bit for a given
    config and master seed.
    """
    rows = []
    for F in cfg.F_values:
        p = cfg.params_for(F)
        est, _ = qfi_point(F, p, cfg.dB, cfg.seed, cfg.n_trajectories,
                           cfg.noise_mode, cfg.integrator, cfg.workers)
        sn, hl, twob = reference_bounds(F, cfg.gamma, cfg.tau)
        ok = est.exclusion_rate <= MAX_EXCLUSION_RATE
        rows.append(SweepRow(
            F=F, N=F / cfg.f_atom, M=p.M, K=p.K,
            qfi_mean=est.mean if ok else float("nan"),
            qfi_sem=est.sem if ok else float("nan"),
            deltaB=est.deltaB if ok else float("nan"),
            deltaB_err=est.deltaB_err if ok else float("nan"),
            shotnoise_ref=sn, heisenberg_ref=hl, twobody_ref=twob,
            excluded=est.n_excluded, valid=ok))
    return rows


def detect_saturation(F_values, deltaB):
    """F at the deltaB minimum when followed by two non-improving points."""
    d = np.asarray(deltaB, dtype=float)
    if d.size < 3 or not np.all(np.isfinite(d)):
        return None
    i = int(np.argmin(d))
    if i <= d.size - 3 and d[i + 1] >= d[i] and d[i + 2] >= d[i]:
        return float(F_values[i])
    return None


def powerlaw_fit(points) -> ScalingFit:
    """OLS on (log10 F, log10 deltaB); the slope is the scaling exponent.

    points holds (F, deltaB) or (F, deltaB, err) rows; errors ride along
    into the fit table but the fit itself is unweighted.
    """
    pts = []
    for row in points:
        f, d = float(row[0]), float(row[1])
        e = float(row[2]) if len(row) > 2 else float("nan")
        pts.append((f, d, e))
    if len(pts) < 3:
        raise ExperimentError("power-law fit needs at least 3 points")
    if any(d <= 0 or f <= 0 for f, d, _ in pts):
        raise ExperimentError("power-law fit needs positive F and deltaB")
    lx = np.log10([f for f, _, _ in pts])
    ly = np.log10([d for _, d, _ in pts])
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    return ScalingFit(slope=float(slope), intercept=float(intercept),
                      residual_rms=float(np.sqrt(np.mean(resid**2))),
                      points=pts)


def optimize_K(F: float, M: float, cfg: SweepConfig, k_grid=DEFAULT_K_GRID,
               refine_iters: int = 8) -> KOptResult:
    """Maximize the unconditional QFI at tau over the nonlinearity K.

    Coarse logarithmic grid followed by golden-section refinement on the log
    axis, sharing noise streams across K values.  Ties break toward smaller
    K.  If the grid profile is non-unimodal beyond its statistical noise the
    best grid point is returned with a warning flag and no refinement.
    """
    kmin, kmax, npts = k_grid
    ks = np.logspace(np.log10(kmin), np.log10(kmax), int(npts))

    def objective(K):
        p = FilterParams(B=cfg.B_true, M=M, K=float(K), gamma=cfg.gamma,
                         tau=cfg.tau, n_steps=cfg.n_steps)
        est, _ = qfi_point(F, p, cfg.dB, cfg.seed, cfg.n_trajectories,
                           cfg.noise_mode, cfg.integrator, cfg.workers)
        return est.mean, est.sem

    vals = np.array([objective(k) for k in ks])
    q, sem = vals[:, 0], vals[:, 1]
    best = int(np.argmax(q))

    if len(ks) == 1:
        return KOptResult(float(ks[0]), float(q[0]), False, ks, q, sem)

    warned = False
    for i in range(best):
        if q[i] > q[i + 1] + 2.0 * (sem[i] + sem[i + 1]):
            warned = True
    for i in range(best, len(ks) - 1):
        if q[i + 1] > q[i] + 2.0 * (sem[i] + sem[i + 1]):
            warned = True
    if warned or best in (0, len(ks) - 1):
        return KOptResult(float(ks[best]), float(q[best]), warned, ks, q, sem)

    # golden-section on log10(K) inside the bracketing grid interval
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = math.log10(ks[best - 1]), math.log10(ks[best + 1])
    cache = {math.log10(ks[best]): float(q[best])}

    def eval_log(x):
        if x not in cache:
            cache[x] = objective(10**x)[0]
        return cache[x]

    c_ = b - invphi * (b - a)
    d_ = a + invphi * (b - a)
    for _ in range(refine_iters):
        if eval_log(c_) >= eval_log(d_):   # >= ties toward smaller K
            b, d_ = d_, c_
            c_ = b - invphi * (b - a)
        else:
            a, c_ = c_, d_
            d_ = a + invphi * (b - a)
    xb = max(cache, key=lambda x: (cache[x], -x))
    return KOptResult(float(10**xb), float(cache[xb]), False, ks, q, sem)
