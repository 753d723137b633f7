"""Measurement-record generation and filtering along shared records.

The photocurrent increment is dz = 2 sqrt(M) <fz> dt + dW with dW a Wiener
increment; the filter recovers its innovations as dW = dz - 2 sqrt(M) <fz> dt.
Generation recomputes dW from dz through the exact same expression, so
filtering a record at the generating B reproduces the reference trajectory
bit for bit.

Two integrators are available:

* "sse" (default for pure initial states): the filter preserves purity for
  this efficiency-one measurement, so the conditional state is evolved as a
  state vector via a split step whose substeps are all exact maps:

    1. conditioning by the diagonal measurement channel,
       psi_m *= exp( sqrt(M) m dz - M m^2 dt ),  then renormalize;
    2. a rotation about y, psi <- exp(i phi fy) psi, with
       phi = sqrt(K) dW + (gamma B + 2 sqrt(M K) <fz>) dt.

  The <fz>-dependent part of the angle is the fictitious field fed back by
  the second pass; together with the Ito cross product of the two substeps
  it reproduces the filter's sqrt(KM) term (checked against the dense form
  in the tests).  Every substep is norm/positivity safe, which is what makes
  F ~ 200 runs possible at dt = tau/1000 where the explicit scheme diverges.

* "euler": the literal normalized Euler-Maruyama step on the density matrix
  (quantum-filter module).  Stable only while (2F)^2 max(M,K) dt <~ 4, so it
  is the small-F reference路 and the only route for mixed initial states.

Noise sharing for the finite-difference triple:

* "record": the B+-dB filters consume the record dz generated at the true B
  (shared observable; each filter forms its own innovations);
* "wiener": all three systems are driven by the same Wiener increments dW
  plugged into the filter equation (each with its own dz).
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass, field

import numpy as np

from .filtering import FilterError, FilterParams, euler_step
from .spin import DensityMatrix, SpinOperators, min_eigenvalue, purity

NOISE_MODES = ("record", "wiener")
INTEGRATORS = ("auto", "sse", "euler")
PURE_STATE_TOL = 1e-9
EULER_AUDIT_STRIDE = 10
POSITIVITY_FLAG_TOL = 1e-6


class TrajectoryError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseSource:
    """Counter-based RNG stream: (seed, stream_index) fixes the increments
    regardless of execution order or thread assignment."""

    seed: int
    stream_index: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_index,))
        return np.random.Generator(np.random.Philox(ss))

    def gaussian_increments(self, n: int, dt: float) -> np.ndarray:
        """n Wiener increments ~ Normal(0, dt)."""
        return self.generator().normal(0.0, np.sqrt(dt), n)

    def stream(self, stream_index: int) -> "NoiseSource":
        return NoiseSource(self.seed, stream_index)


@dataclass
class MeasurementRecord:
    """Photocurrent increments plus the metadata that produced them."""

    dz: np.ndarray
    dt: float
    params_used: FilterParams
    seed: int
    stream_index: int

    def __post_init__(self):
        if not np.all(np.isfinite(self.dz)):
            raise TrajectoryError("record contains non-finite increments")


@dataclass
class TrajectoryOutput:
    """Expectation time series, innovations, and (optionally) state snapshots."""

    times: np.ndarray
    fx: np.ndarray
    fy: np.ndarray
    fz: np.ndarray
    var_fz: np.ndarray
    purity: np.ndarray
    innovations: np.ndarray
    final_state: DensityMatrix
    valid: bool
    min_eig: float = None          # worst audited eigenvalue (euler route only)
    states: list = None            # [(step_index, DensityMatrix), ...] at the stride


@dataclass
class CoupledTriple:
    """Trajectories at B and B +- dB driven by one noise realization."""

    ref: TrajectoryOutput
    plus: TrajectoryOutput
    minus: TrajectoryOutput
    dB: float
    noise_mode: str

    @property
    def valid(self) -> bool:
        return self.ref.valid and self.plus.valid and self.minus.valid


# ---------------------------------------------------------------------------
# pure-state fast path

class _PureStateTables:
    """Per-operator precomputations for the split-step integrator."""

    def __init__(self, ops: SpinOperators):
        self.z = ops.z_diag.copy()
        self.z2 = self.z * self.z
        self.x_band = np.real(np.diagonal(ops.fx, 1)).copy()   # fx superdiagonal
        self.y_band = np.asarray(np.diagonal(ops.fy, 1)).copy()  # fy superdiagonal
        wy, Vy = np.linalg.eigh(ops.fy)
        self.wy = wy
        self.Vy = np.ascontiguousarray(Vy)
        self.Vyh = np.ascontiguousarray(Vy.conj().T)
        self.dim = ops.dim


_TABLE_CACHE: "weakref.WeakKeyDictionary[SpinOperators, _PureStateTables]" = weakref.WeakKeyDictionary()


def _tables(ops: SpinOperators) -> _PureStateTables:
    tab = _TABLE_CACHE.get(ops)
    if tab is None:
        tab = _PureStateTables(ops)
        _TABLE_CACHE[ops] = tab
    return tab


def _vector_expectations(tab: _PureStateTables, psi: np.ndarray):
    """(<fx>, <fy>, <fz>, Var fz) for a normalized state vector."""
    p2 = psi.real**2 + psi.imag**2
    ez = float(tab.z @ p2)
    vz = float(tab.z2 @ p2) - ez * ez
    cross = psi[:-1].conj() * psi[1:]
    ex = 2.0 * float(np.real(tab.x_band @ cross))
    ey = 2.0 * float(np.real(tab.y_band @ cross))
    return ex, ey, ez, vz


def _pure_initial_vector(rho0: DensityMatrix) -> np.ndarray:
    """Top eigenvector of a (numerically) pure density matrix."""
    pur = purity(rho0)
    if abs(pur - 1.0) > PURE_STATE_TOL:
        raise TrajectoryError(
            f"pure-state integrator needs a pure initial state (purity={pur}); "
            "use integrator='euler' for mixed states")
    vals, vecs = np.linalg.eigh(rho0.rho)
    return np.ascontiguousarray(vecs[:, -1].astype(complex))


def _resolve_integrator(integrator: str, rho0: DensityMatrix) -> str:
    if integrator not in INTEGRATORS:
        raise TrajectoryError(f"unknown integrator {integrator!r}")
    if integrator == "auto":
        return "sse" if abs(purity(rho0) - 1.0) <= PURE_STATE_TOL else "euler"
    return integrator


def _run_sse_single(tab, psi0, p: FilterParams, dz_of_step, snapshot_stride):
    """Shared inner loop: dz_of_step(k, pred) must return the record increment."""
    n, dt = p.n_steps, p.dt
    sM, sK, cKM = np.sqrt(p.M), np.sqrt(p.K), np.sqrt(p.K * p.M)
    gB = p.gamma * p.B
    kr_exp = np.empty(tab.dim)
    psi = psi0.copy()
    ex = np.empty(n + 1); ey = np.empty(n + 1); ez = np.empty(n + 1)
    vz = np.empty(n + 1); pur = np.empty(n + 1)
    dW_used = np.empty(n)
    dz_out = np.empty(n)
    states = [] if snapshot_stride else None
    for k in range(n):
        ex[k], ey[k], ez[k], vz[k] = _vector_expectations(tab, psi)
        pur[k] = float(np.vdot(psi, psi).real) ** 2
        pred = 2.0 * sM * ez[k] * dt
        dz = dz_of_step(k, pred)
        dz_out[k] = dz
        dW = dz - pred
        dW_used[k] = dW
        # exact conditioning by the diagonal channel
        np.multiply(tab.z, sM * dz, out=kr_exp)
        kr_exp -= (p.M * dt) * tab.z2
        kr_exp -= kr_exp.max()
        psi = np.exp(kr_exp) * psi
        psi /= np.linalg.norm(psi)
        # exact rotation: Larmor + feedback + K channel
        phi = sK * dW + (gB + 2.0 * cKM * ez[k]) * dt
        psi = tab.Vy @ (np.exp(1j * phi * tab.wy) * (tab.Vyh @ psi))
        if snapshot_stride and (k + 1) % snapshot_stride == 0:
            states.append((k + 1, DensityMatrix(np.outer(psi, psi.conj()), (k + 1) * dt)))
    ex[n], ey[n], ez[n], vz[n] = _vector_expectations(tab, psi)
    pur[n] = float(np.vdot(psi, psi).real) ** 2
    valid = bool(np.all(np.isfinite(ez)) and np.all(np.isfinite(pur)))
    out = TrajectoryOutput(
        times=np.arange(n + 1) * dt, fx=ex, fy=ey, fz=ez, var_fz=vz, purity=pur,
        innovations=dW_used, final_state=DensityMatrix(np.outer(psi, psi.conj()), p.tau),
        valid=valid, states=states)
    return out, dz_out


def _run_euler_single(rho0, ops, p: FilterParams, dz_of_step, snapshot_stride,
                      audit_stride=EULER_AUDIT_STRIDE):
    n, dt = p.n_steps, p.dt
    sM = np.sqrt(p.M)
    fx, fyop, fz = ops.fx, ops.fy, ops.fz
    state = rho0.copy()
    ex = np.empty(n + 1); ey = np.empty(n + 1); ez = np.empty(n + 1)
    vz = np.empty(n + 1); pur = np.empty(n + 1)
    dW_used = np.empty(n)
    dz_out = np.empty(n)
    states = [] if snapshot_stride else None
    valid = True
    worst = np.inf

    def expect(rho):
        e_x = np.real(np.sum(fx.T * rho))
        e_y = np.real(np.sum(fyop.T * rho))
        z = ops.z_diag
        d = np.real(np.diagonal(rho))
        e_z = float(z @ d)
        v_z = float((z * z) @ d) - e_z**2
        return float(e_x), float(e_y), e_z, v_z

    for k in range(n):
        ex[k], ey[k], ez[k], vz[k] = expect(state.rho)
        pur[k] = purity(state)
        pred = 2.0 * sM * ez[k] * dt
        dz = dz_of_step(k, pred)
        dz_out[k] = dz
        dW = dz - pred
        dW_used[k] = dW
        state = euler_step(state, ops, p, dW, check_positivity=False)
        if (k + 1) % audit_stride == 0 or k == n - 1:
            lo = min_eigenvalue(state)
            worst = min(worst, lo)
            if lo < -POSITIVITY_FLAG_TOL:
                valid = False
        if snapshot_stride and (k + 1) % snapshot_stride == 0:
            states.append((k + 1, state.copy()))
    ex[n], ey[n], ez[n], vz[n] = expect(state.rho)
    pur[n] = purity(state)
    valid = valid and bool(np.all(np.isfinite(ez)))
    out = TrajectoryOutput(
        times=np.arange(n + 1) * dt, fx=ex, fy=ey, fz=ez, var_fz=vz, purity=pur,
        innovations=dW_used, final_state=state, valid=valid,
        min_eig=None if worst is np.inf else worst, states=states)
    return out, dz_out


# ---------------------------------------------------------------------------
# public operations

def _increments_for(noise: NoiseSource, p: FilterParams, increments):
    if increments is None:
        return noise.gaussian_increments(p.n_steps, p.dt)
    dWs = np.asarray(increments, dtype=float)
    if dWs.shape != (p.n_steps,):
        raise TrajectoryError(
            f"increments must have shape ({p.n_steps},), got {dWs.shape}")
    return dWs


def generate_record(rho0: DensityMatrix, ops: SpinOperators, p: FilterParams,
                    noise: NoiseSource, snapshot_stride: int = None,
                    integrator: str = "auto", increments=None):
    """Simulate the reference trajectory at p.B and emit its record.

    Each step draws dW ~ Normal(0, dt), forms dz = 2 sqrt(M) <fz> dt + dW and
    advances with the innovations recovered from dz, so the arithmetic matches
    filter_along_record exactly.  An explicit `increments` array overrides the
    noise draws (used for refinement studies on a fixed Wiener path).
    """
    route = _resolve_integrator(integrator, rho0)
    dWs = _increments_for(noise, p, increments)

    def dz_of_step(k, pred):
        return pred + dWs[k]

    if route == "sse":
        tab = _tables(ops)
        out, dz = _run_sse_single(tab, _pure_initial_vector(rho0), p, dz_of_step,
                                  snapshot_stride)
    else:
        out, dz = _run_euler_single(rho0, ops, p, dz_of_step, snapshot_stride)
    rec = MeasurementRecord(dz=dz, dt=p.dt, params_used=p,
                            seed=noise.seed, stream_index=noise.stream_index)
    return rec, out


def filter_along_record(rho0: DensityMatrix, ops: SpinOperators, p: FilterParams,
                        record: MeasurementRecord, snapshot_stride: int = None,
                        integrator: str = "auto") -> TrajectoryOutput:
    """Run the filter (possibly at a different B) against an existing record."""
    if len(record.dz) != p.n_steps:
        raise TrajectoryError(
            f"record length {len(record.dz)} != n_steps {p.n_steps}")
    if abs(record.dt - p.dt) > 1e-15:
        raise TrajectoryError("record dt differs from params dt")
    route = _resolve_integrator(integrator, rho0)
    dz_arr = record.dz

    def dz_of_step(k, pred):
        return dz_arr[k]

    if route == "sse":
        out, _ = _run_sse_single(_tables(ops), _pure_initial_vector(rho0), p,
                                 dz_of_step, snapshot_stride)
    else:
        out, _ = _run_euler_single(rho0, ops, p, dz_of_step, snapshot_stride)
    return out


def coupled_triple(rho0: DensityMatrix, ops: SpinOperators, p: FilterParams,
                   dB: float, noise: NoiseSource, noise_mode: str = "record",
                   snapshot_stride: int = None, integrator: str = "auto",
                   increments=None) -> CoupledTriple:
    """Evolve the states at B and B +- dB under one noise realization.

    In "record" mode the true-B system generates dz and the +-dB filters
    consume it; in "wiener" mode all three are driven by the same dW.  The
    three columns advance in lockstep (batched matrix products), and the
    returned reference trajectory is the true-B column itself.
    """
    if dB <= 0:
        raise TrajectoryError("dB must be positive")
    if dB > 0.5 * max(abs(p.B), 1.0):
        raise TrajectoryError("dB must be small against max(|B|, 1)")
    if noise_mode not in NOISE_MODES:
        raise TrajectoryError(f"unknown noise_mode {noise_mode!r}")
    route = _resolve_integrator(integrator, rho0)
    if route == "euler":
        return _coupled_triple_euler(rho0, ops, p, dB, noise, noise_mode,
                                     snapshot_stride, increments)

    tab = _tables(ops)
    psi0 = _pure_initial_vector(rho0)
    n, dt = p.n_steps, p.dt
    sM, sK, cKM = np.sqrt(p.M), np.sqrt(p.K), np.sqrt(p.K * p.M)
    Bs = np.array([p.B, p.B + dB, p.B - dB])
    dWs = _increments_for(noise, p, increments)
    Psi = np.ascontiguousarray(np.stack([psi0, psi0, psi0], axis=1))
    z, z2 = tab.z, tab.z2

    ex = np.empty((n + 1, 3)); ey = np.empty((n + 1, 3)); ez = np.empty((n + 1, 3))
    vz = np.empty((n + 1, 3)); pur = np.empty((n + 1, 3))
    dW_used = np.empty((n, 3))
    states = [[], [], []] if snapshot_stride else None

    for k in range(n):
        p2 = Psi.real**2 + Psi.imag**2
        ez_c = z @ p2
        vz_c = z2 @ p2 - ez_c**2
        cross = Psi[:-1].conj() * Psi[1:]
        ex[k] = 2.0 * np.real(tab.x_band @ cross)
        ey[k] = 2.0 * np.real(tab.y_band @ cross)
        ez[k] = ez_c
        vz[k] = vz_c
        pur[k] = p2.sum(axis=0) ** 2
        pred = 2.0 * sM * ez_c * dt
        if noise_mode == "record":
            dz = np.full(3, pred[0] + dWs[k])
        else:
            dz = pred + dWs[k]
        dW = dz - pred
        dW_used[k] = dW
        a = (sM * z)[:, None] * dz[None, :]
        a -= (p.M * dt) * z2[:, None]
        a -= a.max(axis=0, keepdims=True)
        Psi = np.exp(a) * Psi
        Psi /= np.linalg.norm(Psi, axis=0, keepdims=True)
        phi = sK * dW + (p.gamma * Bs + 2.0 * cKM * ez_c) * dt
        Y = tab.Vyh @ Psi
        Y *= np.exp(1j * tab.wy[:, None] * phi[None, :])
        Psi = tab.Vy @ Y
        if snapshot_stride and (k + 1) % snapshot_stride == 0:
            for j in range(3):
                states[j].append((k + 1, DensityMatrix(
                    np.outer(Psi[:, j], Psi[:, j].conj()), (k + 1) * dt)))

    p2 = Psi.real**2 + Psi.imag**2
    ez[n] = z @ p2
    vz[n] = z2 @ p2 - ez[n]**2
    cross = Psi[:-1].conj() * Psi[1:]
    ex[n] = 2.0 * np.real(tab.x_band @ cross)
    ey[n] = 2.0 * np.real(tab.y_band @ cross)
    pur[n] = p2.sum(axis=0) ** 2

    times = np.arange(n + 1) * dt
    outs = []
    for j in range(3):
        fin = DensityMatrix(np.outer(Psi[:, j], Psi[:, j].conj()), p.tau)
        valid = bool(np.all(np.isfinite(ez[:, j])) and np.all(np.isfinite(pur[:, j])))
        outs.append(TrajectoryOutput(
            times=times, fx=ex[:, j].copy(), fy=ey[:, j].copy(), fz=ez[:, j].copy(),
            var_fz=vz[:, j].copy(), purity=pur[:, j].copy(),
            innovations=dW_used[:, j].copy(), final_state=fin, valid=valid,
            states=states[j] if snapshot_stride else None))
    return CoupledTriple(ref=outs[0], plus=outs[1], minus=outs[2], dB=dB,
                         noise_mode=noise_mode)


def _coupled_triple_euler(rho0, ops, p, dB, noise, noise_mode, snapshot_stride,
                          increments=None):
    """Density-matrix route for the triple; used for mixed states and checks."""
    rec, ref = generate_record(rho0, ops, p, noise, snapshot_stride, "euler",
                               increments)
    if noise_mode == "record":
        plus = filter_along_record(rho0, ops, p.with_B(p.B + dB), rec,
                                   snapshot_stride, "euler")
        minus = filter_along_record(rho0, ops, p.with_B(p.B - dB), rec,
                                    snapshot_stride, "euler")
    else:
        dWs = _increments_for(noise, p, increments)

        def dz_of(k, pred):
            return pred + dWs[k]

        plus, _ = _run_euler_single(rho0, ops, p.with_B(p.B + dB), dz_of,
                                    snapshot_stride)
        minus, _ = _run_euler_single(rho0, ops, p.with_B(p.B - dB), dz_of,
                                     snapshot_stride)
    return CoupledTriple(ref=ref, plus=plus, minus=minus, dB=dB,
                         noise_mode=noise_mode)
