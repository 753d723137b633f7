"""Right-hand side of the conditional stochastic master equation and one
normalized Euler-Maruyama step.

The filter for continuous homodyne observation of fz during Larmor
precession, with a second-pass nonlinearity of rate K, reads

    d rho = i gamma B [fy, rho] dt + i sqrt(K M) [fy, {fz, rho}] dt
            + M D[fz] rho dt + K D[fy] rho dt
            + ( sqrt(M) Meas[fz] rho + i sqrt(K) [fy, rho] ) dW

with D[X]r = X r X+ - (X+X r + r X+X)/2 and
Meas[X]r = X r + r X - tr[(X + X+) r] r.  The cross term carries an explicit
factor i: [fy, {fz, rho}] is anti-Hermitian, so the i is required for the
drift to be Hermitian, and the same term follows from the Ito propagator of
the double-passed interaction (see tests for the cross-check).

Note the Zeeman Hamiltonian H(B) = -gamma B fy enters only through
-i[H, rho] = +i gamma B [fy, rho].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spin import (
    DensityMatrix,
    DimensionMismatchError,
    SpinOperators,
    _as_matrix,
    _check_conformable,
    min_eigenvalue,
)

POSITIVITY_FLAG_TOL = 1e-6


class FilterError(ValueError):
    """Invalid filter parameters or operands."""


class PositivityError(RuntimeError):
    """A step produced min eigenvalue below -1e-6: dt is too coarse.

    The state is flagged, never repaired; repairing would bias the Fisher
    information downstream.
    """

    def __init__(self, min_eig: float, time: float):
        super().__init__(f"min eigenvalue {min_eig:.3e} at t={time:.6f}; reduce dt")
        self.min_eig = min_eig
        self.time = time


@dataclass(frozen=True)
class FilterParams:
    """Physical and numerical parameters of one filter run.

    B is in units of gamma; M and K are rates in 1/tau.  Exactly one of dt
    or n_steps may be given; the default grid is n_steps = 1000.
    """

    B: float
    M: float
    K: float
    gamma: float = 1.0
    tau: float = 1.0
    dt: float = None
    n_steps: int = None

    def __post_init__(self):
        if self.M < 0 or self.K < 0:
            raise FilterError("M and K must be nonnegative")
        if self.tau <= 0:
            raise FilterError("tau must be positive")
        dt, n = self.dt, self.n_steps
        if dt is None and n is None:
            n = 1000
        if dt is None:
            dt = self.tau / int(n)
        if n is None:
            n = int(round(self.tau / dt))
        n = int(n)
        if dt <= 0 or n <= 0:
            raise FilterError("dt and n_steps must be positive")
        if abs(dt * n - self.tau) > 1e-12:
            raise FilterError(f"dt*n_steps = {dt * n} != tau = {self.tau}")
        if dt > self.tau / 100:
            raise FilterError("dt must be at most tau/100")
        object.__setattr__(self, "dt", float(dt))
        object.__setattr__(self, "n_steps", n)

    def with_B(self, B: float) -> "FilterParams":
        return FilterParams(B=B, M=self.M, K=self.K, gamma=self.gamma,
                            tau=self.tau, dt=self.dt, n_steps=self.n_steps)


@dataclass
class FilterIncrement:
    """drift (coefficient of dt) and diffusion (coefficient of dW)."""

    drift: np.ndarray
    diffusion: np.ndarray


def dissipator(X, rho) -> np.ndarray:
    """D[X] rho = X rho X+ - (X+X rho + rho X+X)/2."""
    Xm, rm = _as_matrix(X), _as_matrix(rho)
    _check_conformable(Xm, rm)
    Xd = Xm.conj().T
    XdX = Xd @ Xm
    return Xm @ rm @ Xd - 0.5 * (XdX @ rm + rm @ XdX)


def measurement_superop(X, rho) -> np.ndarray:
    """Meas[X] rho = X rho + rho X - tr[(X + X+) rho] rho."""
    Xm, rm = _as_matrix(X), _as_matrix(rho)
    _check_conformable(Xm, rm)
    ex = np.sum((Xm + Xm.conj().T).T * rm)
    return Xm @ rm + rm @ Xm - ex * rm


def filter_increment(rho, ops: SpinOperators, p: FilterParams, dW: float) -> FilterIncrement:
    """Evaluate the filter drift and diffusion at the current state.

    The returned diffusion is the coefficient of dW; the caller supplies the
    actual increment.
    """
    rm = _as_matrix(rho)
    _check_conformable(ops.fy, rm)
    if p.M < 0 or p.K < 0:
        raise FilterError("negative measurement rates")
    fy, fz = ops.fy, ops.fz
    comm_y = fy @ rm - rm @ fy
    anti_z = fz @ rm + rm @ fz
    drift = (1j * p.gamma * p.B * comm_y
             + 1j * np.sqrt(p.K * p.M) * (fy @ anti_z - anti_z @ fy)
             + p.M * dissipator(fz, rm)
             + p.K * dissipator(fy, rm))
    diffusion = np.sqrt(p.M) * measurement_superop(fz, rm) + 1j * np.sqrt(p.K) * comm_y
    return FilterIncrement(drift=drift, diffusion=diffusion)


def euler_step(rho: DensityMatrix, ops: SpinOperators, p: FilterParams, dW: float,
               check_positivity: bool = True) -> DensityMatrix:
    """Normalized Euler-Maruyama step.

    rho' = rho + drift dt + diffusion dW, then explicitly Hermitized
    ((rho' + rho'+)/2) and trace-renormalized.  If the result has minimum
    eigenvalue below -1e-6 a PositivityError is raised (dt too coarse);
    the state is never projected back.
    """
    if not np.isfinite(dW):
        raise FilterError("dW must be finite")
    inc = filter_increment(rho, ops, p, dW)
    out = rho.rho + inc.drift * p.dt + inc.diffusion * dW
    out = 0.5 * (out + out.conj().T)
    out /= np.trace(out).real
    new = DensityMatrix(out, time=rho.time + p.dt)
    if check_positivity:
        lo = min_eigenvalue(out)
        if lo < -POSITIVITY_FLAG_TOL:
            raise PositivityError(lo, new.time)
    return new
