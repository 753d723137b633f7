"""Collective spin operators and states in the Dicke (z-eigenbasis) representation.

A sample of N atoms with spin f each is treated as a single spin of size
F = N*f living in the (2F+1)-dimensional symmetric subspace.  Basis ordering
is m = F, F-1, ..., -F (descending), so fz is diagonal with its largest
eigenvalue first and fx, fy are real/imaginary tridiagonal matrices built
from the usual ladder elements sqrt((F-m)(F+m+1)).

All matrices are dense complex numpy arrays; hbar = 1 throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DIM_CAP_DEFAULT = 4001

HERMITICITY_TOL = 1e-12
TRACE_TOL = 1e-10
POSITIVITY_TOL = 1e-8


class SpinError(ValueError):
    """Invalid spin quantum number or operator dimensions."""


class DimensionMismatchError(SpinError):
    """Operands act on different Hilbert spaces."""


@dataclass(frozen=True)
class SpinQuantum:
    """Total collective spin F (nonnegative half-integer)."""

    F: float

    def __post_init__(self):
        two_f = 2 * self.F
        if two_f < 0 or abs(two_f - round(two_f)) > 1e-12:
            raise SpinError(f"F must be a nonnegative half-integer, got {self.F}")

    @property
    def dim(self) -> int:
        return int(round(2 * self.F)) + 1


@dataclass(frozen=True, eq=False)
class SpinOperators:
    """Dense fx, fy, fz for one spin size, plus the basis bookkeeping.

    Immutable after construction (arrays are write-locked) so one table can
    be shared across concurrently running trajectories.
    """

    F: float
    fx: np.ndarray
    fy: np.ndarray
    fz: np.ndarray

    @property
    def dim(self) -> int:
        return self.fz.shape[0]

    @property
    def z_diag(self) -> np.ndarray:
        """Eigenvalues of fz in basis order (m = F ... -F)."""
        return np.real(np.diagonal(self.fz))


@dataclass
class DensityMatrix:
    """Conditional state rho at a given time (units of tau)."""

    rho: np.ndarray
    time: float = 0.0

    @property
    def dim(self) -> int:
        return self.rho.shape[0]

    def copy(self) -> "DensityMatrix":
        return DensityMatrix(self.rho.copy(), self.time)


def build_spin_operators(F, dim_cap: int = DIM_CAP_DEFAULT) -> SpinOperators:
    """Construct fx, fy, fz for total spin F in the descending-m z basis.

    fz = diag(F, F-1, ..., -F); fx, fy are tridiagonal with
    <m+1| f+ |m> = sqrt((F-m)(F+m+1)).
    """
    sq = F if isinstance(F, SpinQuantum) else SpinQuantum(float(F))
    dim = sq.dim
    if dim > dim_cap:
        raise SpinError(f"dim {dim} exceeds cap {dim_cap} (F={sq.F})")
    m = sq.F - np.arange(dim)  # m value of each basis state
    # f+ connects column j (m_j) to row j-1 (m_j + 1)
    c = np.sqrt((sq.F - m[1:]) * (sq.F + m[1:] + 1.0))
    fplus = np.zeros((dim, dim), dtype=complex)
    fplus[np.arange(dim - 1), np.arange(1, dim)] = c
    fx = (fplus + fplus.conj().T) / 2.0
    fy = (fplus - fplus.conj().T) / 2.0j
    fz = np.diag(m.astype(complex))
    for a in (fx, fy, fz):
        a.flags.writeable = False
    return SpinOperators(F=sq.F, fx=fx, fy=fy, fz=fz)


def coherent_state_x(F, dim_cap: int = DIM_CAP_DEFAULT) -> DensityMatrix:
    """x-polarized spin coherent state as a density matrix.

    Built from the top eigenvector of fx (exact at any F): <fx> = F,
    <fy> = <fz> = 0 and Var(fz) = F/2.
    """
    ops = F if isinstance(F, SpinOperators) else build_spin_operators(F, dim_cap)
    _, vecs = np.linalg.eigh(ops.fx)
    psi = vecs[:, -1]
    return DensityMatrix(np.outer(psi, psi.conj()), time=0.0)


def coherent_state_x_vector(ops: SpinOperators) -> np.ndarray:
    """State-vector form of coherent_state_x (used by the pure-state engine)."""
    _, vecs = np.linalg.eigh(ops.fx)
    return np.ascontiguousarray(vecs[:, -1].astype(complex))


def cat_state_y(ops: SpinOperators) -> DensityMatrix:
    """Equal superposition of the extremal fy eigenstates, (|F>_y + |-F>_y)/sqrt(2)."""
    vals, vecs = np.linalg.eigh(ops.fy)
    psi = (vecs[:, 0] + vecs[:, -1]) / np.sqrt(2.0)
    return DensityMatrix(np.outer(psi, psi.conj()), time=0.0)


def _as_matrix(x) -> np.ndarray:
    return x.rho if isinstance(x, DensityMatrix) else np.asarray(x)


def _check_conformable(X: np.ndarray, rho: np.ndarray):
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise DimensionMismatchError(f"operator must be square, got {X.shape}")
    if X.shape != rho.shape:
        raise DimensionMismatchError(f"shape mismatch: {X.shape} vs {rho.shape}")


def expectation(X, rho) -> complex:
    """tr(X rho).  Real to within 1e-10 when X is Hermitian."""
    Xm, rm = _as_matrix(X), _as_matrix(rho)
    _check_conformable(Xm, rm)
    # trace of a product without forming it
    return complex(np.sum(Xm.T * rm))


def variance(X, rho) -> float:
    """tr(X^2 rho) - tr(X rho)^2 for Hermitian X."""
    Xm, rm = _as_matrix(X), _as_matrix(rho)
    _check_conformable(Xm, rm)
    if not is_hermitian(Xm, tol=1e-10):
        raise SpinError("variance requires a Hermitian operator")
    ex = np.real(expectation(Xm, rm))
    ex2 = np.real(expectation(Xm @ Xm, rm))
    return float(ex2 - ex * ex)


def is_hermitian(a: np.ndarray, tol: float = 1e-10) -> bool:
    return bool(np.max(np.abs(a - a.conj().T)) <= tol)


def purity(rho) -> float:
    """tr(rho^2), computed as the squared Frobenius norm of a Hermitian rho."""
    rm = _as_matrix(rho)
    return float(np.sum(rm.real**2 + rm.imag**2))


def min_eigenvalue(rho) -> float:
    return float(np.linalg.eigvalsh(_as_matrix(rho))[0])


def check_density_matrix(rho, herm_tol: float = 1e-10, trace_tol: float = TRACE_TOL,
                         positivity_tol: float = POSITIVITY_TOL) -> None:
    """Raise if rho violates the Hermiticity/trace/positivity invariants."""
    rm = _as_matrix(rho)
    if not is_hermitian(rm, herm_tol):
        raise SpinError("density matrix is not Hermitian within tolerance")
    tr = np.trace(rm)
    if abs(tr - 1.0) > trace_tol:
        raise SpinError(f"trace {tr} deviates from 1 beyond {trace_tol}")
    lo = min_eigenvalue(rm)
    if lo < -positivity_tol:
        raise SpinError(f"minimum eigenvalue {lo} below -{positivity_tol}")
