"""Liouvillian superoperators: construction, steady states, spectral
decomposition, and time propagation.

Vectorization convention (fixed artifact-wide): density matrices are
column-stacked, vec(rho) = rho.flatten(order="F"), so an operator product
A rho B maps to (B.T kron A) vec(rho). The trace functional is the row
vector vec(identity).T, which must annihilate every valid generator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .hilbert import FockOperator


class DegenerateSteadyState(RuntimeError):
    """The generator has more than one (near-)zero mode."""


def vec(mat: np.ndarray) -> np.ndarray:
    return np.asarray(mat, dtype=complex).flatten(order="F")


def unvec(v: np.ndarray, d: int) -> np.ndarray:
    return np.asarray(v, dtype=complex).reshape((d, d), order="F")


@dataclass(frozen=True)
class DensityMatrix:
    dim: int
    entries: np.ndarray

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=complex)
        if entries.shape != (self.dim, self.dim):
            raise ValueError(
                f"entries shape {entries.shape} does not match dim {self.dim}"
            )
        herm = np.max(np.abs(entries - entries.conj().T))
        if herm > 1e-10:
            raise ValueError(f"density matrix not Hermitian: defect {herm:.3e}")
        tr = np.trace(entries)
        if abs(tr - 1.0) > 1e-10:
            raise ValueError(f"density matrix trace {tr} != 1")
        min_eig = float(np.min(np.linalg.eigvalsh(0.5 * (entries + entries.conj().T))))
        if min_eig < -1e-9:
            raise ValueError(f"density matrix not positive: min eigenvalue {min_eig:.3e}")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    def expectation(self, op: FockOperator) -> complex:
        return complex(np.trace(op.entries @ self.entries))


@dataclass(frozen=True)
class Liouvillian:
    """Dense generator acting on column-stacked density matrices."""

    dim: int
    matrix: np.ndarray
    hamiltonian: FockOperator
    collapse_ops: tuple[tuple[FockOperator, float], ...]


@dataclass(frozen=True)
class LiouvillianSpectrum:
    """Eigendecomposition handle: L = sum_k lambda_k R_k L_k with L_j R_k
    biorthonormal. ``ok`` is False when the generator is too far from
    diagonalizable, in which case callers fall back to direct linear solves.
    """

    eigenvalues: np.ndarray
    right: np.ndarray  # columns R_k
    left: np.ndarray  # rows L_k
    zero_index: int
    ok: bool
    reconstruction_error: float


def build_liouvillian(
    h: FockOperator, collapse: list[tuple[FockOperator, float]]
) -> Liouvillian:
    """Generator of rho -> -i[H, rho] + sum_k rate_k D[L_k] rho."""
    d = h.dim
    ident = np.eye(d)
    mat = -1j * (np.kron(ident, h.entries) - np.kron(h.entries.T, ident))
    for op, rate in collapse:
        if op.dim != d:
            raise ValueError(
                f"collapse operator dimension {op.dim} does not match {d}"
            )
        if rate < 0:
            raise ValueError(f"collapse rate must be >= 0, got {rate}")
        l = op.entries
        ldl = l.conj().T @ l
        mat += rate * (
            np.kron(l.conj(), l)
            - 0.5 * np.kron(ident, ldl)
            - 0.5 * np.kron(ldl.T, ident)
        )
    return Liouvillian(d, mat, h, tuple((op, float(r)) for op, r in collapse))


def trace_defect(liouv: Liouvillian) -> float:
    """Norm of Tr(L[.]); zero for any trace-preserving generator."""
    tr_row = vec(np.eye(liouv.dim))
    return float(np.linalg.norm(tr_row @ liouv.matrix))


def steady_state(liouv: Liouvillian) -> DensityMatrix:
    """Unique stationary density matrix of the generator.

    Solves the bordered linear system with one row of L replaced by the
    trace constraint, then Hermitizes and clips eigenvalues below -1e-12.
    Raises DegenerateSteadyState when the zero mode is not unique.
    """
    d = liouv.dim
    eigs = np.sort(np.abs(np.linalg.eigvals(liouv.matrix)))
    if len(eigs) > 1 and eigs[1] < 1e-9:
        raise DegenerateSteadyState(
            f"second-smallest |eigenvalue| = {eigs[1]:.3e} < 1e-9"
        )
    mat = liouv.matrix.copy()
    mat[0, :] = vec(np.eye(d))
    rhs = np.zeros(d * d, dtype=complex)
    rhs[0] = 1.0
    try:
        sol = np.linalg.solve(mat, rhs)
    except np.linalg.LinAlgError:
        sol = None
    if sol is None or np.linalg.norm(liouv.matrix @ sol) > 1e-8:
        stacked = np.vstack([liouv.matrix, vec(np.eye(d))[None, :]])
        target = np.zeros(d * d + 1, dtype=complex)
        target[-1] = 1.0
        sol = np.linalg.lstsq(stacked, target, rcond=None)[0]
    rho = unvec(sol, d)
    rho = 0.5 * (rho + rho.conj().T)
    evals, evecs = np.linalg.eigh(rho)
    if np.min(evals) < -1e-12:
        evals = np.where(evals < -1e-12, 0.0, evals)
        rho = (evecs * evals) @ evecs.conj().T
    rho /= np.trace(rho).real
    residual = float(np.linalg.norm(liouv.matrix @ vec(rho)))
    if residual > 1e-9:
        raise RuntimeError(f"steady-state residual {residual:.3e} > 1e-9")
    return DensityMatrix(d, rho)


def eigendecompose(liouv: Liouvillian) -> LiouvillianSpectrum:
    """Full spectral decomposition of the generator.

    Left eigenvectors come from inverting the right-eigenvector matrix, so
    biorthonormality L_j . R_k = delta_jk holds by construction. A
    reconstruction error above 1e-8 flags the decomposition as unusable
    (near-defective generator) and callers switch to per-frequency solves.
    """
    n = liouv.matrix.shape[0]
    if n > 2000:
        raise ValueError(f"dense eigensolver budget exceeded: d^2 = {n} > 2000")
    evals, right = np.linalg.eig(liouv.matrix)
    ok = True
    err = np.inf
    try:
        left = np.linalg.inv(right)
        recon = (right * evals) @ left
        denom = np.linalg.norm(liouv.matrix)
        err = float(np.linalg.norm(recon - liouv.matrix) / (denom if denom > 0 else 1.0))
        ok = err < 1e-8
    except np.linalg.LinAlgError:
        left = np.zeros_like(right)
        ok = False
    zero_index = int(np.argmin(np.abs(evals)))
    return LiouvillianSpectrum(evals, right, left, zero_index, ok, err)


def propagate(
    liouv: Liouvillian,
    rho0: DensityMatrix,
    t: float,
    spectrum: LiouvillianSpectrum | None = None,
) -> DensityMatrix:
    """exp(L t) applied to rho0, via the spectral decomposition when it is
    usable and scaling-and-squaring otherwise."""
    if t < 0:
        raise ValueError(f"time must be >= 0, got {t}")
    if t == 0:
        return rho0
    if spectrum is None:
        spectrum = eigendecompose(liouv)
    v0 = vec(rho0.entries)
    if spectrum.ok:
        coeff = spectrum.left @ v0
        vt = spectrum.right @ (np.exp(spectrum.eigenvalues * t) * coeff)
    else:
        vt = expm(liouv.matrix * t) @ v0
    rho = unvec(vt, liouv.dim)
    rho = 0.5 * (rho + rho.conj().T)
    drift = abs(np.trace(rho) - 1.0)
    if drift > 1e-8:
        raise RuntimeError(f"propagation trace drift {drift:.3e} > 1e-8")
    rho /= np.trace(rho).real
    return DensityMatrix(liouv.dim, rho)
