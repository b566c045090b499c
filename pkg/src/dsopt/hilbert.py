"""Truncated Fock-space operator algebra.

Operators are dense complex matrices indexed by Fock occupation number
starting at 0. Truncation to dimension d is exact for the blockaded systems
studied here; for the displacement operator the caller controls truncation
quality (see ``unitarity_defect``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm


@dataclass(frozen=True)
class FockOperator:
    """A complex square matrix acting on a truncated Fock space."""

    dim: int
    entries: np.ndarray

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"Fock dimension must be >= 1, got {self.dim}")
        entries = np.asarray(self.entries, dtype=complex)
        if entries.shape != (self.dim, self.dim):
            raise ValueError(
                f"entries shape {entries.shape} does not match dim {self.dim}"
            )
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    def dagger(self) -> "FockOperator":
        return FockOperator(self.dim, self.entries.conj().T)

    def is_hermitian(self, tol: float = 1e-10) -> bool:
        return bool(np.max(np.abs(self.entries - self.entries.conj().T)) <= tol)


def annihilation(d: int) -> FockOperator:
    """Ladder operator a with a[n, n+1] = sqrt(n+1)."""
    if d < 1:
        raise ValueError(f"Fock dimension must be >= 1, got {d}")
    a = np.zeros((d, d), dtype=complex)
    if d > 1:
        a[np.arange(d - 1), np.arange(1, d)] = np.sqrt(np.arange(1, d))
    return FockOperator(d, a)


def creation(d: int) -> FockOperator:
    return annihilation(d).dagger()


def number(d: int) -> FockOperator:
    """Photon number operator diag(0, 1, ..., d-1); equals a^dag a exactly."""
    if d < 1:
        raise ValueError(f"Fock dimension must be >= 1, got {d}")
    return FockOperator(d, np.diag(np.arange(d, dtype=float)).astype(complex))


def identity(d: int) -> FockOperator:
    if d < 1:
        raise ValueError(f"Fock dimension must be >= 1, got {d}")
    return FockOperator(d, np.eye(d, dtype=complex))


def displacement(alpha: complex, d: int) -> FockOperator:
    """Displacement D(alpha) = exp(alpha a^dag - alpha* a) on d Fock levels.

    Unitary up to truncation leakage at the top of the ladder; use a guard
    band of extra levels (d >= N + 15 is adequate for matrix elements among
    the lowest N levels at |alpha|^2 of order a few).
    """
    a = annihilation(d).entries
    gen = alpha * a.conj().T - np.conj(alpha) * a
    return FockOperator(d, expm(gen))


def unitarity_defect(op: FockOperator, block: int | None = None) -> float:
    """Frobenius norm of D^dag D - I, optionally restricted to the lowest
    block x block corner. Diagnostic for displacement truncation quality."""
    g = op.entries.conj().T @ op.entries - np.eye(op.dim)
    if block is not None:
        g = g[:block, :block]
    return float(np.linalg.norm(g))
