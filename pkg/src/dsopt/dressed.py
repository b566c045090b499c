"""Dressed-state structure of the driven cavity.

Diagonalizing the rotating-frame Hamiltonian yields the dressed manifold
|alpha> with energies eps_alpha. Everything the secular theory needs lives
here: transformed matrix elements a_ab = <a|a_op|b> and n_ab = <a|n_op|b>,
steady-state populations, effective transition widths, the population rate
matrix, and quasi-degenerate clustering of transition frequencies.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .hilbert import FockOperator, annihilation, number
from .lindblad import DensityMatrix

DEGENERACY_GAP = 1e-10


@dataclass(frozen=True)
class DressedBasis:
    """Sorted dressed energies and transformed operator matrix elements.

    ``transform`` columns are the dressed states in the Fock basis, phase
    fixed so the largest-magnitude component of each column is real and
    positive (ties broken by lowest Fock index)."""

    energies: np.ndarray
    transform: np.ndarray
    a_dressed: np.ndarray
    n_dressed: np.ndarray
    degenerate: bool = False

    @property
    def dim(self) -> int:
        return len(self.energies)


@dataclass(frozen=True)
class TransitionRow:
    """One dressed-state pair with eps_alpha < eps_beta."""

    alpha: int
    beta: int
    omega: float  # omega_beta_alpha = eps_beta - eps_alpha > 0
    width: float  # effective decay rate gamma_tilde_ab
    n_sq: float  # |n_ab|^2
    pop_low: float  # P_alpha
    pop_high: float  # P_beta


@dataclass(frozen=True)
class TransitionTable:
    rows: tuple[TransitionRow, ...]
    populations: np.ndarray
    clusters: tuple[int, ...] | None = None

    def row(self, alpha: int, beta: int) -> TransitionRow:
        for r in self.rows:
            if (r.alpha, r.beta) == (alpha, beta):
                return r
        raise KeyError(f"no transition row ({alpha}, {beta})")


@dataclass(frozen=True)
class RateMatrix:
    """Population-transfer generator A_ab = |a_ab|^2 - n_aa delta_ab.

    Columns sum to zero exactly (in exact arithmetic) because
    sum_a |a_ab|^2 = n_bb; diagonal entries are nonpositive."""

    entries: np.ndarray


def _phase_fix(column: np.ndarray) -> np.ndarray:
    mags = np.abs(column)
    top = np.max(mags)
    # lowest Fock index among near-maximal components, for reproducibility
    idx = int(np.flatnonzero(mags >= top * (1 - 1e-12))[0])
    phase = column[idx] / mags[idx]
    return column * np.conj(phase)


def _canonicalize_block(block: np.ndarray) -> np.ndarray:
    """Deterministic orthonormal basis for a degenerate eigenspace:
    Gram-Schmidt on the projections of Fock basis vectors onto the block."""
    d, m = block.shape
    proj = block @ block.conj().T
    out = []
    for i in range(d):
        v = proj[:, i].copy()
        for u in out:
            v -= u * (u.conj() @ v)
        norm = np.linalg.norm(v)
        if norm > 1e-8:
            out.append(v / norm)
        if len(out) == m:
            break
    if len(out) != m:
        raise RuntimeError("failed to canonicalize degenerate eigenspace")
    return np.stack(out, axis=1)


def diagonalize(h: FockOperator) -> DressedBasis:
    """Dressed basis of a Hermitian cavity Hamiltonian."""
    defect = np.max(np.abs(h.entries - h.entries.conj().T))
    if defect > 1e-10:
        raise ValueError(f"Hamiltonian not Hermitian: defect {defect:.3e}")
    energies, transform = np.linalg.eigh(h.entries)
    order = np.argsort(energies)
    energies = energies[order]
    transform = transform[:, order]

    degenerate = False
    i = 0
    while i < len(energies):
        j = i + 1
        while j < len(energies) and energies[j] - energies[i] < DEGENERACY_GAP:
            j += 1
        if j - i > 1:
            degenerate = True
            transform[:, i:j] = _canonicalize_block(transform[:, i:j])
        i = j
    for k in range(transform.shape[1]):
        transform[:, k] = _phase_fix(transform[:, k])

    d = h.dim
    a_dressed = transform.conj().T @ annihilation(d).entries @ transform
    n_dressed = transform.conj().T @ number(d).entries @ transform
    return DressedBasis(energies, transform, a_dressed, n_dressed, degenerate)


def populations(basis: DressedBasis, rho_ss: DensityMatrix) -> np.ndarray:
    """Steady-state occupation of each dressed state."""
    if rho_ss.dim != basis.dim:
        raise ValueError(
            f"density matrix dim {rho_ss.dim} does not match basis {basis.dim}"
        )
    rho_dressed = basis.transform.conj().T @ rho_ss.entries @ basis.transform
    return np.real(np.diag(rho_dressed))


def effective_width(basis: DressedBasis, alpha: int, beta: int, gamma: float = 1.0) -> float:
    """Secular decay rate of the (alpha, beta) coherence:
    gamma * [ (n_aa + n_bb)/2 - Re(a_aa a_bb*) ].

    The real part is taken; the imaginary part of a_aa a_bb* is a line pull,
    available separately via ``width_shift``."""
    if alpha == beta:
        raise ValueError("effective width is defined for alpha != beta")
    n = basis.n_dressed
    a = basis.a_dressed
    return gamma * float(
        0.5 * (n[alpha, alpha].real + n[beta, beta].real)
        - np.real(a[alpha, alpha] * np.conj(a[beta, beta]))
    )


def width_shift(basis: DressedBasis, alpha: int, beta: int, gamma: float = 1.0) -> float:
    """Dissipative line-pull of the (alpha, beta) transition frequency."""
    a = basis.a_dressed
    return -gamma * float(np.imag(a[alpha, alpha] * np.conj(a[beta, beta])))


def rate_matrix(basis: DressedBasis) -> RateMatrix:
    a_sq = np.abs(basis.a_dressed) ** 2
    n_diag = np.real(np.diag(basis.n_dressed))
    return RateMatrix(a_sq - np.diag(n_diag))


def secular_populations(rate: RateMatrix) -> np.ndarray:
    """Normalized null vector of the rate matrix: the populations the
    secular rate equations relax to."""
    evals, evecs = np.linalg.eig(rate.entries)
    k = int(np.argmin(np.abs(evals)))
    p = np.real(evecs[:, k])
    total = np.sum(p)
    if abs(total) < 1e-12:
        raise RuntimeError("rate-matrix null vector has zero total population")
    p = p / total
    return p


def transition_table(basis: DressedBasis, rho_ss: DensityMatrix) -> TransitionTable:
    """One row per dressed pair (alpha, beta) with eps_alpha < eps_beta."""
    pops = populations(basis, rho_ss)
    rows = []
    d = basis.dim
    for alpha in range(d):
        for beta in range(alpha + 1, d):
            rows.append(
                TransitionRow(
                    alpha=alpha,
                    beta=beta,
                    omega=float(basis.energies[beta] - basis.energies[alpha]),
                    width=effective_width(basis, alpha, beta),
                    n_sq=float(np.abs(basis.n_dressed[alpha, beta]) ** 2),
                    pop_low=float(pops[alpha]),
                    pop_high=float(pops[beta]),
                )
            )
    return TransitionTable(tuple(rows), pops)


def cluster_transitions(table: TransitionTable, threshold: float) -> tuple[int, ...]:
    """Partition transition rows into quasi-degenerate clusters.

    Rows whose frequencies differ by less than threshold (in units of gamma)
    are merged, with transitive closure; singletons are fully resolved.
    Cluster ids are numbered by first appearance in row order."""
    if threshold <= 0:
        raise ValueError(f"threshold must be > 0, got {threshold}")
    n = len(table.rows)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if abs(table.rows[i].omega - table.rows[j].omega) < threshold:
                parent[find(i)] = find(j)

    relabel: dict[int, int] = {}
    out = []
    for i in range(n):
        root = find(i)
        if root not in relabel:
            relabel[root] = len(relabel)
        out.append(relabel[root])
    return tuple(out)


def clustered(table: TransitionTable, threshold: float) -> TransitionTable:
    return dataclasses.replace(
        table, clusters=cluster_transitions(table, threshold)
    )
