"""Shared orchestration: from a cavity parameter set to all dressed-state
and steady-state ingredients the spectrum/damping routes consume."""

from __future__ import annotations

from dataclasses import dataclass

from .dressed import (
    DressedBasis,
    RateMatrix,
    TransitionTable,
    clustered,
    diagonalize,
    rate_matrix,
    transition_table,
)
from .hilbert import FockOperator, annihilation
from .josephson import CavitySpec, build_hcav
from .lindblad import DensityMatrix, Liouvillian, build_liouvillian, steady_state


@dataclass(frozen=True)
class CavitySolution:
    spec: CavitySpec
    hamiltonian: FockOperator
    liouvillian: Liouvillian
    rho_ss: DensityMatrix
    basis: DressedBasis
    rate: RateMatrix
    table: TransitionTable  # clusters attached

    @property
    def omega_max(self) -> float:
        return max(r.omega for r in self.table.rows)


def solve_cavity(spec: CavitySpec, cluster_threshold: float = 1.0) -> CavitySolution:
    """Diagonalize, solve the steady state, and assemble the transition table."""
    h = build_hcav(spec)
    liouv = build_liouvillian(h, [(annihilation(spec.n_levels), spec.gamma)])
    rho_ss = steady_state(liouv)
    basis = diagonalize(h)
    table = clustered(transition_table(basis, rho_ss), cluster_threshold)
    return CavitySolution(spec, h, liouv, rho_ss, basis, rate_matrix(basis), table)
