"""The nonlinearly driven cavity: Laguerre nonlinearity, blockade roots,
transition elements, and the effective N-level Hamiltonian.

A dc-biased Josephson junction in series with the cavity drives it through
the diagonal operator B1 = sum_n L_n^(1)(phi0^2)/(1+n) |n><n|, so the
coupling between |n> and |n+1> vanishes whenever phi0^2 hits a root of
L_n^(1). Tuning phi0^2 to a root of L_{N-1}^(1) blocks the |N-1> -> |N>
transition and truncates the dynamics to N levels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .hilbert import FockOperator, annihilation, number

VON_KLITZING_OHM = 25812.807  # R_K = h/e^2


@dataclass(frozen=True)
class CavitySpec:
    """Physical parameters of the driven cavity, in units of gamma (hbar=1).

    n_levels is the blockade truncation N; delta = omega_dc - omega_c; ej is
    the Josephson energy; phi0 the zero-point phase fluctuation. gamma is
    stored for documentation only and must stay 1 in internal units.
    """

    n_levels: int
    delta: float
    ej: float
    phi0: float
    gamma: float = 1.0

    def __post_init__(self):
        if self.n_levels < 2:
            raise ValueError(f"n_levels must be >= 2, got {self.n_levels}")
        if self.ej < 0:
            raise ValueError(f"ej must be >= 0, got {self.ej}")
        if self.phi0 <= 0:
            raise ValueError(f"phi0 must be > 0, got {self.phi0}")

    @property
    def phi0_sq(self) -> float:
        return self.phi0 * self.phi0

    @property
    def ej_star(self) -> float:
        return ej_star(self.ej, self.phi0)


@dataclass(frozen=True)
class BlockadeRoot:
    """A root of L_{N-1}^(1), blocking the |N-1> -> |N> Fock transition."""

    n_level: int
    phi0_sq: float
    blocked_transition: tuple[int, int] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.blocked_transition is None:
            object.__setattr__(
                self, "blocked_transition", (self.n_level - 1, self.n_level)
            )


def laguerre1(n: int, x: float) -> float:
    """Associated Laguerre polynomial L_n^(1)(x) by upward recurrence."""
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    if n == 0:
        return 1.0
    prev, cur = 1.0, 2.0 - x
    for k in range(1, n):
        prev, cur = cur, ((2 * k + 2 - x) * cur - (k + 1) * prev) / (k + 1)
    return cur


def blockade_roots(n_levels: int) -> list[BlockadeRoot]:
    """All N-1 positive roots of L_{N-1}^(1), ascending.

    Roots are simple and well separated at these degrees, so bisection on a
    sign-change grid over (0, 4N+8] plus one Newton polish is robust.
    """
    if n_levels < 2:
        raise ValueError(f"n_levels must be >= 2, got {n_levels}")
    n = n_levels - 1
    grid = np.linspace(1e-12, 4 * n_levels + 8, 40 * n_levels + 100)
    vals = np.array([laguerre1(n, x) for x in grid])
    roots = []
    for i in range(len(grid) - 1):
        if vals[i] == 0.0:
            roots.append(float(grid[i]))
            continue
        if vals[i] * vals[i + 1] < 0:
            lo, hi = float(grid[i]), float(grid[i + 1])
            flo = laguerre1(n, lo)
            for _ in range(100):
                mid = 0.5 * (lo + hi)
                fmid = laguerre1(n, mid)
                if fmid == 0.0:
                    lo = hi = mid
                    break
                if flo * fmid < 0:
                    hi = mid
                else:
                    lo, flo = mid, fmid
            root = 0.5 * (lo + hi)
            # one Newton step; dL_n^(1)/dx = -L_{n-1}^(2)
            h = 1e-7 * max(1.0, root)
            deriv = (laguerre1(n, root + h) - laguerre1(n, root - h)) / (2 * h)
            if deriv != 0.0:
                root -= laguerre1(n, root) / deriv
            roots.append(root)
    if len(roots) != n:
        raise RuntimeError(
            f"found {len(roots)} roots of L_{n}^(1), expected {n}"
        )
    return [BlockadeRoot(n_levels, r) for r in sorted(roots)]


def blockaded(
    n_levels: int, root_index: int, delta: float, ej: float
) -> CavitySpec:
    """CavitySpec with phi0 snapped to the root_index-th blockade root."""
    roots = blockade_roots(n_levels)
    if not 0 <= root_index < len(roots):
        raise ValueError(
            f"root_index {root_index} out of range for N={n_levels} "
            f"({len(roots)} roots)"
        )
    return CavitySpec(n_levels, delta, ej, math.sqrt(roots[root_index].phi0_sq))


def ej_star(ej: float, phi0: float) -> float:
    """Effective driving strength E_J exp(-phi0^2/2)."""
    if ej < 0:
        raise ValueError(f"ej must be >= 0, got {ej}")
    return ej * math.exp(-0.5 * phi0 * phi0)


def b1_operator(d: int, phi0: float) -> FockOperator:
    """Diagonal nonlinearity operator with entries L_n^(1)(phi0^2)/(1+n)."""
    x = phi0 * phi0
    diag = np.array([laguerre1(n, x) / (1 + n) for n in range(d)])
    return FockOperator(d, np.diag(diag).astype(complex))


def transition_element(n: int, spec: CavitySpec) -> complex:
    """Matrix element T_{n,n+1} = <n+1|H_cav|n> of the nonlinear drive."""
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    return (
        1j
        * (spec.ej_star / 2.0)
        * spec.phi0
        * laguerre1(n, spec.phi0_sq)
        / math.sqrt(n + 1)
    )


def build_hcav(spec: CavitySpec) -> FockOperator:
    """Effective N-level rotating-frame Hamiltonian.

    Diagonal -delta*n plus T_{n,n+1} couplings on the sub/superdiagonal;
    Hermitian by construction.
    """
    return build_hcav_extended(spec, spec.n_levels)


def build_hcav_extended(spec: CavitySpec, d: int) -> FockOperator:
    """Untruncated rotating-frame Hamiltonian on d Fock levels:
    -delta * n + (E_J*/2) phi0 (i a^dag B1 + h.c.)."""
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    a = annihilation(d).entries
    b1 = b1_operator(d, spec.phi0).entries
    drive = 1j * (spec.ej_star / 2.0) * spec.phi0 * (a.conj().T @ b1)
    h = -spec.delta * number(d).entries + drive + drive.conj().T
    return FockOperator(d, h)


def impedance_to_phi0(z_ohm: float) -> float:
    """Zero-point phase fluctuation from the resonator impedance,
    phi0 = sqrt(4 pi Z / R_K)."""
    if z_ohm <= 0:
        raise ValueError(f"impedance must be positive, got {z_ohm}")
    return math.sqrt(4 * math.pi * z_ohm / VON_KLITZING_OHM)


def blockade_leakage(spec: CavitySpec, extra_dims: int) -> float:
    """Steady-state population above the blockade.

    Builds the untruncated Hamiltonian on N + extra_dims levels, solves the
    Lindblad steady state with cavity decay, and returns the total population
    in Fock states >= N. Exactly at a blockade root this is zero to solver
    precision since the blocked transition makes higher states unreachable
    from the vacuum.
    """
    if extra_dims < 1:
        raise ValueError(f"extra_dims must be >= 1, got {extra_dims}")
    from .lindblad import build_liouvillian, steady_state

    d = spec.n_levels + extra_dims
    h = build_hcav_extended(spec, d)
    liouv = build_liouvillian(h, [(annihilation(d), spec.gamma)])
    rho = steady_state(liouv)
    pops = np.real(np.diag(rho.entries))
    return float(np.sum(pops[spec.n_levels :]))
