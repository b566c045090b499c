"""Optomechanical damping and phonon occupancy.

The damping rate Gamma_opt follows from the asymmetry of the photon-number
noise spectrum at the mechanical sidebands, Gamma_opt = g0^2 [S(omega_m) -
S(-omega_m)], or equivalently in the resolved regime from the secular sum
over dressed transitions weighted by population imbalance. A full coupled
cavity-mechanics Lindblad propagation serves as an independent oracle.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .dressed import TransitionTable
from .hilbert import FockOperator, annihilation, number
from .josephson import CavitySpec, build_hcav
from .lindblad import (
    DensityMatrix,
    build_liouvillian,
    eigendecompose,
    steady_state,
    vec,
)
from .spectrum import SpectrumResult


class InversionAtTransition(ValueError):
    """Residual occupancy requested where the upper state dominates."""


class MechanicalInstability(RuntimeError):
    """Net anti-damping: Gamma_opt + gamma_m <= 0."""


class OracleFitError(RuntimeError):
    """The coupled-model decay was not single-exponential enough to fit."""

    def __init__(self, message: str, diagnostics: dict):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class MechanicalParams:
    """Mechanical oscillator parameters, in units of gamma."""

    g0: float
    omega_m: float
    gamma_m: float
    n_th: float = 0.0

    def __post_init__(self):
        if self.omega_m <= 0:
            raise ValueError(f"omega_m must be > 0, got {self.omega_m}")
        if self.gamma_m < 0 or self.n_th < 0:
            raise ValueError("gamma_m and n_th must be >= 0")
        if self.g0 > 0.1:
            warnings.warn(
                f"g0 = {self.g0} is outside the weak-coupling regime (g0 << gamma)",
                stacklevel=2,
            )
        if self.gamma_m >= self.omega_m:
            warnings.warn(
                f"gamma_m = {self.gamma_m} >= omega_m = {self.omega_m}: "
                "sideband hierarchy violated",
                stacklevel=2,
            )


@dataclass(frozen=True)
class PerTransition:
    alpha: int
    beta: int
    rate: float  # single-transition Lorentzian Gamma_ab(omega_m)
    contribution: float  # (P_a - P_b) * rate


@dataclass(frozen=True)
class OptomechResult:
    gamma_opt: float
    per_transition: tuple[PerTransition, ...]
    n_residual: float | None
    n_steady: float | None
    method: str


def gamma_opt_from_spectrum(spec_result: SpectrumResult, mech: MechanicalParams) -> float:
    """g0^2 [S(+omega_m) - S(-omega_m)] with cubic interpolation."""
    om = mech.omega_m
    grid = spec_result.omegas
    if om > grid[-1] or -om < grid[0]:
        raise ValueError(
            f"omega_m = {om} outside spectrum grid [{grid[0]}, {grid[-1]}]"
        )
    interp = CubicSpline(grid, spec_result.values)
    return mech.g0**2 * float(interp(om) - interp(-om))


def transition_rate(row, mech: MechanicalParams) -> float:
    """Lorentzian single-transition rate Gamma_ab(omega_m) =
    g0^2 |n_ab|^2 2 width / ((omega_ba - omega_m)^2 + width^2)."""
    return (
        mech.g0**2
        * row.n_sq
        * 2.0
        * row.width
        / ((row.omega - mech.omega_m) ** 2 + row.width**2)
    )


def gamma_opt_secular(table: TransitionTable, mech: MechanicalParams) -> OptomechResult:
    """Secular damping rate: sum over transitions of (P_a - P_b) Gamma_ab.

    When omega_m sits within one linewidth of a transition, the residual and
    steady occupancies for that transition are filled in; off resonance they
    are left unset (the near-resonance occupancy formula does not apply).
    """
    contributions = []
    total = 0.0
    for row in table.rows:
        rate = transition_rate(row, mech)
        contrib = (row.pop_low - row.pop_high) * rate
        contributions.append(PerTransition(row.alpha, row.beta, rate, contrib))
        total += contrib

    n_res = None
    n_st = None
    resonant = [r for r in table.rows if abs(r.omega - mech.omega_m) <= r.width]
    if resonant:
        row = min(resonant, key=lambda r: abs(r.omega - mech.omega_m))
        if row.pop_low > row.pop_high:
            n_res = row.pop_high / (row.pop_low - row.pop_high)
            if total + mech.gamma_m > 0:
                n_st = n_steady(total, n_res, mech)
    return OptomechResult(total, tuple(contributions), n_res, n_st, "secular")


def n_residual(table: TransitionTable, transition: tuple[int, int]) -> float:
    """Backaction-limited occupancy P_b / (P_a - P_b) near a transition."""
    row = table.row(*transition)
    if row.pop_low <= row.pop_high:
        raise InversionAtTransition(
            f"transition ({row.alpha}, {row.beta}) is inverted "
            f"(P_low = {row.pop_low:.4g} <= P_high = {row.pop_high:.4g}); "
            "residual occupancy is undefined in the heating regime"
        )
    return row.pop_high / (row.pop_low - row.pop_high)


def n_steady(gamma_opt: float, n_res: float, mech: MechanicalParams) -> float:
    """Steady phonon number (Gamma_opt n_r + gamma_m n_th)/(Gamma_opt + gamma_m)."""
    denom = gamma_opt + mech.gamma_m
    if denom <= 0:
        raise MechanicalInstability(
            f"Gamma_opt + gamma_m = {denom:.4g} <= 0: mechanics anti-damped"
        )
    return (gamma_opt * n_res + mech.gamma_m * mech.n_th) / denom


def _coupled_liouvillian(spec: CavitySpec, mech: MechanicalParams, mech_dim: int):
    n_cav = spec.n_levels
    a_cav = annihilation(n_cav).entries
    n_cav_op = number(n_cav).entries
    b_mech = annihilation(mech_dim).entries
    n_mech = number(mech_dim).entries
    eye_c = np.eye(n_cav)
    eye_m = np.eye(mech_dim)

    h = (
        np.kron(build_hcav(spec).entries, eye_m)
        + mech.omega_m * np.kron(eye_c, n_mech)
        + mech.g0 * np.kron(n_cav_op, b_mech + b_mech.conj().T)
    )
    dim = n_cav * mech_dim
    collapse = [
        (FockOperator(dim, np.kron(a_cav, eye_m)), spec.gamma),
        (FockOperator(dim, np.kron(eye_c, b_mech)), mech.gamma_m),
    ]
    return build_liouvillian(FockOperator(dim, h), collapse), np.kron(eye_c, n_mech)


def gamma_opt_full_oracle(
    spec: CavitySpec,
    mech: MechanicalParams,
    mech_dim: int,
    initial_phonons: int = 2,
    fit_start: float = 3.0,
    signal_floor: float = 1e-6,
) -> float:
    """Damping rate from the full coupled cavity-mechanics model.

    Builds the bipartite Liouvillian, starts from the cavity steady state
    with the mechanics in a small Fock state, and fits the exponential
    relaxation of the phonon number toward its stationary value. The first
    fit_start/gamma of evolution is discarded (multi-exponential transient);
    the fit runs while the residual signal exceeds signal_floor. Returns the
    fitted rate minus gamma_m.
    """
    if mech_dim < 6:
        raise ValueError(f"mech_dim must be >= 6, got {mech_dim}")
    if mech.g0 > 0.05:
        raise ValueError(f"oracle protocol requires g0 <= 0.05, got {mech.g0}")
    if mech.gamma_m <= 0 or mech.gamma_m > 0.02:
        raise ValueError(
            f"oracle protocol requires 0 < gamma_m <= 0.02, got {mech.gamma_m}"
        )
    if mech.n_th != 0:
        raise ValueError("oracle protocol requires n_th = 0")
    if initial_phonons >= mech_dim - 2:
        raise ValueError("initial phonon state too close to truncation")

    cav_dim = spec.n_levels
    a_cav = annihilation(cav_dim)
    cav_liouv = build_liouvillian(build_hcav(spec), [(a_cav, spec.gamma)])
    rho_cav = steady_state(cav_liouv)

    liouv, n_mech_full = _coupled_liouvillian(spec, mech, mech_dim)
    mech_state = np.zeros((mech_dim, mech_dim), dtype=complex)
    mech_state[initial_phonons, initial_phonons] = 1.0
    rho0 = np.kron(rho_cav.entries, mech_state)

    decomp = eigendecompose(liouv)
    if not decomp.ok:
        raise OracleFitError(
            "coupled Liouvillian is too close to defective for spectral propagation",
            {"reconstruction_error": decomp.reconstruction_error},
        )
    coeff = decomp.left @ vec(rho0)
    obs = n_mech_full.T.flatten(order="F") @ decomp.right
    mode_weight = obs * coeff
    n_inf = float(np.real(mode_weight[decomp.zero_index]))

    keep = np.ones(len(coeff), dtype=bool)
    keep[decomp.zero_index] = False
    w = mode_weight[keep]
    lam = decomp.eigenvalues[keep]

    # horizon from the slowest significantly excited mode
    active = np.abs(w) > 1e-9
    if not np.any(active):
        return 0.0
    slow_rate = float(np.min(-np.real(lam[active])))
    horizon = fit_start + 8.0 / max(slow_rate, 1e-4)
    times = np.linspace(fit_start, horizon, 600)
    residual = np.real(np.exp(np.outer(times, lam)) @ w)

    mask = np.abs(residual) > signal_floor
    if np.sum(mask) < 10:
        raise OracleFitError(
            "phonon relaxation signal below floor over the whole fit window",
            {"n_points": int(np.sum(mask)), "n_inf": n_inf},
        )
    t_fit = times[mask]
    y_fit = np.log(np.abs(residual[mask]))
    slope, intercept = np.polyfit(t_fit, y_fit, 1)
    pred = slope * t_fit + intercept
    ss_res = float(np.sum((y_fit - pred) ** 2))
    ss_tot = float(np.sum((y_fit - np.mean(y_fit)) ** 2))
    r_sq = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    if r_sq < 0.99:
        raise OracleFitError(
            f"relaxation not single-exponential: R^2 = {r_sq:.4f}",
            {
                "r_squared": r_sq,
                "fitted_rate": -slope,
                "window": (float(t_fit[0]), float(t_fit[-1])),
                "n_inf": n_inf,
            },
        )
    return float(-slope - mech.gamma_m)
