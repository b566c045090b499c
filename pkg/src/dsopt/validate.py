"""Self-validation suite: every release-gating numerical check, runnable
from the CLI (``dsopt validate``) and from the test suite.

Each check cross-validates independent routes (closed forms vs numerics,
secular vs exact spectra, spectral vs time-domain damping rates) at pinned
parameter points and tolerances.
"""

from __future__ import annotations

import math
import os
import tempfile
import time
from dataclasses import dataclass

import numpy as np

from .hilbert import displacement
from .josephson import (
    CavitySpec,
    blockade_roots,
    blockaded,
    blockade_leakage,
    ej_star,
    transition_element,
)
from .optomech import (
    MechanicalParams,
    gamma_opt_from_spectrum,
    gamma_opt_full_oracle,
    gamma_opt_secular,
    n_residual,
)
from .pipeline import solve_cavity
from .spectrum import default_grid, snn_exact, snn_secular
from .sweep import SweepConfig, run_sweep, write_csv

# reference blockade values, 3 significant figures each
REFERENCE_ROOTS = {
    2: (2.0,),
    3: (1.27, 4.73),
    4: (0.936, 3.31, 7.76),
    5: (0.743, 2.57, 5.73, 11.0),
    6: (0.617, 2.11, 4.61, 8.40, 14.3),
}


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    runtime_s: float
    budget_s: float
    details: str

    @property
    def ok(self) -> bool:
        return self.passed and self.runtime_s < self.budget_s


def _sig3(x: float) -> float:
    return float(f"{x:.3g}")


def check_blockade_roots() -> tuple[bool, str]:
    bad = []
    for n, printed in REFERENCE_ROOTS.items():
        roots = blockade_roots(n)
        if len(roots) != n - 1:
            bad.append(f"N={n}: {len(roots)} roots")
            continue
        for root, ref in zip(roots, printed):
            if _sig3(root.phi0_sq) != ref:
                bad.append(f"N={n}: {root.phi0_sq!r} vs {ref}")
    exact = [
        abs(blockade_roots(2)[0].phi0_sq - 2.0),
        abs(blockade_roots(3)[0].phi0_sq - (3 - math.sqrt(3))),
        abs(blockade_roots(3)[1].phi0_sq - (3 + math.sqrt(3))),
    ]
    if max(exact) > 1e-9:
        bad.append(f"analytic N<=3 roots off by {max(exact):.2e}")
    return not bad, "; ".join(bad) or "all reference roots reproduced"


def check_franck_condon() -> tuple[bool, str]:
    ej = 100.0
    worst = 0.0
    for phi0_sq in (2.0, 3 - math.sqrt(3), 3.31):
        phi0 = math.sqrt(phi0_sq)
        spec = CavitySpec(6, 0.0, ej, phi0)
        disp = displacement(1j * phi0, 30).entries
        lhs = np.array([transition_element(n, spec) for n in range(4)])
        rhs = np.array([(ej / 2.0) * disp[n + 1, n] for n in range(4)])
        # relative to the identity's overall scale: exactly blocked elements
        # are 0 == 0 and must not divide by themselves
        rel = float(np.max(np.abs(lhs - rhs)) / np.max(np.abs(rhs)))
        worst = max(worst, rel)
    return worst < 1e-8, f"worst relative error {worst:.3e}"


def check_two_level_closed_form() -> tuple[bool, str]:
    ej = 80.0
    ejs = ej_star(ej, math.sqrt(2.0))
    worst = 0.0
    for delta in (-50.0, -26.0, -8.0, 0.0, 8.0, 26.0, 50.0):
        spec = blockaded(2, 0, delta, ej)
        sol = solve_cavity(spec)
        row = sol.table.row(0, 1)
        omega_ref = math.sqrt(delta**2 + 2 * ejs**2)
        nsq_ref = ejs**2 / (4 * ejs**2 + 2 * delta**2)
        width_ref = (3 * ejs**2 + delta**2) / (4 * ejs**2 + 2 * delta**2)
        worst = max(
            worst,
            abs(row.omega - omega_ref) / omega_ref,
            abs(row.n_sq - nsq_ref) / nsq_ref,
            abs(row.width - width_ref) / width_ref,
        )
    return worst < 1e-10, f"worst relative deviation {worst:.3e}"


def check_sum_rule() -> tuple[bool, str]:
    msgs = []
    ok = True
    for n, delta, ej in ((2, -26.0, 80.0), (3, -30.0, 300.0)):
        sol = solve_cavity(blockaded(n, 0, delta, ej))
        res = snn_exact(sol.liouvillian, sol.rho_ss, default_grid(sol.omega_max))
        ok = ok and res.sum_rule_residual is not None and res.sum_rule_residual < 1e-6
        msgs.append(f"N={n}: residual {res.sum_rule_residual:.3e}")
    return ok, "; ".join(msgs)


def _peak(omegas_center: float, values_fn, half_window: float = 3.0):
    grid = np.linspace(omegas_center - half_window, omegas_center + half_window, 601)
    vals = values_fn(grid)
    k = int(np.argmax(vals))
    return float(grid[k]), float(vals[k])


def check_spectrum_agreement() -> tuple[bool, str]:
    sol = solve_cavity(blockaded(3, 0, -63.0, 300.0))
    centers = []
    for row in sol.table.rows:
        centers += [row.omega, -row.omega]

    def exact_at(grid):
        return snn_exact(sol.liouvillian, sol.rho_ss, grid).values

    def secular_at(grid):
        return snn_secular(
            sol.basis, sol.table.populations, sol.rate, sol.table.clusters, grid
        ).values

    bad = []
    for c in centers:
        pos_e, height_e = _peak(c, exact_at)
        pos_s, height_s = _peak(c, secular_at)
        d_pos = abs(pos_e - pos_s)
        d_height = abs(height_e - height_s) / height_e
        if d_pos > 0.5 or d_height > 0.10:
            bad.append(f"peak near {c:+.1f}: dpos={d_pos:.3f} dh={d_height:.3%}")
    if bad:
        return False, "; ".join(bad)
    return True, "6 side peaks agree (centers within gamma/2, heights within 10%)"


def check_gamma_opt_routes() -> tuple[bool, str]:
    sol = solve_cavity(blockaded(3, 0, -63.0, 300.0))
    grid = default_grid(sol.omega_max, points=8001)
    exact_spec = snn_exact(sol.liouvillian, sol.rho_ss, grid)
    msgs = []
    ok = True
    for row in sol.table.rows:
        mech = MechanicalParams(g0=0.02, omega_m=row.omega, gamma_m=0.01)
        g_spec = gamma_opt_from_spectrum(exact_spec, mech)
        g_sec = gamma_opt_secular(sol.table, mech).gamma_opt
        rel = abs(g_spec - g_sec) / max(abs(g_spec), abs(g_sec))
        ok = ok and rel < 0.10
        msgs.append(f"omega_{row.beta}{row.alpha}: rel {rel:.3%}")
    return ok, "; ".join(msgs)


def check_sign_structure() -> tuple[bool, str]:
    g0 = 0.02
    bad = []
    for delta in (-8.0, -26.0, -38.0, -50.0):
        for sign, d in ((1, delta), (-1, -delta)):
            sol = solve_cavity(blockaded(2, 0, d, 80.0))
            mech = MechanicalParams(g0=g0, omega_m=sol.table.row(0, 1).omega, gamma_m=0.01)
            g = gamma_opt_secular(sol.table, mech).gamma_opt
            if sign * g <= 0:
                bad.append(f"delta={d}: Gamma_opt={g:.3e} has wrong sign")
    sol0 = solve_cavity(blockaded(2, 0, 0.0, 80.0))
    mech0 = MechanicalParams(g0=g0, omega_m=sol0.table.row(0, 1).omega, gamma_m=0.01)
    g_zero = gamma_opt_secular(sol0.table, mech0).gamma_opt
    if abs(g_zero) >= 1e-10 * g0**2:
        bad.append(f"delta=0: |Gamma_opt|={abs(g_zero):.3e} >= 1e-10 g0^2")
    return not bad, "; ".join(bad) or f"cooling/heating signs correct; |Gamma(0)|={abs(g_zero):.2e}"


def check_inversion_window() -> tuple[bool, str]:
    config = SweepConfig.from_dict(
        {
            "system": {"n_levels": 3, "delta": 0.0, "ej": 300.0, "root_index": 0},
            "mech": {"g0": 0.02, "omega_m": 10.0, "gamma_m": 0.01},
            "axes": [{"name": "delta", "min": -80.0, "max": 0.0, "points": 81}],
            "outputs": ["populations"],
        }
    )
    result = run_sweep(config)
    crossings = result.derived.get("inversion_thresholds", [])
    if len(crossings) != 1:
        return False, f"expected one inversion threshold, found {crossings}"
    delta_c = crossings[0]
    if not delta_c < 0:
        return False, f"threshold {delta_c} not negative"
    p1_col = result.columns.index("p_1")
    p2_col = result.columns.index("p_2")
    inside = [
        r for r in result.rows if delta_c + 0.5 < r[1] < -0.5
    ]
    if not inside or any(r[p2_col] <= r[p1_col] for r in inside):
        return False, "P_2 > P_1 does not hold on the inversion window"
    mid = 0.5 * delta_c
    sol = solve_cavity(blockaded(3, 0, mid, 300.0))
    mech21 = MechanicalParams(g0=0.02, omega_m=sol.table.row(1, 2).omega, gamma_m=0.01)
    mech10 = MechanicalParams(g0=0.02, omega_m=sol.table.row(0, 1).omega, gamma_m=0.01)
    g21 = gamma_opt_secular(sol.table, mech21).gamma_opt
    g10 = gamma_opt_secular(sol.table, mech10).gamma_opt
    if not (g21 < 0 < g10):
        return False, f"at midpoint {mid:.2f}: Gamma(omega_21)={g21:.3e}, Gamma(omega_10)={g10:.3e}"
    return True, f"delta_c={delta_c:.3f}; heating at omega_21 and cooling at omega_10 at {mid:.2f}"


def check_full_oracle() -> tuple[bool, str]:
    spec = blockaded(2, 0, -26.0, 80.0)
    sol = solve_cavity(spec)
    omega_m = sol.table.row(0, 1).omega
    mech = MechanicalParams(g0=0.02, omega_m=omega_m, gamma_m=0.01)
    g_oracle = gamma_opt_full_oracle(spec, mech, mech_dim=8)
    g_sec = gamma_opt_secular(sol.table, mech).gamma_opt
    rel = abs(g_oracle - g_sec) / abs(g_sec)
    return rel < 0.15, (
        f"oracle {g_oracle:.4e} vs secular {g_sec:.4e} (rel {rel:.2%})"
    )


def check_residual_suppression() -> tuple[bool, str]:
    vals = {}
    for delta in (-8.0, -50.0):
        sol = solve_cavity(blockaded(2, 0, delta, 80.0))
        vals[delta] = n_residual(sol.table, (0, 1))
    ok = vals[-50.0] < vals[-8.0] / 10.0
    return ok, f"n_r(-50)={vals[-50.0]:.4e} vs n_r(-8)={vals[-8.0]:.4e}"


def check_blockade_robustness() -> tuple[bool, str]:
    bad = []
    for n in range(2, 7):
        for root in blockade_roots(n):
            phi0 = math.sqrt(root.phi0_sq)
            # drive hard enough that a broken blockade visibly leaks
            ej = 80.0 * math.exp(root.phi0_sq / 2.0) / phi0
            at_root = blockade_leakage(CavitySpec(n, 0.0, ej, phi0), extra_dims=3)
            perturbed = blockade_leakage(
                CavitySpec(n, 0.0, ej, math.sqrt(root.phi0_sq + 0.05)), extra_dims=3
            )
            if at_root >= 1e-10:
                bad.append(f"N={n} root {root.phi0_sq:.3f}: leak {at_root:.2e}")
            if perturbed <= 1e-6:
                bad.append(
                    f"N={n} root {root.phi0_sq:.3f}+0.05: leak {perturbed:.2e} too small"
                )
    return not bad, "; ".join(bad) or "exact blockade at all 15 roots; broken when perturbed"


def check_determinism() -> tuple[bool, str]:
    base = {
        "system": {"n_levels": 2, "delta": 0.0, "ej": 80.0, "root_index": 0},
        "mech": {"g0": 0.02, "omega_m": 40.0, "gamma_m": 0.01},
        "axes": [{"name": "delta", "min": -60.0, "max": 60.0, "points": 25}],
        "outputs": ["populations", "transition_freqs", "gamma_opt_peak"],
    }
    blobs = []
    with tempfile.TemporaryDirectory() as tmp:
        for workers in (1, 4):
            config = SweepConfig.from_dict({**base, "workers": workers})
            path = os.path.join(tmp, f"w{workers}.csv")
            write_csv(run_sweep(config), path)
            with open(path, "rb") as fh:
                blobs.append(fh.read())
    ok = blobs[0] == blobs[1]
    return ok, "workers=1 and workers=4 CSVs byte-identical" if ok else "CSV bytes differ"


CHECKS: tuple[tuple[str, float, object], ...] = (
    ("blockade-roots", 0.1, check_blockade_roots),
    ("franck-condon", 1.0, check_franck_condon),
    ("two-level-closed-form", 1.0, check_two_level_closed_form),
    ("sum-rule", 5.0, check_sum_rule),
    ("spectrum-agreement", 10.0, check_spectrum_agreement),
    ("gamma-opt-routes", 5.0, check_gamma_opt_routes),
    ("sign-structure", 10.0, check_sign_structure),
    ("inversion-window", 30.0, check_inversion_window),
    ("full-oracle", 120.0, check_full_oracle),
    ("residual-suppression", 5.0, check_residual_suppression),
    ("blockade-robustness", 10.0, check_blockade_robustness),
    ("determinism", 60.0, check_determinism),
)


def check_names() -> list[str]:
    return [name for name, _, _ in CHECKS]


def run_check(name: str) -> CheckResult:
    for check_name, budget, fn in CHECKS:
        if check_name == name:
            start = time.perf_counter()
            try:
                passed, details = fn()
            except Exception as exc:
                passed, details = False, f"{type(exc).__name__}: {exc}"
            runtime = time.perf_counter() - start
            return CheckResult(check_name, bool(passed), runtime, budget, details)
    raise KeyError(f"unknown check {name!r}; known: {check_names()}")


def run_checks(only: list[str] | None = None) -> list[CheckResult]:
    names = only if only else check_names()
    unknown = [n for n in names if n not in check_names()]
    if unknown:
        raise KeyError(f"unknown checks {unknown}; known: {check_names()}")
    return [run_check(n) for n in names]
