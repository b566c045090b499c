"""Command-line front end.

Subcommands: roots, spectrum, gamma-opt, sweep, oracle, validate. All
physical flags are in internal units (hbar = 1, gamma = 1). Exit codes:
0 success, 1 usage error, 2 numerical/validation failure. Output is
byte-identical across runs for identical flags (no timestamps in CSV
bodies; the sweep sidecar holds the wall time).
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import __version__
from .josephson import CavitySpec, blockade_roots, blockaded
from .lindblad import DegenerateSteadyState
from .optomech import (
    MechanicalParams,
    gamma_opt_from_spectrum,
    gamma_opt_full_oracle,
    gamma_opt_secular,
)
from .pipeline import solve_cavity
from .spectrum import default_grid, snn_exact, snn_secular
from .sweep import SweepConfig, load_resume_rows, run_sweep, write_csv
from .validate import check_names, run_checks

USAGE_EXIT = 1
NUMERICAL_EXIT = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if x is None:
        return ""
    xf = float(x)
    if math.isnan(xf):
        return "nan"
    return format(xf, ".17g")


def _emit(tag: str, columns: list[str], rows: list[list], meta: dict, args) -> None:
    """Write a small table as CSV (with optional .meta.json sidecar) or as a
    single JSON document."""
    if args.format == "json":
        doc = {
            "command": tag,
            "columns": columns,
            "rows": [[None if v is None else v for v in row] for row in rows],
            "meta": meta,
        }
        text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    else:
        lines = [f"# dsopt-{tag} v1", ",".join(columns)]
        lines += [",".join(_fmt(v) for v in row) for row in rows]
        text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
        if args.format == "csv":
            with open(args.out + ".meta.json", "w") as fh:
                json.dump(
                    {"command": tag, "columns": columns, "meta": meta,
                     "version": __version__},
                    fh, indent=2, sort_keys=True,
                )
                fh.write("\n")
    else:
        sys.stdout.write(text)


def _add_output_flags(parser) -> None:
    parser.add_argument("--out", default=None, help="output path (default: stdout)")
    parser.add_argument("--format", choices=("csv", "json"), default="csv")


def _add_system_flags(parser) -> None:
    parser.add_argument("--levels", type=int, required=True, help="blockade level count N >= 2")
    parser.add_argument("--delta", type=float, default=0.0, help="detuning in units of gamma")
    parser.add_argument("--ej", type=float, required=True, help="Josephson energy in units of hbar*gamma")
    parser.add_argument("--root-index", type=int, default=0,
                        help="which blockade root of the N-level family to use")
    parser.add_argument("--phi0-sq", type=float, default=None,
                        help="explicit phi0^2 instead of snapping to a blockade root")


def _build_spec(args) -> CavitySpec:
    if args.levels < 2:
        raise UsageError(f"--levels must be >= 2, got {args.levels}")
    if args.phi0_sq is not None:
        return CavitySpec(args.levels, args.delta, args.ej, math.sqrt(args.phi0_sq))
    return blockaded(args.levels, args.root_index, args.delta, args.ej)


def _mech_from(args, omega_m: float) -> MechanicalParams:
    return MechanicalParams(
        g0=args.g0, omega_m=omega_m, gamma_m=args.gamma_m, n_th=args.n_th
    )


def _resolve_omega_m(args, sol) -> float:
    if (args.omega_m is None) == (args.at_transition is None):
        raise UsageError("give exactly one of --omega-m or --at-transition")
    if args.omega_m is not None:
        return args.omega_m
    label = args.at_transition
    if len(label) != 2 or not label.isdigit():
        raise UsageError(f"--at-transition expects a pair like '10', got {label!r}")
    beta, alpha = int(label[0]), int(label[1])
    return sol.table.row(alpha, beta).omega


def cmd_roots(args) -> int:
    if args.levels < 2:
        raise UsageError(f"--levels must be >= 2, got {args.levels}")
    rows = [
        [r.n_level, r.phi0_sq, r.blocked_transition[0], r.blocked_transition[1]]
        for r in blockade_roots(args.levels)
    ]
    _emit("roots", ["n_levels", "phi0_sq", "blocked_from", "blocked_to"], rows,
          {"levels": args.levels}, args)
    return 0


def cmd_spectrum(args) -> int:
    spec = _build_spec(args)
    sol = solve_cavity(spec, args.cluster_threshold)
    if args.omega_max is not None:
        grid = np.linspace(args.omega_min if args.omega_min is not None else -args.omega_max,
                           args.omega_max, args.points)
    else:
        grid = default_grid(sol.omega_max, points=args.points)

    columns = ["omega"]
    data = [grid]
    meta = {
        "spec": {"n_levels": spec.n_levels, "delta": spec.delta, "ej": spec.ej,
                 "phi0_sq": spec.phi0_sq},
        "transitions": [
            {"alpha": r.alpha, "beta": r.beta, "omega": r.omega, "width": r.width,
             "n_sq": r.n_sq, "pop_low": r.pop_low, "pop_high": r.pop_high}
            for r in sol.table.rows
        ],
        "clusters": list(sol.table.clusters),
        "cluster_threshold": args.cluster_threshold,
        "populations": [float(p) for p in sol.table.populations],
    }
    if args.method in ("exact", "both"):
        res = snn_exact(sol.liouvillian, sol.rho_ss, grid)
        columns.append("s_exact")
        data.append(res.values)
        meta["exact"] = {"variance": res.variance,
                         "sum_rule_residual": res.sum_rule_residual}
    if args.method in ("secular", "both"):
        res = snn_secular(sol.basis, sol.table.populations, sol.rate,
                          sol.table.clusters, grid)
        columns.append("s_secular")
        data.append(res.values)
        meta["secular"] = {"variance": res.variance,
                           "sum_rule_residual": res.sum_rule_residual}
    rows = [list(vals) for vals in zip(*data)]
    _emit("spectrum", columns, rows, meta, args)
    return 0


def cmd_gamma_opt(args) -> int:
    spec = _build_spec(args)
    sol = solve_cavity(spec, args.cluster_threshold)
    omega_m = _resolve_omega_m(args, sol)
    mech = _mech_from(args, omega_m)

    rows = []
    meta = {"omega_m": omega_m, "g0": args.g0, "gamma_m": args.gamma_m, "n_th": args.n_th}
    if args.method in ("secular", "both"):
        res = gamma_opt_secular(sol.table, mech)
        rows.append(["secular", omega_m, res.gamma_opt, res.n_residual, res.n_steady])
        meta["per_transition"] = [
            {"alpha": p.alpha, "beta": p.beta, "rate": p.rate,
             "contribution": p.contribution}
            for p in res.per_transition
        ]
    if args.method in ("spectrum", "both"):
        grid = default_grid(max(sol.omega_max, omega_m), points=args.points)
        exact = snn_exact(sol.liouvillian, sol.rho_ss, grid)
        g = gamma_opt_from_spectrum(exact, mech)
        rows.append(["spectrum", omega_m, g, None, None])
    _emit("gamma-opt", ["method", "omega_m", "gamma_opt", "n_residual", "n_steady"],
          rows, meta, args)
    return 0


def cmd_sweep(args) -> int:
    config = SweepConfig.from_json(args.config)
    if args.workers is not None:
        config = SweepConfig.from_dict({**config.to_dict(), "workers": args.workers})
    out = args.out or config.out
    if out is None:
        raise UsageError("sweep needs an output path (--out or config 'out')")
    resume_rows = load_resume_rows(out, config) if args.resume else None
    result = run_sweep(config, resume_rows)
    write_csv(result, out)
    n_err = sum(1 for r in result.rows if r[-1] != "")
    print(f"wrote {len(result.rows)} rows to {out} ({n_err} failed cells)",
          file=sys.stderr)
    return 0 if n_err == 0 else NUMERICAL_EXIT


def cmd_oracle(args) -> int:
    spec = _build_spec(args)
    sol = solve_cavity(spec, args.cluster_threshold)
    omega_m = _resolve_omega_m(args, sol)
    mech = _mech_from(args, omega_m)
    g_oracle = gamma_opt_full_oracle(
        spec, mech, mech_dim=args.mech_dim, initial_phonons=args.initial_phonons
    )
    g_sec = gamma_opt_secular(sol.table, mech).gamma_opt
    rel = abs(g_oracle - g_sec) / max(abs(g_oracle), abs(g_sec), 1e-300)
    rows = [[omega_m, g_oracle, g_sec, rel]]
    _emit("oracle", ["omega_m", "gamma_opt_oracle", "gamma_opt_secular", "rel_diff"],
          rows, {"mech_dim": args.mech_dim, "g0": args.g0, "gamma_m": args.gamma_m}, args)
    return 0


def cmd_validate(args) -> int:
    results = run_checks(args.only or None)
    for res in results:
        status = "PASS" if res.ok else "FAIL"
        print(f"{status} {res.name} [{res.runtime_s:.2f}s/{res.budget_s:.0f}s] {res.details}",
              file=sys.stderr)
    report = {
        "all_passed": all(r.ok for r in results),
        "checks": [
            {"name": r.name, "passed": r.passed, "within_budget": r.runtime_s < r.budget_s,
             "runtime_s": r.runtime_s, "budget_s": r.budget_s, "details": r.details}
            for r in results
        ],
    }
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0 if report["all_passed"] else NUMERICAL_EXIT


def build_parser() -> _Parser:
    parser = _Parser(prog="dsopt", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("roots", help="blockade roots phi0^2 for an N-level cavity")
    p.add_argument("--levels", type=int, required=True)
    _add_output_flags(p)
    p.set_defaults(fn=cmd_roots)

    p = sub.add_parser("spectrum", help="photon-number noise spectrum S_nn(omega)")
    _add_system_flags(p)
    p.add_argument("--method", choices=("exact", "secular", "both"), default="both")
    p.add_argument("--points", type=int, default=2001)
    p.add_argument("--omega-min", type=float, default=None)
    p.add_argument("--omega-max", type=float, default=None)
    p.add_argument("--cluster-threshold", type=float, default=1.0)
    _add_output_flags(p)
    p.set_defaults(fn=cmd_spectrum)

    p = sub.add_parser("gamma-opt", help="optomechanical damping rate at omega_m")
    _add_system_flags(p)
    p.add_argument("--method", choices=("secular", "spectrum", "both"), default="both")
    p.add_argument("--g0", type=float, default=0.02)
    p.add_argument("--gamma-m", type=float, default=0.01)
    p.add_argument("--n-th", type=float, default=0.0)
    p.add_argument("--omega-m", type=float, default=None)
    p.add_argument("--at-transition", default=None,
                   help="transition label 'ba' (e.g. 10) to track its frequency")
    p.add_argument("--points", type=int, default=8001)
    p.add_argument("--cluster-threshold", type=float, default=1.0)
    _add_output_flags(p)
    p.set_defaults(fn=cmd_gamma_opt)

    p = sub.add_parser("sweep", help="run a config-driven parameter sweep")
    p.add_argument("--config", required=True, help="JSON sweep configuration")
    p.add_argument("--out", default=None, help="output CSV (overrides config)")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--resume", action="store_true",
                   help="reuse cells from an existing partial output")
    p.set_defaults(fn=cmd_sweep, format="csv")

    p = sub.add_parser("oracle", help="full coupled-model damping rate vs secular")
    _add_system_flags(p)
    p.add_argument("--g0", type=float, default=0.02)
    p.add_argument("--gamma-m", type=float, default=0.01)
    p.add_argument("--n-th", type=float, default=0.0)
    p.add_argument("--omega-m", type=float, default=None)
    p.add_argument("--at-transition", default=None)
    p.add_argument("--mech-dim", type=int, default=8)
    p.add_argument("--initial-phonons", type=int, default=2)
    p.add_argument("--cluster-threshold", type=float, default=1.0)
    _add_output_flags(p)
    p.set_defaults(fn=cmd_oracle)

    p = sub.add_parser("validate", help="run the numerical self-validation suite")
    p.add_argument("--only", action="append", default=None,
                   help=f"run only the named check(s); known: {', '.join(check_names())}")
    _add_output_flags(p)
    p.set_defaults(fn=cmd_validate)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    try:
        return args.fn(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except (ValueError, KeyError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except (DegenerateSteadyState, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return NUMERICAL_EXIT


if __name__ == "__main__":
    sys.exit(main())
