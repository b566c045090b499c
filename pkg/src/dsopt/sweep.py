"""Config-driven parameter sweeps with deterministic CSV/JSON persistence.

Grid cells are independent and evaluated by a bounded thread pool; results
are assembled in row-major grid order, so output is bitwise independent of
the worker count. Floats are serialized with 17 significant digits
(round-trip safe); complex values split into _re/_im columns.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .josephson import CavitySpec, blockaded
from .optomech import MechanicalParams, gamma_opt_from_spectrum, gamma_opt_secular
from .pipeline import CavitySolution, solve_cavity
from .spectrum import snn_exact, snn_secular

CSV_HEADER = "# dsopt-sweep v1"
AXIS_NAMES = ("delta", "ej", "phi0_sq", "omega_m")
QUANTITIES = (
    "populations",
    "transition_freqs",
    "widths",
    "gamma_opt_peak",
    "gamma_opt_curve",
    "n_residual",
    "snn_exact",
    "snn_secular",
)
MAX_GRID = 10**6


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SweepAxis:
    name: str
    min: float
    max: float
    points: int

    def values(self) -> np.ndarray:
        return np.linspace(self.min, self.max, self.points)


@dataclass(frozen=True)
class SweepConfig:
    system: dict
    mech: dict
    axes: tuple[SweepAxis, ...]
    outputs: tuple[str, ...]
    method: str = "secular"
    cluster_threshold: float = 1.0
    workers: int = 1
    out: str | None = None

    @classmethod
    def from_dict(cls, raw: dict) -> "SweepConfig":
        known = {
            "system",
            "mech",
            "axes",
            "outputs",
            "method",
            "cluster_threshold",
            "workers",
            "out",
        }
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")

        system = dict(raw.get("system") or {})
        sys_known = {"n_levels", "delta", "ej", "root_index", "phi0_sq"}
        if set(system) - sys_known:
            raise ConfigError(f"unknown system keys: {sorted(set(system) - sys_known)}")
        for key in ("n_levels", "delta", "ej"):
            if key not in system:
                raise ConfigError(f"system.{key} is required")
        if "root_index" in system and "phi0_sq" in system:
            raise ConfigError("system: give root_index or phi0_sq, not both")

        mech = dict(raw.get("mech") or {})
        mech_known = {"g0", "omega_m", "gamma_m", "n_th"}
        if set(mech) - mech_known:
            raise ConfigError(f"unknown mech keys: {sorted(set(mech) - mech_known)}")

        axes_raw = raw.get("axes") or []
        if not 1 <= len(axes_raw) <= 2:
            raise ConfigError("axes must contain one or two entries")
        axes = []
        for ax in axes_raw:
            if set(ax) != {"name", "min", "max", "points"}:
                raise ConfigError(f"axis must have exactly name/min/max/points: {ax}")
            if ax["name"] not in AXIS_NAMES:
                raise ConfigError(f"unknown axis name {ax['name']!r}")
            if int(ax["points"]) < 2:
                raise ConfigError("axis points must be >= 2")
            axes.append(
                SweepAxis(ax["name"], float(ax["min"]), float(ax["max"]), int(ax["points"]))
            )
        if len({a.name for a in axes}) != len(axes):
            raise ConfigError("axes must sweep distinct parameters")
        total = math.prod(a.points for a in axes)
        if total > MAX_GRID:
            raise ConfigError(f"grid of {total} points exceeds limit {MAX_GRID}")

        outputs = tuple(raw.get("outputs") or ())
        if not outputs:
            raise ConfigError("outputs must list at least one quantity")
        bad = [q for q in outputs if q not in QUANTITIES]
        if bad:
            raise ConfigError(f"unsupported outputs: {bad}")

        method = raw.get("method", "secular")
        if method not in ("secular", "exact"):
            raise ConfigError(f"method must be 'secular' or 'exact', got {method!r}")

        return cls(
            system=system,
            mech=mech,
            axes=tuple(axes),
            outputs=outputs,
            method=method,
            cluster_threshold=float(raw.get("cluster_threshold", 1.0)),
            workers=int(raw.get("workers", 1)),
            out=raw.get("out"),
        )

    @classmethod
    def from_json(cls, path: str) -> "SweepConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["axes"] = [dataclasses.asdict(a) for a in self.axes]
        d["outputs"] = list(self.outputs)  # JSON round-trip stable
        return d

    @property
    def n_levels(self) -> int:
        return int(self.system["n_levels"])


@dataclass(frozen=True)
class SweepResult:
    config: SweepConfig
    columns: tuple[str, ...]
    rows: tuple[tuple, ...]  # one tuple per grid cell, ordered by index
    derived: dict = field(default_factory=dict)


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if x is None:
        return ""
    xf = float(x)
    if math.isnan(xf):
        return "nan"
    return format(xf, ".17g")


def _pair_suffixes(n_levels: int) -> list[tuple[str, int, int]]:
    out = []
    for a in range(n_levels):
        for b in range(a + 1, n_levels):
            out.append((f"{b}{a}", a, b))
    return out


def result_columns(config: SweepConfig) -> tuple[str, ...]:
    cols = ["index"] + [ax.name for ax in config.axes]
    n = config.n_levels
    pairs = _pair_suffixes(n)
    for quantity in config.outputs:
        if quantity == "populations":
            cols += [f"p_{k}" for k in range(n)]
        elif quantity == "transition_freqs":
            cols += [f"omega_{s}" for s, _, _ in pairs]
        elif quantity == "widths":
            cols += [f"width_{s}" for s, _, _ in pairs]
        elif quantity == "gamma_opt_peak":
            cols += [f"gamma_opt_peak_{s}" for s, _, _ in pairs]
        elif quantity == "gamma_opt_curve":
            cols += ["gamma_opt"]
        elif quantity == "n_residual":
            cols += [f"n_residual_{s}" for s, _, _ in pairs]
        elif quantity == "snn_exact":
            cols += ["snn_exact_pos", "snn_exact_neg"]
        elif quantity == "snn_secular":
            cols += ["snn_secular_pos", "snn_secular_neg"]
    cols.append("error")
    return tuple(cols)


def _build_spec(config: SweepConfig, overrides: dict) -> CavitySpec:
    system = {**config.system, **{k: v for k, v in overrides.items() if k != "omega_m"}}
    n = int(system["n_levels"])
    if "phi0_sq" in system:
        return CavitySpec(n, float(system["delta"]), float(system["ej"]),
                          math.sqrt(float(system["phi0_sq"])))
    return blockaded(n, int(system.get("root_index", 0)),
                     float(system["delta"]), float(system["ej"]))


def _build_mech(config: SweepConfig, overrides: dict) -> MechanicalParams:
    mech = dict(config.mech)
    if "omega_m" in overrides:
        mech["omega_m"] = overrides["omega_m"]
    return MechanicalParams(
        g0=float(mech.get("g0", 0.02)),
        omega_m=float(mech.get("omega_m", 1.0)),
        gamma_m=float(mech.get("gamma_m", 0.0)),
        n_th=float(mech.get("n_th", 0.0)),
    )


def _gamma_opt_at(config: SweepConfig, sol: CavitySolution, mech: MechanicalParams) -> float:
    if config.method == "exact":
        res = snn_exact(
            sol.liouvillian, sol.rho_ss, np.array([-mech.omega_m, mech.omega_m])
        )
        return mech.g0**2 * float(res.values[1] - res.values[0])
    return gamma_opt_secular(sol.table, mech).gamma_opt


def evaluate_cell(config: SweepConfig, overrides: dict) -> list:
    """All requested quantities for one grid point, in column order."""
    spec = _build_spec(config, overrides)
    sol = solve_cavity(spec, config.cluster_threshold)
    values: list = []
    n = config.n_levels
    pairs = _pair_suffixes(n)
    mech = _build_mech(config, overrides)
    for quantity in config.outputs:
        if quantity == "populations":
            values += [float(p) for p in sol.table.populations]
        elif quantity == "transition_freqs":
            values += [sol.table.row(a, b).omega for _, a, b in pairs]
        elif quantity == "widths":
            values += [sol.table.row(a, b).width for _, a, b in pairs]
        elif quantity == "gamma_opt_peak":
            for _, a, b in pairs:
                tracked = dataclasses.replace(mech, omega_m=sol.table.row(a, b).omega)
                values.append(_gamma_opt_at(config, sol, tracked))
        elif quantity == "gamma_opt_curve":
            values.append(_gamma_opt_at(config, sol, mech))
        elif quantity == "n_residual":
            for _, a, b in pairs:
                row = sol.table.row(a, b)
                if row.pop_low > row.pop_high:
                    values.append(row.pop_high / (row.pop_low - row.pop_high))
                else:
                    values.append(float("nan"))  # inverted: heating regime
        elif quantity == "snn_exact":
            res = snn_exact(
                sol.liouvillian, sol.rho_ss, np.array([mech.omega_m, -mech.omega_m])
            )
            values += [float(res.values[0]), float(res.values[1])]
        elif quantity == "snn_secular":
            res = snn_secular(
                sol.basis,
                sol.table.populations,
                sol.rate,
                sol.table.clusters,
                np.array([mech.omega_m, -mech.omega_m]),
            )
            values += [float(res.values[0]), float(res.values[1])]
    return values


def _grid(config: SweepConfig) -> list[dict]:
    axes = [ax.values() for ax in config.axes]
    names = [ax.name for ax in config.axes]
    cells = []
    if len(axes) == 1:
        for v in axes[0]:
            cells.append({names[0]: float(v)})
    else:
        for v0 in axes[0]:
            for v1 in axes[1]:
                cells.append({names[0]: float(v0), names[1]: float(v1)})
    return cells


def detect_inversion_thresholds(
    deltas: np.ndarray, p1: np.ndarray, p2: np.ndarray, evaluate
) -> list[float]:
    """All detunings where P_2 - P_1 changes sign, refined by bisection on
    fresh evaluations of ``evaluate(delta) -> populations`` until
    |P_2 - P_1| < 1e-8."""
    diff = np.asarray(p2) - np.asarray(p1)
    crossings = []
    for i in range(len(deltas) - 1):
        if diff[i] == 0.0:
            crossings.append(float(deltas[i]))
            continue
        if diff[i] * diff[i + 1] < 0:
            lo, hi = float(deltas[i]), float(deltas[i + 1])
            flo = diff[i]
            root = 0.5 * (lo + hi)
            for _ in range(200):
                root = 0.5 * (lo + hi)
                pops = evaluate(root)
                fmid = float(pops[2] - pops[1])
                if abs(fmid) < 1e-8:
                    break
                if flo * fmid < 0:
                    hi = root
                else:
                    lo, flo = root, fmid
            crossings.append(root)
    return crossings


def detect_inversion_threshold(
    deltas: np.ndarray, p1: np.ndarray, p2: np.ndarray, evaluate
) -> float | None:
    """First population-inversion threshold, or None without a sign change."""
    crossings = detect_inversion_thresholds(deltas, p1, p2, evaluate)
    return crossings[0] if crossings else None


def run_sweep(config: SweepConfig, resume_rows: dict[int, tuple] | None = None) -> SweepResult:
    """Evaluate the full grid; deterministic in content regardless of
    worker count. ``resume_rows`` supplies already-computed cells by index
    (rows carrying an error are always recomputed)."""
    cells = _grid(config)
    columns = result_columns(config)
    todo = []
    results: dict[int, tuple] = {}
    for idx, cell in enumerate(cells):
        prev = (resume_rows or {}).get(idx)
        if prev is not None and prev[-1] == "":
            results[idx] = prev
        else:
            todo.append((idx, cell))

    def work(item):
        idx, cell = item
        axis_vals = [cell[ax.name] for ax in config.axes]
        try:
            vals = evaluate_cell(config, cell)
            return idx, tuple([idx] + axis_vals + vals + [""])
        except Exception as exc:  # per-cell failure: record, keep sweeping
            pad = [float("nan")] * (len(columns) - 2 - len(axis_vals))
            return idx, tuple([idx] + axis_vals + pad + [f"{type(exc).__name__}: {exc}"])

    workers = max(1, config.workers)
    if workers == 1:
        computed = map(work, todo)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            computed = list(pool.map(work, todo))
    for idx, row in computed:
        results[idx] = row

    rows = tuple(results[i] for i in range(len(cells)))
    derived = {}
    if (
        config.n_levels >= 3
        and "populations" in config.outputs
        and len(config.axes) == 1
        and config.axes[0].name == "delta"
        and config.axes[0].points >= 10
    ):
        p_cols = [columns.index(f"p_{k}") for k in range(config.n_levels)]
        deltas = np.array([r[1] for r in rows])
        good = [r for r in rows if r[-1] == ""]
        if len(good) == len(rows):
            p1 = np.array([r[p_cols[1]] for r in rows])
            p2 = np.array([r[p_cols[2]] for r in rows])

            def fresh(delta):
                spec = _build_spec(config, {"delta": delta})
                return solve_cavity(spec, config.cluster_threshold).table.populations

            crossings = detect_inversion_thresholds(deltas, p1, p2, fresh)
            derived["inversion_thresholds"] = crossings
            if len(crossings) == 1:
                derived["delta_c"] = crossings[0]
    return SweepResult(config, columns, rows, derived)


def write_csv(result: SweepResult, path: str) -> None:
    """CSV plus a JSON metadata sidecar at <path>.meta.json."""
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(CSV_HEADER + "\n")
        fh.write(",".join(result.columns) + "\n")
        for row in result.rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    os.replace(tmp, path)
    sidecar = {
        "format": "dsopt-sweep v1",
        "version": __version__,
        "config": result.config.to_dict(),
        "columns": list(result.columns),
        "derived": result.derived,
        "wall_time_s": time.time(),
    }
    with open(path + ".meta.json", "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_csv(path: str) -> tuple[tuple[str, ...], list[tuple]]:
    """Parse a sweep CSV back into typed rows."""
    with open(path) as fh:
        header = fh.readline().rstrip("\n")
        if header != CSV_HEADER:
            raise ValueError(f"not a dsopt sweep CSV: header {header!r}")
        columns = tuple(fh.readline().rstrip("\n").split(","))
        rows = []
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split(",")
            row = [int(parts[0])]
            for v in parts[1:-1]:
                row.append(float(v) if v else float("nan"))
            row.append(parts[-1])
            rows.append(tuple(row))
    return columns, rows


def load_resume_rows(path: str, config: SweepConfig) -> dict[int, tuple]:
    """Rows reusable from an earlier partial run of the same config."""
    if not os.path.exists(path):
        return {}
    meta_path = path + ".meta.json"
    if os.path.exists(meta_path):
        with open(meta_path) as fh:
            meta = json.load(fh)
        if meta.get("config") != config.to_dict():
            return {}
    try:
        columns, rows = read_csv(path)
    except ValueError:
        return {}
    if columns != result_columns(config):
        return {}
    return {row[0]: row for row in rows}
