import json

import numpy as np
import pytest

from dsopt.josephson import blockaded
from dsopt.optomech import MechanicalParams, gamma_opt_secular
from dsopt.pipeline import solve_cavity
from dsopt.sweep import (
    ConfigError,
    SweepConfig,
    detect_inversion_threshold,
    detect_inversion_thresholds,
    evaluate_cell,
    load_resume_rows,
    read_csv,
    result_columns,
    run_sweep,
    write_csv,
)

BASE = {
    "system": {"n_levels": 2, "delta": 0.0, "ej": 80.0, "root_index": 0},
    "mech": {"g0": 0.02, "omega_m": 40.0, "gamma_m": 0.01},
    "axes": [{"name": "delta", "min": -40.0, "max": 40.0, "points": 9}],
    "outputs": ["populations", "transition_freqs", "gamma_opt_peak"],
}


def config(**overrides):
    return SweepConfig.from_dict({**BASE, **overrides})


class TestConfig:
    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigError):
            config(surprise=1)

    def test_unknown_system_key(self):
        with pytest.raises(ConfigError):
            config(system={**BASE["system"], "voltage": 3})

    def test_unknown_mech_key(self):
        with pytest.raises(ConfigError):
            config(mech={**BASE["mech"], "mass": 3})

    def test_axis_validation(self):
        with pytest.raises(ConfigError):
            config(axes=[{"name": "delta", "min": 0, "max": 1, "points": 1}])
        with pytest.raises(ConfigError):
            config(axes=[{"name": "voltage", "min": 0, "max": 1, "points": 3}])
        with pytest.raises(ConfigError):
            config(axes=[])
        with pytest.raises(ConfigError):
            config(axes=[{"name": "delta", "min": 0, "max": 1, "points": 3,
                          "scale": "log"}])
        with pytest.raises(ConfigError):
            config(axes=[
                {"name": "delta", "min": 0, "max": 1, "points": 3},
                {"name": "delta", "min": 0, "max": 1, "points": 3},
            ])

    def test_grid_size_guard(self):
        with pytest.raises(ConfigError):
            config(axes=[
                {"name": "delta", "min": 0, "max": 1, "points": 2000},
                {"name": "ej", "min": 1, "max": 2, "points": 2000},
            ])

    def test_output_validation(self):
        with pytest.raises(ConfigError):
            config(outputs=["entropy"])
        with pytest.raises(ConfigError):
            config(outputs=[])

    def test_method_validation(self):
        with pytest.raises(ConfigError):
            config(method="magic")

    def test_phi0_sq_and_root_index_exclusive(self):
        with pytest.raises(ConfigError):
            config(system={"n_levels": 2, "delta": 0, "ej": 80,
                           "root_index": 0, "phi0_sq": 2.0})


class TestDeterminism:
    def test_worker_count_invariance(self, tmp_path):
        blobs = []
        for workers in (1, 4):
            path = tmp_path / f"w{workers}.csv"
            write_csv(run_sweep(config(workers=workers)), str(path))
            blobs.append(path.read_bytes())
        assert blobs[0] == blobs[1]

    def test_rows_match_direct_module_calls(self):
        cfg = config(axes=[{"name": "delta", "min": -26.0, "max": -8.0, "points": 2}])
        result = run_sweep(cfg)
        cols = result.columns
        for row, delta in zip(result.rows, (-26.0, -8.0)):
            sol = solve_cavity(blockaded(2, 0, delta, 80.0))
            assert row[cols.index("p_0")] == sol.table.populations[0]
            assert row[cols.index("omega_10")] == sol.table.row(0, 1).omega
            mech = MechanicalParams(
                g0=0.02, omega_m=sol.table.row(0, 1).omega, gamma_m=0.01
            )
            assert row[cols.index("gamma_opt_peak_10")] == gamma_opt_secular(
                sol.table, mech
            ).gamma_opt


class TestPersistence:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "sweep.csv"
        result = run_sweep(config())
        write_csv(result, str(path))
        columns, rows = read_csv(str(path))
        assert columns == result.columns
        assert len(rows) == len(result.rows)
        for parsed, original in zip(rows, result.rows):
            for a, b in zip(parsed, original):
                assert a == b  # 17 significant digits round-trip exactly

    def test_sidecar_contents(self, tmp_path):
        path = tmp_path / "sweep.csv"
        write_csv(run_sweep(config()), str(path))
        meta = json.loads((path.with_suffix(".csv.meta.json")).read_text())
        assert meta["format"] == "dsopt-sweep v1"
        assert meta["columns"] == list(result_columns(config()))
        assert meta["config"]["system"]["ej"] == 80.0

    def test_header_checked(self, tmp_path):
        path = tmp_path / "bogus.csv"
        path.write_text("not,a,sweep\n1,2,3\n")
        with pytest.raises(ValueError):
            read_csv(str(path))

    def test_resume_completes_missing_cells(self, tmp_path):
        path = tmp_path / "sweep.csv"
        cfg = config()
        full = run_sweep(cfg)
        write_csv(full, str(path))
        reference = path.read_bytes()

        # truncate to the first 4 data rows, as if interrupted
        lines = path.read_text().splitlines()
        path.write_text("\n".join(lines[: 2 + 4]) + "\n")
        partial = load_resume_rows(str(path), cfg)
        assert len(partial) == 4
        resumed = run_sweep(cfg, partial)
        write_csv(resumed, str(path))
        assert path.read_bytes() == reference

    def test_resume_rejects_other_config(self, tmp_path):
        path = tmp_path / "sweep.csv"
        write_csv(run_sweep(config()), str(path))
        other = config(axes=[{"name": "delta", "min": -40.0, "max": 40.0, "points": 5}])
        assert load_resume_rows(str(path), other) == {}


class TestErrors:
    def test_failed_cells_recorded_not_fatal(self):
        # negative omega_m values are invalid mechanics: those cells error out
        cfg = config(
            axes=[{"name": "omega_m", "min": -1.0, "max": 1.0, "points": 5}],
            outputs=["gamma_opt_curve"],
        )
        result = run_sweep(cfg)
        errors = [r[-1] for r in result.rows]
        assert any(e != "" for e in errors)
        assert any(e == "" for e in errors)
        ok_rows = [r for r in result.rows if r[-1] == ""]
        assert all(np.isfinite(r[2]) for r in ok_rows)


class TestInversionThreshold:
    def test_detected_for_three_levels(self):
        cfg = SweepConfig.from_dict(
            {
                "system": {"n_levels": 3, "delta": 0.0, "ej": 300.0, "root_index": 0},
                "mech": BASE["mech"],
                "axes": [{"name": "delta", "min": -80.0, "max": 0.0, "points": 41}],
                "outputs": ["populations"],
            }
        )
        result = run_sweep(cfg)
        crossings = result.derived["inversion_thresholds"]
        assert len(crossings) == 1
        delta_c = crossings[0]
        assert -80.0 < delta_c < 0.0
        pops = solve_cavity(blockaded(3, 0, delta_c, 300.0)).table.populations
        assert abs(pops[2] - pops[1]) < 1e-8

    def test_absent_for_two_levels(self):
        result = run_sweep(config(outputs=["populations"]))
        assert "inversion_thresholds" not in result.derived

    def test_monotone_input_gives_none(self):
        deltas = np.linspace(-10, 0, 11)
        p1 = np.linspace(0.4, 0.3, 11)
        p2 = np.linspace(0.1, 0.2, 11)

        def never(_):
            raise AssertionError("no fresh evaluation expected")

        assert detect_inversion_threshold(deltas, p1, p2, never) is None

    def test_synthetic_crossing_refined(self):
        # P2 - P1 = delta + 2.5 crosses at -2.5
        deltas = np.linspace(-10, 0, 11)
        diff = deltas + 2.5

        def evaluate(delta):
            return np.array([0.0, 0.0, delta + 2.5])

        found = detect_inversion_thresholds(deltas, np.zeros(11), diff, evaluate)
        assert len(found) == 1
        assert found[0] == pytest.approx(-2.5, abs=1e-8)


class TestQuantities:
    def test_spectrum_samples(self):
        cfg = config(
            outputs=["snn_exact", "snn_secular"],
            axes=[{"name": "delta", "min": -26.0, "max": -8.0, "points": 2}],
        )
        result = run_sweep(cfg)
        cols = result.columns
        for row in result.rows:
            assert row[-1] == ""
            # red detuning: cooling sideband dominates in both methods
            assert row[cols.index("snn_exact_pos")] > row[cols.index("snn_exact_neg")]
            assert (
                row[cols.index("snn_secular_pos")]
                > row[cols.index("snn_secular_neg")]
            )

    def test_exact_method_gamma_curve(self):
        cfg = config(
            method="exact",
            outputs=["gamma_opt_curve"],
            axes=[{"name": "omega_m", "min": 30.0, "max": 50.0, "points": 3}],
            system={"n_levels": 2, "delta": -26.0, "ej": 80.0, "root_index": 0},
        )
        result = run_sweep(cfg)
        assert all(r[-1] == "" for r in result.rows)

    def test_n_residual_nan_when_inverted(self):
        cfg = config(
            outputs=["n_residual"],
            axes=[{"name": "delta", "min": -26.0, "max": 26.0, "points": 3}],
        )
        result = run_sweep(cfg)
        col = result.columns.index("n_residual_10")
        values = [r[col] for r in result.rows]
        assert np.isfinite(values[0])  # red detuning: cooling
        assert np.isnan(values[2])  # blue detuning: inverted
