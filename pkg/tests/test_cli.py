import json
import math

import numpy as np
import pytest

import dsopt.optomech
from dsopt.cli import main


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def parse_csv(text):
    lines = [l for l in text.strip().splitlines() if l]
    assert lines[0].startswith("# dsopt-")
    columns = lines[1].split(",")
    rows = [line.split(",") for line in lines[2:]]
    return columns, rows


class TestRoots:
    def test_three_levels(self, capsys):
        code, out, _ = run_cli(capsys, "roots", "--levels", "3")
        assert code == 0
        columns, rows = parse_csv(out)
        assert columns == ["n_levels", "phi0_sq", "blocked_from", "blocked_to"]
        values = sorted(float(r[1]) for r in rows)
        assert values[0] == pytest.approx(3 - math.sqrt(3), abs=1e-9)
        assert values[1] == pytest.approx(3 + math.sqrt(3), abs=1e-9)

    def test_two_levels(self, capsys):
        code, out, _ = run_cli(capsys, "roots", "--levels", "2")
        assert code == 0
        _, rows = parse_csv(out)
        assert len(rows) == 1
        assert float(rows[0][1]) == pytest.approx(2.0, abs=1e-12)

    def test_one_level_is_usage_error(self, capsys):
        code, _, err = run_cli(capsys, "roots", "--levels", "1")
        assert code == 1
        assert "usage" in err.lower()

    def test_unknown_flag_is_usage_error(self, capsys):
        code, _, _ = run_cli(capsys, "roots", "--levels", "2", "--frobnicate")
        assert code == 1

    def test_json_format(self, capsys):
        code, out, _ = run_cli(capsys, "roots", "--levels", "4", "--format", "json")
        assert code == 0
        doc = json.loads(out)
        assert doc["command"] == "roots"
        assert len(doc["rows"]) == 3


class TestSpectrum:
    def test_undriven_spectrum_is_zero(self, capsys):
        code, out, _ = run_cli(
            capsys, "spectrum", "--levels", "2", "--ej", "0", "--delta", "-5",
            "--points", "51", "--omega-max", "10", "--method", "both",
        )
        assert code == 0
        columns, rows = parse_csv(out)
        assert columns == ["omega", "s_exact", "s_secular"]
        for row in rows:
            assert abs(float(row[1])) < 1e-12
            assert abs(float(row[2])) < 1e-12

    def test_methods_peak_alignment(self, capsys):
        code, out, _ = run_cli(
            capsys, "spectrum", "--levels", "3", "--delta", "-30", "--ej", "300",
            "--method", "both", "--points", "4001",
        )
        assert code == 0
        columns, rows = parse_csv(out)
        data = np.array([[float(v) for v in row] for row in rows])
        om, s_ex, s_se = data[:, 0], data[:, 1], data[:, 2]
        assert abs(om[np.argmax(s_ex)] - om[np.argmax(s_se)]) < 0.5

    def test_cluster_threshold_flag(self, capsys):
        # at delta = -0.5 the omega_10/omega_21 gap is ~0.87 gamma: inside the
        # default threshold, outside a narrow one
        args = ["spectrum", "--levels", "3", "--delta", "-0.5", "--ej", "300",
                "--method", "secular", "--points", "11", "--format", "json"]
        code, out, _ = run_cli(capsys, *args)
        assert code == 0
        default = json.loads(out)["meta"]["clusters"]
        assert default[0] == default[2]  # quasi-degenerate pair merged
        code, out, _ = run_cli(capsys, *args, "--cluster-threshold", "0.1")
        narrow = json.loads(out)["meta"]["clusters"]
        assert len(set(narrow)) == 3
        code, out, _ = run_cli(capsys, *args, "--cluster-threshold", "1e9")
        wide = json.loads(out)["meta"]["clusters"]
        assert len(set(wide)) == 1

    def test_sidecar_written_with_file_output(self, capsys, tmp_path):
        out_path = tmp_path / "spec.csv"
        code, _, _ = run_cli(
            capsys, "spectrum", "--levels", "2", "--delta", "-26", "--ej", "80",
            "--points", "101", "--out", str(out_path),
        )
        assert code == 0
        meta = json.loads((tmp_path / "spec.csv.meta.json").read_text())
        assert len(meta["meta"]["transitions"]) == 1
        assert meta["meta"]["transitions"][0]["omega"] == pytest.approx(
            49.0743479369, rel=1e-9
        )

    def test_byte_identical_reruns(self, capsys):
        args = ("spectrum", "--levels", "2", "--delta", "-26", "--ej", "80",
                "--points", "101")
        _, first, _ = run_cli(capsys, *args)
        _, second, _ = run_cli(capsys, *args)
        assert first == second


class TestGammaOpt:
    def test_at_transition_matches_omega_m(self, capsys):
        code, out, _ = run_cli(
            capsys, "gamma-opt", "--levels", "2", "--delta", "-26", "--ej", "80",
            "--at-transition", "10", "--method", "secular", "--format", "json",
        )
        assert code == 0
        doc = json.loads(out)
        omega = doc["meta"]["omega_m"]
        code, out2, _ = run_cli(
            capsys, "gamma-opt", "--levels", "2", "--delta", "-26", "--ej", "80",
            "--omega-m", str(omega), "--method", "secular", "--format", "json",
        )
        assert json.loads(out2)["rows"] == doc["rows"]

    def test_both_methods_agree(self, capsys):
        code, out, _ = run_cli(
            capsys, "gamma-opt", "--levels", "2", "--delta", "-26", "--ej", "80",
            "--at-transition", "10", "--method", "both", "--format", "json",
        )
        assert code == 0
        rows = json.loads(out)["rows"]
        by_method = {r[0]: r[2] for r in rows}
        assert abs(by_method["secular"] - by_method["spectrum"]) < 0.1 * abs(
            by_method["secular"]
        )

    def test_requires_one_frequency_spec(self, capsys):
        code, _, err = run_cli(
            capsys, "gamma-opt", "--levels", "2", "--delta", "-26", "--ej", "80"
        )
        assert code == 1
        code, _, _ = run_cli(
            capsys, "gamma-opt", "--levels", "2", "--delta", "-26", "--ej", "80",
            "--omega-m", "10", "--at-transition", "10",
        )
        assert code == 1


class TestSweepCommand:
    def test_end_to_end(self, capsys, tmp_path):
        cfg = {
            "system": {"n_levels": 2, "delta": 0.0, "ej": 80.0, "root_index": 0},
            "mech": {"g0": 0.02, "omega_m": 40.0, "gamma_m": 0.01},
            "axes": [{"name": "delta", "min": -20.0, "max": 20.0, "points": 5}],
            "outputs": ["populations"],
        }
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(cfg))
        out_path = tmp_path / "out.csv"
        code, _, err = run_cli(
            capsys, "sweep", "--config", str(cfg_path), "--out", str(out_path)
        )
        assert code == 0
        assert out_path.exists()
        assert (tmp_path / "out.csv.meta.json").exists()
        assert "5 rows" in err

    def test_bad_config_is_usage_error(self, capsys, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"unknown": 1}))
        code, _, _ = run_cli(
            capsys, "sweep", "--config", str(cfg_path), "--out", str(tmp_path / "x.csv")
        )
        assert code == 1

    def test_missing_out_is_usage_error(self, capsys, tmp_path):
        cfg = {
            "system": {"n_levels": 2, "delta": 0.0, "ej": 80.0},
            "mech": {"g0": 0.02, "omega_m": 40.0, "gamma_m": 0.01},
            "axes": [{"name": "delta", "min": -1.0, "max": 1.0, "points": 2}],
            "outputs": ["populations"],
        }
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(cfg))
        code, _, _ = run_cli(capsys, "sweep", "--config", str(cfg_path))
        assert code == 1


class TestOracle:
    def test_reports_agreement(self, capsys):
        code, out, _ = run_cli(
            capsys, "oracle", "--levels", "2", "--delta", "-26", "--ej", "80",
            "--at-transition", "10", "--mech-dim", "6", "--format", "json",
        )
        assert code == 0
        row = json.loads(out)["rows"][0]
        assert row[3] < 0.25  # relative difference, generous at mech_dim=6


class TestValidate:
    def test_single_check_filter(self, capsys):
        code, out, err = run_cli(capsys, "validate", "--only", "sum-rule")
        assert code == 0
        report = json.loads(out)
        assert [c["name"] for c in report["checks"]] == ["sum-rule"]
        assert report["all_passed"]
        assert "PASS sum-rule" in err

    def test_unknown_check_is_usage_error(self, capsys):
        code, _, _ = run_cli(capsys, "validate", "--only", "nonsense")
        assert code == 1

    def test_sign_flip_mutation_caught(self, capsys, monkeypatch):
        # a wrong sign in the single-transition rate must trip the suite
        original = dsopt.optomech.transition_rate

        def flipped(row, mech):
            return -original(row, mech)

        monkeypatch.setattr(dsopt.optomech, "transition_rate", flipped)
        code, out, _ = run_cli(capsys, "validate", "--only", "sign-structure")
        assert code == 2
        assert not json.loads(out)["all_passed"]
