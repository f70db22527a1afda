"""Batch driver contract: schema gate, exit codes, artifact formats."""

import json
import math

import numpy as np
import pytest

from fractdim import cli


CANTOR_IFS = {"ratios": [1 / 3, 1 / 3], "translations": [0.0, 2 / 3]}
UNIFORM2 = {"type": "bernoulli", "weights": [0.5, 0.5]}


def spectrum_config(**extra):
    cfg = {
        "schema": 1,
        "kind": "spectrum",
        "seed": 5,
        "ifs": CANTOR_IFS,
        "measure": {"type": "bernoulli", "weights": [0.25, 0.75]},
        "params": {"qs": [-2.0, -1.0, 0.0, 1.0, 2.0]},
        "assert": [
            {"quantity": "T_at_1", "value": 0.0, "tol": 1e-12},
            {"quantity": "similarity_dim", "value": math.log(2) / math.log(3), "tol": 1e-12},
        ],
    }
    cfg.update(extra)
    return cfg


def launch(tmp_path, cfg, *args):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / "out"
    return cli.main(["run", "--config", str(path), "--out", str(out), *args]), out


class TestSchemaGate:
    def test_unknown_top_level_key(self, tmp_path, capsys):
        code, _ = launch(tmp_path, spectrum_config(extra_knob=1))
        assert code == 2
        assert "unknown key 'extra_knob'" in capsys.readouterr().err

    def test_unsupported_schema_version(self, tmp_path):
        code, _ = launch(tmp_path, spectrum_config(schema=2))
        assert code == 2

    def test_missing_seed(self, tmp_path):
        cfg = spectrum_config()
        del cfg["seed"]
        code, _ = launch(tmp_path, cfg)
        assert code == 2

    def test_unknown_kind(self, tmp_path):
        code, _ = launch(tmp_path, spectrum_config(kind="fourier"))
        assert code == 2

    def test_unknown_param_key(self, tmp_path):
        cfg = spectrum_config()
        cfg["params"] = {"q_step": 0.5}
        code, _ = launch(tmp_path, cfg)
        assert code == 2

    def test_unknown_assertion_quantity(self, tmp_path, capsys):
        cfg = spectrum_config()
        cfg["assert"] = [{"quantity": "box", "value": 1.0, "tol": 0.1}]
        code, _ = launch(tmp_path, cfg)
        assert code == 2
        assert "not produced by this experiment" in capsys.readouterr().err

    def test_assertion_mode_exclusive(self, tmp_path):
        cfg = spectrum_config()
        cfg["assert"] = [{"quantity": "T_at_1", "value": 0.0, "tol": 1e-9, "min": -1.0}]
        code, _ = launch(tmp_path, cfg)
        assert code == 2

    def test_spectrum_rejects_markov_weights(self, tmp_path):
        cfg = spectrum_config(
            measure={"type": "markov", "order": 1, "kernel": [[0.3, 0.7], [0.6, 0.4]]}
        )
        cfg["assert"] = []
        code, _ = launch(tmp_path, cfg)
        assert code == 2

    def test_malformed_json(self, tmp_path, capsys):
        path = tmp_path / "broken.json"
        path.write_text('{"schema": 1,')
        code = cli.main(["run", "--config", str(path), "--out", str(tmp_path / "o")])
        assert code == 2
        assert "line" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path):
        code = cli.main(
            ["run", "--config", str(tmp_path / "absent.json"), "--out", str(tmp_path / "o")]
        )
        assert code == 2

    def test_unknown_verify_suite(self, capsys):
        assert cli.main(["verify", "nonsense"]) == 2
        assert "unknown suite" in capsys.readouterr().err


class TestExitCodes:
    def test_precondition_failure_is_exit_3(self, tmp_path, capsys):
        cfg = spectrum_config(
            ifs={"ratios": [1.2, 0.3], "translations": [0.0, 0.5]}
        )
        code, _ = launch(tmp_path, cfg)
        assert code == 3
        assert "(0, 1)" in capsys.readouterr().err

    def test_failed_assertion_is_exit_1(self, tmp_path, capsys):
        cfg = spectrum_config()
        cfg["assert"] = [{"quantity": "T_at_1", "value": 1.0, "tol": 1e-6}]
        code, out = launch(tmp_path, cfg)
        assert code == 1
        assert "FAIL" in capsys.readouterr().out
        summary = json.loads((out / "summary.json").read_text())
        assert summary["passed"] is False

    def test_passing_run_is_exit_0(self, tmp_path, capsys):
        code, out = launch(tmp_path, spectrum_config())
        assert code == 0
        printed = capsys.readouterr().out
        assert printed.count("pass") == 2
        assert (out / "structure.csv").exists()


class TestArtifacts:
    def test_csv_dialect(self, tmp_path):
        _, out = launch(tmp_path, spectrum_config())
        raw = (out / "structure.csv").read_bytes()
        assert b"\r" not in raw
        assert raw.endswith(b"\n")
        lines = raw.decode().splitlines()
        assert lines[0] == "q,T,alpha,f,endpoint"

    def test_csv_floats_round_trip(self, tmp_path):
        _, out = launch(tmp_path, spectrum_config())
        summary = json.loads((out / "summary.json").read_text())
        rows = (out / "structure.csv").read_text().splitlines()[1:]
        by_q = {r.split(",")[0]: r.split(",") for r in rows}
        assert float(by_q["1"][1]) == summary["quantities"]["T_at_1"]
        assert float(by_q["0"][1]) == summary["quantities"]["T_at_0"]

    def test_manifest_records_run(self, tmp_path):
        cfg = spectrum_config()
        _, out = launch(tmp_path, cfg)
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["seed"] == cfg["seed"]
        assert manifest["seed_overridden"] is False
        assert manifest["workers"] == 1
        assert manifest["wall_seconds"] >= 0
        assert set(manifest["artifacts"]) == {"structure.csv"}
        for pkg in ("python", "numpy", "scipy", "fractdim"):
            assert pkg in manifest["versions"]

    def test_seed_override_recorded(self, tmp_path):
        code, out = launch(tmp_path, spectrum_config(), "--seed-override", "99")
        assert code == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["seed"] == 99
        assert manifest["config"]["seed"] == 99
        assert manifest["seed_overridden"] is True


class TestRunners:
    def test_dimension_workers_byte_identical(self, tmp_path):
        cfg = {
            "schema": 1, "kind": "dimension", "seed": 11,
            "ifs": CANTOR_IFS, "measure": UNIFORM2,
            "params": {
                "count": 20_000,
                "correlation": {"r0": 0.5, "levels": 6},
                "box": {"r0": 0.5, "levels": 6},
                "energy": {"exponents": [0.5]},
            },
        }
        path = tmp_path / "dim.json"
        path.write_text(json.dumps(cfg))
        outs = []
        for w in (1, 3):
            out = tmp_path / f"w{w}"
            assert cli.main(
                ["run", "--config", str(path), "--out", str(out), "--workers", str(w)]
            ) == 0
            outs.append(out)
        for name in ("correlation.csv", "box.csv", "energy.csv"):
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()

    def test_ede_verdict_table(self, tmp_path):
        cfg = {
            "schema": 1, "kind": "ede", "seed": 3,
            "ifs": CANTOR_IFS,
            "params": {
                "words": [[0, 1] * 15, [1] * 30],
                "depth_min": 1, "depth_max": 8, "epsilon": 0.1,
            },
        }
        code, out = launch(tmp_path, cfg)
        assert code == 0
        rows = (out / "verdicts.csv").read_text().splitlines()
        assert len(rows) == 1 + 2 * 8
        summary = json.loads((out / "summary.json").read_text())
        assert summary["quantities"]["all_passed"] == 1.0

    def test_project_direction_table(self, tmp_path):
        cfg = {
            "schema": 1, "kind": "project", "seed": 13,
            "ifs": {
                "ratios": [1 / 3] * 4,
                "translations": [[0.0, 0.0], [2 / 3, 0.0], [0.0, 2 / 3], [2 / 3, 2 / 3]],
            },
            "measure": {"type": "bernoulli", "weights": [0.25] * 4},
            "params": {"subspace_dim": 1, "directions": 4, "count": 20_000},
        }
        code, out = launch(tmp_path, cfg)
        assert code == 0
        rows = (out / "directions.csv").read_text().splitlines()
        assert len(rows) == 1 + 4
        summary = json.loads((out / "summary.json").read_text())
        assert summary["quantities"]["predicted"] == 1.0

    def test_transversality_decay_table(self, tmp_path):
        cfg = {
            "schema": 1, "kind": "transversality", "seed": 7,
            "ifs": CANTOR_IFS,
            "params": {
                "low": [[0.0], [0.0]], "high": [[1.0], [1.0]],
                "word_a": [0] * 30, "word_b": [1] * 30,
                "r0": 0.5, "levels": 5, "samples": 50_000,
            },
            "assert": [{"quantity": "constraint_satisfied", "value": 1.0, "tol": 0.0}],
        }
        code, out = launch(tmp_path, cfg)
        assert code == 0
        rows = (out / "decay.csv").read_text().splitlines()
        assert len(rows) == 1 + 6

    def test_approx_identity_and_monotone(self, tmp_path):
        cfg = {
            "schema": 1, "kind": "approx", "seed": 1,
            "measure": {
                "type": "markov", "order": 2,
                "kernel": [[0.2, 0.8], [0.5, 0.5], [0.9, 0.1], [0.4, 0.6]],
            },
            "params": {"orders": [1, 2, 3, 4]},
            "assert": [
                {"quantity": "max_identity_residual", "value": 0.0, "tol": 1e-10},
                {"quantity": "monotone", "value": 1.0, "tol": 0.0},
                {"quantity": "relative_entropy_last", "min": 0.0, "max": 1e-12},
            ],
        }
        code, out = launch(tmp_path, cfg)
        assert code == 0
        rows = (out / "approx.csv").read_text().splitlines()
        assert len(rows) == 1 + 4

    def test_gibbs_depth_one_is_bernoulli(self, tmp_path):
        p = np.array([0.3, 0.7])
        cfg = {
            "schema": 1, "kind": "gibbs", "seed": 0,
            "params": {
                "depth": 1, "alphabet": 2,
                "table": list(np.log(p)), "check_depth": 6,
            },
            "assert": [
                {"quantity": "pressure", "value": 0.0, "tol": 1e-10},
                {"quantity": "bernoulli_residual", "value": 0.0, "tol": 1e-10},
                {"quantity": "bounds_hold", "value": 1.0, "tol": 0.0},
            ],
        }
        code, out = launch(tmp_path, cfg)
        assert code == 0
        rows = (out / "bounds.csv").read_text().splitlines()
        assert len(rows) == 1 + 6


class TestFormatValue:
    def test_flags_and_integers(self):
        assert cli.format_value(True) == "1"
        assert cli.format_value(False) == "0"
        assert cli.format_value(7) == "7"

    def test_floats_survive_round_trip(self):
        for x in (math.pi, 1 / 3, 0.1, 3.0**-12, -1.2345678901234567e-300):
            assert float(cli.format_value(x)) == x

    def test_integral_floats_stay_compact(self):
        assert cli.format_value(1.0) == "1"
        assert cli.format_value(-4.0) == "-4"
