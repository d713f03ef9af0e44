"""Configuration parsing/validation, CLI exit codes, determinism."""

import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from warpflow.cli import main
from warpflow.config import CONFIG_SCHEMA, parse_config
from warpflow.errors import ConfigError


def test_minimal_vacuum_defaults():
    cfg = parse_config(json.dumps({
        "mode": "reduced", "p": 7, "grid": {"shape": [4, 4, 4]},
        "flow": {"dt": 1e-3, "t_end": 0.01},
    }))
    assert cfg.sigma == 1
    assert cfg.lambda_tilde == 0.0
    assert cfg.flow["scheme"] == "rk4"
    assert cfg.flow["gauge"] == "deturck"
    assert cfg.output["diagnostics"] == "diagnostics.jsonl"


def test_round_trip_parse_serialize():
    cfg = parse_config(json.dumps({
        "mode": "reduced", "p": 6, "sigma": -1,
        "grid": {"shape": [4, 4, 4, 4], "lengths": [1, 1, 1, 2]},
        "flow": {"dt": 1e-4, "steps": 5, "cadence": 2},
        "initial": {"psi": {"0,1,2,3": [[0.3, [1, 0, 0, 0], 0.0]]}},
    }))
    again = parse_config(cfg.to_json())
    assert again == cfg


def test_schema_violation_reports_field_path():
    with pytest.raises(ConfigError) as err:
        parse_config(json.dumps({"mode": "reduced", "p": 7,
                                 "grid": {"shape": [4, 4, 4]},
                                 "flow": {"scheme": "leapfrog"}}))
    assert "flow.scheme" in str(err.value)


def test_psi_only_dimension_guard():
    with pytest.raises(ConfigError) as err:
        parse_config(json.dumps({
            "mode": "reduced", "p": 2, "flux_ansatz": "psi_only",
            "grid": {"shape": [4] * 8},
        }))
    message = str(err.value)
    assert "psi-only" in message and "8" in message


def test_wave_vectors_must_be_integers():
    with pytest.raises(ConfigError):
        parse_config(json.dumps({
            "mode": "reduced", "p": 7, "grid": {"shape": [4, 4, 4]},
            "initial": {"f": [[0.1, [0.5, 0, 0], 0.0]]},
        }))


def test_lambda_normalization_guard():
    with pytest.raises(ConfigError):
        parse_config(json.dumps({"mode": "ode", "p": 7, "lambda_tilde": 0.3}))
    cfg = parse_config(json.dumps({"mode": "ode", "p": 7, "lambda_tilde": 0.3,
                                   "allow_unnormalized_lambda": True}))
    assert cfg.lambda_tilde == 0.3


def test_grid_dimension_consistency():
    with pytest.raises(ConfigError) as err:
        parse_config(json.dumps({"mode": "reduced", "p": 6,
                                 "grid": {"shape": [4, 4, 4]}}))
    assert "grid.shape" in str(err.value)


def run_cli(tmp_path, config_dict, extra=()):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config_dict))
    out = tmp_path / "out"
    return main(["--config", str(path), "--out", str(out)] + list(extra)), out


def test_cli_vacuum_run_exit_zero(tmp_path):
    code, out = run_cli(tmp_path, {
        "mode": "reduced", "p": 7, "grid": {"shape": [4, 4, 4]},
        "flow": {"dt": 1e-3, "t_end": 0.005, "cadence": 2},
    })
    assert code == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["termination"]["cause"] == "t_end_reached"
    assert (out / "diagnostics.jsonl").exists()
    assert (out / "checkpoint.wfc").exists()


def test_cli_blow_up_exit_code(tmp_path):
    code, out = run_cli(tmp_path, {
        "mode": "ode", "p": 7, "lambda_tilde": 1.0,
        "ode": {"preset": "pure_scalar", "action": "integrate", "dt": 1e-3, "t_end": 1.0},
    })
    assert code == 2
    summary = json.loads((out / "summary.json").read_text())
    assert summary["termination"]["t"] == pytest.approx(0.5, rel=0.02)
    assert (out / "trajectory.csv").exists()


def test_cli_newton_certified(tmp_path):
    code, out = run_cli(tmp_path, {
        "mode": "ode", "p": 6, "lambda_tilde": -0.1, "allow_unnormalized_lambda": True,
        "kappa_hat": 0.3,
        "ode": {"preset": "volume_psi", "action": "newton", "c": 1.0,
                "free": ["kappa_hat", "lambda_tilde"]},
    })
    assert code == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["certified"] is True
    assert summary["stationary_point"]["kappa_hat"] == pytest.approx(1.0 / 3.0, abs=1e-10)


def test_cli_config_error_exit(tmp_path):
    code, _ = run_cli(tmp_path, {"mode": "reduced", "p": 2, "flux_ansatz": "psi_only",
                                 "grid": {"shape": [4] * 8}})
    assert code == 1


def test_cli_determinism_byte_identical(tmp_path):
    config = {
        "mode": "reduced", "p": 6, "grid": {"shape": [4, 4, 4, 4]},
        "initial": {"psi": {"0,1,2,3": [[0.3, [1, 0, 0, 0], 0.0]]},
                    "f": [[0.05, [0, 1, 0, 0], 0.5]]},
        "flow": {"dt": 5e-4, "steps": 4, "cadence": 2},
    }
    code1, out1 = run_cli(tmp_path / "a" if (tmp_path / "a").mkdir() or True else None, config)
    code2, out2 = run_cli(tmp_path / "b" if (tmp_path / "b").mkdir() or True else None, config)
    assert code1 == code2 == 0
    assert (out1 / "diagnostics.jsonl").read_bytes() == (out2 / "diagnostics.jsonl").read_bytes()
    assert (out1 / "checkpoint.wfc").read_bytes() == (out2 / "checkpoint.wfc").read_bytes()
    # summaries agree apart from the isolated timing field
    s1 = json.loads((out1 / "summary.json").read_text())
    s2 = json.loads((out2 / "summary.json").read_text())
    s1.pop("timing"), s2.pop("timing")
    assert s1 == s2


def test_cli_entry_point_subprocess(tmp_path):
    config = tmp_path / "v.json"
    config.write_text(json.dumps({
        "mode": "reduced", "p": 7, "grid": {"shape": [4, 4, 4]},
        "flow": {"dt": 1e-3, "t_end": 0.002, "cadence": 2},
    }))
    proc = subprocess.run(
        [sys.executable, "-m", "warpflow.cli", "--config", str(config),
         "--out", str(tmp_path / "out")],
        capture_output=True, text=True, timeout=300,
    )
    assert proc.returncode == 0, proc.stderr
    assert "t_end_reached" in proc.stdout


def test_schema_document_is_valid_jsonschema():
    import jsonschema

    jsonschema.Draft202012Validator.check_schema(CONFIG_SCHEMA)
