#!/usr/bin/env python3
"""
Tests for the command-line front end: exit codes and written files
"""

import json
import tempfile
from pathlib import Path

import pandas as pd

import cli

CONFIG_DIR = Path(__file__).parent / "configs"


def write_config(tmp, name="scalar", **changes):
    document = json.loads((CONFIG_DIR / f"{name}.json").read_text())
    for key, value in changes.items():
        section, _, field = key.partition("__")
        if field:
            document[section][field] = value
        else:
            document[section] = value
    path = Path(tmp) / f"{name}.json"
    path.write_text(json.dumps(document))
    return path


def test_simulate_writes_dataset_ground_truth_and_manifest():
    with tempfile.TemporaryDirectory() as tmp:
        config = write_config(tmp, sim={"A_true": [[0.0]], "B_true": [[0.0]], "seed": 1, "noise_scale": 0.0})
        out = Path(tmp) / "run"
        assert cli.main(["simulate", "--config", str(config), "--out", str(out)]) == 0
        dataset = pd.read_csv(out / "dataset.csv")
        truth = pd.read_csv(out / "ground_truth.csv")
        manifest = json.loads((out / "manifest.json").read_text())
    assert len(dataset) == 50
    assert (dataset["y_1"] == 1.0).all()
    assert len(truth) == 51
    assert manifest["seed"] == 1
    assert manifest["config"]["spec"]["N"] == 1


def test_simulate_is_byte_identical_for_same_seed():
    with tempfile.TemporaryDirectory() as tmp:
        config = write_config(tmp, "two_state")
        first, second = Path(tmp) / "a", Path(tmp) / "b"
        assert cli.main(["simulate", "--config", str(config), "--out", str(first), "--seed", "9"]) == 0
        assert cli.main(["simulate", "--config", str(config), "--out", str(second), "--seed", "9"]) == 0
        for name in ("dataset.csv", "ground_truth.csv"):
            assert (first / name).read_bytes() == (second / name).read_bytes()


def test_simulate_config_missing_Q_exits_2(capsys):
    with tempfile.TemporaryDirectory() as tmp:
        document = json.loads((CONFIG_DIR / "scalar.json").read_text())
        del document["spec"]["Q"]
        config = Path(tmp) / "bad.json"
        config.write_text(json.dumps(document))
        assert cli.main(["simulate", "--config", str(config), "--out", tmp]) == 2
    assert "Q" in capsys.readouterr().err


def test_simulate_unreadable_config_exits_3():
    with tempfile.TemporaryDirectory() as tmp:
        assert cli.main(["simulate", "--config", str(Path(tmp) / "missing.json")]) == 3


def test_fit_exact_dataset_converges_in_one_sweep(capsys):
    with tempfile.TemporaryDirectory() as tmp:
        config = write_config(tmp)
        out = Path(tmp) / "run"
        assert cli.main(["simulate", "--config", str(config), "--out", str(out)]) == 0
        code = cli.main(["fit", "--config", str(config), "--data", str(out / "dataset.csv"), "--out", str(out)])
        report = json.loads((out / "fit_report.json").read_text())
        log = pd.read_csv(out / "descent_log.csv")
    assert code == 0
    assert report["iterations"] == 1
    assert report["converged"]
    assert len(log) == 2
    assert "iter    1" in capsys.readouterr().out


def test_fit_report_echoes_dataset_seed():
    with tempfile.TemporaryDirectory() as tmp:
        config = write_config(tmp)
        out = Path(tmp) / "run"
        assert cli.main(["simulate", "--config", str(config), "--out", str(out), "--seed", "13"]) == 0
        data = str(out / "dataset.csv")
        assert cli.main(["fit", "--config", str(config), "--data", data, "--out", str(out)]) == 0
        from_manifest = json.loads((out / "fit_report.json").read_text())
        assert cli.main(["fit", "--config", str(config), "--data", data, "--out", str(out), "--seed", "5"]) == 0
        from_flag = json.loads((out / "fit_report.json").read_text())
    assert from_manifest["seed"] == 13
    assert from_flag["seed"] == 5


def test_fit_descent_log_is_non_increasing():
    with tempfile.TemporaryDirectory() as tmp:
        config = write_config(tmp, "two_state")
        out = Path(tmp) / "run"
        assert cli.main(["simulate", "--config", str(config), "--out", str(out)]) == 0
        code = cli.main(["fit", "--config", str(config), "--data", str(out / "dataset.csv"), "--out", str(out)])
        log = pd.read_csv(out / "descent_log.csv", float_precision="round_trip")
    assert code in (0, 1)
    J = log["J"].to_numpy()
    assert all(J[n + 1] <= J[n] + 1e-9 * (1 + abs(J[n])) for n in range(len(J) - 1))


def test_fit_max_iters_exits_1():
    with tempfile.TemporaryDirectory() as tmp:
        config = write_config(tmp, "two_state")
        out = Path(tmp) / "run"
        assert cli.main(["simulate", "--config", str(config), "--out", str(out)]) == 0
        code = cli.main(["fit", "--config", str(config), "--data", str(out / "dataset.csv"), "--out", str(out),
                         "--max-iters", "2", "--tol-step", "0", "--tol-stat", "0"])
        report = json.loads((out / "fit_report.json").read_text())
    assert code == 1
    assert report["stop_reason"] == "max_iters"


def test_fit_corrupt_csv_exits_3_with_row(capsys):
    with tempfile.TemporaryDirectory() as tmp:
        config = write_config(tmp)
        out = Path(tmp) / "run"
        assert cli.main(["simulate", "--config", str(config), "--out", str(out)]) == 0
        data = out / "dataset.csv"
        lines = data.read_text().splitlines()
        lines[4] += ",0.5"
        data.write_text("\n".join(lines) + "\n")
        code = cli.main(["fit", "--config", str(config), "--data", str(data), "--out", str(out)])
    assert code == 3
    assert "row 4" in capsys.readouterr().err


def test_fit_non_utf8_dataset_exits_3(capsys):
    with tempfile.TemporaryDirectory() as tmp:
        config = write_config(tmp)
        data = Path(tmp) / "dataset.csv"
        data.write_bytes(b"\xff\xfe")
        code = cli.main(["fit", "--config", str(config), "--data", str(data), "--out", tmp])
    assert code == 3
    assert "not UTF-8 text" in capsys.readouterr().err


def test_verify_default_passes(capsys):
    assert cli.main(["verify", "--seed", "20240"]) == 0
    out = capsys.readouterr().out
    for suite in ("gradient", "estep", "mstep", "descent", "smoother"):
        assert suite in out


def test_verify_size_cap_exits_2(capsys):
    with tempfile.TemporaryDirectory() as tmp:
        config = write_config(tmp, spec__M=65)
        assert cli.main(["verify", "--config", str(config)]) == 2
    assert "size cap" in capsys.readouterr().err


def test_verify_injected_fault_names_gradient_suite(capsys):
    assert cli.main(["verify", "--seed", "3", "--inject-fault"]) == 1
    out = capsys.readouterr().out
    assert "suite 'gradient' failed" in out
    assert "--seed 3" in out


if __name__ == "__main__":
    import pytest
    raise SystemExit(pytest.main([__file__, "-v"]))
