#!/usr/bin/env python3
"""
Tests for CSV/JSON persistence
"""

import json
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
from pydantic import ValidationError

import services
from alternating_driver import fit
from errors import DatasetFormatError
from models import Dims, FitOptions
from storage import (
    config_model, fit_report_document, load_run_config, read_dataset_csv, write_dataset_csv,
    write_descent_log, write_ground_truth_csv,
)
from verification import random_problem

CONFIG_DIR = Path(__file__).parent / "configs"


def test_dataset_round_trip_is_exact():
    spec, dataset, _ = random_problem(3, Dims(N=2, d=2, m=1, p=3), 17)
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "dataset.csv"
        write_dataset_csv(dataset, path)
        header = path.read_text().splitlines()[0]
        assert header == "t,v_1,v_2,y_1,y_2,y_3"
        restored = read_dataset_csv(path, spec, dataset.grid)
    assert np.array_equal(restored.v, dataset.v)
    assert np.array_equal(restored.y, dataset.y)


def test_ground_truth_has_node_rows():
    spec, dataset, _ = random_problem(4, Dims(N=2, d=1, m=1, p=1), 9)
    x = np.arange(20.0).reshape(10, 2)
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "ground_truth.csv"
        write_ground_truth_csv(dataset.grid, x, path)
        frame = pd.read_csv(path)
    assert list(frame.columns) == ["t", "x_1", "x_2"]
    assert len(frame) == 10
    assert frame["t"].iloc[-1] == dataset.grid.T


def test_corrupt_row_reports_row_number():
    spec, dataset, _ = random_problem(5, Dims(N=1, d=1, m=1, p=1), 6)
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "dataset.csv"
        write_dataset_csv(dataset, path)
        lines = path.read_text().splitlines()
        lines[3] = lines[3] + ",1.0"
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(DatasetFormatError) as info:
            read_dataset_csv(path, spec, dataset.grid)
    assert info.value.row == 3
    assert "row 3" in str(info.value)


def test_short_row_reports_row_number():
    spec, dataset, _ = random_problem(6, Dims(N=1, d=1, m=1, p=1), 6)
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "dataset.csv"
        write_dataset_csv(dataset, path)
        lines = path.read_text().splitlines()
        lines[2] = ",".join(lines[2].split(",")[:-1])
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(DatasetFormatError) as info:
            read_dataset_csv(path, spec, dataset.grid)
    assert info.value.row == 2


def test_non_utf8_file_is_a_format_error():
    spec, dataset, _ = random_problem(9, Dims(N=1, d=1, m=1, p=1), 6)
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "dataset.csv"
        path.write_bytes(b"\xff\xfe\x00t,v_1,y_1\n")
        with pytest.raises(DatasetFormatError, match="not UTF-8 text") as info:
            read_dataset_csv(path, spec, dataset.grid)
    assert info.value.row is None


def test_wrong_row_count_and_header():
    spec, dataset, _ = random_problem(7, Dims(N=1, d=1, m=1, p=1), 6)
    other_spec, other_dataset, _ = random_problem(7, Dims(N=1, d=1, m=1, p=1), 5)
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "dataset.csv"
        write_dataset_csv(other_dataset, path)
        with pytest.raises(DatasetFormatError, match="expected 6 rows"):
            read_dataset_csv(path, spec, dataset.grid)
        path.write_text("time,v_1,y_1\n0,0,0\n")
        with pytest.raises(DatasetFormatError, match="expected columns"):
            read_dataset_csv(path, spec, dataset.grid)


def test_config_with_spec_path_and_grid_override():
    with tempfile.TemporaryDirectory() as tmp:
        shipped = json.loads((CONFIG_DIR / "scalar.json").read_text())
        (Path(tmp) / "spec.json").write_text(json.dumps(shipped["spec"]))
        (Path(tmp) / "run.json").write_text(json.dumps({"spec": "spec.json", "grid": {"T": 2.0, "M": 8}}))
        config = load_run_config(Path(tmp) / "run.json")
    spec, grid = config_model(config)
    assert spec.dims.N == 1
    assert (grid.T, grid.M) == (2.0, 8)


def test_config_missing_matrix_names_field():
    shipped = json.loads((CONFIG_DIR / "scalar.json").read_text())
    del shipped["spec"]["Q"]
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "run.json"
        path.write_text(json.dumps(shipped))
        with pytest.raises(ValidationError) as info:
            load_run_config(path)
    assert "Q" in str(info.value)


def test_report_documents():
    spec, dataset, _ = random_problem(8, Dims(N=2, d=1, m=1, p=1), 12)
    report = fit(dataset, spec, FitOptions(max_iters=4, tol_step=0.0, tol_stat=0.0))
    document = fit_report_document(report, seed=8)
    json.dumps(document)
    assert document["iterations"] == 4
    assert document["stop_reason"] == "max_iters"
    assert len(document["J_history"]) == 5
    assert np.array_equal(np.array(document["A"]), report.final_estimate.A)
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "descent_log.csv"
        write_descent_log(report, path)
        log = pd.read_csv(path, float_precision="round_trip")
    assert list(log.columns) == ["iter", "J", "step_norm", "gap_error", "estep_residual", "mstep_residual"]
    assert list(log["iter"]) == [0, 1, 2, 3, 4]
    assert list(log["J"]) == report.J_history


def test_simulated_dataset_reads_back_identically():
    config = load_run_config(CONFIG_DIR / "two_state.json")
    spec, grid, result = services.simulate_from_config(config)
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "dataset.csv"
        write_dataset_csv(result.dataset, path)
        restored = read_dataset_csv(path, spec, grid)
    assert np.array_equal(restored.v, result.dataset.v)
    assert np.array_equal(restored.y, result.dataset.y)


if __name__ == "__main__":
    for name, test in list(globals().items()):
        if name.startswith("test_") and callable(test):
            try:
                test()
                print(f"✓ {name}")
            except Exception as e:
                print(f"✗ {name}: {e}")
