"""File persistence: CSV time series, JSON specs/configs/reports."""
import json
import logging
import re
from pathlib import Path

import numpy as np
import pandas as pd

from errors import DatasetFormatError
from models import Dataset, ModelSpec, ModelSpecDocument, RunConfig, TimeGrid, make_grid

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"


def dataset_columns(spec: ModelSpec):
    return (["t"] + [f"v_{i + 1}" for i in range(spec.dims.d)]
            + [f"y_{i + 1}" for i in range(spec.dims.p)])


def write_dataset_csv(dataset: Dataset, path):
    frame = pd.DataFrame(
        np.hstack([dataset.grid.nodes[:-1, None], dataset.v, dataset.y]),
        columns=["t"] + [f"v_{i + 1}" for i in range(dataset.v.shape[1])]
        + [f"y_{i + 1}" for i in range(dataset.y.shape[1])],
    )
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)


def write_ground_truth_csv(grid: TimeGrid, x_true, path):
    frame = pd.DataFrame(x_true, columns=[f"x_{i + 1}" for i in range(x_true.shape[1])])
    frame.insert(0, "t", grid.nodes)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)


def read_dataset_csv(path, spec: ModelSpec, grid: TimeGrid, name=None) -> Dataset:
    """Parse a dataset CSV (a path or a file-like object named by ``name``).

    Rows are numbered from 1 after the header in error messages.
    """
    label = name or path
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except pd.errors.EmptyDataError as exc:
        raise DatasetFormatError(label, None, "empty file") from exc
    except UnicodeDecodeError as exc:
        raise DatasetFormatError(label, None, "not UTF-8 text") from exc
    except pd.errors.ParserError as exc:
        match = re.search(r"line (\d+)", str(exc))
        row = int(match.group(1)) - 1 if match else None
        raise DatasetFormatError(label, row, f"wrong column count ({exc})") from exc

    expected = dataset_columns(spec)
    if list(frame.columns) != expected:
        raise DatasetFormatError(label, None, f"expected columns {expected}, got {list(frame.columns)}")
    numeric = frame.apply(pd.to_numeric, errors="coerce")
    incomplete = numeric.isna().any(axis=1).to_numpy()
    if incomplete.any():
        row = int(np.argmax(incomplete)) + 1
        raise DatasetFormatError(label, row, "missing or non-numeric value (wrong column count?)")
    if len(numeric) != grid.M:
        raise DatasetFormatError(label, None, f"expected {grid.M} rows, got {len(numeric)}")
    t = numeric["t"].to_numpy()
    if not np.allclose(t, grid.nodes[:-1], rtol=1e-12, atol=1e-12 * grid.T):
        raise DatasetFormatError(label, None, "t column does not match the grid (T, M)")

    v = numeric[expected[1:1 + spec.dims.d]].to_numpy(dtype=float)
    y = numeric[expected[1 + spec.dims.d:]].to_numpy(dtype=float)
    logger.debug("read %d rows from %s", len(numeric), label)
    return Dataset(grid=grid, v=v, y=y)


def write_json(document, path):
    with open(path, "w") as f:
        json.dump(document, f, indent=2)


def read_json(path):
    with open(path) as f:
        return json.load(f)


def manifest_seed(data_path):
    """Seed recorded in the manifest written next to a simulated dataset, or None."""
    manifest = Path(data_path).parent / "manifest.json"
    if not manifest.is_file():
        return None
    try:
        return read_json(manifest).get("seed")
    except (OSError, ValueError) as exc:
        logger.warning("ignoring unreadable manifest %s: %s", manifest, exc)
        return None


def load_run_config(path) -> RunConfig:
    """Read a RunConfig; a string ``spec`` is a path relative to the config file."""
    config = RunConfig.model_validate_json(Path(path).read_text())
    if isinstance(config.spec, str):
        spec_path = Path(path).parent / config.spec
        document = ModelSpecDocument.model_validate_json(spec_path.read_text())
        config = config.model_copy(update={"spec": document})
    return config


def config_model(config: RunConfig):
    """(ModelSpec, TimeGrid) of a loaded config, honoring the optional grid override."""
    spec, grid = config.spec.to_model()
    if config.grid is not None:
        grid = make_grid(config.grid.T, config.grid.M)
    return spec, grid


def fit_report_document(report, seed=None):
    traj = report.final_traj
    return {
        "iterations": report.iterations,
        "converged": report.converged,
        "stop_reason": report.stop_reason.value,
        "seed": seed,
        "J_history": report.J_history,
        "step_norms": report.step_norms,
        "descent_gap_errors": report.descent_gap_errors,
        "A": report.final_estimate.A.tolist(),
        "B": report.final_estimate.B.tolist(),
        "x": traj.x.tolist(),
        "w": traj.w.tolist(),
        "q": traj.q.tolist(),
        "residuals": {
            "estep": report.final_residuals.estep.model_dump(),
            "mstep": report.final_residuals.mstep,
        },
        "terms": {
            "dynamics_prior": report.final_terms.dynamics_prior,
            "model_misfit": report.final_terms.model_misfit,
            "initial": report.final_terms.initial,
            "noise": report.final_terms.noise,
            "observation": report.final_terms.observation,
            "total": report.final_terms.total,
        },
        "gaps": [
            {"lhs": g.lhs, "rhs": g.rhs, "estep_lhs": g.estep_lhs, "estep_rhs": g.estep_rhs,
             "mstep_lhs": g.mstep_lhs, "mstep_rhs": g.mstep_rhs}
            for g in report.gaps
        ],
    }


def write_descent_log(report, path):
    """iter, J, step_norm, gap_error, estep_residual, mstep_residual; row 0 holds J(Z^0)."""
    rows = [{"iter": 0, "J": report.J_history[0]}]
    rows += [
        {"iter": s.iteration, "J": s.J, "step_norm": s.step_norm, "gap_error": s.gap_error,
         "estep_residual": s.estep_residual, "mstep_residual": s.mstep_residual}
        for s in report.sweeps
    ]
    frame = pd.DataFrame(rows, columns=["iter", "J", "step_norm", "gap_error", "estep_residual", "mstep_residual"])
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
