"""Synthetic ground truth from the model SDEs (Euler-Maruyama on the estimation grid)."""
import logging

import numpy as np
from scipy import linalg

from errors import DimensionMismatch, NegativeNoiseScale, UnknownKind
from models import ArrayModel, Array, Dataset, ModelSpec, TimeGrid, frozen_array

logger = logging.getLogger(__name__)

CONTROL_KINDS = ("zero", "step", "sine", "multisine")


class SimResult(ArrayModel):
    dataset: Dataset
    x_true: Array
    w_true: Array
    seed: int


def _covariance_factor(matrix):
    return linalg.cholesky(matrix, lower=True)


def simulate_sde(A_true, B_true, spec: ModelSpec, grid: TimeGrid, v, seed: int,
                 noise_scale: float = 1.0) -> SimResult:
    """Simulate one record of the state SDE and the observation-rate signal.

    ``w_true`` holds the noise rate dw/h on each interval, so that the recursion reads
    x_{k+1} = x_k + h (A x_k + B v_k + G w_k). The observation noise has covariance R/h
    per interval; its integral over an interval then has covariance h R.
    """
    N, d, m, p = spec.dims.N, spec.dims.d, spec.dims.m, spec.dims.p
    M, h = grid.M, grid.h
    A_true = np.asarray(A_true, dtype=float)
    B_true = np.asarray(B_true, dtype=float)
    v = np.asarray(v, dtype=float)
    if A_true.shape != (N, N):
        raise DimensionMismatch("A_true", (N, N), A_true.shape)
    if B_true.shape != (N, d):
        raise DimensionMismatch("B_true", (N, d), B_true.shape)
    if v.shape != (M, d):
        raise DimensionMismatch("v", (M, d), v.shape)
    if noise_scale < 0:
        raise NegativeNoiseScale(noise_scale)

    rng = np.random.default_rng(seed)
    # Draw order is fixed: initial state, process increments, observation noise.
    z_init = rng.standard_normal(N)
    z_process = rng.standard_normal((M, m))
    z_observe = rng.standard_normal((M, p))

    x = np.empty((M + 1, N))
    x[0] = spec.x0 + noise_scale * _covariance_factor(spec.Pi0) @ z_init
    increments = noise_scale * np.sqrt(h) * z_process @ _covariance_factor(spec.Q).T
    for k in range(M):
        x[k + 1] = x[k] + h * (A_true @ x[k] + B_true @ v[k]) + spec.G @ increments[k]

    eta = z_observe @ _covariance_factor(spec.R).T / np.sqrt(h)
    y = x[:M] @ spec.C.T + noise_scale * eta

    logger.debug("simulated M=%d h=%.3e seed=%d noise_scale=%g", M, h, seed, noise_scale)
    dataset = Dataset(grid=grid, v=v, y=y)
    return SimResult(dataset=dataset, x_true=x, w_true=increments / h, seed=seed)


def make_control(kind: str, params: dict, grid: TimeGrid, d: int):
    """Control sequence evaluated at interval left endpoints, shape (M, d).

    params: ``amp``, ``freq`` (sine), ``onset`` (step), ``components``: a list of
    (amp, freq) or (amp, freq, phase) rows (multisine).
    """
    t = np.asarray(grid.nodes[:-1])
    amp = float(params.get("amp", 1.0))
    if kind == "zero":
        signal = np.zeros_like(t)
    elif kind == "step":
        signal = np.where(t >= float(params.get("onset", 0.0)), amp, 0.0)
    elif kind == "sine":
        signal = amp * np.sin(2 * np.pi * float(params.get("freq", 1.0)) * t)
    elif kind == "multisine":
        signal = np.zeros_like(t)
        for component in params.get("components", []):
            a, f = component[0], component[1]
            phase = component[2] if len(component) > 2 else 0.0
            signal = signal + a * np.sin(2 * np.pi * f * t + phase)
    else:
        raise UnknownKind(kind)
    return frozen_array(np.repeat(signal[:, None], d, axis=1))
