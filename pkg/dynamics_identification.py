"""Identification of (A, B) for a fixed trajectory: a ridge-regularized regression of
the state derivative on the stacked signal z_k = (x_k, v_k)."""
import logging

import numpy as np
from scipy import linalg

from errors import DimensionMismatch, SingularSystem
from models import ArrayModel, Array, Dataset, DynamicsEstimate, ModelSpec, TimeGrid, check_trajectory

logger = logging.getLogger(__name__)


class GramSystem(ArrayModel):
    S: Array
    RHS: Array


def assemble_gram(x, w, v, spec: ModelSpec, grid: TimeGrid) -> GramSystem:
    """S = h sum_k z_k z_k^T and RHS = h sum_k ((x_{k+1}-x_k)/h - G w_k) z_k^T."""
    x, w, v = (np.asarray(a, dtype=float) for a in (x, w, v))
    check_trajectory(x, w, spec, grid)
    if v.shape != (grid.M, spec.dims.d):
        raise DimensionMismatch("v", (grid.M, spec.dims.d), v.shape)
    h = grid.h
    z = np.hstack([x[:-1], v])
    target = np.diff(x, axis=0) / h - w @ spec.G.T
    S = h * z.T @ z
    return GramSystem(S=(S + S.T) / 2, RHS=h * target.T @ z)


def solve_mstep(x, w, dataset: Dataset, spec: ModelSpec) -> DynamicsEstimate:
    """Unique minimizer of L over Theta = [A B]: Theta (alpha I + beta S) = alpha Theta_0 + beta RHS."""
    gram = assemble_gram(x, w, dataset.v, spec, dataset.grid)
    N = spec.dims.N
    system = spec.alpha * np.eye(gram.S.shape[0]) + spec.beta * gram.S
    prior = np.hstack([spec.A0, spec.B0])
    try:
        factor = linalg.cho_factor(system)
    except linalg.LinAlgError as exc:
        raise SingularSystem("identification normal equations", str(exc)) from exc
    theta = linalg.cho_solve(factor, (spec.alpha * prior + spec.beta * gram.RHS).T).T
    logger.debug("M-step: |Theta - Theta_0|_F=%.3e", np.linalg.norm(theta - prior))
    return DynamicsEstimate(A=theta[:, :N], B=theta[:, N:])


def mstep_stationarity(A, B, x, q, v, spec: ModelSpec, grid: TimeGrid) -> float:
    """|alpha(A-A0) + h sum q_k x_k^T|_F + |alpha(B-B0) + h sum q_k v_k^T|_F."""
    A, B, x, q, v = (np.asarray(a, dtype=float) for a in (A, B, x, q, v))
    N, d, M = spec.dims.N, spec.dims.d, grid.M
    for field, value, shape in (("A", A, (N, N)), ("B", B, (N, d)), ("x", x, (M + 1, N)),
                                ("q", q, (M, N)), ("v", v, (M, d))):
        if value.shape != shape:
            raise DimensionMismatch(field, shape, value.shape)
    h = grid.h
    grad_A = spec.alpha * (A - spec.A0) + h * q.T @ x[:-1]
    grad_B = spec.alpha * (B - spec.B0) + h * q.T @ v
    return float(np.linalg.norm(grad_A) + np.linalg.norm(grad_B))
